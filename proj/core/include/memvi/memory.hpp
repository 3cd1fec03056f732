#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <vector>

#include "memvi/numerics.hpp"

namespace memvi {

class EmptyMemoryError : public std::invalid_argument {
public:
    EmptyMemoryError() : std::invalid_argument("empty memory") {}
};

struct NearestPattern {
    std::size_t index = 0;
    double distance = 0.0;
};

/// d x N store whose columns are the stored patterns M_k.
///
/// Immutable after construction; `write_pattern` returns a new store.
class MemoryMatrix {
public:
    explicit MemoryMatrix(std::size_t dim = 0) : patterns_(dim, 0) {}
    /// `patterns` is d x N, one pattern per column. Throws NumericError on
    /// non-finite entries.
    explicit MemoryMatrix(Matrix patterns);
    static MemoryMatrix from_patterns(const std::vector<Vector>& patterns);

    [[nodiscard]] std::size_t dim() const noexcept { return patterns_.rows(); }
    [[nodiscard]] std::size_t size() const noexcept { return patterns_.cols(); }
    [[nodiscard]] bool empty() const noexcept { return patterns_.cols() == 0; }

    [[nodiscard]] Vector pattern(std::size_t k) const;
    [[nodiscard]] const Matrix& matrix() const noexcept { return patterns_; }

    /// Throws EmptyMemoryError when there are no patterns.
    void require_nonempty() const;
    /// Throws ShapeError unless z has the store's dimension.
    void require_dim(const Vector& z, const char* what) const;

    /// argmin_k ||z - M_k||; ties go to the lowest index.
    [[nodiscard]] NearestPattern nearest(const Vector& z) const;
    /// Smallest distance between two distinct columns; +inf when N < 2.
    [[nodiscard]] double min_pairwise_distance() const;

private:
    Matrix patterns_;
};

/// One-shot write: a copy of `memory` with `z_new` appended as the last column.
MemoryMatrix write_pattern(const MemoryMatrix& memory, const Vector& z_new);

/// Text format: a header line `d=<d> n=<N>`, then N lines of d space-separated
/// values printed with 17 significant digits (one pattern per line).
void save_memory(std::ostream& out, const MemoryMatrix& memory);
MemoryMatrix load_memory(std::istream& in);
void save_memory(const std::filesystem::path& path, const MemoryMatrix& memory);
MemoryMatrix load_memory(const std::filesystem::path& path);

/// Formats a double with 17 significant digits (round-trip exact).
std::string format_double(double value);
std::string format_vector(const Vector& v);
/// Parses whitespace-separated doubles; throws std::invalid_argument on junk.
Vector parse_vector(const std::string& line);

}  // namespace memvi
