#pragma once

// Dense 64-bit vectors and matrices plus the stable reductions (log-sum-exp,
// softmax, column distances) that every prior and retrieval engine is built on.

#include <cstddef>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace memvi {

/// Raised when operand shapes are incompatible. The message names both shapes.
class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Raised when a computation produces or receives non-finite values, or a
/// reduction is asked of an empty range.
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class Vector {
public:
    Vector() = default;
    explicit Vector(std::size_t dim, double fill = 0.0) : data_(dim, fill) {}
    Vector(std::initializer_list<double> values) : data_(values) {}
    explicit Vector(std::vector<double> values) : data_(std::move(values)) {}
    explicit Vector(std::span<const double> values) : data_(values.begin(), values.end()) {}

    [[nodiscard]] std::size_t dim() const noexcept { return data_.size(); }
    [[nodiscard]] bool empty() const noexcept { return data_.empty(); }

    double& operator[](std::size_t i) noexcept { return data_[i]; }
    double operator[](std::size_t i) const noexcept { return data_[i]; }

    [[nodiscard]] std::span<double> span() noexcept { return data_; }
    [[nodiscard]] std::span<const double> span() const noexcept { return data_; }
    [[nodiscard]] const std::vector<double>& values() const noexcept { return data_; }

    auto begin() noexcept { return data_.begin(); }
    auto end() noexcept { return data_.end(); }
    auto begin() const noexcept { return data_.begin(); }
    auto end() const noexcept { return data_.end(); }

    Vector& operator+=(const Vector& other);
    Vector& operator-=(const Vector& other);
    Vector& operator*=(double s) noexcept;

    [[nodiscard]] bool all_finite() const noexcept;

    friend bool operator==(const Vector&, const Vector&) = default;

private:
    std::vector<double> data_;
};

Vector operator+(Vector a, const Vector& b);
Vector operator-(Vector a, const Vector& b);
Vector operator*(double s, Vector v);

/// Row-major dense matrix.
///
/// A memory store is held as a d x N matrix whose *columns* are the stored
/// patterns; `column(k)` copies pattern k out of the strided row-major layout.
/// Column-wise kernels below iterate row by row so the inner loop over k stays
/// contiguous.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
    Matrix(std::size_t rows, std::size_t cols, std::vector<double> row_major);

    static Matrix identity(std::size_t n);
    /// Builds a rows x columns.size() matrix from column vectors of equal dimension.
    static Matrix from_columns(const std::vector<Vector>& columns);

    [[nodiscard]] std::size_t rows() const noexcept { return rows_; }
    [[nodiscard]] std::size_t cols() const noexcept { return cols_; }

    double& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }

    [[nodiscard]] std::span<double> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
    [[nodiscard]] std::span<const double> row(std::size_t r) const noexcept {
        return {data_.data() + r * cols_, cols_};
    }
    [[nodiscard]] Vector column(std::size_t c) const;

    [[nodiscard]] std::span<double> data() noexcept { return data_; }
    [[nodiscard]] std::span<const double> data() const noexcept { return data_; }

    [[nodiscard]] bool all_finite() const noexcept;
    [[nodiscard]] std::string shape_string() const;

    friend bool operator==(const Matrix&, const Matrix&) = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

std::string shape_string(const Vector& v);

double dot(std::span<const double> a, std::span<const double> b);
double dot(const Vector& a, const Vector& b);
double squared_norm(const Vector& v);
double norm(const Vector& v);
double squared_distance(const Vector& a, const Vector& b);
double distance(const Vector& a, const Vector& b);
double max_abs_difference(const Vector& a, const Vector& b);

/// y <- a*x + y
void axpy(double a, const Vector& x, Vector& y);

/// A * x
Vector matvec(const Matrix& a, const Vector& x);
/// A^T * x, without materializing the transpose.
Vector matvec_transposed(const Matrix& a, const Vector& x);
Matrix matmat(const Matrix& a, const Matrix& b);
Matrix transpose(const Matrix& a);

/// Entry k is ||z - M_k||^2 for column k of M. Computed from differences,
/// never by expanding into dot products.
Vector squared_distance_columns(const Vector& z, const Matrix& m);

/// log(sum_i exp(v_i)) via max-subtraction. Throws NumericError on empty input.
double log_sum_exp(std::span<const double> v);
double log_sum_exp(const Vector& v);

/// exp(v_i - log_sum_exp(v)). Throws NumericError on empty input.
Vector softmax(const Vector& v);

}  // namespace memvi
