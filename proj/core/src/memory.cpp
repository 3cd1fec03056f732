#include "memvi/memory.hpp"

#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>

namespace memvi {

MemoryMatrix::MemoryMatrix(Matrix patterns) : patterns_(std::move(patterns)) {
    if (!patterns_.all_finite()) throw NumericError("MemoryMatrix: non-finite pattern entry");
}

MemoryMatrix MemoryMatrix::from_patterns(const std::vector<Vector>& patterns) {
    if (patterns.empty()) return MemoryMatrix(0);
    return MemoryMatrix(Matrix::from_columns(patterns));
}

Vector MemoryMatrix::pattern(std::size_t k) const {
    if (k >= size()) throw std::out_of_range("MemoryMatrix: pattern index " + std::to_string(k) + " out of range");
    return patterns_.column(k);
}

void MemoryMatrix::require_nonempty() const {
    if (empty()) throw EmptyMemoryError();
}

void MemoryMatrix::require_dim(const Vector& z, const char* what) const {
    if (z.dim() != dim()) {
        throw ShapeError(std::string(what) + ": shape mismatch " + shape_string(z) + " vs memory " +
                         patterns_.shape_string());
    }
}

NearestPattern MemoryMatrix::nearest(const Vector& z) const {
    require_nonempty();
    require_dim(z, "nearest");
    const Vector d2 = squared_distance_columns(z, patterns_);
    NearestPattern best{0, d2[0]};
    for (std::size_t k = 1; k < d2.dim(); ++k) {
        if (d2[k] < best.distance) best = {k, d2[k]};
    }
    best.distance = std::sqrt(best.distance);
    return best;
}

double MemoryMatrix::min_pairwise_distance() const {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t a = 0; a < size(); ++a) {
        const Vector pa = pattern(a);
        for (std::size_t b = a + 1; b < size(); ++b) {
            double s = 0.0;
            for (std::size_t i = 0; i < dim(); ++i) {
                const double diff = pa[i] - patterns_(i, b);
                s += diff * diff;
            }
            best = std::min(best, s);
        }
    }
    return std::sqrt(best);
}

MemoryMatrix write_pattern(const MemoryMatrix& memory, const Vector& z_new) {
    memory.require_dim(z_new, "write_pattern");
    if (!z_new.all_finite()) throw NumericError("write_pattern: non-finite pattern");
    const std::size_t d = memory.dim();
    const std::size_t n = memory.size();
    Matrix grown(d, n + 1);
    for (std::size_t i = 0; i < d; ++i) {
        for (std::size_t k = 0; k < n; ++k) grown(i, k) = memory.matrix()(i, k);
        grown(i, n) = z_new[i];
    }
    return MemoryMatrix(std::move(grown));
}

std::string format_double(double value) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", value);
    return buf;
}

std::string format_vector(const Vector& v) {
    std::string out;
    for (std::size_t i = 0; i < v.dim(); ++i) {
        if (i) out += ' ';
        out += format_double(v[i]);
    }
    return out;
}

Vector parse_vector(const std::string& line) {
    std::vector<double> values;
    const char* p = line.c_str();
    while (true) {
        while (*p == ' ' || *p == '\t' || *p == '\r' || *p == ',') ++p;
        if (*p == '\0' || *p == '\n') break;
        char* end = nullptr;
        errno = 0;
        const double v = std::strtod(p, &end);
        if (end == p || errno == ERANGE) throw std::invalid_argument("cannot parse number near '" + std::string(p) + "'");
        values.push_back(v);
        p = end;
    }
    return Vector(std::move(values));
}

void save_memory(std::ostream& out, const MemoryMatrix& memory) {
    out << "d=" << memory.dim() << " n=" << memory.size() << '\n';
    for (std::size_t k = 0; k < memory.size(); ++k) out << format_vector(memory.pattern(k)) << '\n';
}

MemoryMatrix load_memory(std::istream& in) {
    std::string header;
    if (!std::getline(in, header)) throw std::invalid_argument("memory file: missing header");
    std::size_t d = 0, n = 0;
    if (std::sscanf(header.c_str(), "d=%zu n=%zu", &d, &n) != 2) {
        throw std::invalid_argument("memory file: malformed header '" + header + "'");
    }
    Matrix m(d, n);
    std::string line;
    for (std::size_t k = 0; k < n; ++k) {
        if (!std::getline(in, line)) {
            throw std::invalid_argument("memory file: expected " + std::to_string(n) + " patterns, found " +
                                        std::to_string(k));
        }
        const Vector v = parse_vector(line);
        if (v.dim() != d) {
            throw ShapeError("memory file: line " + std::to_string(k + 2) + " has " + std::to_string(v.dim()) +
                             " values, expected " + std::to_string(d));
        }
        for (std::size_t i = 0; i < d; ++i) m(i, k) = v[i];
    }
    return MemoryMatrix(std::move(m));
}

void save_memory(const std::filesystem::path& path, const MemoryMatrix& memory) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write memory file " + path.string());
    save_memory(out, memory);
    if (!out) throw std::runtime_error("failed writing memory file " + path.string());
}

MemoryMatrix load_memory(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open memory file " + path.string());
    return load_memory(in);
}

}  // namespace memvi
