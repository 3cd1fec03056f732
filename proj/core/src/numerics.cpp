#include "memvi/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace memvi {
namespace {

void require_same_dim(const Vector& a, const Vector& b, const char* what) {
    if (a.dim() != b.dim()) {
        throw ShapeError(std::string(what) + ": shape mismatch " + shape_string(a) + " vs " + shape_string(b));
    }
}

}  // namespace

Vector& Vector::operator+=(const Vector& other) {
    require_same_dim(*this, other, "operator+=");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
    return *this;
}

Vector& Vector::operator-=(const Vector& other) {
    require_same_dim(*this, other, "operator-=");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= other.data_[i];
    return *this;
}

Vector& Vector::operator*=(double s) noexcept {
    for (auto& x : data_) x *= s;
    return *this;
}

bool Vector::all_finite() const noexcept {
    return std::all_of(data_.begin(), data_.end(), [](double x) { return std::isfinite(x); });
}

Vector operator+(Vector a, const Vector& b) { return a += b; }
Vector operator-(Vector a, const Vector& b) { return a -= b; }
Vector operator*(double s, Vector v) { return v *= s; }

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> row_major)
    : rows_(rows), cols_(cols), data_(std::move(row_major)) {
    if (data_.size() != rows_ * cols_) {
        throw ShapeError("Matrix: " + std::to_string(rows_) + "x" + std::to_string(cols_) + " needs " +
                         std::to_string(rows_ * cols_) + " values, got " + std::to_string(data_.size()));
    }
}

Matrix Matrix::identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
}

Matrix Matrix::from_columns(const std::vector<Vector>& columns) {
    if (columns.empty()) return {};
    const std::size_t d = columns.front().dim();
    Matrix m(d, columns.size());
    for (std::size_t k = 0; k < columns.size(); ++k) {
        if (columns[k].dim() != d) {
            throw ShapeError("Matrix::from_columns: column " + std::to_string(k) + " is " +
                             memvi::shape_string(columns[k]) + ", expected (" + std::to_string(d) + ")");
        }
        for (std::size_t i = 0; i < d; ++i) m(i, k) = columns[k][i];
    }
    return m;
}

Vector Matrix::column(std::size_t c) const {
    Vector out(rows_);
    for (std::size_t r = 0; r < rows_; ++r) out[r] = (*this)(r, c);
    return out;
}

bool Matrix::all_finite() const noexcept {
    return std::all_of(data_.begin(), data_.end(), [](double x) { return std::isfinite(x); });
}

std::string Matrix::shape_string() const {
    return "(" + std::to_string(rows_) + "x" + std::to_string(cols_) + ")";
}

std::string shape_string(const Vector& v) { return "(" + std::to_string(v.dim()) + ")"; }

double dot(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) {
        throw ShapeError("dot: shape mismatch (" + std::to_string(a.size()) + ") vs (" + std::to_string(b.size()) + ")");
    }
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

double dot(const Vector& a, const Vector& b) { return dot(a.span(), b.span()); }

double squared_norm(const Vector& v) { return dot(v, v); }

double norm(const Vector& v) { return std::sqrt(squared_norm(v)); }

double squared_distance(const Vector& a, const Vector& b) {
    require_same_dim(a, b, "squared_distance");
    double s = 0.0;
    for (std::size_t i = 0; i < a.dim(); ++i) {
        const double diff = a[i] - b[i];
        s += diff * diff;
    }
    return s;
}

double distance(const Vector& a, const Vector& b) { return std::sqrt(squared_distance(a, b)); }

double max_abs_difference(const Vector& a, const Vector& b) {
    require_same_dim(a, b, "max_abs_difference");
    double m = 0.0;
    for (std::size_t i = 0; i < a.dim(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

void axpy(double a, const Vector& x, Vector& y) {
    require_same_dim(x, y, "axpy");
    for (std::size_t i = 0; i < x.dim(); ++i) y[i] += a * x[i];
}

Vector matvec(const Matrix& a, const Vector& x) {
    if (a.cols() != x.dim()) {
        throw ShapeError("matvec: shape mismatch " + a.shape_string() + " vs " + shape_string(x));
    }
    Vector out(a.rows());
    for (std::size_t r = 0; r < a.rows(); ++r) out[r] = dot(a.row(r), x.span());
    return out;
}

Vector matvec_transposed(const Matrix& a, const Vector& x) {
    if (a.rows() != x.dim()) {
        throw ShapeError("matvec_transposed: shape mismatch " + a.shape_string() + " vs " + shape_string(x));
    }
    Vector out(a.cols());
    for (std::size_t r = 0; r < a.rows(); ++r) {
        const double xr = x[r];
        const auto row = a.row(r);
        for (std::size_t c = 0; c < a.cols(); ++c) out[c] += xr * row[c];
    }
    return out;
}

Matrix matmat(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows()) {
        throw ShapeError("matmat: shape mismatch " + a.shape_string() + " vs " + b.shape_string());
    }
    Matrix out(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t k = 0; k < a.cols(); ++k) {
            const double aik = a(i, k);
            const auto brow = b.row(k);
            auto orow = out.row(i);
            for (std::size_t j = 0; j < b.cols(); ++j) orow[j] += aik * brow[j];
        }
    }
    return out;
}

Matrix transpose(const Matrix& a) {
    Matrix out(a.cols(), a.rows());
    for (std::size_t r = 0; r < a.rows(); ++r)
        for (std::size_t c = 0; c < a.cols(); ++c) out(c, r) = a(r, c);
    return out;
}

Vector squared_distance_columns(const Vector& z, const Matrix& m) {
    if (m.rows() != z.dim()) {
        throw ShapeError("squared_distance_columns: shape mismatch " + shape_string(z) + " vs " + m.shape_string());
    }
    Vector out(m.cols());
    for (std::size_t i = 0; i < m.rows(); ++i) {
        const double zi = z[i];
        const auto row = m.row(i);
        for (std::size_t k = 0; k < m.cols(); ++k) {
            const double diff = zi - row[k];
            out[k] += diff * diff;
        }
    }
    return out;
}

double log_sum_exp(std::span<const double> v) {
    if (v.empty()) throw NumericError("log_sum_exp: empty reduction");
    const double peak = *std::max_element(v.begin(), v.end());
    if (!std::isfinite(peak)) {
        if (peak == -std::numeric_limits<double>::infinity()) return peak;
        throw NumericError("log_sum_exp: non-finite input");
    }
    double s = 0.0;
    for (double x : v) s += std::exp(x - peak);
    return peak + std::log(s);
}

double log_sum_exp(const Vector& v) { return log_sum_exp(v.span()); }

Vector softmax(const Vector& v) {
    if (v.empty()) throw NumericError("softmax: empty reduction");
    const double peak = *std::max_element(v.begin(), v.end());
    if (!std::isfinite(peak)) throw NumericError("softmax: non-finite input");
    Vector out(v.dim());
    double s = 0.0;
    for (std::size_t i = 0; i < v.dim(); ++i) {
        out[i] = std::exp(v[i] - peak);
        s += out[i];
    }
    const double inv = 1.0 / s;
    for (auto& x : out) x *= inv;
    return out;
}

}  // namespace memvi
