#include "memvi/prior.hpp"

#include <cmath>
#include <numbers>

namespace memvi {
namespace {

template <class... Ts>
struct overloaded : Ts... {
    using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

void require_positive(double v, const char* name) {
    if (!(v > 0.0) || !std::isfinite(v)) {
        throw std::invalid_argument(std::string(name) + " must be positive and finite, got " + std::to_string(v));
    }
}

void check_inputs(const Vector& z, const MemoryMatrix& memory, const char* what) {
    memory.require_nonempty();
    memory.require_dim(z, what);
}

double log_two_pi() { return std::log(2.0 * std::numbers::pi); }

}  // namespace

Precision Precision::diagonal(Vector entries) {
    Precision p;
    for (std::size_t i = 0; i < entries.dim(); ++i) {
        if (!(entries[i] > 0.0) || !std::isfinite(entries[i])) {
            throw std::invalid_argument("precision entry " + std::to_string(i) + " must be positive, got " +
                                        std::to_string(entries[i]));
        }
        p.log_det_ += std::log(entries[i]);
    }
    p.diag_ = std::move(entries);
    return p;
}

Precision Precision::full(Matrix m) {
    const std::size_t n = m.rows();
    if (m.cols() != n) throw std::invalid_argument("precision matrix must be square, got " + m.shape_string());
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < i; ++j)
            if (std::abs(m(i, j) - m(j, i)) > 1e-12 * (1.0 + std::abs(m(i, j)))) {
                throw std::invalid_argument("precision matrix is not symmetric");
            }
    // Cholesky, only to establish positive definiteness and the log-determinant.
    Matrix l(n, n);
    double log_det = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
        double s = m(j, j);
        for (std::size_t k = 0; k < j; ++k) s -= l(j, k) * l(j, k);
        if (!(s > 0.0)) throw std::invalid_argument("precision matrix is not positive definite");
        l(j, j) = std::sqrt(s);
        log_det += 2.0 * std::log(l(j, j));
        for (std::size_t i = j + 1; i < n; ++i) {
            double t = m(i, j);
            for (std::size_t k = 0; k < j; ++k) t -= l(i, k) * l(j, k);
            l(i, j) = t / l(j, j);
        }
    }
    Precision p;
    p.diag_ = Vector(n);
    for (std::size_t i = 0; i < n; ++i) p.diag_[i] = m(i, i);
    p.full_ = std::move(m);
    p.log_det_ = log_det;
    return p;
}

Precision Precision::isotropic(std::size_t dim, double sigma) {
    require_positive(sigma, "sigma");
    return diagonal(Vector(dim, 1.0 / (sigma * sigma)));
}

std::size_t Precision::dim() const noexcept { return diag_.dim(); }

Vector Precision::diagonal_entries() const { return diag_; }

double Precision::quadratic(const Vector& v) const {
    if (v.dim() != dim()) throw ShapeError("Precision::quadratic: " + shape_string(v) + " vs (" + std::to_string(dim()) + ")");
    if (!full_) {
        double s = 0.0;
        for (std::size_t i = 0; i < v.dim(); ++i) s += diag_[i] * v[i] * v[i];
        return s;
    }
    return dot(v, matvec(*full_, v));
}

Vector Precision::apply(const Vector& v) const {
    if (v.dim() != dim()) throw ShapeError("Precision::apply: " + shape_string(v) + " vs (" + std::to_string(dim()) + ")");
    if (full_) return matvec(*full_, v);
    Vector out(v.dim());
    for (std::size_t i = 0; i < v.dim(); ++i) out[i] = diag_[i] * v[i];
    return out;
}

std::string prior_name(const PriorSpec& prior) {
    return std::visit(overloaded{[](const BalancedGmmPrior&) { return std::string("balanced_gmm"); },
                                 [](const MchnPrior&) { return std::string("mchn"); },
                                 [](const PrecisionGmmPrior&) { return std::string("precision_gmm"); }},
                      prior);
}

void validate_prior(const PriorSpec& prior) {
    std::visit(overloaded{[](const BalancedGmmPrior& p) { require_positive(p.sigma, "sigma"); },
                          [](const MchnPrior& p) { require_positive(p.beta, "beta"); },
                          [](const PrecisionGmmPrior&) {}},
               prior);
}

Vector gmm_weights(const Vector& z, const MemoryMatrix& memory, double sigma) {
    check_inputs(z, memory, "gmm_weights");
    Vector logits = squared_distance_columns(z, memory.matrix());
    logits *= -1.0 / (2.0 * sigma * sigma);
    return softmax(logits);
}

Vector mchn_weights(const Vector& z, const MemoryMatrix& memory, double beta) {
    check_inputs(z, memory, "mchn_weights");
    Vector logits = matvec_transposed(memory.matrix(), z);
    logits *= beta;
    return softmax(logits);
}

Vector mahalanobis_columns(const Vector& z, const MemoryMatrix& memory, const Precision& precision) {
    check_inputs(z, memory, "mahalanobis_columns");
    if (precision.dim() != memory.dim()) {
        throw ShapeError("precision (" + std::to_string(precision.dim()) + ") vs memory " +
                         memory.matrix().shape_string());
    }
    const Matrix& m = memory.matrix();
    if (precision.is_diagonal()) {
        const Vector p = precision.diagonal_entries();
        Vector out(memory.size());
        for (std::size_t i = 0; i < m.rows(); ++i) {
            const double zi = z[i];
            const double pi = p[i];
            const auto row = m.row(i);
            for (std::size_t k = 0; k < m.cols(); ++k) {
                const double diff = zi - row[k];
                out[k] += pi * diff * diff;
            }
        }
        return out;
    }
    Vector out(memory.size());
    for (std::size_t k = 0; k < memory.size(); ++k) out[k] = precision.quadratic(z - memory.pattern(k));
    return out;
}

Vector precision_weights(const Vector& z, const MemoryMatrix& memory, const Precision& precision) {
    Vector logits = mahalanobis_columns(z, memory, precision);
    logits *= -0.5;
    return softmax(logits);
}

Vector readout(const MemoryMatrix& memory, const Vector& weights) { return matvec(memory.matrix(), weights); }

double log_prior_balanced(const Vector& z, const MemoryMatrix& memory, double sigma) {
    require_positive(sigma, "sigma");
    check_inputs(z, memory, "log_prior_balanced");
    const double var = sigma * sigma;
    Vector logits = squared_distance_columns(z, memory.matrix());
    logits *= -1.0 / (2.0 * var);
    const double d = static_cast<double>(memory.dim());
    return log_sum_exp(logits) - std::log(static_cast<double>(memory.size())) -
           0.5 * d * (log_two_pi() + std::log(var));
}

Vector grad_log_prior_balanced(const Vector& z, const MemoryMatrix& memory, double sigma) {
    require_positive(sigma, "sigma");
    Vector g = readout(memory, gmm_weights(z, memory, sigma));
    g -= z;
    g *= 1.0 / (sigma * sigma);
    return g;
}

double mchn_energy(const Vector& z, const MemoryMatrix& memory, double beta) {
    require_positive(beta, "beta");
    check_inputs(z, memory, "mchn_energy");
    Vector logits = matvec_transposed(memory.matrix(), z);
    logits *= beta;
    return 0.5 * beta * squared_norm(z) - log_sum_exp(logits);
}

Vector grad_mchn_energy(const Vector& z, const MemoryMatrix& memory, double beta) {
    require_positive(beta, "beta");
    Vector g = z;
    g -= readout(memory, mchn_weights(z, memory, beta));
    g *= beta;
    return g;
}

double log_prior_mchn(const Vector& z, const MemoryMatrix& memory, double beta) {
    require_positive(beta, "beta");
    check_inputs(z, memory, "log_prior_mchn");
    const std::size_t n = memory.size();
    Vector half_norms(n);
    for (std::size_t k = 0; k < n; ++k) half_norms[k] = 0.5 * beta * squared_norm(memory.pattern(k));
    const double log_norm_pi = log_sum_exp(half_norms);

    const Vector d2 = squared_distance_columns(z, memory.matrix());
    const double d = static_cast<double>(memory.dim());
    const double log_gauss_norm = 0.5 * d * (std::log(beta) - log_two_pi());
    Vector terms(n);
    for (std::size_t k = 0; k < n; ++k) {
        const double log_pi = half_norms[k] - log_norm_pi;
        terms[k] = log_pi + log_gauss_norm - 0.5 * beta * d2[k];
    }
    return log_sum_exp(terms);
}

double mchn_log_normalizer(const MemoryMatrix& memory, double beta) {
    require_positive(beta, "beta");
    memory.require_nonempty();
    Vector half_norms(memory.size());
    for (std::size_t k = 0; k < memory.size(); ++k) half_norms[k] = 0.5 * beta * squared_norm(memory.pattern(k));
    const double d = static_cast<double>(memory.dim());
    return 0.5 * d * (std::log(beta) - log_two_pi()) - log_sum_exp(half_norms);
}

double log_prior_precision(const Vector& z, const MemoryMatrix& memory, const Precision& precision) {
    Vector logits = mahalanobis_columns(z, memory, precision);
    logits *= -0.5;
    const double d = static_cast<double>(memory.dim());
    return log_sum_exp(logits) - std::log(static_cast<double>(memory.size())) - 0.5 * d * log_two_pi() +
           0.5 * precision.log_det();
}

Vector grad_log_prior_precision(const Vector& z, const MemoryMatrix& memory, const Precision& precision) {
    Vector diff = readout(memory, precision_weights(z, memory, precision));
    diff -= z;
    return precision.apply(diff);
}

double log_prior(const Vector& z, const MemoryMatrix& memory, const PriorSpec& prior) {
    return std::visit(
        overloaded{[&](const BalancedGmmPrior& p) { return log_prior_balanced(z, memory, p.sigma); },
                   [&](const MchnPrior& p) { return log_prior_mchn(z, memory, p.beta); },
                   [&](const PrecisionGmmPrior& p) { return log_prior_precision(z, memory, p.precision); }},
        prior);
}

Vector grad_log_prior(const Vector& z, const MemoryMatrix& memory, const PriorSpec& prior) {
    return std::visit(
        overloaded{[&](const BalancedGmmPrior& p) { return grad_log_prior_balanced(z, memory, p.sigma); },
                   [&](const MchnPrior& p) {
                       Vector g = grad_mchn_energy(z, memory, p.beta);
                       g *= -1.0;
                       return g;
                   },
                   [&](const PrecisionGmmPrior& p) { return grad_log_prior_precision(z, memory, p.precision); }},
        prior);
}

Vector sample_prior(const MemoryMatrix& memory, double sigma, RngStream& rng) {
    require_positive(sigma, "sigma");
    memory.require_nonempty();
    const std::size_t k = rng.uniform_index(memory.size());
    Vector z = memory.pattern(k);
    for (auto& v : z) v += sigma * rng.normal();
    return z;
}

}  // namespace memvi
