#pragma once

// Memory-dependent priors p(z; M) over the latent estimate.
//
//   balanced   sum_k (1/N) N(z; M_k, sigma^2 I)
//   mchn       sum_k pi_k N(z; M_k, beta^-1 I),  pi = softmax(beta/2 ||M_k||^2)
//   precision  sum_k (1/N) N(z; M_k, P^-1),      P diagonal or full SPD
//
// Every log-density keeps its normalization constant.

#include <optional>
#include <string>
#include <variant>

#include "memvi/memory.hpp"
#include "memvi/numerics.hpp"
#include "memvi/rng.hpp"

namespace memvi {

/// Precision (inverse covariance) shared by all mixture components.
class Precision {
public:
    /// Throws std::invalid_argument on a non-positive or non-finite entry.
    static Precision diagonal(Vector entries);
    /// Throws std::invalid_argument unless `p` is symmetric positive definite.
    static Precision full(Matrix p);
    /// (1/sigma^2) I
    static Precision isotropic(std::size_t dim, double sigma);

    [[nodiscard]] bool is_diagonal() const noexcept { return !full_.has_value(); }
    [[nodiscard]] std::size_t dim() const noexcept;
    /// Diagonal entries (for a full matrix, its diagonal).
    [[nodiscard]] Vector diagonal_entries() const;
    [[nodiscard]] const std::optional<Matrix>& full_matrix() const noexcept { return full_; }

    /// v^T P v
    [[nodiscard]] double quadratic(const Vector& v) const;
    /// P v
    [[nodiscard]] Vector apply(const Vector& v) const;
    [[nodiscard]] double log_det() const noexcept { return log_det_; }

private:
    Vector diag_;
    std::optional<Matrix> full_;
    double log_det_ = 0.0;
};

struct BalancedGmmPrior {
    double sigma = 1.0;
};
struct MchnPrior {
    double beta = 1.0;
};
struct PrecisionGmmPrior {
    Precision precision;
};

using PriorSpec = std::variant<BalancedGmmPrior, MchnPrior, PrecisionGmmPrior>;

std::string prior_name(const PriorSpec& prior);
/// Throws std::invalid_argument on sigma <= 0 or beta <= 0.
void validate_prior(const PriorSpec& prior);

// Attention weights over stored patterns and the corresponding readout.

/// softmax(-||z - M_k||^2 / (2 sigma^2))
Vector gmm_weights(const Vector& z, const MemoryMatrix& memory, double sigma);
/// softmax(beta z^T M_k)
Vector mchn_weights(const Vector& z, const MemoryMatrix& memory, double beta);
/// softmax(-1/2 (z - M_k)^T P (z - M_k))
Vector precision_weights(const Vector& z, const MemoryMatrix& memory, const Precision& precision);
/// Squared Mahalanobis distances (z - M_k)^T P (z - M_k).
Vector mahalanobis_columns(const Vector& z, const MemoryMatrix& memory, const Precision& precision);
/// sum_k w_k M_k
Vector readout(const MemoryMatrix& memory, const Vector& weights);

double log_prior_balanced(const Vector& z, const MemoryMatrix& memory, double sigma);
/// (1/sigma^2) (softmax(-||z - M||^2 / (2 sigma^2)) M^T - z)
Vector grad_log_prior_balanced(const Vector& z, const MemoryMatrix& memory, double sigma);

/// (beta/2) z^T z - log sum_k exp(beta z^T M_k), additive constant dropped.
double mchn_energy(const Vector& z, const MemoryMatrix& memory, double beta);
/// beta (z - softmax(beta z^T M) M^T)
Vector grad_mchn_energy(const Vector& z, const MemoryMatrix& memory, double beta);
/// Full biased-mixture log-density, evaluated as a mixture (independently of
/// mchn_energy).
double log_prior_mchn(const Vector& z, const MemoryMatrix& memory, double beta);
/// The z-independent constant c with log_prior_mchn(z) = -mchn_energy(z) + c:
///   c = (d/2) ln(beta / 2 pi) - log sum_k exp(beta/2 ||M_k||^2)
double mchn_log_normalizer(const MemoryMatrix& memory, double beta);

double log_prior_precision(const Vector& z, const MemoryMatrix& memory, const Precision& precision);
/// P (softmax(-1/2 mahalanobis) M^T - z)
Vector grad_log_prior_precision(const Vector& z, const MemoryMatrix& memory, const Precision& precision);

/// Dispatch over PriorSpec.
double log_prior(const Vector& z, const MemoryMatrix& memory, const PriorSpec& prior);
Vector grad_log_prior(const Vector& z, const MemoryMatrix& memory, const PriorSpec& prior);

/// k uniform in [0, N), returns M_k + sigma * standard normal.
Vector sample_prior(const MemoryMatrix& memory, double sigma, RngStream& rng);

}  // namespace memvi
