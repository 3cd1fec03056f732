#pragma once

// Iterative retrieval: one-step attention readouts (MCHN, GMM, precision GMM),
// the smoothed GMM gradient step, backprop descent on the BP-GMM loss, and the
// predictive-coding network with per-layer estimates and prediction errors.

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "memvi/generative.hpp"
#include "memvi/memory.hpp"
#include "memvi/prior.hpp"

namespace memvi {

/// Engine/prior/model combinations that cannot run together.
class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

enum class Engine { mchn, gmm, gmm_smooth, precision, bp_gmm, pc_gmm };
enum class InitMode { query_as_z, encoder, explicit_vector };

std::string_view to_string(Engine e) noexcept;
Engine parse_engine(std::string_view name);
std::string_view to_string(InitMode m) noexcept;
InitMode parse_init_mode(std::string_view name);

struct RetrievalConfig {
    std::size_t max_iters = 200;
    /// Descent rate alpha. Ignored by the one-step engines (mchn, gmm, precision).
    double step = 0.05;
    /// gamma, weight of -log p(z; M) in the BP-GMM loss.
    double prior_weight = 2.0;
    /// Stop once ||z_{t+1} - z_t||_inf < tol (for pc_gmm: the largest update
    /// over all layers).
    double tol = 1e-7;
    InitMode init_mode = InitMode::query_as_z;
    std::optional<Vector> init_z;
    bool log_trajectory = false;
    std::size_t trajectory_cap = 1000;
    bool log_energy = true;

    /// Throws ConfigError on T == 0, negative tol, non-positive step or
    /// negative gamma.
    void validate() const;
};

/// Per-engine defaults: alpha = sigma^2/10 for gmm_smooth, 0.025 for bp and 0.05
/// for pc; encoder initialization for bp/pc, query_as_z otherwise.
RetrievalConfig default_config(Engine engine, const PriorSpec& prior);

struct RetrievalResult {
    Vector z_final;
    /// Iterates including the initial estimate, uniformly thinned to at most
    /// trajectory_cap points. Empty unless log_trajectory.
    std::vector<Vector> trajectory;
    /// Objective at the initial estimate and after every iteration.
    std::vector<double> energies;
    std::size_t iterations_used = 0;
    bool converged = false;
    std::size_t matched_index = 0;
    double matched_distance = 0.0;

    friend bool operator==(const RetrievalResult&, const RetrievalResult&) = default;
};

// Single updates.

/// softmax(beta z^T M) M^T
Vector mchn_step(const Vector& z, const MemoryMatrix& memory, double beta);
/// softmax(-||z - M||^2 / (2 sigma^2)) M^T
Vector gmm_step(const Vector& z, const MemoryMatrix& memory, double sigma);
/// z + (alpha / sigma^2) (softmax(-||z - M||^2 / (2 sigma^2)) M^T - z)
Vector gmm_smooth_step(const Vector& z, const MemoryMatrix& memory, double sigma, double alpha);
/// softmax(-1/2 (z - M)^T P (z - M)) M^T
Vector precision_step(const Vector& z, const MemoryMatrix& memory, const Precision& precision);

// BP-GMM.

/// ||f(z) - x||^2 - gamma log p(z; M)
double bp_loss(const Vector& x, const Vector& z, const LayerStack& decoder, const MemoryMatrix& memory,
               const PriorSpec& prior, double gamma);
Vector bp_loss_gradient(const Vector& x, const Vector& z, const LayerStack& decoder, const MemoryMatrix& memory,
                        const PriorSpec& prior, double gamma);
/// z - alpha * grad bp_loss
Vector bp_gmm_step(const Vector& x, const Vector& z, const LayerStack& decoder, const MemoryMatrix& memory,
                   const PriorSpec& prior, double gamma, double alpha);

/// Gradient descent on bp_loss. `vae` supplies the encoder when init_mode is
/// encoder. Throws NumericError naming the step on a non-finite loss.
RetrievalResult bp_gmm_retrieve(const Vector& x, const LayerStack& decoder, const MemoryMatrix& memory,
                                const PriorSpec& prior, const RetrievalConfig& config,
                                const VaeModel* vae = nullptr);

// Predictive coding.

struct PcState {
    /// estimates[0] is the clamped observation, estimates[L] is z.
    std::vector<Vector> estimates;
    /// errors[l] = estimates[l] - f^l(estimates[l+1]), l in [0, L).
    std::vector<Vector> errors;

    [[nodiscard]] const Vector& z() const { return estimates.back(); }
};

/// Clamps x, sets z, and fills intermediate layers along the forward cascade so
/// every error except errors[0] starts at zero.
PcState init_pc_state(const Vector& x, const Vector& z, const LayerStack& stack);
void compute_errors(PcState& state, const LayerStack& stack);

/// Free energy sum_l 1/2 ||eps_l||^2 - log p_balanced(z) of the state (errors
/// recomputed from the estimates).
double pc_free_energy(const PcState& state, const LayerStack& stack, const MemoryMatrix& memory, double sigma);

/// One synchronous sweep: errors from the current estimates, then
///   h_l += alpha (vjp(layer l-1, h_l, eps_{l-1}) - eps_l),  0 < l < L
///   z   += alpha vjp(layer L-1, z, eps_{L-1}) + (alpha/sigma^2)(readout - z)
/// Returns the largest absolute update over all layers.
double pc_step(PcState& state, const LayerStack& stack, const MemoryMatrix& memory, double sigma, double alpha);

/// Sweep under the fixed-prediction assumption: predictions f^l(h_{l+1}) and
/// Jacobians at h_l are frozen at the sweep's start, intermediate errors relax
/// to their frozen equilibrium eps_l = J_{l-1}^T eps_{l-1}, then z takes the
/// same update as pc_step. With gamma = 2 this equals a BP-GMM step of rate
/// alpha / 2.
PcState pc_fixed_prediction_step(const PcState& state, const LayerStack& stack, const MemoryMatrix& memory,
                                 double sigma, double alpha);

RetrievalResult pc_gmm_retrieve(const Vector& x, const LayerStack& stack, const MemoryMatrix& memory, double sigma,
                                const RetrievalConfig& config, const VaeModel* vae = nullptr);

/// Runs pc_step until the largest update drops below tol or max_iters; returns
/// the final state (for equilibrium inspection).
PcState pc_relax(PcState state, const LayerStack& stack, const MemoryMatrix& memory, double sigma, double alpha,
                 std::size_t max_iters, double tol, std::size_t* iterations = nullptr);

// Dispatch.

/// Runs `engine` on `query`. For bp_gmm and pc_gmm the query is an observation
/// and `model` must be provided; the other engines read the query as a latent
/// unless init_mode is encoder. Throws ConfigError on engine/prior mismatch or a
/// missing model.
RetrievalResult retrieve(const Vector& query, const VaeModel* model, const MemoryMatrix& memory,
                         const PriorSpec& prior, Engine engine, const RetrievalConfig& config);

}  // namespace memvi
