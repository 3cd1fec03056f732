#pragma once

// Training a diagonal precision for the precision-GMM readout. The loss is the
// squared distance between the estimate after a fixed number of unrolled
// readout steps and the correct stored pattern; its gradient is obtained by
// backpropagating through those steps.

#include <cstddef>
#include <string>
#include <vector>

#include "memvi/memory.hpp"
#include "memvi/prior.hpp"
#include "memvi/rng.hpp"

namespace memvi {

inline constexpr double kPrecisionFloor = 1e-8;

/// Unconstrained parameters; P_jj = max(exp(raw_j), kPrecisionFloor).
struct PrecisionParams {
    Vector raw;

    /// raw_j = ln(1 / sigma^2) for every j.
    static PrecisionParams uniform(std::size_t dim, double sigma);

    [[nodiscard]] Vector values() const;
    [[nodiscard]] Precision precision() const { return Precision::diagonal(values()); }
};

struct PrecisionExample {
    Vector query;
    std::size_t target = 0;
};

struct PrecisionTask {
    MemoryMatrix memory;
    std::vector<PrecisionExample> examples;
    /// Which latent dimensions the queries were corrupted on; for reporting.
    std::vector<std::size_t> corrupted_dims;

    /// Throws on an empty task, a bad target index or a query of the wrong dim.
    void validate() const;
};

/// Queries M_k + noise_std * N(0, 1) on `dims` only, targets drawn uniformly.
PrecisionTask make_subspace_noise_task(const MemoryMatrix& memory, const std::vector<std::size_t>& dims,
                                       double noise_std, std::size_t count, RngStream& rng);

struct LossAndGradient {
    double loss = 0.0;
    Vector grad_raw;
};

/// Mean over examples of ||z_T - M_target||^2 with z_T after
/// `iters_per_example` precision readouts from the query.
double precision_loss(const PrecisionParams& params, const PrecisionTask& task, std::size_t iters_per_example);
LossAndGradient precision_loss_and_gradient(const PrecisionParams& params, const PrecisionTask& task,
                                            std::size_t iters_per_example);

struct PrecisionTrainOptions {
    std::size_t epochs = 1000;
    double learning_rate = 0.5;
    std::size_t iters_per_example = 1;
    /// Initial isotropic scale: raw starts at ln(1 / initial_sigma^2).
    double initial_sigma = 1.0;
};

struct PrecisionTrainResult {
    PrecisionParams params;
    /// Loss before each epoch's update, plus the final loss.
    std::vector<double> loss_trace;
};

/// Full-batch gradient descent with a fixed learning rate. Throws NumericError
/// on a non-finite loss.
PrecisionTrainResult train_precision(const PrecisionTask& task, const PrecisionTrainOptions& options);

/// Percentage of examples whose converged precision-engine retrieval lands
/// within tau of the target (tau <= 0 selects half the minimum pairwise
/// memory distance).
double precision_success_rate(const Precision& precision, const PrecisionTask& task, double tau = 0.0,
                              std::size_t max_iters = 200);

/// Percentage of examples whose nearest pattern, measured only on the
/// dimensions *not* in task.corrupted_dims, is the target.
double masked_nearest_neighbor_rate(const PrecisionTask& task);

}  // namespace memvi
