#include "memvi/precision.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "memvi/retrieval.hpp"

namespace memvi {

PrecisionParams PrecisionParams::uniform(std::size_t dim, double sigma) {
    if (!(sigma > 0.0)) throw std::invalid_argument("sigma must be positive");
    return PrecisionParams{Vector(dim, std::log(1.0 / (sigma * sigma)))};
}

Vector PrecisionParams::values() const {
    Vector p(raw.dim());
    for (std::size_t j = 0; j < raw.dim(); ++j) p[j] = std::max(std::exp(raw[j]), kPrecisionFloor);
    return p;
}

void PrecisionTask::validate() const {
    if (examples.empty()) throw std::invalid_argument("precision task: no examples");
    memory.require_nonempty();
    for (std::size_t i = 0; i < examples.size(); ++i) {
        if (examples[i].target >= memory.size()) {
            throw std::out_of_range("precision task: example " + std::to_string(i) + " targets pattern " +
                                    std::to_string(examples[i].target) + " of " + std::to_string(memory.size()));
        }
        memory.require_dim(examples[i].query, "precision task");
    }
    for (std::size_t j : corrupted_dims) {
        if (j >= memory.dim()) throw std::out_of_range("precision task: corrupted dim out of range");
    }
}

PrecisionTask make_subspace_noise_task(const MemoryMatrix& memory, const std::vector<std::size_t>& dims,
                                       double noise_std, std::size_t count, RngStream& rng) {
    memory.require_nonempty();
    PrecisionTask task{memory, {}, dims};
    task.examples.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        const std::size_t k = rng.uniform_index(memory.size());
        Vector q = memory.pattern(k);
        for (std::size_t j : dims) q[j] += noise_std * rng.normal();
        task.examples.push_back({std::move(q), k});
    }
    task.validate();
    return task;
}

namespace {

// Forward through the unrolled readout, keeping what the backward pass needs.
struct Unrolled {
    std::vector<Vector> z;        // z_0 .. z_T
    std::vector<Vector> weights;  // w_0 .. w_{T-1}
};

Unrolled unroll(const Vector& query, const MemoryMatrix& memory, const Precision& precision, std::size_t iters) {
    Unrolled u;
    u.z.reserve(iters + 1);
    u.z.push_back(query);
    for (std::size_t t = 0; t < iters; ++t) {
        u.weights.push_back(precision_weights(u.z.back(), memory, precision));
        u.z.push_back(readout(memory, u.weights.back()));
    }
    return u;
}

}  // namespace

double precision_loss(const PrecisionParams& params, const PrecisionTask& task, std::size_t iters_per_example) {
    if (iters_per_example == 0) throw std::invalid_argument("precision_loss: iters_per_example must be at least 1");
    task.validate();
    const Precision precision = params.precision();
    double total = 0.0;
    for (const auto& ex : task.examples) {
        Vector z = ex.query;
        for (std::size_t t = 0; t < iters_per_example; ++t) z = precision_step(z, task.memory, precision);
        total += squared_distance(z, task.memory.pattern(ex.target));
    }
    return total / static_cast<double>(task.examples.size());
}

LossAndGradient precision_loss_and_gradient(const PrecisionParams& params, const PrecisionTask& task,
                                            std::size_t iters_per_example) {
    if (iters_per_example == 0) throw std::invalid_argument("precision_loss: iters_per_example must be at least 1");
    task.validate();
    const Matrix& m = task.memory.matrix();
    const std::size_t d = task.memory.dim();
    const std::size_t n = task.memory.size();
    const Vector p = params.values();
    const Precision precision = Precision::diagonal(p);
    const double inv_count = 1.0 / static_cast<double>(task.examples.size());

    LossAndGradient out{0.0, Vector(d)};
    Vector grad_p(d);
    for (const auto& ex : task.examples) {
        const Unrolled u = unroll(ex.query, task.memory, precision, iters_per_example);
        const Vector target = task.memory.pattern(ex.target);
        out.loss += squared_distance(u.z.back(), target) * inv_count;

        // dL/dz_T
        Vector g = u.z.back() - target;
        g *= 2.0 * inv_count;
        for (std::size_t t = iters_per_example; t-- > 0;) {
            const Vector& w = u.weights[t];
            const Vector& z_in = u.z[t];
            // dL/ds_k = w_k (g . M_k - g . z_{t+1})
            const Vector a = matvec_transposed(m, g);
            const double mean_a = dot(g, u.z[t + 1]);
            Vector ds(n);
            for (std::size_t k = 0; k < n; ++k) ds[k] = w[k] * (a[k] - mean_a);

            Vector g_in(d);
            for (std::size_t j = 0; j < d; ++j) {
                const auto row = m.row(j);
                double weighted = 0.0;
                double dp = 0.0;
                for (std::size_t k = 0; k < n; ++k) {
                    const double diff = z_in[j] - row[k];
                    weighted += ds[k] * diff;
                    dp += ds[k] * diff * diff;
                }
                // s_k = -1/2 sum_j P_j (z_j - M_jk)^2
                g_in[j] = -p[j] * weighted;
                grad_p[j] += -0.5 * dp;
            }
            g = std::move(g_in);
        }
    }
    for (std::size_t j = 0; j < d; ++j) {
        const double e = std::exp(params.raw[j]);
        out.grad_raw[j] = e > kPrecisionFloor ? grad_p[j] * e : 0.0;
    }
    return out;
}

PrecisionTrainResult train_precision(const PrecisionTask& task, const PrecisionTrainOptions& options) {
    task.validate();
    if (!(options.learning_rate >= 0.0)) throw std::invalid_argument("train_precision: learning rate must be non-negative");
    PrecisionTrainResult result{PrecisionParams::uniform(task.memory.dim(), options.initial_sigma), {}};
    for (std::size_t epoch = 0; epoch < options.epochs; ++epoch) {
        const LossAndGradient lg = precision_loss_and_gradient(result.params, task, options.iters_per_example);
        if (!std::isfinite(lg.loss) || !lg.grad_raw.all_finite()) {
            throw NumericError("train_precision: non-finite loss at epoch " + std::to_string(epoch) +
                               " (learning rate " + std::to_string(options.learning_rate) + ")");
        }
        result.loss_trace.push_back(lg.loss);
        axpy(-options.learning_rate, lg.grad_raw, result.params.raw);
    }
    result.loss_trace.push_back(precision_loss(result.params, task, options.iters_per_example));
    return result;
}

double precision_success_rate(const Precision& precision, const PrecisionTask& task, double tau,
                              std::size_t max_iters) {
    task.validate();
    if (tau <= 0.0) tau = 0.5 * task.memory.min_pairwise_distance();
    RetrievalConfig config;
    config.max_iters = max_iters;
    config.log_energy = false;
    const PriorSpec prior = PrecisionGmmPrior{precision};
    std::size_t hits = 0;
    for (const auto& ex : task.examples) {
        const RetrievalResult r = retrieve(ex.query, nullptr, task.memory, prior, Engine::precision, config);
        if (distance(r.z_final, task.memory.pattern(ex.target)) < tau) ++hits;
    }
    return 100.0 * static_cast<double>(hits) / static_cast<double>(task.examples.size());
}

double masked_nearest_neighbor_rate(const PrecisionTask& task) {
    task.validate();
    std::vector<bool> clean(task.memory.dim(), true);
    for (std::size_t j : task.corrupted_dims) clean[j] = false;
    const Matrix& m = task.memory.matrix();
    std::size_t hits = 0;
    for (const auto& ex : task.examples) {
        std::size_t best = 0;
        double best_d = std::numeric_limits<double>::infinity();
        for (std::size_t k = 0; k < task.memory.size(); ++k) {
            double s = 0.0;
            for (std::size_t j = 0; j < task.memory.dim(); ++j) {
                if (!clean[j]) continue;
                const double diff = ex.query[j] - m(j, k);
                s += diff * diff;
            }
            if (s < best_d) {
                best_d = s;
                best = k;
            }
        }
        if (best == ex.target) ++hits;
    }
    return 100.0 * static_cast<double>(hits) / static_cast<double>(task.examples.size());
}

}  // namespace memvi
