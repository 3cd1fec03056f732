#include "memvi/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

namespace memvi {
namespace {

// Uniformly thinned log: records every `stride_`-th point and halves itself
// (doubling the stride) whenever it would exceed the cap.
class TrajectoryLog {
public:
    TrajectoryLog(bool enabled, std::size_t cap) : enabled_(enabled), cap_(std::max<std::size_t>(cap, 2)) {}

    void record(std::size_t index, const Vector& z) {
        if (!enabled_ || index % stride_ != 0) return;
        points_.push_back(z);
        if (points_.size() > cap_) {
            std::vector<Vector> kept;
            kept.reserve(points_.size() / 2 + 1);
            for (std::size_t i = 0; i < points_.size(); i += 2) kept.push_back(std::move(points_[i]));
            points_ = std::move(kept);
            stride_ *= 2;
        }
    }

    std::vector<Vector> take() { return std::move(points_); }

private:
    bool enabled_;
    std::size_t cap_;
    std::size_t stride_ = 1;
    std::vector<Vector> points_;
};

const BalancedGmmPrior& require_balanced(const PriorSpec& prior, Engine engine) {
    if (const auto* p = std::get_if<BalancedGmmPrior>(&prior)) return *p;
    throw ConfigError("engine '" + std::string(to_string(engine)) + "' requires a balanced_gmm prior, got " +
                      prior_name(prior));
}

Vector initial_estimate(const Vector& query, const VaeModel* vae, std::size_t latent_dim,
                        const RetrievalConfig& config) {
    switch (config.init_mode) {
        case InitMode::encoder:
            if (vae == nullptr) throw ConfigError("init_mode encoder requires a trained model");
            return encode(*vae, query).mu;
        case InitMode::explicit_vector:
            if (!config.init_z) throw ConfigError("init_mode explicit requires an initial vector");
            if (config.init_z->dim() != latent_dim) {
                throw ShapeError("explicit initial vector " + shape_string(*config.init_z) + " vs latent (" +
                                 std::to_string(latent_dim) + ")");
            }
            return *config.init_z;
        case InitMode::query_as_z:
            break;
    }
    if (query.dim() != latent_dim) {
        throw ShapeError("query_as_z: query " + shape_string(query) + " vs latent (" + std::to_string(latent_dim) +
                         ")");
    }
    return query;
}

void finish(RetrievalResult& r, const MemoryMatrix& memory) {
    const NearestPattern nearest = memory.nearest(r.z_final);
    r.matched_index = nearest.index;
    r.matched_distance = nearest.distance;
}

void require_finite(double value, std::size_t step, const char* what) {
    if (!std::isfinite(value)) {
        throw NumericError(std::string(what) + ": non-finite objective at step " + std::to_string(step));
    }
}

// Shared loop for engines whose state is z alone.
RetrievalResult iterate(Vector z, const MemoryMatrix& memory, const RetrievalConfig& config,
                        const std::function<Vector(const Vector&)>& step,
                        const std::function<double(const Vector&)>& energy, const char* what) {
    RetrievalResult r;
    TrajectoryLog trajectory(config.log_trajectory, config.trajectory_cap);
    trajectory.record(0, z);
    if (config.log_energy) {
        r.energies.push_back(energy(z));
        require_finite(r.energies.back(), 0, what);
    }
    for (std::size_t t = 0; t < config.max_iters; ++t) {
        Vector next = step(z);
        if (!next.all_finite()) throw NumericError(std::string(what) + ": non-finite estimate at step " + std::to_string(t + 1));
        const double delta = max_abs_difference(next, z);
        z = std::move(next);
        ++r.iterations_used;
        trajectory.record(r.iterations_used, z);
        if (config.log_energy) {
            r.energies.push_back(energy(z));
            require_finite(r.energies.back(), r.iterations_used, what);
        }
        if (delta < config.tol) {
            r.converged = true;
            break;
        }
    }
    r.z_final = std::move(z);
    r.trajectory = trajectory.take();
    finish(r, memory);
    return r;
}

}  // namespace

std::string_view to_string(Engine e) noexcept {
    switch (e) {
        case Engine::mchn: return "mchn";
        case Engine::gmm: return "gmm";
        case Engine::gmm_smooth: return "gmm_smooth";
        case Engine::precision: return "precision";
        case Engine::bp_gmm: return "bp_gmm";
        case Engine::pc_gmm: return "pc_gmm";
    }
    return "?";
}

Engine parse_engine(std::string_view name) {
    for (Engine e : {Engine::mchn, Engine::gmm, Engine::gmm_smooth, Engine::precision, Engine::bp_gmm, Engine::pc_gmm}) {
        if (name == to_string(e)) return e;
    }
    throw ConfigError("unknown engine '" + std::string(name) +
                      "' (expected mchn, gmm, gmm_smooth, precision, bp_gmm or pc_gmm)");
}

std::string_view to_string(InitMode m) noexcept {
    switch (m) {
        case InitMode::query_as_z: return "query_as_z";
        case InitMode::encoder: return "encoder";
        case InitMode::explicit_vector: return "explicit";
    }
    return "?";
}

InitMode parse_init_mode(std::string_view name) {
    if (name == "query_as_z") return InitMode::query_as_z;
    if (name == "encoder") return InitMode::encoder;
    if (name == "explicit") return InitMode::explicit_vector;
    throw ConfigError("unknown init_mode '" + std::string(name) + "' (expected query_as_z, encoder or explicit)");
}

void RetrievalConfig::validate() const {
    if (max_iters == 0) throw ConfigError("retrieval: max_iters must be at least 1");
    if (!(tol >= 0.0)) throw ConfigError("retrieval: tol must be non-negative");
    if (!(step > 0.0) || !std::isfinite(step)) throw ConfigError("retrieval: step must be positive");
    if (!(prior_weight >= 0.0) || !std::isfinite(prior_weight)) {
        throw ConfigError("retrieval: prior_weight must be non-negative");
    }
}

RetrievalConfig default_config(Engine engine, const PriorSpec& prior) {
    RetrievalConfig c;
    switch (engine) {
        case Engine::gmm_smooth:
            if (const auto* p = std::get_if<BalancedGmmPrior>(&prior)) c.step = p->sigma * p->sigma / 10.0;
            break;
        case Engine::bp_gmm:
            // Half the pc rate: with prior_weight 2 both engines take the same steps.
            c.step = 0.025;
            c.init_mode = InitMode::encoder;
            break;
        case Engine::pc_gmm:
            c.step = 0.05;
            c.init_mode = InitMode::encoder;
            break;
        default:
            break;
    }
    return c;
}

Vector mchn_step(const Vector& z, const MemoryMatrix& memory, double beta) {
    if (!(beta > 0.0)) throw std::invalid_argument("beta must be positive");
    return readout(memory, mchn_weights(z, memory, beta));
}

Vector gmm_step(const Vector& z, const MemoryMatrix& memory, double sigma) {
    if (!(sigma > 0.0)) throw std::invalid_argument("sigma must be positive");
    return readout(memory, gmm_weights(z, memory, sigma));
}

Vector gmm_smooth_step(const Vector& z, const MemoryMatrix& memory, double sigma, double alpha) {
    if (!(sigma > 0.0)) throw std::invalid_argument("sigma must be positive");
    if (!(alpha > 0.0)) throw std::invalid_argument("alpha must be positive");
    const double rate = alpha / (sigma * sigma);
    const Vector target = readout(memory, gmm_weights(z, memory, sigma));
    Vector out = z;
    for (std::size_t i = 0; i < out.dim(); ++i) out[i] += rate * (target[i] - z[i]);
    return out;
}

Vector precision_step(const Vector& z, const MemoryMatrix& memory, const Precision& precision) {
    return readout(memory, precision_weights(z, memory, precision));
}

double bp_loss(const Vector& x, const Vector& z, const LayerStack& decoder, const MemoryMatrix& memory,
               const PriorSpec& prior, double gamma) {
    const Vector xhat = decode(decoder, z).output();
    return squared_distance(xhat, x) - gamma * log_prior(z, memory, prior);
}

Vector bp_loss_gradient(const Vector& x, const Vector& z, const LayerStack& decoder, const MemoryMatrix& memory,
                        const PriorSpec& prior, double gamma) {
    Vector g = reconstruction_gradient(decoder, z, x);
    g *= 2.0;
    axpy(-gamma, grad_log_prior(z, memory, prior), g);
    return g;
}

Vector bp_gmm_step(const Vector& x, const Vector& z, const LayerStack& decoder, const MemoryMatrix& memory,
                   const PriorSpec& prior, double gamma, double alpha) {
    Vector out = z;
    axpy(-alpha, bp_loss_gradient(x, z, decoder, memory, prior, gamma), out);
    return out;
}

RetrievalResult bp_gmm_retrieve(const Vector& x, const LayerStack& decoder, const MemoryMatrix& memory,
                                const PriorSpec& prior, const RetrievalConfig& config, const VaeModel* vae) {
    config.validate();
    validate_prior(prior);
    memory.require_nonempty();
    if (decoder.latent_dim() != memory.dim()) {
        throw ShapeError("bp_gmm: decoder latent (" + std::to_string(decoder.latent_dim()) + ") vs memory " +
                         memory.matrix().shape_string());
    }
    if (x.dim() != decoder.observation_dim()) {
        throw ShapeError("bp_gmm: observation " + shape_string(x) + " vs decoder output (" +
                         std::to_string(decoder.observation_dim()) + ")");
    }
    const Vector z0 = initial_estimate(x, vae, memory.dim(), config);
    return iterate(
        z0, memory, config,
        [&](const Vector& z) { return bp_gmm_step(x, z, decoder, memory, prior, config.prior_weight, config.step); },
        [&](const Vector& z) { return bp_loss(x, z, decoder, memory, prior, config.prior_weight); }, "bp_gmm");
}

PcState init_pc_state(const Vector& x, const Vector& z, const LayerStack& stack) {
    const std::size_t L = stack.depth();
    if (x.dim() != stack.observation_dim()) {
        throw ShapeError("pc: observation " + shape_string(x) + " vs stack output (" +
                         std::to_string(stack.observation_dim()) + ")");
    }
    const Decoded cascade = decode(stack, z);
    PcState s;
    s.estimates.resize(L + 1);
    s.estimates[0] = x;
    for (std::size_t l = 1; l < L; ++l) s.estimates[l] = cascade.predictions[l];
    s.estimates[L] = z;
    compute_errors(s, stack);
    return s;
}

void compute_errors(PcState& state, const LayerStack& stack) {
    const std::size_t L = stack.depth();
    state.errors.resize(L);
    for (std::size_t l = 0; l < L; ++l) {
        state.errors[l] = state.estimates[l] - layer_forward(stack.layer(l), state.estimates[l + 1]);
    }
}

double pc_free_energy(const PcState& state, const LayerStack& stack, const MemoryMatrix& memory, double sigma) {
    double f = 0.0;
    for (std::size_t l = 0; l < stack.depth(); ++l) {
        f += 0.5 * squared_distance(state.estimates[l], layer_forward(stack.layer(l), state.estimates[l + 1]));
    }
    return f - log_prior_balanced(state.z(), memory, sigma);
}

namespace {

Vector top_update(const Vector& z, const Vector& top_error, const Layer& top_layer, const MemoryMatrix& memory,
                  double sigma, double alpha) {
    Vector delta = layer_vjp(top_layer, z, top_error);
    delta *= alpha;
    const Vector target = readout(memory, gmm_weights(z, memory, sigma));
    const double rate = alpha / (sigma * sigma);
    for (std::size_t i = 0; i < delta.dim(); ++i) delta[i] += rate * (target[i] - z[i]);
    return delta;
}

}  // namespace

double pc_step(PcState& state, const LayerStack& stack, const MemoryMatrix& memory, double sigma, double alpha) {
    const std::size_t L = stack.depth();
    compute_errors(state, stack);

    std::vector<Vector> deltas(L + 1);
    for (std::size_t l = 1; l < L; ++l) {
        Vector d = layer_vjp(stack.layer(l - 1), state.estimates[l], state.errors[l - 1]);
        d -= state.errors[l];
        d *= alpha;
        deltas[l] = std::move(d);
    }
    deltas[L] = top_update(state.estimates[L], state.errors[L - 1], stack.layer(L - 1), memory, sigma, alpha);

    double largest = 0.0;
    for (std::size_t l = 1; l <= L; ++l) {
        for (double v : deltas[l]) largest = std::max(largest, std::abs(v));
        state.estimates[l] += deltas[l];
    }
    compute_errors(state, stack);
    return largest;
}

PcState pc_fixed_prediction_step(const PcState& state, const LayerStack& stack, const MemoryMatrix& memory,
                                 double sigma, double alpha) {
    const std::size_t L = stack.depth();
    PcState next = state;

    std::vector<Vector> frozen(L);
    for (std::size_t l = 0; l < L; ++l) frozen[l] = layer_forward(stack.layer(l), state.estimates[l + 1]);

    next.errors.assign(L, Vector());
    next.errors[0] = state.estimates[0] - frozen[0];
    for (std::size_t l = 1; l < L; ++l) {
        next.errors[l] = layer_vjp(stack.layer(l - 1), state.estimates[l], next.errors[l - 1]);
        next.estimates[l] = frozen[l] + next.errors[l];
    }
    next.estimates[L] += top_update(state.estimates[L], next.errors[L - 1], stack.layer(L - 1), memory, sigma, alpha);
    return next;
}

PcState pc_relax(PcState state, const LayerStack& stack, const MemoryMatrix& memory, double sigma, double alpha,
                 std::size_t max_iters, double tol, std::size_t* iterations) {
    std::size_t t = 0;
    while (t < max_iters) {
        const double largest = pc_step(state, stack, memory, sigma, alpha);
        ++t;
        if (largest < tol) break;
    }
    if (iterations) *iterations = t;
    return state;
}

RetrievalResult pc_gmm_retrieve(const Vector& x, const LayerStack& stack, const MemoryMatrix& memory, double sigma,
                                const RetrievalConfig& config, const VaeModel* vae) {
    config.validate();
    if (!(sigma > 0.0)) throw std::invalid_argument("sigma must be positive");
    memory.require_nonempty();
    if (stack.latent_dim() != memory.dim()) {
        throw ShapeError("pc_gmm: stack latent (" + std::to_string(stack.latent_dim()) + ") vs memory " +
                         memory.matrix().shape_string());
    }
    PcState state = init_pc_state(x, initial_estimate(x, vae, memory.dim(), config), stack);

    RetrievalResult r;
    TrajectoryLog trajectory(config.log_trajectory, config.trajectory_cap);
    trajectory.record(0, state.z());
    if (config.log_energy) {
        r.energies.push_back(pc_free_energy(state, stack, memory, sigma));
        require_finite(r.energies.back(), 0, "pc_gmm");
    }
    for (std::size_t t = 0; t < config.max_iters; ++t) {
        const double largest = pc_step(state, stack, memory, sigma, config.step);
        ++r.iterations_used;
        if (!state.z().all_finite()) {
            throw NumericError("pc_gmm: non-finite estimate at step " + std::to_string(r.iterations_used));
        }
        trajectory.record(r.iterations_used, state.z());
        if (config.log_energy) {
            r.energies.push_back(pc_free_energy(state, stack, memory, sigma));
            require_finite(r.energies.back(), r.iterations_used, "pc_gmm");
        }
        if (largest < config.tol) {
            r.converged = true;
            break;
        }
    }
    r.z_final = state.z();
    r.trajectory = trajectory.take();
    finish(r, memory);
    return r;
}

RetrievalResult retrieve(const Vector& query, const VaeModel* model, const MemoryMatrix& memory,
                         const PriorSpec& prior, Engine engine, const RetrievalConfig& config) {
    config.validate();
    validate_prior(prior);
    memory.require_nonempty();

    switch (engine) {
        case Engine::mchn: {
            const auto* p = std::get_if<MchnPrior>(&prior);
            if (!p) throw ConfigError("engine 'mchn' requires an mchn prior, got " + prior_name(prior));
            const double beta = p->beta;
            return iterate(
                initial_estimate(query, model, memory.dim(), config), memory, config,
                [&](const Vector& z) { return mchn_step(z, memory, beta); },
                [&](const Vector& z) { return mchn_energy(z, memory, beta); }, "mchn");
        }
        case Engine::gmm: {
            const double sigma = require_balanced(prior, engine).sigma;
            return iterate(
                initial_estimate(query, model, memory.dim(), config), memory, config,
                [&](const Vector& z) { return gmm_step(z, memory, sigma); },
                [&](const Vector& z) { return -log_prior_balanced(z, memory, sigma); }, "gmm");
        }
        case Engine::gmm_smooth: {
            const double sigma = require_balanced(prior, engine).sigma;
            return iterate(
                initial_estimate(query, model, memory.dim(), config), memory, config,
                [&](const Vector& z) { return gmm_smooth_step(z, memory, sigma, config.step); },
                [&](const Vector& z) { return -log_prior_balanced(z, memory, sigma); }, "gmm_smooth");
        }
        case Engine::precision: {
            const auto* p = std::get_if<PrecisionGmmPrior>(&prior);
            if (!p) throw ConfigError("engine 'precision' requires a precision_gmm prior, got " + prior_name(prior));
            const Precision& precision = p->precision;
            return iterate(
                initial_estimate(query, model, memory.dim(), config), memory, config,
                [&](const Vector& z) { return precision_step(z, memory, precision); },
                [&](const Vector& z) { return -log_prior_precision(z, memory, precision); }, "precision");
        }
        case Engine::bp_gmm:
            if (!model) throw ConfigError("engine 'bp_gmm' requires a trained model");
            return bp_gmm_retrieve(query, model->decoder, memory, prior, config, model);
        case Engine::pc_gmm: {
            const double sigma = require_balanced(prior, engine).sigma;
            if (!model) throw ConfigError("engine 'pc_gmm' requires a trained model");
            return pc_gmm_retrieve(query, model->decoder, memory, sigma, config, model);
        }
    }
    throw ConfigError("unhandled engine");
}

}  // namespace memvi
