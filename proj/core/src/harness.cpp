#include "memvi/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

#include <json.hpp>

namespace memvi {
namespace {

std::string format_number(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%g", v);
    return buf;
}

std::string format_fixed(double v) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "%.6f", v);
    return buf;
}

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> parts;
    std::size_t start = 0;
    while (true) {
        const auto pos = s.find(sep, start);
        parts.push_back(s.substr(start, pos - start));
        if (pos == std::string::npos) break;
        start = pos + 1;
    }
    return parts;
}

double parse_number(const std::string& s, const std::string& label) {
    std::size_t used = 0;
    double v = 0.0;
    try {
        v = std::stod(s, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used != s.size() || s.empty()) throw std::invalid_argument("scenario '" + label + "': bad number '" + s + "'");
    return v;
}

// Runs fn(i) for i in [0, count) on up to `workers` threads. The first
// exception (by index) is rethrown after all threads join.
template <class Fn>
void parallel_for(std::size_t count, std::size_t workers, Fn&& fn) {
    if (workers == 0) workers = std::max<std::size_t>(1, std::thread::hardware_concurrency());
    workers = std::min(workers, std::max<std::size_t>(count, 1));
    std::vector<std::exception_ptr> errors(count);
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < count; i = next++) {
            try {
                fn(i);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    if (workers <= 1) {
        worker();
    } else {
        std::vector<std::thread> threads;
        for (std::size_t w = 0; w < workers; ++w) threads.emplace_back(worker);
        for (auto& t : threads) t.join();
    }
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

bool needs_model(Engine e) { return e == Engine::bp_gmm || e == Engine::pc_gmm; }

VaeArchitecture architecture_of(const VaeModel& model) {
    VaeArchitecture arch;
    arch.latent_dim = model.latent_dim();
    arch.observation_dim = model.observation_dim();
    arch.hidden.clear();
    for (std::size_t l = model.decoder.depth() - 1; l >= 1; --l) arch.hidden.push_back(model.decoder.dim(l));
    if (model.decoder.depth() > 1) arch.hidden_activation = model.decoder.layer(model.decoder.depth() - 1).activation;
    return arch;
}

struct Instance {
    MemoryMatrix memory;
    /// What queries are derived from: the patterns themselves (latent space)
    /// or the observations the patterns were encoded from.
    std::vector<Vector> sources;
    double tau = 0.0;
};

PriorSpec prior_for(Engine engine, const BenchmarkSpec& spec, std::size_t d) {
    switch (engine) {
        case Engine::mchn: return MchnPrior{spec.beta};
        case Engine::precision:
            if (spec.precision) {
                if (spec.precision->dim() != d) {
                    throw ConfigError("benchmark: precision has " + std::to_string(spec.precision->dim()) +
                                      " entries, memory has d=" + std::to_string(d));
                }
                return PrecisionGmmPrior{Precision::diagonal(*spec.precision)};
            }
            return PrecisionGmmPrior{Precision::isotropic(d, spec.sigma)};
        default: return BalancedGmmPrior{spec.sigma};
    }
}

RetrievalConfig config_for(Engine engine, const PriorSpec& prior, const BenchmarkSpec& spec, QuerySpace space) {
    RetrievalConfig c = default_config(engine, prior);
    if (spec.retrieval.max_iters) c.max_iters = *spec.retrieval.max_iters;
    if (spec.retrieval.tol) c.tol = *spec.retrieval.tol;
    if (spec.retrieval.step) c.step = *spec.retrieval.step;
    if (spec.retrieval.prior_weight) c.prior_weight = *spec.retrieval.prior_weight;
    c.init_mode = space == QuerySpace::observation ? InitMode::encoder : InitMode::query_as_z;
    c.log_energy = false;
    c.log_trajectory = false;
    return c;
}

double mean(const std::vector<double>& v) {
    if (v.empty()) return 0.0;
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

double population_std(const std::vector<double>& v) {
    if (v.size() < 2) return 0.0;
    const double m = mean(v);
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return std::sqrt(s / static_cast<double>(v.size()));
}

}  // namespace

SyntheticMemory make_synthetic_memory(std::size_t n, std::size_t d, RngStream& rng, double min_separation) {
    if (n == 0 || d == 0) throw std::invalid_argument("make_synthetic_memory: N and d must be at least 1");
    const double min_sq = min_separation * min_separation;
    std::vector<Vector> accepted;
    accepted.reserve(n);
    const std::size_t budget = 10 * n;
    std::size_t attempts = 0;
    while (accepted.size() < n) {
        if (attempts++ >= budget) {
            throw std::runtime_error("make_synthetic_memory: could not place " + std::to_string(n) +
                                     " patterns with separation " + format_number(min_separation) + " in " +
                                     std::to_string(budget) + " attempts; use a smaller N or separation");
        }
        Vector candidate = rng.normal_vector(d);
        const bool ok = std::all_of(accepted.begin(), accepted.end(),
                                    [&](const Vector& a) { return squared_distance(a, candidate) >= min_sq; });
        if (ok) accepted.push_back(std::move(candidate));
    }
    SyntheticMemory out{MemoryMatrix::from_patterns(accepted), accepted};
    return out;
}

Scenario Scenario::clean(QuerySpace space) { return Scenario{Corruption::clean, space, 0.0, 0.0, {}}; }
Scenario Scenario::noise(double std, QuerySpace space) { return Scenario{Corruption::gaussian_noise, space, std, 0.0, {}}; }
Scenario Scenario::mask(double fraction, QuerySpace space) { return Scenario{Corruption::mask, space, 0.0, fraction, {}}; }
Scenario Scenario::subspace(std::vector<std::size_t> dims, double std, QuerySpace space) {
    return Scenario{Corruption::subspace_noise, space, std, 0.0, std::move(dims)};
}

std::string Scenario::name() const {
    std::string base;
    switch (corruption) {
        case Corruption::clean: base = "clean"; break;
        case Corruption::gaussian_noise: base = "noise_" + format_number(noise_std); break;
        case Corruption::mask: base = "mask_" + format_number(mask_fraction); break;
        case Corruption::subspace_noise: {
            base = "subspace_";
            for (std::size_t i = 0; i < dims.size(); ++i) {
                if (i) base += '-';
                base += std::to_string(dims[i]);
            }
            base += "_" + format_number(noise_std);
            break;
        }
    }
    return space == QuerySpace::observation ? "obs_" + base : base;
}

void Scenario::validate(std::size_t query_dim) const {
    if (corruption == Corruption::mask && !(mask_fraction > 0.0 && mask_fraction < 1.0)) {
        throw std::invalid_argument("scenario " + name() + ": mask fraction must lie in (0, 1)");
    }
    if (!(noise_std >= 0.0)) throw std::invalid_argument("scenario " + name() + ": noise must be non-negative");
    for (std::size_t j : dims) {
        if (j >= query_dim) {
            throw std::invalid_argument("scenario " + name() + ": dim " + std::to_string(j) + " out of range for dim " +
                                        std::to_string(query_dim));
        }
    }
}

Scenario parse_scenario(const std::string& label) {
    std::string rest = label;
    QuerySpace space = QuerySpace::latent;
    if (rest.rfind("obs_", 0) == 0) {
        space = QuerySpace::observation;
        rest = rest.substr(4);
    }
    const auto parts = split(rest, '_');
    if (parts[0] == "clean" && parts.size() == 1) return Scenario::clean(space);
    if (parts[0] == "noise" && parts.size() == 2) return Scenario::noise(parse_number(parts[1], label), space);
    if (parts[0] == "mask" && parts.size() == 2) return Scenario::mask(parse_number(parts[1], label), space);
    if (parts[0] == "subspace" && parts.size() == 3) {
        std::vector<std::size_t> dims;
        for (const auto& p : split(parts[1], '-')) dims.push_back(static_cast<std::size_t>(parse_number(p, label)));
        return Scenario::subspace(std::move(dims), parse_number(parts[2], label), space);
    }
    throw std::invalid_argument("unknown scenario '" + label +
                                "' (expected clean, noise_<std>, mask_<w>, subspace_<i-j-k>_<std>, optionally obs_ prefixed)");
}

Vector corrupt(const Vector& query, const Scenario& scenario, RngStream& rng) {
    scenario.validate(query.dim());
    Vector out = query;
    switch (scenario.corruption) {
        case Corruption::clean: break;
        case Corruption::gaussian_noise:
            for (auto& v : out) v += scenario.noise_std * rng.normal();
            break;
        case Corruption::mask: {
            const std::size_t dim = out.dim();
            const auto width = static_cast<std::size_t>(std::ceil(scenario.mask_fraction * static_cast<double>(dim)));
            const std::size_t offset = rng.uniform_index(dim);
            for (std::size_t i = 0; i < std::min(width, dim); ++i) out[(offset + i) % dim] = 0.0;
            break;
        }
        case Corruption::subspace_noise:
            for (std::size_t j : scenario.dims) out[j] += scenario.noise_std * rng.normal();
            break;
    }
    return out;
}

double default_threshold(const MemoryMatrix& memory) {
    memory.require_nonempty();
    const double d = memory.min_pairwise_distance();
    return std::isfinite(d) ? 0.5 * d : std::numeric_limits<double>::infinity();
}

bool judge_success(const RetrievalResult& result, std::size_t target, const MemoryMatrix& memory, double tau) {
    if (!(tau > 0.0)) throw std::invalid_argument("judge_success: tau must be positive");
    if (target >= memory.size()) {
        throw std::out_of_range("judge_success: target " + std::to_string(target) + " out of range for N=" +
                                std::to_string(memory.size()));
    }
    return distance(result.z_final, memory.pattern(target)) < tau;
}

void BenchmarkSpec::validate() const {
    if (engines.empty()) throw ConfigError("benchmark: no engines");
    if (scenarios.empty()) throw ConfigError("benchmark: no scenarios");
    if (seeds.empty()) throw ConfigError("benchmark: no seeds");
    if (n == 0 || d == 0) throw ConfigError("benchmark: N and d must be at least 1");
    if (!(sigma > 0.0)) throw ConfigError("benchmark: sigma must be positive");
    if (!(beta > 0.0)) throw ConfigError("benchmark: beta must be positive");
    const bool observation = std::any_of(scenarios.begin(), scenarios.end(),
                                         [](const Scenario& s) { return s.space == QuerySpace::observation; });
    for (Engine e : engines) {
        if (needs_model(e) && model == nullptr) {
            throw ConfigError("benchmark: engine '" + std::string(to_string(e)) +
                              "' needs a trained model (model file missing; run train-vae first)");
        }
        if (needs_model(e)) {
            for (const auto& s : scenarios) {
                if (s.space == QuerySpace::latent) {
                    throw ConfigError("benchmark: engine '" + std::string(to_string(e)) +
                                      "' reads observations; scenario '" + s.name() + "' is in latent space");
                }
            }
        }
    }
    if (observation && model == nullptr) {
        throw ConfigError("benchmark: observation-space scenarios need a trained model (run train-vae first)");
    }
}

BenchmarkSpec default_benchmark_spec() {
    BenchmarkSpec spec;
    spec.scenarios = {Scenario::clean(), Scenario::noise(0.2), Scenario::noise(0.6), Scenario::mask(0.25),
                      Scenario::mask(0.56)};
    for (std::uint64_t s = 0; s < 10; ++s) spec.seeds.push_back(s);
    return spec;
}

const BenchmarkRow* BenchmarkReport::find(std::string_view engine, std::string_view scenario) const {
    for (const auto& r : rows)
        if (r.engine == engine && r.scenario == scenario) return &r;
    return nullptr;
}

std::string BenchmarkReport::to_csv() const {
    std::string out = "engine,scenario,seed_count,success_mean,success_std,iters_mean,wall_ms\n";
    for (const auto& r : rows) {
        out += r.engine + "," + r.scenario + "," + std::to_string(r.seed_count) + "," + format_fixed(r.success_mean) +
               "," + format_fixed(r.success_std) + "," + format_fixed(r.iters_mean) + "," + format_fixed(r.wall_ms) +
               "\n";
    }
    return out;
}

std::string BenchmarkReport::to_json() const {
    nlohmann::ordered_json rows_json = nlohmann::ordered_json::array();
    for (const auto& r : rows) {
        rows_json.push_back({{"engine", r.engine},
                             {"scenario", r.scenario},
                             {"seed_count", r.seed_count},
                             {"success_mean", r.success_mean},
                             {"success_std", r.success_std},
                             {"iters_mean", r.iters_mean},
                             {"wall_ms", r.wall_ms},
                             {"per_seed", r.per_seed}});
    }
    return nlohmann::ordered_json{{"rows", rows_json}}.dump(2) + "\n";
}

BenchmarkReport run_benchmark(const BenchmarkSpec& spec) {
    spec.validate();
    const std::size_t n_seeds = spec.seeds.size();

    // Stores per (seed, space). Latent stores come straight from
    // make_synthetic_memory; observation stores encode teacher observations.
    std::map<std::pair<std::size_t, QuerySpace>, Instance> instances;
    for (const auto& scenario : spec.scenarios) {
        for (std::size_t si = 0; si < n_seeds; ++si) instances[{si, scenario.space}];
    }
    std::vector<std::pair<std::size_t, QuerySpace>> instance_keys;
    for (const auto& [key, _] : instances) instance_keys.push_back(key);

    std::optional<SyntheticObservationTask> teacher;
    if (spec.model) teacher.emplace(architecture_of(*spec.model));

    parallel_for(instance_keys.size(), spec.workers, [&](std::size_t i) {
        const auto [si, space] = instance_keys[i];
        RngStream rng = RngStream(spec.seeds[si]).substream("memory");
        Instance inst;
        if (space == QuerySpace::latent) {
            SyntheticMemory sm = make_synthetic_memory(spec.n, spec.d, rng, spec.min_separation);
            inst.memory = std::move(sm.memory);
            inst.sources = std::move(sm.latents);
        } else {
            SyntheticMemory sm = make_synthetic_memory(spec.n, spec.model->latent_dim(), rng, spec.min_separation);
            std::vector<Vector> encoded;
            for (const auto& z : sm.latents) {
                inst.sources.push_back(teacher->observe(z));
                encoded.push_back(encode(*spec.model, inst.sources.back()).mu);
            }
            inst.memory = MemoryMatrix::from_patterns(encoded);
        }
        inst.tau = spec.tau > 0.0 ? spec.tau : default_threshold(inst.memory);
        instances.at(instance_keys[i]) = std::move(inst);
    });

    // Corrupted queries per (scenario, seed), shared across engines.
    const std::size_t n_scen = spec.scenarios.size();
    std::vector<std::vector<Vector>> queries(n_scen * n_seeds);
    parallel_for(queries.size(), spec.workers, [&](std::size_t i) {
        const std::size_t sc = i / n_seeds;
        const std::size_t si = i % n_seeds;
        const Scenario& scenario = spec.scenarios[sc];
        const Instance& inst = instances.at({si, scenario.space});
        RngStream base = RngStream(spec.seeds[si]).substream("queries").substream(scenario.name());
        auto& out = queries[i];
        out.reserve(inst.sources.size());
        for (std::size_t k = 0; k < inst.sources.size(); ++k) {
            RngStream rng = base.substream(static_cast<std::uint64_t>(k));
            out.push_back(corrupt(inst.sources[k], scenario, rng));
        }
    });

    struct CellResult {
        double success = 0.0;
        double iters = 0.0;
        double wall_ms = 0.0;
    };
    const std::size_t n_eng = spec.engines.size();
    std::vector<CellResult> cells(n_eng * n_scen * n_seeds);
    parallel_for(cells.size(), spec.workers, [&](std::size_t i) {
        const std::size_t e = i / (n_scen * n_seeds);
        const std::size_t sc = (i / n_seeds) % n_scen;
        const std::size_t si = i % n_seeds;
        const Engine engine = spec.engines[e];
        const Scenario& scenario = spec.scenarios[sc];
        const Instance& inst = instances.at({si, scenario.space});
        const PriorSpec prior = prior_for(engine, spec, inst.memory.dim());
        const RetrievalConfig config = config_for(engine, prior, spec, scenario.space);
        const auto& qs = queries[sc * n_seeds + si];

        const auto start = std::chrono::steady_clock::now();
        std::size_t hits = 0;
        std::size_t iters = 0;
        for (std::size_t k = 0; k < qs.size(); ++k) {
            const RetrievalResult r = retrieve(qs[k], spec.model, inst.memory, prior, engine, config);
            if (judge_success(r, k, inst.memory, inst.tau)) ++hits;
            iters += r.iterations_used;
        }
        const auto stop = std::chrono::steady_clock::now();
        cells[i].success = 100.0 * static_cast<double>(hits) / static_cast<double>(qs.size());
        cells[i].iters = static_cast<double>(iters) / static_cast<double>(qs.size());
        cells[i].wall_ms = std::chrono::duration<double, std::milli>(stop - start).count();
    });

    BenchmarkReport report;
    for (std::size_t e = 0; e < n_eng; ++e) {
        for (std::size_t sc = 0; sc < n_scen; ++sc) {
            BenchmarkRow row;
            row.engine = std::string(to_string(spec.engines[e]));
            row.scenario = spec.scenarios[sc].name();
            row.seed_count = n_seeds;
            std::vector<double> iters;
            double wall = 0.0;
            for (std::size_t si = 0; si < n_seeds; ++si) {
                const CellResult& c = cells[(e * n_scen + sc) * n_seeds + si];
                row.per_seed.push_back(c.success);
                iters.push_back(c.iters);
                wall += c.wall_ms;
            }
            row.success_mean = mean(row.per_seed);
            row.success_std = population_std(row.per_seed);
            row.iters_mean = mean(iters);
            row.wall_ms = spec.record_wall_time ? wall : 0.0;
            report.rows.push_back(std::move(row));
        }
    }
    return report;
}

std::string CapacityTable::to_csv() const {
    std::string out = "N";
    for (const auto& e : engines) out += "," + e + "_success_mean," + e + "_success_std";
    out += '\n';
    for (const auto& row : rows) {
        out += std::to_string(row.n);
        for (std::size_t i = 0; i < row.engines.size(); ++i) {
            out += "," + format_fixed(row.success_mean[i]) + "," + format_fixed(row.success_std[i]);
        }
        out += '\n';
    }
    return out;
}

CapacityTable capacity_sweep(const BenchmarkSpec& base, const std::vector<std::size_t>& ns, const Scenario& scenario) {
    if (ns.empty()) throw ConfigError("capacity: no store sizes");
    if (!std::is_sorted(ns.begin(), ns.end())) throw ConfigError("capacity: store sizes must be ascending");
    CapacityTable table;
    for (Engine e : base.engines) table.engines.emplace_back(to_string(e));
    for (std::size_t n : ns) {
        BenchmarkSpec spec = base;
        spec.n = n;
        spec.scenarios = {scenario};
        const BenchmarkReport report = run_benchmark(spec);
        CapacityRow row;
        row.n = n;
        for (const auto& r : report.rows) {
            row.engines.push_back(r.engine);
            row.success_mean.push_back(r.success_mean);
            row.success_std.push_back(r.success_std);
        }
        table.rows.push_back(std::move(row));
    }
    return table;
}

std::string Landscape::to_csv() const {
    std::string out = "x,y,energy\n";
    out.reserve(resolution * resolution * 48);
    for (std::size_t iy = 0; iy < resolution; ++iy) {
        for (std::size_t ix = 0; ix < resolution; ++ix) {
            out += format_double(xs[ix]) + "," + format_double(ys[iy]) + "," +
                   format_double(energy[iy * resolution + ix]) + "\n";
        }
    }
    return out;
}

std::string Landscape::minima_csv() const {
    std::string out = "x,y,energy\n";
    for (const auto& m : minima) out += format_double(m.x) + "," + format_double(m.y) + "," + format_double(m.energy) + "\n";
    return out;
}

Landscape energy_landscape(const MemoryMatrix& memory, const PriorSpec& prior, const LandscapeBounds& bounds,
                           std::size_t resolution) {
    if (memory.dim() != 2) throw std::invalid_argument("landscape requires d=2");
    memory.require_nonempty();
    if (resolution < 3) throw std::invalid_argument("landscape: resolution must be at least 3");
    if (!(bounds.x_max > bounds.x_min) || !(bounds.y_max > bounds.y_min)) {
        throw std::invalid_argument("landscape: empty grid bounds");
    }
    validate_prior(prior);
    std::function<double(const Vector&)> energy;
    if (const auto* p = std::get_if<BalancedGmmPrior>(&prior)) {
        const double sigma = p->sigma;
        energy = [&memory, sigma](const Vector& z) { return -log_prior_balanced(z, memory, sigma); };
    } else if (const auto* p = std::get_if<MchnPrior>(&prior)) {
        const double beta = p->beta;
        energy = [&memory, beta](const Vector& z) { return mchn_energy(z, memory, beta); };
    } else {
        throw std::invalid_argument("landscape: prior must be balanced_gmm or mchn");
    }

    Landscape out;
    out.resolution = resolution;
    const double step_x = (bounds.x_max - bounds.x_min) / static_cast<double>(resolution - 1);
    const double step_y = (bounds.y_max - bounds.y_min) / static_cast<double>(resolution - 1);
    for (std::size_t i = 0; i < resolution; ++i) {
        out.xs.push_back(bounds.x_min + step_x * static_cast<double>(i));
        out.ys.push_back(bounds.y_min + step_y * static_cast<double>(i));
    }
    out.energy.resize(resolution * resolution);
    for (std::size_t iy = 0; iy < resolution; ++iy)
        for (std::size_t ix = 0; ix < resolution; ++ix)
            out.energy[iy * resolution + ix] = energy(Vector{out.xs[ix], out.ys[iy]});

    for (std::size_t iy = 1; iy + 1 < resolution; ++iy) {
        for (std::size_t ix = 1; ix + 1 < resolution; ++ix) {
            const double c = out.energy[iy * resolution + ix];
            bool lowest = true;
            for (int dy = -1; dy <= 1 && lowest; ++dy)
                for (int dx = -1; dx <= 1 && lowest; ++dx) {
                    if (dx == 0 && dy == 0) continue;
                    if (!(c < out.energy[(iy + dy) * resolution + (ix + dx)])) lowest = false;
                }
            if (lowest) out.minima.push_back({out.xs[ix], out.ys[iy], c});
        }
    }
    return out;
}

MemoryMatrix dominated_pattern_memory() {
    return MemoryMatrix::from_patterns({Vector{1.0, 1.0}, Vector{1.0, -0.8}, Vector{-0.9, 0.6}, Vector{0.3, 0.3}});
}

std::vector<Vector> one_shot_generate(const VaeModel& vae, const MemoryMatrix& memory, double sigma, std::size_t count,
                                      RngStream& rng) {
    memory.require_nonempty();
    if (memory.dim() != vae.latent_dim()) {
        throw ShapeError("one_shot_generate: memory " + memory.matrix().shape_string() + " vs latent (" +
                         std::to_string(vae.latent_dim()) + ")");
    }
    std::vector<Vector> out;
    out.reserve(count);
    for (std::size_t i = 0; i < count; ++i) out.push_back(decode(vae.decoder, sample_prior(memory, sigma, rng)).output());
    return out;
}

}  // namespace memvi
