#include "cli.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <thread>
#include <tuple>

#include <CLI11.hpp>

#include "memvi/generative.hpp"
#include "memvi/harness.hpp"
#include "memvi/memory.hpp"
#include "memvi/model_io.hpp"
#include "memvi/precision.hpp"
#include "memvi/prior.hpp"
#include "memvi/retrieval.hpp"
#include "memvi/rng.hpp"

namespace memvi::cli {
namespace fs = std::filesystem;

Json default_config() {
    Json scenarios = Json::array();
    for (const auto& s : default_benchmark_spec().scenarios) scenarios.push_back(s.name());
    Json patterns = Json::array();
    const MemoryMatrix dominated = dominated_pattern_memory();
    for (std::size_t k = 0; k < dominated.size(); ++k) {
        const Vector p = dominated.pattern(k);
        patterns.push_back({p[0], p[1]});
    }
    const VaeArchitecture arch;
    const VaeTrainOptions vae;
    const PrecisionTrainOptions prec;
    return Json{
        {"seed", 0},
        {"workers", 0},
        {"output", {{"directory", "memvi-out"}}},
        {"model",
         {{"path", nullptr},
          {"latent_dim", arch.latent_dim},
          {"hidden", arch.hidden},
          {"observation_dim", arch.observation_dim},
          {"activation", to_string(arch.hidden_activation)}}},
        {"training", {{"epochs", vae.epochs}, {"learning_rate", vae.learning_rate}, {"samples", 512}}},
        {"memory",
         {{"path", nullptr},
          {"inputs", nullptr},
          {"input_space", "latent"},
          {"n", 100},
          {"d", 16},
          {"min_separation", 1.0}}},
        {"prior", {{"kind", "balanced_gmm"}, {"sigma", 0.25}, {"beta", 2.0}, {"precision_path", nullptr}}},
        {"engine", "gmm"},
        {"retrieval",
         {{"query", nullptr},
          {"max_iters", nullptr},
          {"step", nullptr},
          {"prior_weight", nullptr},
          {"tol", nullptr},
          {"init", nullptr}}},
        {"benchmark",
         {{"engines", {"gmm", "mchn"}},
          {"scenarios", scenarios},
          {"seeds", nullptr},
          {"seed_count", 10},
          {"tau", "half_min_distance"},
          {"record_wall_time", false}}},
        {"capacity", {{"ns", kDefaultCapacityNs}, {"scenario", "noise_0.6"}}},
        {"landscape",
         {{"patterns", patterns},
          {"priors", {"balanced_gmm", "mchn"}},
          {"sigma", 0.2},
          {"beta", 100.0},
          {"resolution", 400},
          {"bounds", {-1.5, 1.5, -1.5, 1.5}}}},
        {"precision_training",
         {{"n", 20},
          {"d", 8},
          {"corrupted_dims", {0, 1, 2}},
          {"noise_std", 2.0},
          {"train_examples", 200},
          {"eval_examples", 1000},
          {"epochs", prec.epochs},
          {"learning_rate", prec.learning_rate},
          {"iters_per_example", prec.iters_per_example},
          {"initial_sigma", prec.initial_sigma}}},
        {"generate", {{"count", 16}, {"sigma", 0.05}}},
    };
}

Json merge_config(const Json& defaults, const Json& user, const std::string& where) {
    if (!user.is_object()) throw ConfigError("config" + (where.empty() ? "" : " '" + where + "'") + " must be an object");
    Json out = defaults;
    for (const auto& [key, value] : user.items()) {
        const std::string path = where.empty() ? key : where + "." + key;
        if (!defaults.contains(key)) throw ConfigError("unknown config key '" + path + "'");
        const Json& def = defaults.at(key);
        if (def.is_object() != value.is_object()) {
            throw ConfigError("config key '" + path + "' must " + (def.is_object() ? "be" : "not be") + " an object");
        }
        out[key] = def.is_object() ? merge_config(def, value, path) : value;
    }
    return out;
}

namespace {

// Typed reads with errors that name the key.
const Json& at(const Json& j, const std::string& path) {
    const Json* node = &j;
    std::size_t start = 0;
    while (true) {
        const auto dot = path.find('.', start);
        node = &node->at(path.substr(start, dot - start));
        if (dot == std::string::npos) return *node;
        start = dot + 1;
    }
}

[[noreturn]] void bad_type(const std::string& path, const char* expected) {
    throw ConfigError("config key '" + path + "' must be " + expected);
}

double get_double(const Json& j, const std::string& path) {
    const Json& v = at(j, path);
    if (!v.is_number()) bad_type(path, "a number");
    return v.get<double>();
}

double get_positive(const Json& j, const std::string& path) {
    const double v = get_double(j, path);
    if (!(v > 0.0)) bad_type(path, "positive");
    return v;
}

std::uint64_t get_uint(const Json& j, const std::string& path) {
    const Json& v = at(j, path);
    if (!v.is_number_integer() || (v.is_number_integer() && !v.is_number_unsigned() && v.get<std::int64_t>() < 0)) {
        bad_type(path, "a non-negative integer");
    }
    return v.get<std::uint64_t>();
}

std::size_t get_size(const Json& j, const std::string& path) { return static_cast<std::size_t>(get_uint(j, path)); }

std::string get_string(const Json& j, const std::string& path) {
    const Json& v = at(j, path);
    if (!v.is_string()) bad_type(path, "a string");
    return v.get<std::string>();
}

std::optional<std::string> get_optional_string(const Json& j, const std::string& path) {
    if (at(j, path).is_null()) return std::nullopt;
    return get_string(j, path);
}

std::vector<std::string> get_strings(const Json& j, const std::string& path) {
    const Json& v = at(j, path);
    if (!v.is_array()) bad_type(path, "an array of strings");
    std::vector<std::string> out;
    for (const auto& item : v) {
        if (!item.is_string()) bad_type(path, "an array of strings");
        out.push_back(item.get<std::string>());
    }
    return out;
}

std::vector<std::size_t> get_sizes(const Json& j, const std::string& path) {
    const Json& v = at(j, path);
    if (!v.is_array()) bad_type(path, "an array of non-negative integers");
    std::vector<std::size_t> out;
    for (const auto& item : v) {
        if (!item.is_number_integer() || item.get<std::int64_t>() < 0) bad_type(path, "an array of non-negative integers");
        out.push_back(item.get<std::size_t>());
    }
    return out;
}

// Files staged in memory and written only after a command has fully succeeded.
class Outputs {
public:
    explicit Outputs(fs::path root) : root_(std::move(root)) {}

    void add(const fs::path& relative, std::string content) { files_.emplace_back(relative, std::move(content)); }
    [[nodiscard]] fs::path path(const fs::path& relative) const { return root_ / relative; }

    void commit() const {
        for (const auto& [relative, content] : files_) {
            const fs::path target = root_ / relative;
            fs::create_directories(target.parent_path());
            std::ofstream out(target, std::ios::binary);
            if (!out) throw std::runtime_error("cannot write " + target.string());
            out << content;
            if (!out) throw std::runtime_error("failed writing " + target.string());
        }
    }

private:
    fs::path root_;
    std::vector<std::pair<fs::path, std::string>> files_;
};

struct Context {
    Json config;
    std::string command;
    fs::path out_dir;
    Outputs outputs;
    std::ostream& out;
};

VaeArchitecture architecture(const Json& c) {
    VaeArchitecture arch;
    arch.latent_dim = get_size(c, "model.latent_dim");
    arch.observation_dim = get_size(c, "model.observation_dim");
    arch.hidden = get_sizes(c, "model.hidden");
    try {
        arch.hidden_activation = parse_activation(get_string(c, "model.activation"));
    } catch (const ConfigError&) {
        throw;
    } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("model.activation: ") + e.what());
    }
    if (arch.latent_dim == 0 || arch.observation_dim == 0) throw ConfigError("model dims must be at least 1");
    for (std::size_t h : arch.hidden)
        if (h == 0) throw ConfigError("model.hidden widths must be at least 1");
    return arch;
}

fs::path model_path(Context& ctx) {
    return get_optional_string(ctx.config, "model.path").value_or((ctx.out_dir / "model" / "vae.model").string());
}

fs::path memory_path(Context& ctx) {
    return get_optional_string(ctx.config, "memory.path").value_or((ctx.out_dir / "memory" / "memory.txt").string());
}

VaeModel load_vae(const fs::path& path) {
    if (!fs::exists(path)) throw ConfigError("model file " + path.string() + " not found (run train-vae first)");
    ModelFile file = load_model(path);
    if (!file.vae) throw ConfigError("model file " + path.string() + " has no decoder/encoder");
    return std::move(*file.vae);
}

MemoryMatrix load_store(const fs::path& path) {
    if (!fs::exists(path)) throw ConfigError("memory file " + path.string() + " not found (run store first)");
    return load_memory(path);
}

Vector load_precision(const fs::path& path) {
    if (!fs::exists(path)) throw ConfigError("precision file " + path.string() + " not found (run train-precision first)");
    ModelFile file = load_model(path);
    if (!file.precision_raw) throw ConfigError("model file " + path.string() + " has no precision_raw line");
    return PrecisionParams{*file.precision_raw}.values();
}

PriorSpec prior_from(const Json& c, std::size_t dim) {
    const std::string kind = get_string(c, "prior.kind");
    if (kind == "balanced_gmm") return BalancedGmmPrior{get_positive(c, "prior.sigma")};
    if (kind == "mchn") return MchnPrior{get_positive(c, "prior.beta")};
    if (kind == "precision") {
        if (const auto path = get_optional_string(c, "prior.precision_path")) {
            Vector p = load_precision(*path);
            if (p.dim() != dim) {
                throw ConfigError("precision file has " + std::to_string(p.dim()) + " entries, memory has d=" +
                                  std::to_string(dim));
            }
            return PrecisionGmmPrior{Precision::diagonal(std::move(p))};
        }
        return PrecisionGmmPrior{Precision::isotropic(dim, get_positive(c, "prior.sigma"))};
    }
    throw ConfigError("prior.kind '" + kind + "' (expected balanced_gmm, mchn or precision)");
}

RetrievalOverrides overrides_from(const Json& c) {
    RetrievalOverrides o;
    if (!at(c, "retrieval.max_iters").is_null()) o.max_iters = get_size(c, "retrieval.max_iters");
    if (!at(c, "retrieval.tol").is_null()) o.tol = get_double(c, "retrieval.tol");
    if (!at(c, "retrieval.step").is_null()) o.step = get_positive(c, "retrieval.step");
    if (!at(c, "retrieval.prior_weight").is_null()) o.prior_weight = get_double(c, "retrieval.prior_weight");
    return o;
}

Vector vector_from(const Json& v, const std::string& path) {
    if (!v.is_array()) bad_type(path, "an array of numbers");
    Vector out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (!v[i].is_number()) bad_type(path, "an array of numbers");
        out[i] = v[i].get<double>();
    }
    return out;
}

// Non-empty lines of a vector file, with 1-based line numbers.
std::vector<std::pair<std::size_t, Vector>> read_vectors(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open " + path.string());
    std::vector<std::pair<std::size_t, Vector>> out;
    std::string line;
    std::size_t number = 0;
    while (std::getline(in, line)) {
        ++number;
        if (line.find_first_not_of(" \t\r,") == std::string::npos) continue;
        try {
            out.emplace_back(number, parse_vector(line));
        } catch (const std::invalid_argument& e) {
            throw ConfigError(path.string() + " line " + std::to_string(number) + ": " + e.what());
        }
    }
    return out;
}

std::string csv_row(const Vector& v) {
    std::string out;
    for (std::size_t i = 0; i < v.dim(); ++i) {
        if (i) out += ',';
        out += format_double(v[i]);
    }
    return out + '\n';
}

std::vector<std::uint64_t> benchmark_seeds(const Json& c) {
    std::vector<std::uint64_t> seeds;
    const Json& explicit_seeds = at(c, "benchmark.seeds");
    if (!explicit_seeds.is_null()) {
        if (!explicit_seeds.is_array()) bad_type("benchmark.seeds", "null or an array of integers");
        for (const auto& s : explicit_seeds) {
            if (!s.is_number_integer() || s.get<std::int64_t>() < 0) bad_type("benchmark.seeds", "null or an array of integers");
            seeds.push_back(s.get<std::uint64_t>());
        }
        return seeds;
    }
    const std::uint64_t base = get_uint(c, "seed");
    const std::size_t count = get_size(c, "benchmark.seed_count");
    for (std::size_t i = 0; i < count; ++i) seeds.push_back(base + i);
    return seeds;
}

BenchmarkSpec benchmark_spec(Context& ctx, std::optional<VaeModel>& model_storage) {
    const Json& c = ctx.config;
    BenchmarkSpec spec;
    spec.n = get_size(c, "memory.n");
    spec.d = get_size(c, "memory.d");
    spec.min_separation = get_double(c, "memory.min_separation");
    spec.engines.clear();
    for (const auto& e : get_strings(c, "benchmark.engines")) spec.engines.push_back(parse_engine(e));
    for (const auto& s : get_strings(c, "benchmark.scenarios")) {
        try {
            spec.scenarios.push_back(parse_scenario(s));
        } catch (const ConfigError&) {
            throw;
        } catch (const std::invalid_argument& e) {
            throw ConfigError(std::string("benchmark.scenarios: ") + e.what());
        }
    }
    spec.seeds = benchmark_seeds(c);
    const Json& tau = at(c, "benchmark.tau");
    if (tau.is_string()) {
        if (tau.get<std::string>() != "half_min_distance") bad_type("benchmark.tau", "\"half_min_distance\" or a positive number");
        spec.tau = 0.0;
    } else {
        spec.tau = get_positive(c, "benchmark.tau");
    }
    spec.sigma = get_positive(c, "prior.sigma");
    spec.beta = get_positive(c, "prior.beta");
    if (const auto path = get_optional_string(c, "prior.precision_path")) spec.precision = load_precision(*path);
    spec.retrieval = overrides_from(c);
    spec.workers = get_size(c, "workers");
    if (!at(c, "benchmark.record_wall_time").is_boolean()) bad_type("benchmark.record_wall_time", "a boolean");
    spec.record_wall_time = at(c, "benchmark.record_wall_time").get<bool>();

    const bool needs_model =
        std::any_of(spec.engines.begin(), spec.engines.end(),
                    [](Engine e) { return e == Engine::bp_gmm || e == Engine::pc_gmm; }) ||
        std::any_of(spec.scenarios.begin(), spec.scenarios.end(),
                    [](const Scenario& s) { return s.space == QuerySpace::observation; });
    if (needs_model) {
        model_storage = load_vae(model_path(ctx));
        spec.model = &*model_storage;
    }
    spec.validate();
    return spec;
}

int cmd_train_vae(Context& ctx) {
    const Json& c = ctx.config;
    const VaeArchitecture arch = architecture(c);
    VaeTrainOptions options;
    options.epochs = get_size(c, "training.epochs");
    options.learning_rate = get_double(c, "training.learning_rate");
    if (!(options.learning_rate >= 0.0)) bad_type("training.learning_rate", "non-negative");
    const std::size_t samples = get_size(c, "training.samples");
    if (samples == 0) throw ConfigError("training.samples must be at least 1");

    const RngStream root(get_uint(c, "seed"));
    RngStream data_rng = root.substream("data");
    RngStream init_rng = root.substream("init");
    RngStream train_rng = root.substream("train");
    const SyntheticObservationTask task(arch);
    const std::vector<Vector> data = task.sample(samples, data_rng);
    VaeTrainResult result = train_vae(make_vae(arch, init_rng), data, options, train_rng);

    std::ostringstream model;
    save_model(model, ModelFile{result.model, std::nullopt});
    ctx.outputs.add("model/vae.model", model.str());
    std::string trace = "epoch,loss\n";
    for (std::size_t i = 0; i < result.loss_trace.size(); ++i) {
        trace += std::to_string(i + 1) + "," + format_double(result.loss_trace[i]) + "\n";
    }
    ctx.outputs.add("model/loss_trace.csv", trace);
    ctx.out << "initial_mse " << format_double(result.initial_mse) << "\nfinal_mse " << format_double(result.final_mse)
            << "\nmodel " << ctx.outputs.path("model/vae.model").string() << '\n';
    return kOk;
}

int cmd_store(Context& ctx) {
    const Json& c = ctx.config;
    const auto inputs = get_optional_string(c, "memory.inputs");
    if (!inputs) throw ConfigError("store needs an inputs file (--inputs or memory.inputs)");
    const std::string space = get_string(c, "memory.input_space");
    if (space != "latent" && space != "observation") bad_type("memory.input_space", "\"latent\" or \"observation\"");

    std::optional<VaeModel> vae;
    if (space == "observation") vae = load_vae(model_path(ctx));

    std::optional<MemoryMatrix> memory;
    if (const auto existing = get_optional_string(c, "memory.path")) memory = load_store(*existing);

    const auto rows = read_vectors(*inputs);
    if (rows.empty()) throw ConfigError("inputs file " + *inputs + " has no vectors");
    std::size_t expected = vae ? vae->observation_dim() : (memory ? memory->dim() : rows.front().second.dim());
    for (const auto& [line, v] : rows) {
        if (v.dim() != expected) {
            throw ConfigError(*inputs + " line " + std::to_string(line) + ": " + std::to_string(v.dim()) +
                              " values, expected " + std::to_string(expected));
        }
        const Vector z = vae ? encode(*vae, v).mu : v;
        if (memory && z.dim() != memory->dim()) {
            throw ConfigError(*inputs + " line " + std::to_string(line) + ": pattern has dim " +
                              std::to_string(z.dim()) + ", memory has d=" + std::to_string(memory->dim()));
        }
        memory = memory ? write_pattern(*memory, z) : MemoryMatrix::from_patterns({z});
    }
    std::ostringstream text;
    save_memory(text, *memory);
    ctx.outputs.add("memory/memory.txt", text.str());
    ctx.out << "stored " << rows.size() << " patterns; memory d=" << memory->dim() << " n=" << memory->size() << '\n';
    return kOk;
}

int cmd_retrieve(Context& ctx) {
    const Json& c = ctx.config;
    const auto query_path = get_optional_string(c, "retrieval.query");
    if (!query_path) throw ConfigError("retrieve needs a query file (--query or retrieval.query)");
    const Engine engine = parse_engine(get_string(c, "engine"));
    const MemoryMatrix memory = load_store(memory_path(ctx));
    const PriorSpec prior = prior_from(c, memory.dim());
    RetrievalConfig config = default_config(engine, prior);
    const RetrievalOverrides o = overrides_from(c);
    if (o.max_iters) config.max_iters = *o.max_iters;
    if (o.tol) config.tol = *o.tol;
    if (o.step) config.step = *o.step;
    if (o.prior_weight) config.prior_weight = *o.prior_weight;
    if (const Json& init = at(c, "retrieval.init"); !init.is_null()) {
        if (init.is_array()) {
            config.init_mode = InitMode::explicit_vector;
            config.init_z = vector_from(init, "retrieval.init");
        } else {
            config.init_mode = parse_init_mode(get_string(c, "retrieval.init"));
        }
    }
    config.validate();

    std::optional<VaeModel> vae;
    if (engine == Engine::bp_gmm || engine == Engine::pc_gmm || config.init_mode == InitMode::encoder) {
        vae = load_vae(model_path(ctx));
    }

    // Materialize what was resolved so the echoed config is complete.
    ctx.config["retrieval"]["max_iters"] = config.max_iters;
    ctx.config["retrieval"]["tol"] = config.tol;
    ctx.config["retrieval"]["step"] = config.step;
    ctx.config["retrieval"]["prior_weight"] = config.prior_weight;
    if (config.init_mode != InitMode::explicit_vector) ctx.config["retrieval"]["init"] = to_string(config.init_mode);

    Json results = Json::array();
    std::string energies = "query,step,energy\n";
    for (const auto& [line, q] : read_vectors(*query_path)) {
        RetrievalResult r;
        try {
            r = retrieve(q, vae ? &*vae : nullptr, memory, prior, engine, config);
        } catch (const ShapeError& e) {
            throw ConfigError(*query_path + " line " + std::to_string(line) + ": " + e.what());
        }
        for (std::size_t t = 0; t < r.energies.size(); ++t) {
            energies += std::to_string(results.size()) + "," + std::to_string(t) + "," + format_double(r.energies[t]) + "\n";
        }
        results.push_back({{"line", line},
                           {"matched_index", r.matched_index},
                           {"matched_distance", r.matched_distance},
                           {"iterations", r.iterations_used},
                           {"converged", r.converged},
                           {"z_final", std::vector<double>(r.z_final.begin(), r.z_final.end())}});
    }
    if (results.empty()) throw ConfigError("query file " + *query_path + " has no vectors");
    const Json doc{{"engine", to_string(engine)},
                   {"prior", prior_name(prior)},
                   {"energies_path", ctx.outputs.path("reports/energies.csv").string()},
                   {"results", results}};
    ctx.outputs.add("reports/retrieval.json", doc.dump(2) + "\n");
    ctx.outputs.add("reports/energies.csv", energies);
    ctx.out << doc.dump(2) << '\n';
    return kOk;
}

int cmd_benchmark(Context& ctx) {
    std::optional<VaeModel> model;
    const BenchmarkSpec spec = benchmark_spec(ctx, model);
    const BenchmarkReport report = run_benchmark(spec);
    ctx.outputs.add("reports/benchmark.csv", report.to_csv());
    ctx.outputs.add("reports/benchmark.json", report.to_json());
    ctx.out << report.to_csv();
    return kOk;
}

int cmd_capacity(Context& ctx) {
    std::optional<VaeModel> model;
    const Scenario scenario = parse_scenario(get_string(ctx.config, "capacity.scenario"));
    ctx.config["benchmark"]["scenarios"] = Json::array({scenario.name()});
    const BenchmarkSpec spec = benchmark_spec(ctx, model);
    const CapacityTable table = capacity_sweep(spec, get_sizes(ctx.config, "capacity.ns"), scenario);
    ctx.outputs.add("reports/capacity.csv", table.to_csv());
    ctx.out << table.to_csv();
    return kOk;
}

int cmd_landscape(Context& ctx) {
    const Json& c = ctx.config;
    const Json& pattern_json = at(c, "landscape.patterns");
    if (!pattern_json.is_array() || pattern_json.empty()) bad_type("landscape.patterns", "a non-empty array of [x, y]");
    std::vector<Vector> patterns;
    for (const auto& p : pattern_json) {
        Vector v = vector_from(p, "landscape.patterns");
        if (v.dim() != 2) throw ConfigError("landscape requires d=2");
        patterns.push_back(std::move(v));
    }
    const MemoryMatrix memory = MemoryMatrix::from_patterns(patterns);
    const Json& b = at(c, "landscape.bounds");
    const Vector bv = vector_from(b, "landscape.bounds");
    if (bv.dim() != 4) bad_type("landscape.bounds", "[x_min, x_max, y_min, y_max]");
    const LandscapeBounds bounds{bv[0], bv[1], bv[2], bv[3]};
    const std::size_t resolution = get_size(c, "landscape.resolution");

    for (const auto& kind : get_strings(c, "landscape.priors")) {
        PriorSpec prior;
        if (kind == "balanced_gmm") prior = BalancedGmmPrior{get_positive(c, "landscape.sigma")};
        else if (kind == "mchn") prior = MchnPrior{get_positive(c, "landscape.beta")};
        else throw ConfigError("landscape.priors: '" + kind + "' (expected balanced_gmm or mchn)");
        Landscape land;
        try {
            land = energy_landscape(memory, prior, bounds, resolution);
        } catch (const std::invalid_argument& e) {
            throw ConfigError(e.what());
        }
        ctx.outputs.add("landscapes/" + kind + ".csv", land.to_csv());
        ctx.outputs.add("landscapes/" + kind + "_minima.csv", land.minima_csv());
        ctx.out << kind << " minima " << land.minima.size() << '\n';
    }
    return kOk;
}

int cmd_train_precision(Context& ctx) {
    const Json& c = ctx.config;
    const std::size_t n = get_size(c, "precision_training.n");
    const std::size_t d = get_size(c, "precision_training.d");
    const auto dims = get_sizes(c, "precision_training.corrupted_dims");
    for (std::size_t j : dims)
        if (j >= d) throw ConfigError("precision_training.corrupted_dims: " + std::to_string(j) + " >= d");
    const double noise = get_double(c, "precision_training.noise_std");
    PrecisionTrainOptions options;
    options.epochs = get_size(c, "precision_training.epochs");
    options.learning_rate = get_double(c, "precision_training.learning_rate");
    options.iters_per_example = get_size(c, "precision_training.iters_per_example");
    options.initial_sigma = get_positive(c, "precision_training.initial_sigma");
    const std::size_t n_train = get_size(c, "precision_training.train_examples");
    const std::size_t n_eval = get_size(c, "precision_training.eval_examples");
    if (n_train == 0 || n_eval == 0) throw ConfigError("precision_training needs at least one train and eval example");
    if (options.iters_per_example == 0) throw ConfigError("precision_training.iters_per_example must be at least 1");

    const RngStream root(get_uint(c, "seed"));
    RngStream memory_rng = root.substream("memory");
    RngStream train_rng = root.substream("train");
    RngStream eval_rng = root.substream("eval");
    const SyntheticMemory sm = make_synthetic_memory(n, d, memory_rng, get_double(c, "memory.min_separation"));
    const PrecisionTask train = make_subspace_noise_task(sm.memory, dims, noise, n_train, train_rng);
    const PrecisionTask eval = make_subspace_noise_task(sm.memory, dims, noise, n_eval, eval_rng);
    const PrecisionTrainResult result = train_precision(train, options);

    std::ostringstream model;
    save_model(model, ModelFile{std::nullopt, result.params.raw});
    ctx.outputs.add("model/precision.model", model.str());
    std::string trace = "epoch,loss\n";
    for (std::size_t i = 0; i < result.loss_trace.size(); ++i) {
        trace += std::to_string(i) + "," + format_double(result.loss_trace[i]) + "\n";
    }
    ctx.outputs.add("reports/precision_loss.csv", trace);
    const Vector p = result.params.values();
    const Json summary{
        {"precision", std::vector<double>(p.begin(), p.end())},
        {"trained_success", precision_success_rate(result.params.precision(), eval)},
        {"uniform_success", precision_success_rate(Precision::isotropic(d, options.initial_sigma), eval)},
        {"masked_nearest_neighbor_success", masked_nearest_neighbor_rate(eval)},
    };
    ctx.outputs.add("reports/precision.json", summary.dump(2) + "\n");
    ctx.out << summary.dump(2) << '\n';
    return kOk;
}

int cmd_generate(Context& ctx) {
    const Json& c = ctx.config;
    const VaeModel vae = load_vae(model_path(ctx));
    const MemoryMatrix memory = load_store(memory_path(ctx));
    if (memory.dim() != vae.latent_dim()) {
        throw ConfigError("memory has d=" + std::to_string(memory.dim()) + " but the model latent is " +
                          std::to_string(vae.latent_dim()));
    }
    RngStream rng = RngStream(get_uint(c, "seed")).substream("generate");
    const auto samples =
        one_shot_generate(vae, memory, get_positive(c, "generate.sigma"), get_size(c, "generate.count"), rng);
    std::string text;
    for (const auto& s : samples) text += csv_row(s);
    ctx.outputs.add("reports/generated.csv", text);
    ctx.out << "generated " << samples.size() << " samples\n";
    return kOk;
}

struct Flags {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out;
    std::optional<std::size_t> workers;
    std::optional<std::size_t> epochs;
    std::optional<std::string> inputs;
    std::optional<std::string> query;
};

Json load_config(const Flags& flags) {
    Json config = default_config();
    if (!flags.config_path.empty()) {
        std::ifstream in(flags.config_path);
        if (!in) throw ConfigError("cannot open config " + flags.config_path);
        Json user;
        try {
            user = Json::parse(in);
        } catch (const nlohmann::json::parse_error& e) {
            throw ConfigError("config " + flags.config_path + ": " + e.what());
        }
        config = merge_config(config, user);
    }
    if (flags.seed) config["seed"] = *flags.seed;
    if (flags.out) config["output"]["directory"] = *flags.out;
    if (flags.workers) config["workers"] = *flags.workers;
    if (flags.epochs) config["training"]["epochs"] = *flags.epochs;
    if (flags.inputs) config["memory"]["inputs"] = *flags.inputs;
    if (flags.query) config["retrieval"]["query"] = *flags.query;
    return config;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"memvi: memory-based variational inference for associative memory", "memvi"};
    app.require_subcommand(1);
    Flags flags;
    app.add_option("--config", flags.config_path, "JSON config file")->check(CLI::ExistingFile);
    app.add_option("--seed", flags.seed, "Base seed");
    app.add_option("--out", flags.out, "Output directory");
    app.add_option("--workers", flags.workers, "Worker threads (0 = all cores)");

    using Command = int (*)(Context&);
    const std::vector<std::tuple<const char*, const char*, Command>> commands = {
        {"train-vae", "Train the toy VAE on the bundled synthetic task", cmd_train_vae},
        {"store", "Write input vectors into a memory file", cmd_store},
        {"retrieve", "Retrieve stored patterns for each query", cmd_retrieve},
        {"benchmark", "Run the engine x scenario x seed grid", cmd_benchmark},
        {"capacity", "Success as a function of store size", cmd_capacity},
        {"landscape", "Energy grid and local minima of a 2-D memory", cmd_landscape},
        {"train-precision", "Learn a diagonal precision on a subspace-noise task", cmd_train_precision},
        {"generate", "Decode samples drawn from the memory prior", cmd_generate},
    };
    std::map<const CLI::App*, Command> dispatch;
    for (const auto& [name, help, fn] : commands) {
        CLI::App* sub = app.add_subcommand(name, help);
        sub->fallthrough();
        dispatch[sub] = fn;
        if (std::string(name) == "train-vae") sub->add_option("--epochs", flags.epochs, "Training epochs");
        if (std::string(name) == "store") sub->add_option("--inputs", flags.inputs, "File with one vector per line");
        if (std::string(name) == "retrieve") sub->add_option("--query", flags.query, "File with one query per line");
    }

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kOk;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << '\n';
        return kUsage;
    }

    const CLI::App* chosen = app.get_subcommands().front();
    try {
        Json config = load_config(flags);
        const fs::path out_dir = get_string(config, "output.directory");
        Context ctx{std::move(config), chosen->get_name(), out_dir, Outputs(out_dir), out};
        const int code = dispatch.at(chosen)(ctx);
        ctx.outputs.add(ctx.command + ".config.json", ctx.config.dump(2) + "\n");
        ctx.outputs.commit();
        return code;
    } catch (const NumericError& e) {
        err << "numeric failure: " << e.what() << '\n';
        return kNumeric;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kUsage;
    }
}

}  // namespace memvi::cli
