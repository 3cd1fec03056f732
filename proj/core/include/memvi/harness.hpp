#pragma once

// Retrieval experiments on synthetic stores: memory generation, query
// corruption, success judgement, benchmark grids, capacity sweeps, 2-D energy
// landscapes and one-shot generation.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "memvi/generative.hpp"
#include "memvi/memory.hpp"
#include "memvi/prior.hpp"
#include "memvi/retrieval.hpp"
#include "memvi/rng.hpp"

namespace memvi {

struct SyntheticMemory {
    MemoryMatrix memory;
    /// Latents the patterns were generated from (equal to the columns for a
    /// latent-space store).
    std::vector<Vector> latents;
};

/// N i.i.d. standard-normal columns, each candidate rejected while it lies
/// closer than min_separation to an accepted one. Throws std::runtime_error
/// after 10N attempts.
SyntheticMemory make_synthetic_memory(std::size_t n, std::size_t d, RngStream& rng, double min_separation = 1.0);

enum class Corruption { clean, gaussian_noise, mask, subspace_noise };
enum class QuerySpace { latent, observation };

struct Scenario {
    Corruption corruption = Corruption::clean;
    QuerySpace space = QuerySpace::latent;
    double noise_std = 0.0;
    double mask_fraction = 0.0;
    std::vector<std::size_t> dims;

    static Scenario clean(QuerySpace space = QuerySpace::latent);
    static Scenario noise(double std, QuerySpace space = QuerySpace::latent);
    static Scenario mask(double fraction, QuerySpace space = QuerySpace::latent);
    static Scenario subspace(std::vector<std::size_t> dims, double std, QuerySpace space = QuerySpace::latent);

    /// Compact label used in reports: clean, noise_0.2, mask_0.25, subspace_0-1-2_2,
    /// prefixed with obs_ for observation space.
    [[nodiscard]] std::string name() const;
    /// Throws std::invalid_argument on a mask fraction outside (0, 1), negative
    /// noise, or a dim >= query_dim.
    void validate(std::size_t query_dim) const;
};

/// Inverse of Scenario::name.
Scenario parse_scenario(const std::string& label);

/// gaussian_noise adds N(0, std^2) to every coordinate; mask zeroes a contiguous
/// block of ceil(w * dim) coordinates at a random offset (wrapping around);
/// subspace_noise perturbs only `dims`.
Vector corrupt(const Vector& query, const Scenario& scenario, RngStream& rng);

/// 0.5 x the minimum pairwise memory distance.
double default_threshold(const MemoryMatrix& memory);

/// ||z_final - M_target|| < tau. Throws std::out_of_range on a bad index.
bool judge_success(const RetrievalResult& result, std::size_t target, const MemoryMatrix& memory, double tau);

struct RetrievalOverrides {
    std::optional<std::size_t> max_iters;
    std::optional<double> tol;
    std::optional<double> step;
    std::optional<double> prior_weight;
};

struct BenchmarkSpec {
    std::size_t n = 100;
    std::size_t d = 16;
    double min_separation = 1.0;
    std::vector<Engine> engines = {Engine::gmm, Engine::mchn};
    std::vector<Scenario> scenarios;
    std::vector<std::uint64_t> seeds;
    /// <= 0 selects default_threshold per memory.
    double tau = 0.0;
    double sigma = 0.25;
    double beta = 2.0;
    /// Used by the precision engine; isotropic 1/sigma^2 when absent.
    std::optional<Vector> precision;
    RetrievalOverrides retrieval;
    /// Worker threads; 0 means hardware concurrency.
    std::size_t workers = 0;
    /// Write measured wall time into reports (otherwise 0, keeping reports
    /// byte-identical across runs).
    bool record_wall_time = false;
    /// Required for observation-space scenarios and for bp_gmm / pc_gmm.
    const VaeModel* model = nullptr;

    /// Throws ConfigError when the grid is empty or an engine needs a model that
    /// was not supplied.
    void validate() const;
};

/// Standard protocol: N = 100, d = 16, ten seeds, scenarios clean,
/// noise 0.2 / 0.6 and masks 0.25 / 0.56.
BenchmarkSpec default_benchmark_spec();

struct BenchmarkRow {
    std::string engine;
    std::string scenario;
    std::size_t seed_count = 0;
    double success_mean = 0.0;
    double success_std = 0.0;
    double iters_mean = 0.0;
    double wall_ms = 0.0;
    /// Success percentage per seed, in spec order.
    std::vector<double> per_seed;
};

struct BenchmarkReport {
    std::vector<BenchmarkRow> rows;

    [[nodiscard]] const BenchmarkRow* find(std::string_view engine, std::string_view scenario) const;
    /// Header engine,scenario,seed_count,success_mean,success_std,iters_mean,wall_ms.
    [[nodiscard]] std::string to_csv() const;
    [[nodiscard]] std::string to_json() const;
};

/// Runs every (engine, scenario, seed) cell. The store for a seed and the
/// corrupted queries for a (scenario, seed) are shared across engines, so
/// engines are compared on identical instances. Output is independent of the
/// worker count.
BenchmarkReport run_benchmark(const BenchmarkSpec& spec);

/// Success per engine at one store size, engines in CapacityTable order.
struct CapacityRow {
    std::size_t n = 0;
    std::vector<std::string> engines;
    std::vector<double> success_mean;
    std::vector<double> success_std;
};

struct CapacityTable {
    std::vector<std::string> engines;
    std::vector<CapacityRow> rows;

    /// Header N,<engine>_success_mean,<engine>_success_std,...
    [[nodiscard]] std::string to_csv() const;
};

/// Runs `base` once per N (Ns must be ascending) with the single scenario.
CapacityTable capacity_sweep(const BenchmarkSpec& base, const std::vector<std::size_t>& ns, const Scenario& scenario);

inline const std::vector<std::size_t> kDefaultCapacityNs = {5, 20, 100, 500, 2000};

struct LandscapeBounds {
    double x_min = -1.5;
    double x_max = 1.5;
    double y_min = -1.5;
    double y_max = 1.5;
};

struct LandscapePoint {
    double x = 0.0;
    double y = 0.0;
    double energy = 0.0;
};

struct Landscape {
    std::size_t resolution = 0;
    std::vector<double> xs;
    std::vector<double> ys;
    /// energy[iy * resolution + ix]
    std::vector<double> energy;
    /// Interior grid points strictly below all eight neighbours.
    std::vector<LandscapePoint> minima;

    [[nodiscard]] std::string to_csv() const;
    [[nodiscard]] std::string minima_csv() const;
};

/// -log_prior_balanced (balanced prior) or mchn_energy (mchn prior) on a
/// resolution x resolution grid. Throws std::invalid_argument unless d == 2 or
/// when given a precision prior.
Landscape energy_landscape(const MemoryMatrix& memory, const PriorSpec& prior, const LandscapeBounds& bounds,
                           std::size_t resolution);

/// Four 2-D patterns, one of which (index 3) is aligned with and shorter than
/// pattern 0.
MemoryMatrix dominated_pattern_memory();
inline constexpr std::size_t kDominatedPatternIndex = 3;

/// For each sample draws z from sample_prior and returns f(z).
std::vector<Vector> one_shot_generate(const VaeModel& vae, const MemoryMatrix& memory, double sigma, std::size_t count,
                                      RngStream& rng);

}  // namespace memvi
