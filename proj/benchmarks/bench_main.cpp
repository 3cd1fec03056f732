// Microbenchmarks for the prior kernels, single retrieval updates and a small
// benchmark grid.

#include <benchmark/benchmark.h>

#include "memvi/harness.hpp"
#include "memvi/precision.hpp"
#include "memvi/prior.hpp"
#include "memvi/retrieval.hpp"

namespace {

using namespace memvi;

MemoryMatrix store(std::size_t n, std::size_t d) {
    RngStream rng(1);
    return make_synthetic_memory(n, d, rng, 0.0).memory;
}

Vector query(std::size_t d) {
    RngStream rng(2);
    return rng.normal_vector(d);
}

void BM_LogPriorBalanced(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    const MemoryMatrix m = store(n, 16);
    const Vector z = query(16);
    for (auto _ : state) benchmark::DoNotOptimize(log_prior_balanced(z, m, 0.25));
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n));
}
BENCHMARK(BM_LogPriorBalanced)->RangeMultiplier(4)->Range(16, 4096);

void BM_GradLogPriorBalanced(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    const MemoryMatrix m = store(n, 16);
    const Vector z = query(16);
    for (auto _ : state) benchmark::DoNotOptimize(grad_log_prior_balanced(z, m, 0.25));
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n));
}
BENCHMARK(BM_GradLogPriorBalanced)->RangeMultiplier(4)->Range(16, 4096);

void BM_MchnEnergy(benchmark::State& state) {
    const MemoryMatrix m = store(static_cast<std::size_t>(state.range(0)), 16);
    const Vector z = query(16);
    for (auto _ : state) benchmark::DoNotOptimize(mchn_energy(z, m, 2.0));
}
BENCHMARK(BM_MchnEnergy)->RangeMultiplier(4)->Range(16, 4096);

void BM_GmmStep(benchmark::State& state) {
    const MemoryMatrix m = store(static_cast<std::size_t>(state.range(0)), 16);
    const Vector z = query(16);
    for (auto _ : state) benchmark::DoNotOptimize(gmm_step(z, m, 0.25));
}
BENCHMARK(BM_GmmStep)->RangeMultiplier(4)->Range(16, 4096);

void BM_MchnStep(benchmark::State& state) {
    const MemoryMatrix m = store(static_cast<std::size_t>(state.range(0)), 16);
    const Vector z = query(16);
    for (auto _ : state) benchmark::DoNotOptimize(mchn_step(z, m, 2.0));
}
BENCHMARK(BM_MchnStep)->RangeMultiplier(4)->Range(16, 4096);

void BM_PrecisionStepDiagonal(benchmark::State& state) {
    const MemoryMatrix m = store(static_cast<std::size_t>(state.range(0)), 16);
    const Vector z = query(16);
    const Precision p = PrecisionParams::uniform(16, 0.25).precision();
    for (auto _ : state) benchmark::DoNotOptimize(precision_step(z, m, p));
}
BENCHMARK(BM_PrecisionStepDiagonal)->RangeMultiplier(4)->Range(16, 4096);

void BM_BpGmmStep(benchmark::State& state) {
    RngStream init(3);
    const VaeModel vae = make_vae(VaeArchitecture{}, init);
    const MemoryMatrix m = store(static_cast<std::size_t>(state.range(0)), vae.latent_dim());
    const Vector z = query(vae.latent_dim());
    const Vector x = decode(vae.decoder, z).output();
    for (auto _ : state) benchmark::DoNotOptimize(bp_gmm_step(x, z, vae.decoder, m, BalancedGmmPrior{0.25}, 2.0, 0.025));
}
BENCHMARK(BM_BpGmmStep)->RangeMultiplier(4)->Range(16, 1024);

void BM_PcStep(benchmark::State& state) {
    RngStream init(3);
    const VaeModel vae = make_vae(VaeArchitecture{}, init);
    const MemoryMatrix m = store(static_cast<std::size_t>(state.range(0)), vae.latent_dim());
    const Vector z = query(vae.latent_dim());
    PcState s = init_pc_state(decode(vae.decoder, z).output(), z, vae.decoder);
    for (auto _ : state) benchmark::DoNotOptimize(pc_step(s, vae.decoder, m, 0.25, 0.05));
}
BENCHMARK(BM_PcStep)->RangeMultiplier(4)->Range(16, 1024);

void BM_RunBenchmarkGrid(benchmark::State& state) {
    BenchmarkSpec spec = default_benchmark_spec();
    spec.seeds = {0, 1};
    spec.workers = static_cast<std::size_t>(state.range(0));
    for (auto _ : state) benchmark::DoNotOptimize(run_benchmark(spec));
}
BENCHMARK(BM_RunBenchmarkGrid)->Arg(1)->Arg(4)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
