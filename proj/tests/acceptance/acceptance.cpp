// One line per acceptance criterion. Exit status is non-zero if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "cli.hpp"
#include "memvi/generative.hpp"
#include "memvi/harness.hpp"
#include "memvi/memory.hpp"
#include "memvi/precision.hpp"
#include "memvi/prior.hpp"
#include "memvi/retrieval.hpp"

using namespace memvi;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

int failures = 0;

void report(const char* name, double limit_s, const std::function<Outcome()>& check) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
        o = check();
    } catch (const std::exception& e) {
        o = {false, std::string("threw: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (secs > limit_s) {
        o.pass = false;
        o.detail += " [over time limit]";
    }
    if (!o.pass) ++failures;
    std::printf("%s %-26s %s (%.2fs, limit %.0fs)\n", o.pass ? "PASS" : "FAIL", name, o.detail.c_str(), secs, limit_s);
    std::fflush(stdout);
}

std::string fmt(const char* f, double a, double b = 0.0, double c = 0.0) {
    char buf[256];
    std::snprintf(buf, sizeof(buf), f, a, b, c);
    return buf;
}

// Instance generation uses the standard library engine, independent of the
// library's own streams.
class Gen {
public:
    explicit Gen(std::uint64_t seed) : eng_(seed) {}
    double normal() { return std::normal_distribution<double>(0.0, 1.0)(eng_); }
    double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(eng_); }
    std::size_t index(std::size_t lo, std::size_t hi) { return std::uniform_int_distribution<std::size_t>(lo, hi)(eng_); }
    Vector vec(std::size_t d, double scale = 1.0) {
        Vector v(d);
        for (auto& x : v) x = scale * normal();
        return v;
    }
    MemoryMatrix memory(std::size_t d, std::size_t n, double scale = 1.0) {
        std::vector<Vector> cols;
        for (std::size_t k = 0; k < n; ++k) cols.push_back(vec(d, scale));
        return MemoryMatrix::from_patterns(cols);
    }
    Layer layer(std::size_t in, std::size_t out, Activation act) {
        Layer l{Matrix(out, in), vec(out, 0.3), act};
        for (auto& w : l.weight.data()) w = normal() / std::sqrt(static_cast<double>(in));
        return l;
    }
    LayerStack stack(const std::vector<std::size_t>& dims, const std::vector<Activation>& acts) {
        std::vector<Layer> layers;
        for (std::size_t l = 0; l + 1 < dims.size(); ++l) layers.push_back(layer(dims[l + 1], dims[l], acts[l]));
        return LayerStack(std::move(layers));
    }
    Activation activation() {
        static const Activation all[] = {Activation::identity, Activation::tanh, Activation::relu};
        return all[index(0, 2)];
    }

private:
    std::mt19937_64 eng_;
};

Vector central_difference(const std::function<double(const Vector&)>& f, const Vector& x, double h) {
    Vector g(x.dim());
    for (std::size_t i = 0; i < x.dim(); ++i) {
        Vector a = x, b = x;
        a[i] += h;
        b[i] -= h;
        g[i] = (f(a) - f(b)) / (2.0 * h);
    }
    return g;
}

double rel_err(const Vector& a, const Vector& b) {
    const double scale = std::max({norm(a), norm(b), 1e-8});
    return distance(a, b) / scale;
}

Outcome gradient_oracles() {
    Gen gen(11);
    double worst_bal = 0, worst_prec = 0, worst_vjp = 0, worst_loss = 0;
    const int n = 120;
    for (int i = 0; i < n; ++i) {
        const std::size_t d = gen.index(2, 6), N = gen.index(1, 8);
        const MemoryMatrix m = gen.memory(d, N);
        const Vector z = gen.vec(d);

        const double sigma = gen.uniform(0.6, 2.0);
        worst_bal = std::max(worst_bal, rel_err(grad_log_prior_balanced(z, m, sigma),
                                                central_difference([&](const Vector& v) { return log_prior_balanced(v, m, sigma); }, z, 1e-5)));

        Precision p = Precision::isotropic(d, 1.0);
        if (i % 2 == 0) {
            Vector diag(d);
            for (auto& v : diag) v = gen.uniform(0.3, 2.0);
            p = Precision::diagonal(diag);
        } else {
            Matrix a(d, d);
            for (auto& v : a.data()) v = 0.5 * gen.normal();
            Matrix full = matmat(a, transpose(a));
            for (std::size_t j = 0; j < d; ++j) full(j, j) += 0.5;
            p = Precision::full(full);
        }
        worst_prec = std::max(worst_prec, rel_err(grad_log_prior_precision(z, m, p),
                                                  central_difference([&](const Vector& v) { return log_prior_precision(v, m, p); }, z, 1e-5)));

        const std::size_t depth = gen.index(1, 3);
        std::vector<std::size_t> dims{gen.index(2, 6)};
        std::vector<Activation> acts;
        for (std::size_t l = 0; l < depth; ++l) {
            dims.push_back(l + 1 == depth ? d : gen.index(2, 6));
            acts.push_back(gen.activation());
        }
        const LayerStack stack = gen.stack(dims, acts);
        const Vector x = gen.vec(dims.front());
        const auto half_sq = [&](const Vector& v) { return 0.5 * squared_distance(decode(stack, v).output(), x); };
        worst_vjp = std::max(worst_vjp, rel_err(reconstruction_gradient(stack, z, x), central_difference(half_sq, z, 1e-5)));

        // Close patterns and strong noise keep the readout away from its
        // targets; a loss near zero leaves a gradient below difference roundoff.
        RngStream rng(static_cast<std::uint64_t>(i));
        const MemoryMatrix pm = gen.memory(d, gen.index(2, 6), 0.5);
        const PrecisionTask task = make_subspace_noise_task(pm, {0}, 1.5, 8, rng);
        PrecisionParams params{gen.vec(d, 0.3)};
        const std::size_t iters = gen.index(1, 3);
        const Vector analytic = precision_loss_and_gradient(params, task, iters).grad_raw;
        const Vector fd = central_difference(
            [&](const Vector& raw) { return precision_loss(PrecisionParams{raw}, task, iters); }, params.raw, 1e-5);
        worst_loss = std::max(worst_loss, rel_err(analytic, fd));
    }
    const bool ok = worst_bal < 1e-6 && worst_prec < 1e-6 && worst_vjp < 1e-6 && worst_loss < 1e-5;
    return {ok, std::to_string(n) + " instances; worst rel err balanced " + fmt("%.1e", worst_bal) + ", precision " +
                    fmt("%.1e", worst_prec) + ", stack vjp " + fmt("%.1e", worst_vjp) + ", precision loss " +
                    fmt("%.1e", worst_loss)};
}

Outcome mchn_identity() {
    Gen gen(12);
    double worst = 0;
    for (int i = 0; i < 100; ++i) {
        const std::size_t d = gen.index(2, 10), N = gen.index(1, 12);
        const MemoryMatrix m = gen.memory(d, N);
        const Vector z = gen.vec(d);
        const double beta = gen.uniform(0.1, 8.0);
        // grad E = beta z - beta sum_k softmax(beta z.M)_k M_k
        std::vector<double> s(N);
        double top = -INFINITY;
        for (std::size_t k = 0; k < N; ++k) top = std::max(top, s[k] = beta * dot(z, m.pattern(k)));
        double total = 0;
        for (auto& v : s) total += (v = std::exp(v - top));
        Vector grad = beta * z;
        for (std::size_t k = 0; k < N; ++k) axpy(-beta * s[k] / total, m.pattern(k), grad);
        Vector stepped = z;
        axpy(-1.0 / beta, grad, stepped);
        worst = std::max(worst, max_abs_difference(stepped, mchn_step(z, m, beta)));
    }
    return {worst < 1e-12, "100 instances; max |diff| " + fmt("%.1e", worst)};
}

Outcome pc_bp_equivalence() {
    Gen gen(13);
    double worst = 0;
    for (int i = 0; i < 20; ++i) {
        const std::size_t depth = 2 + static_cast<std::size_t>(i % 2);
        const std::size_t d = gen.index(2, 5);
        std::vector<std::size_t> dims{gen.index(3, 8)};
        std::vector<Activation> acts;
        for (std::size_t l = 0; l < depth; ++l) {
            dims.push_back(l + 1 == depth ? d : gen.index(3, 8));
            acts.push_back(gen.activation());
        }
        const LayerStack stack = gen.stack(dims, acts);
        const MemoryMatrix m = gen.memory(d, gen.index(1, 6));
        const Vector x = gen.vec(dims.front());
        const Vector z = gen.vec(d);
        const double sigma = gen.uniform(0.5, 1.5);
        const double alpha = gen.uniform(0.01, 0.2);

        const PcState state = init_pc_state(x, z, stack);
        const PcState next = pc_fixed_prediction_step(state, stack, m, sigma, alpha);
        const Vector bp = bp_gmm_step(x, z, stack, m, BalancedGmmPrior{sigma}, 2.0, alpha / 2.0);
        worst = std::max(worst, max_abs_difference(next.z(), bp));
    }
    return {worst < 1e-10, "20 stacks (2 and 3 layers), gamma 2; max |z_pc - z_bp| " + fmt("%.1e", worst)};
}

Outcome reduction_identities() {
    Gen gen(14);
    double smooth = 0, prec_step = 0, prec_log = 0;
    for (int i = 0; i < 100; ++i) {
        const std::size_t d = gen.index(1, 8), N = gen.index(1, 10);
        const MemoryMatrix m = gen.memory(d, N);
        const Vector z = gen.vec(d);
        const double sigma = gen.uniform(0.3, 2.0);
        const Vector ref = gmm_step(z, m, sigma);
        smooth = std::max(smooth, max_abs_difference(gmm_smooth_step(z, m, sigma, sigma * sigma), ref));
        const Precision iso = Precision::isotropic(d, sigma);
        prec_step = std::max(prec_step, max_abs_difference(precision_step(z, m, iso), ref));
        prec_log = std::max(prec_log, std::abs(log_prior_precision(z, m, iso) - log_prior_balanced(z, m, sigma)));
    }
    const bool ok = smooth <= 1e-12 && prec_step <= 1e-12 && prec_log <= 1e-12;
    return {ok, "100 instances; smooth(alpha=s^2) " + fmt("%.1e", smooth) + ", precision step " + fmt("%.1e", prec_step) +
                    ", precision log prior " + fmt("%.1e", prec_log)};
}

Outcome energy_descent() {
    Gen gen(15);
    double worst = -INFINITY;
    for (int i = 0; i < 50; ++i) {
        const std::size_t d = gen.index(1, 8), N = gen.index(1, 20);
        const MemoryMatrix m = gen.memory(d, N);
        const double sigma = gen.uniform(0.2, 2.0);
        Vector z = gen.vec(d, 1.5);
        double e = -log_prior_balanced(z, m, sigma);
        for (int t = 0; t < 100; ++t) {
            z = gmm_smooth_step(z, m, sigma, sigma * sigma / 10.0);
            const double next = -log_prior_balanced(z, m, sigma);
            worst = std::max(worst, next - e);
            e = next;
        }
    }
    return {worst <= 1e-9, "50 x 100 steps; largest energy increase " + fmt("%.1e", worst)};
}

Outcome landscape() {
    const MemoryMatrix m = dominated_pattern_memory();
    const Landscape bal = energy_landscape(m, BalancedGmmPrior{0.2}, {}, 400);
    const Landscape hop = energy_landscape(m, MchnPrior{100.0}, {}, 400);
    auto near = [&](const LandscapePoint& p, std::size_t k) {
        const Vector c = m.pattern(k);
        return std::hypot(p.x - c[0], p.y - c[1]) < 0.05;
    };
    std::vector<bool> covered(m.size(), false);
    bool all_near = true;
    for (const auto& p : bal.minima) {
        bool any = false;
        for (std::size_t k = 0; k < m.size(); ++k)
            if (near(p, k)) covered[k] = any = true;
        all_near = all_near && any;
    }
    const bool every_pattern = std::all_of(covered.begin(), covered.end(), [](bool b) { return b; });
    bool dominated_attracts = false;
    for (const auto& p : hop.minima) dominated_attracts = dominated_attracts || near(p, kDominatedPatternIndex);
    const bool ok = bal.minima.size() == 4 && all_near && every_pattern && hop.minima.size() < 4 && !dominated_attracts;
    return {ok, "400x400; balanced sigma=0.2 minima " + std::to_string(bal.minima.size()) +
                    (all_near && every_pattern ? " (one per pattern)" : " (not one per pattern)") + ", mchn beta=100 minima " +
                    std::to_string(hop.minima.size()) + (dominated_attracts ? ", dominated pattern attracts" : ", none at dominated pattern")};
}

Outcome table2_analog() {
    BenchmarkSpec spec = default_benchmark_spec();
    spec.scenarios = {Scenario::clean(), Scenario::noise(0.2), Scenario::noise(0.6)};
    const BenchmarkReport r = run_benchmark(spec);
    const double clean = r.find("gmm", "clean")->success_mean;
    const double n02 = r.find("gmm", "noise_0.2")->success_mean;
    const double g06 = r.find("gmm", "noise_0.6")->success_mean;
    const double m06 = r.find("mchn", "noise_0.6")->success_mean;
    // Paired per seed as well as in the mean.
    const auto& gs = r.find("gmm", "noise_0.6")->per_seed;
    const auto& ms = r.find("mchn", "noise_0.6")->per_seed;
    bool paired = true;
    for (std::size_t i = 0; i < gs.size(); ++i) paired = paired && gs[i] >= ms[i];
    const bool ok = clean == 100.0 && n02 >= 99.0 && g06 > m06 && paired;
    return {ok, "N=100 d=16 10 seeds; gmm clean " + fmt("%.1f%%", clean) + ", noise 0.2 " + fmt("%.1f%%", n02) +
                    ", noise 0.6 gmm " + fmt("%.1f%%", g06) + " vs mchn " + fmt("%.1f%%", m06)};
}

Outcome capacity() {
    BenchmarkSpec spec = default_benchmark_spec();
    const CapacityTable t = capacity_sweep(spec, kDefaultCapacityNs, Scenario::noise(0.6));
    bool monotone = true, dominates = true;
    std::string series;
    for (std::size_t i = 0; i < t.rows.size(); ++i) {
        const double g = t.rows[i].success_mean[0], h = t.rows[i].success_mean[1];
        if (i > 0 && g > t.rows[i - 1].success_mean[0] + 5.0) monotone = false;
        if (g < h) dominates = false;
        series += (i ? ", " : "") + std::to_string(t.rows[i].n) + ":" + fmt("%.1f/%.1f", g, h);
    }
    return {monotone && dominates, "noise 0.6, N:gmm/mchn " + series};
}

Outcome precision_learning() {
    const RngStream root(0);
    RngStream mr = root.substream("memory"), tr = root.substream("train"), er = root.substream("eval");
    const SyntheticMemory sm = make_synthetic_memory(20, 8, mr);
    const std::vector<std::size_t> dims{0, 1, 2};
    const PrecisionTask train = make_subspace_noise_task(sm.memory, dims, 2.0, 200, tr);
    const PrecisionTask eval = make_subspace_noise_task(sm.memory, dims, 2.0, 1000, er);
    const PrecisionTrainResult res = train_precision(train, PrecisionTrainOptions{});
    const Vector p = res.params.values();
    double corrupted = 0, clean = 0;
    for (std::size_t j = 0; j < p.dim(); ++j) (j < 3 ? corrupted : clean) += p[j];
    corrupted /= 3.0;
    clean /= static_cast<double>(p.dim() - 3);
    const double trained = precision_success_rate(res.params.precision(), eval);
    const double uniform = precision_success_rate(Precision::isotropic(8, 1.0), eval);
    const double oracle = masked_nearest_neighbor_rate(eval);
    const bool ok = corrupted < clean && trained > uniform && std::abs(trained - oracle) <= 2.0;
    return {ok, "mean precision corrupted " + fmt("%.3f", corrupted) + " vs clean " + fmt("%.3f", clean) +
                    "; success trained " + fmt("%.1f%%", trained) + ", uniform " + fmt("%.1f%%", uniform) +
                    ", masked NN " + fmt("%.1f%%", oracle)};
}

Outcome pc_equilibrium() {
    Gen gen(16);
    double worst_residual = 0;
    for (int i = 0; i < 10; ++i) {
        const std::size_t d = gen.index(2, 4);
        const LayerStack stack = gen.stack({gen.index(3, 6), gen.index(3, 6), d}, {Activation::identity, Activation::identity});
        const MemoryMatrix m = gen.memory(d, gen.index(1, 4));
        const Vector x = gen.vec(stack.observation_dim());
        PcState s = init_pc_state(x, gen.vec(d), stack);
        std::size_t iters = 0;
        s = pc_relax(s, stack, m, 1.0, 0.1, 1000000, 1e-8, &iters);
        compute_errors(s, stack);
        const Vector r = s.errors[1] - layer_vjp(stack.layer(0), s.estimates[1], s.errors[0]);
        worst_residual = std::max(worst_residual, norm(r));
    }

    double worst_closed = 0;
    for (int i = 0; i < 10; ++i) {
        const std::size_t d = gen.index(1, 6);
        const LayerStack stack({Layer{Matrix::identity(d), Vector(d), Activation::identity}});
        const MemoryMatrix m = gen.memory(d, 1);
        const Vector x = gen.vec(d);
        const double sigma = gen.uniform(0.3, 2.0);
        const double s2 = sigma * sigma;
        PcState s = pc_relax(init_pc_state(x, x, stack), stack, m, sigma, 0.5 * s2 / (1.0 + s2), 1000000, 1e-14);
        Vector expected = s2 * x;
        expected += m.pattern(0);
        expected *= 1.0 / (s2 + 1.0);
        worst_closed = std::max(worst_closed, max_abs_difference(s.z(), expected));
    }
    const bool ok = worst_residual < 1e-6 && worst_closed < 1e-8;
    return {ok, "2-layer linear residual " + fmt("%.1e", worst_residual) + "; L=1 closed form max |diff| " +
                    fmt("%.1e", worst_closed)};
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

Outcome determinism() {
    const auto root = std::filesystem::temp_directory_path() / "memvi_acceptance_determinism";
    std::filesystem::remove_all(root);
    std::vector<std::string> csvs;
    for (const char* workers : {"1", "4", "1", "3"}) {
        const auto dir = root / (std::string("w") + workers + "_" + std::to_string(csvs.size()));
        std::ostringstream out, err;
        const int code = cli::run({"--seed", "5", "--workers", workers, "--out", dir.string(), "benchmark"}, out, err);
        if (code != 0) return {false, "benchmark exited " + std::to_string(code) + ": " + err.str()};
        csvs.push_back(slurp(dir / "reports" / "benchmark.csv"));
    }
    std::filesystem::remove_all(root);
    const bool same = std::all_of(csvs.begin(), csvs.end(), [&](const std::string& s) { return s == csvs[0]; });
    return {same && !csvs[0].empty(), "4 runs (workers 1, 4, 1, 3): reports " +
                                          std::string(same ? "byte-identical" : "differ") + ", " +
                                          std::to_string(csvs[0].size()) + " bytes"};
}

}  // namespace

int main() {
    report("gradient-oracles", 30, gradient_oracles);
    report("mchn-identity", 5, mchn_identity);
    report("pc-bp-equivalence", 10, pc_bp_equivalence);
    report("reduction-identities", 5, reduction_identities);
    report("energy-descent", 10, energy_descent);
    report("landscape-minima", 20, landscape);
    report("desk-benchmark", 60, table2_analog);
    report("capacity-sweep", 300, capacity);
    report("precision-learning", 120, precision_learning);
    report("pc-equilibrium", 30, pc_equilibrium);
    report("determinism", 60, determinism);
    std::printf("%d of 11 criteria failed\n", failures);
    return failures == 0 ? 0 : 1;
}
