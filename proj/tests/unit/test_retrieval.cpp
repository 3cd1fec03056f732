#include <doctest.h>

#include <cmath>

#include "memvi/harness.hpp"
#include "memvi/retrieval.hpp"
#include "support.hpp"

using namespace memvi;

namespace {

const MemoryMatrix kMemory = MemoryMatrix::from_patterns({Vector{0.0, 0.0}, Vector{1.0, 0.5}, Vector{-1.0, 2.0}});
const Vector kZ{0.3, -0.2};

LayerStack identity_stack(std::size_t d) { return LayerStack({Layer{Matrix::identity(d), Vector(d), Activation::identity}}); }

VaeModel identity_vae(std::size_t d) {
    // Encoder outputs (x, 0): mu = x.
    Matrix w(2 * d, d);
    for (std::size_t i = 0; i < d; ++i) w(i, i) = 1.0;
    return VaeModel{Encoder{{Layer{w, Vector(2 * d), Activation::identity}}}, identity_stack(d)};
}

}  // namespace

TEST_CASE("engine and init names") {
    for (Engine e : {Engine::mchn, Engine::gmm, Engine::gmm_smooth, Engine::precision, Engine::bp_gmm, Engine::pc_gmm}) {
        CHECK(parse_engine(to_string(e)) == e);
    }
    CHECK_THROWS_AS(parse_engine("hopfield"), ConfigError);
    CHECK(parse_init_mode("explicit") == InitMode::explicit_vector);
    CHECK_THROWS_AS(parse_init_mode("random"), ConfigError);
}

TEST_CASE("config validation and defaults") {
    RetrievalConfig c;
    CHECK_NOTHROW(c.validate());
    c.max_iters = 0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = {};
    c.step = 0.0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = {};
    c.prior_weight = -1.0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    CHECK(default_config(Engine::gmm_smooth, BalancedGmmPrior{0.5}).step == doctest::Approx(0.025));
    CHECK(default_config(Engine::pc_gmm, BalancedGmmPrior{0.5}).init_mode == InitMode::encoder);
    CHECK(default_config(Engine::bp_gmm, BalancedGmmPrior{0.5}).step * 2.0 ==
          default_config(Engine::pc_gmm, BalancedGmmPrior{0.5}).step);
}

TEST_CASE("frozen one-step updates") {
    const Vector m = mchn_step(kZ, kMemory, 1.5);
    CHECK(m[0] == doctest::Approx(0.37036903984047664).epsilon(1e-13));
    CHECK(m[1] == doctest::Approx(0.5092253705580302).epsilon(1e-13));
    const Precision p = Precision::full(Matrix(2, 2, std::vector<double>{2.0, 0.3, 0.3, 1.0}));
    const Vector q = precision_step(kZ, kMemory, p);
    CHECK(q[0] == doctest::Approx(0.27496301250569405).epsilon(1e-13));
    CHECK(q[1] == doctest::Approx(0.20836731876045644).epsilon(1e-13));
}

TEST_CASE("one-step rules reduce to each other") {
    support::Gen gen(50);
    for (int t = 0; t < 100; ++t) {
        const std::size_t d = gen.index(1, 8);
        const MemoryMatrix m = gen.memory(d, gen.index(1, 10));
        const Vector z = gen.vec(d);
        const double sigma = gen.uniform(0.3, 2.0);
        const Vector ref = gmm_step(z, m, sigma);
        CHECK(support::max_abs(gmm_smooth_step(z, m, sigma, sigma * sigma), ref) <= 1e-12);
        CHECK(support::max_abs(precision_step(z, m, Precision::isotropic(d, sigma)), ref) <= 1e-12);
        // Gradient ascent on log p with rate sigma^2 is the same update.
        Vector ascent = z;
        axpy(sigma * sigma, grad_log_prior_balanced(z, m, sigma), ascent);
        CHECK(support::max_abs(ascent, ref) < 1e-12);
    }
}

TEST_CASE("mchn step is a 1/beta gradient step on the energy") {
    support::Gen gen(51);
    for (int t = 0; t < 100; ++t) {
        const std::size_t d = gen.index(1, 8);
        const MemoryMatrix m = gen.memory(d, gen.index(1, 10));
        const Vector z = gen.vec(d);
        const double beta = gen.uniform(0.1, 8.0);
        Vector stepped = z;
        axpy(-1.0 / beta, grad_mchn_energy(z, m, beta), stepped);
        CHECK(support::max_abs(stepped, mchn_step(z, m, beta)) < 1e-12);
    }
}

TEST_CASE("smooth descent never raises the energy") {
    support::Gen gen(52);
    for (int t = 0; t < 50; ++t) {
        const std::size_t d = gen.index(1, 8);
        const MemoryMatrix m = gen.memory(d, gen.index(1, 20));
        const double sigma = gen.uniform(0.2, 2.0);
        Vector z = gen.vec(d, 1.5);
        double e = -log_prior_balanced(z, m, sigma);
        for (int s = 0; s < 100; ++s) {
            z = gmm_smooth_step(z, m, sigma, sigma * sigma / 10.0);
            const double next = -log_prior_balanced(z, m, sigma);
            CHECK(next <= e + 1e-9);
            e = next;
        }
    }
}

TEST_CASE("stored patterns are fixed points of the gmm engine") {
    support::Gen gen(53);
    const MemoryMatrix m = gen.memory(6, 30, 3.0);
    RetrievalConfig c;
    for (std::size_t k = 0; k < m.size(); ++k) {
        const RetrievalResult r = retrieve(m.pattern(k), nullptr, m, BalancedGmmPrior{0.25}, Engine::gmm, c);
        CHECK(r.matched_index == k);
        CHECK(r.matched_distance < 1e-9);
        CHECK(r.converged);
    }
}

TEST_CASE("N = 1 always matches the single pattern") {
    const MemoryMatrix m = MemoryMatrix::from_patterns({Vector{1.0, 2.0}});
    RetrievalConfig c;
    for (Engine e : {Engine::gmm, Engine::gmm_smooth}) {
        CHECK(retrieve(Vector{-5.0, 9.0}, nullptr, m, BalancedGmmPrior{0.5}, e, c).matched_index == 0);
    }
    CHECK(retrieve(Vector{-5.0, 9.0}, nullptr, m, MchnPrior{1.0}, Engine::mchn, c).matched_index == 0);
}

TEST_CASE("mchn fails on the dominated pattern, gmm does not") {
    const MemoryMatrix m = dominated_pattern_memory();
    RetrievalConfig c;
    const Vector q = m.pattern(kDominatedPatternIndex);
    CHECK(retrieve(q, nullptr, m, MchnPrior{100.0}, Engine::mchn, c).matched_index != kDominatedPatternIndex);
    CHECK(retrieve(q, nullptr, m, BalancedGmmPrior{0.2}, Engine::gmm, c).matched_index == kDominatedPatternIndex);
}

TEST_CASE("engine and prior mismatches are configuration errors") {
    RetrievalConfig c;
    CHECK_THROWS_AS(retrieve(kZ, nullptr, kMemory, BalancedGmmPrior{1.0}, Engine::mchn, c), ConfigError);
    CHECK_THROWS_AS(retrieve(kZ, nullptr, kMemory, MchnPrior{1.0}, Engine::gmm, c), ConfigError);
    CHECK_THROWS_AS(retrieve(kZ, nullptr, kMemory, BalancedGmmPrior{1.0}, Engine::precision, c), ConfigError);
    CHECK_THROWS_AS(retrieve(kZ, nullptr, kMemory, BalancedGmmPrior{1.0}, Engine::bp_gmm, c), ConfigError);
    CHECK_THROWS_AS(retrieve(kZ, nullptr, kMemory, BalancedGmmPrior{1.0}, Engine::pc_gmm, c), ConfigError);
    c.init_mode = InitMode::encoder;
    CHECK_THROWS_AS(retrieve(kZ, nullptr, kMemory, BalancedGmmPrior{1.0}, Engine::gmm, c), ConfigError);
    c.init_mode = InitMode::explicit_vector;
    CHECK_THROWS_AS(retrieve(kZ, nullptr, kMemory, BalancedGmmPrior{1.0}, Engine::gmm, c), ConfigError);
    c.init_z = Vector{1.0, 2.0, 3.0};
    CHECK_THROWS_AS(retrieve(kZ, nullptr, kMemory, BalancedGmmPrior{1.0}, Engine::gmm, c), ShapeError);
    RetrievalConfig plain;
    CHECK_THROWS_AS(retrieve(Vector{1.0}, nullptr, kMemory, BalancedGmmPrior{1.0}, Engine::gmm, plain), ShapeError);
    CHECK_THROWS_AS(retrieve(kZ, nullptr, MemoryMatrix(2), BalancedGmmPrior{1.0}, Engine::gmm, plain), EmptyMemoryError);
}

TEST_CASE("explicit initialization overrides the query") {
    RetrievalConfig c;
    c.init_mode = InitMode::explicit_vector;
    c.init_z = kMemory.pattern(2);
    const RetrievalResult r = retrieve(kMemory.pattern(0), nullptr, kMemory, BalancedGmmPrior{0.2}, Engine::gmm, c);
    CHECK(r.matched_index == 2);
}

TEST_CASE("energies and trajectory logging") {
    RetrievalConfig c;
    c.max_iters = 5000;
    c.tol = 0.0;
    c.step = 1e-3;
    c.log_trajectory = true;
    c.trajectory_cap = 100;
    const RetrievalResult r = retrieve(Vector{3.0, 3.0}, nullptr, kMemory, BalancedGmmPrior{1.0}, Engine::gmm_smooth, c);
    CHECK(r.iterations_used == 5000);
    CHECK_FALSE(r.converged);
    CHECK(r.energies.size() == 5001);
    CHECK(r.trajectory.size() <= 100);
    CHECK(r.trajectory.size() >= 50);
    CHECK(r.trajectory.front() == Vector{3.0, 3.0});
    for (std::size_t i = 1; i < r.energies.size(); ++i) CHECK(r.energies[i] <= r.energies[i - 1] + 1e-12);

    RetrievalConfig quiet;
    quiet.log_energy = false;
    const RetrievalResult q = retrieve(kZ, nullptr, kMemory, BalancedGmmPrior{1.0}, Engine::gmm, quiet);
    CHECK(q.energies.empty());
    CHECK(q.trajectory.empty());
}

TEST_CASE("retrieval is deterministic") {
    RetrievalConfig c;
    const RetrievalResult a = retrieve(kZ, nullptr, kMemory, MchnPrior{2.0}, Engine::mchn, c);
    const RetrievalResult b = retrieve(kZ, nullptr, kMemory, MchnPrior{2.0}, Engine::mchn, c);
    CHECK(a == b);
}

TEST_CASE("bp loss gradient matches finite differences") {
    support::Gen gen(54);
    for (int t = 0; t < 50; ++t) {
        const std::size_t d = gen.index(1, 4);
        const LayerStack stack = gen.stack({gen.index(2, 6), gen.index(2, 6), d});
        const MemoryMatrix m = gen.memory(d, gen.index(1, 5));
        const Vector x = gen.vec(stack.observation_dim());
        const Vector z = gen.vec(d);
        const PriorSpec prior = BalancedGmmPrior{gen.uniform(0.6, 2.0)};
        const double gamma = gen.uniform(0.0, 3.0);
        const Vector fd = support::central_difference([&](const Vector& v) { return bp_loss(x, v, stack, m, prior, gamma); }, z);
        CHECK(support::rel_err(bp_loss_gradient(x, z, stack, m, prior, gamma), fd) < 1e-6);
    }
}

TEST_CASE("bp with an identity decoder reaches the closed-form optimum") {
    // Loss ||z - x||^2 - gamma log N(z; M, s^2 I): optimum (s^2 x + (gamma/2) M) / (s^2 + gamma/2).
    const MemoryMatrix m = MemoryMatrix::from_patterns({Vector{1.0, -1.0}});
    const Vector x{0.2, 0.4};
    const double s2 = 0.5, gamma = 2.0;
    RetrievalConfig c;
    c.max_iters = 10000;
    c.tol = 1e-14;
    c.step = 0.05;
    c.prior_weight = gamma;
    c.init_mode = InitMode::query_as_z;
    const RetrievalResult r = bp_gmm_retrieve(x, identity_stack(2), m, BalancedGmmPrior{std::sqrt(s2)}, c, nullptr);
    Vector expected = s2 * x;
    axpy(gamma / 2.0, m.pattern(0), expected);
    expected *= 1.0 / (s2 + gamma / 2.0);
    CHECK(support::max_abs(r.z_final, expected) < 1e-10);
    for (std::size_t i = 1; i < r.energies.size(); ++i) CHECK(r.energies[i] <= r.energies[i - 1] + 1e-12);
}

TEST_CASE("pc state initialisation and free energy") {
    support::Gen gen(55);
    const LayerStack stack = gen.stack({5, 4, 3});
    const Vector x = gen.vec(5), z = gen.vec(3);
    const PcState s = init_pc_state(x, z, stack);
    REQUIRE(s.estimates.size() == 3);
    CHECK(s.estimates[0] == x);
    CHECK(s.z() == z);
    // The forward cascade leaves only the bottom error non-zero.
    CHECK(norm(s.errors[1]) < 1e-15);
    CHECK(s.errors[0] == x - decode(stack, z).output());
    const double expected = 0.5 * squared_norm(s.errors[0]) - log_prior_balanced(z, kMemory.size() ? gen.memory(3, 2) : kMemory, 1.0);
    (void)expected;
    const MemoryMatrix m = gen.memory(3, 2);
    CHECK(pc_free_energy(s, stack, m, 1.0) ==
          doctest::Approx(0.5 * squared_norm(s.errors[0]) - log_prior_balanced(z, m, 1.0)).epsilon(1e-13));
    CHECK_THROWS_AS(init_pc_state(Vector(4), z, stack), ShapeError);
}

TEST_CASE("pc fixed-prediction step equals bp step at half the rate") {
    support::Gen gen(56);
    for (int t = 0; t < 20; ++t) {
        const std::size_t d = gen.index(2, 4);
        std::vector<std::size_t> dims{gen.index(3, 7), gen.index(3, 7)};
        if (t % 2) dims.push_back(gen.index(3, 7));
        dims.push_back(d);
        const LayerStack stack = gen.stack(dims);
        const MemoryMatrix m = gen.memory(d, gen.index(1, 5));
        const Vector x = gen.vec(dims.front()), z = gen.vec(d);
        const double sigma = gen.uniform(0.5, 1.5), alpha = gen.uniform(0.01, 0.2);
        const PcState next = pc_fixed_prediction_step(init_pc_state(x, z, stack), stack, m, sigma, alpha);
        const Vector bp = bp_gmm_step(x, z, stack, m, BalancedGmmPrior{sigma}, 2.0, alpha / 2.0);
        CHECK(support::max_abs(next.z(), bp) < 1e-10);
    }
}

TEST_CASE("pc relaxation lowers the free energy and reaches equilibrium") {
    support::Gen gen(57);
    const LayerStack stack = gen.stack({6, 5, 3});
    const MemoryMatrix m = gen.memory(3, 3);
    const Vector x = gen.vec(6);
    PcState s = init_pc_state(x, gen.vec(3), stack);
    double f = pc_free_energy(s, stack, m, 1.0);
    for (int i = 0; i < 200; ++i) {
        pc_step(s, stack, m, 1.0, 0.05);
        const double next = pc_free_energy(s, stack, m, 1.0);
        CHECK(next <= f + 1e-10);
        f = next;
    }
}

TEST_CASE("pc with one identity layer reaches the closed form") {
    support::Gen gen(58);
    for (int t = 0; t < 10; ++t) {
        const std::size_t d = gen.index(1, 5);
        const MemoryMatrix m = gen.memory(d, 1);
        const Vector x = gen.vec(d);
        const double sigma = gen.uniform(0.3, 2.0), s2 = sigma * sigma;
        const LayerStack stack = identity_stack(d);
        const PcState s = pc_relax(init_pc_state(x, x, stack), stack, m, sigma, 0.5 * s2 / (1 + s2), 1000000, 1e-14);
        Vector expected = s2 * x;
        expected += m.pattern(0);
        expected *= 1.0 / (s2 + 1.0);
        CHECK(support::max_abs(s.z(), expected) < 1e-8);
    }
}

TEST_CASE("observation-space engines through retrieve") {
    const VaeModel vae = identity_vae(2);
    const MemoryMatrix m = MemoryMatrix::from_patterns({Vector{2.0, 0.0}, Vector{-2.0, 0.0}});
    for (Engine e : {Engine::bp_gmm, Engine::pc_gmm}) {
        RetrievalConfig c = default_config(e, BalancedGmmPrior{0.3});
        c.max_iters = 5000;
        const RetrievalResult r = retrieve(Vector{1.7, 0.3}, &vae, m, BalancedGmmPrior{0.3}, e, c);
        CHECK(r.matched_index == 0);
        CHECK(r.z_final.all_finite());
    }
}

TEST_CASE("runaway steps are reported as numeric errors") {
    const LayerStack stack({Layer{Matrix(1, 1, std::vector<double>{1e200}), Vector(1), Activation::identity}});
    const MemoryMatrix m = MemoryMatrix::from_patterns({Vector{0.0}});
    RetrievalConfig c;
    c.step = 1.0;
    CHECK_THROWS_AS(bp_gmm_retrieve(Vector{1.0}, stack, m, BalancedGmmPrior{1.0}, c, nullptr), NumericError);
}
