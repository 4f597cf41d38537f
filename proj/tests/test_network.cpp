#include <doctest.h>

#include <cmath>
#include <limits>
#include <stdexcept>
#include <numeric>

#include <ratenet/network.hpp>

#include "systems.hpp"

using namespace ratenet;

TEST_SUITE_BEGIN("network");

namespace {

InitialLaw delta_law(std::size_t p, double mean, double variance = 0.0) {
    InitialLaw law;
    law.mean.assign(p, mean);
    law.variance.assign(p, variance);
    return law;
}

}  // namespace

TEST_CASE("population sizes use largest-remainder rounding") {
    auto spec = systems::two_pop_ei(0.0);
    spec.populations[0].fraction = 0.6;
    spec.populations[1].fraction = 0.4;
    const auto sizes = population_sizes(spec, 10);
    CHECK(sizes[0] == 6);
    CHECK(sizes[1] == 4);
    const auto odd = population_sizes(spec, 7);  // 4.2 / 2.8 -> 4 / 3
    CHECK(odd[0] + odd[1] == 7);
    CHECK(odd[0] == 4);
    // three-way split with ties resolved to lower indices
    ModelSpec three = spec;
    three.populations.push_back(spec.populations[0]);
    for (auto& pop : three.populations)
        pop.fraction = 1.0 / 3.0;
    three.connectivity.assign(9, 0.0);
    const auto thirds = population_sizes(three, 10);
    CHECK(std::accumulate(thirds.begin(), thirds.end(), 0u) == 10u);
    CHECK(thirds[0] == 4);
    CHECK_THROWS_AS(population_sizes(three, 2), std::invalid_argument);
}

TEST_CASE("em_step: pure linear decay") {
    auto spec = systems::one_pop(1.0, 0.0, 0.0);
    spec.populations[0].input = 0.0;
    SimConfig sim;
    sim.n_total = 4;
    sim.dt = 0.01;
    sim.t_end = 1.0;
    auto state = make_initial_state(spec, sim, delta_law(1, 1.5));
    std::vector<double> zero_noise(state.voltages.size(), 0.0);
    em_step(state, spec, 0.01, zero_noise);
    for (std::uint32_t i = 0; i < 4; ++i)
        CHECK(state.at(0, i) == doctest::Approx(1.5 * 0.99).epsilon(1e-15));
}

TEST_CASE("em_step: fixed point of the noiseless linear system is tau * I") {
    auto spec = systems::one_pop(1.0, 0.0, 0.0);
    spec.populations[0].tau = 2.0;
    spec.populations[0].input = 0.7;
    SimConfig sim;
    sim.n_total = 2;
    sim.dt = 0.005;
    sim.t_end = 60.0;
    sim.record_mode = RecordMode::final_state;
    const auto rec = run_ensemble(spec, sim, delta_law(1, 0.0));
    for (std::uint32_t i = 0; i < 2; ++i)
        CHECK(rec.final_state.at(0, i) == doctest::Approx(2.0 * 0.7).epsilon(1e-6));
    // approach is monotone for a linear ODE: sampled midpoint lies between
    SimConfig half = sim;
    half.t_end = 1.0;
    const auto mid = run_ensemble(spec, half, delta_law(1, 0.0));
    CHECK(mid.final_state.at(0, 0) > 0.0);
    CHECK(mid.final_state.at(0, 0) < 1.4);
}

TEST_CASE("em_step: balanced drift pins the state at zero") {
    // J = 1, I = -0.5, gamma = 0: S(0) = 1/2 cancels the input exactly
    auto spec = systems::one_pop(1.0, 0.0);
    SimConfig sim;
    sim.n_total = 1000;
    sim.dt = 0.001;
    sim.t_end = 0.05;
    sim.record_mode = RecordMode::final_state;
    const auto rec = run_ensemble(spec, sim, delta_law(1, 0.0));
    for (std::uint32_t i = 0; i < 10; ++i)
        CHECK(rec.final_state.at(0, i) == 0.0);
}

TEST_CASE("deterministic runs: lambda = 0 realizations coincide") {
    auto spec = systems::two_pop_ei(0.0);
    SimConfig sim;
    sim.n_total = 40;
    sim.dt = 0.005;
    sim.t_end = 2.0;
    sim.n_realizations = 2;
    sim.seed = 7;
    sim.record_mode = RecordMode::final_state;
    const auto rec = run_ensemble(spec, sim, delta_law(2, 0.5));
    for (std::uint32_t i = 0; i < 40; ++i)
        CHECK(rec.final_state.at(0, i) == rec.final_state.at(1, i));
}

TEST_CASE("population symmetry is exact when lambda = 0") {
    auto spec = systems::two_pop_ei(0.0);
    SimConfig sim;
    sim.n_total = 64;
    sim.dt = 0.01;
    sim.t_end = 3.0;
    sim.seed = 3;
    sim.record_mode = RecordMode::final_state;
    const auto rec = run_ensemble(spec, sim, delta_law(2, 0.5));
    const auto& pop = rec.final_state.population_of;
    for (std::uint32_t i = 1; i < 64; ++i)
        if (pop[i] == pop[0])
            CHECK(rec.final_state.at(0, i) == rec.final_state.at(0, 0));
}

TEST_CASE("determinism: identical runs match bit for bit across thread counts") {
    auto spec = systems::two_pop_ei(1.2);
    SimConfig sim;
    sim.n_total = 100;
    sim.dt = 0.01;
    sim.t_end = 1.0;
    sim.n_realizations = 5;
    sim.seed = 42;
    sim.record_mode = RecordMode::population_stats;

    sim.threads = 1;
    const auto a = run_ensemble(spec, sim, delta_law(2, 0.5, 1.0));
    sim.threads = 2;
    const auto b = run_ensemble(spec, sim, delta_law(2, 0.5, 1.0));
    sim.threads = 5;
    const auto c = run_ensemble(spec, sim, delta_law(2, 0.5, 1.0));

    REQUIRE(a.stats.size() == b.stats.size());
    REQUIRE(a.stats.size() == c.stats.size());
    for (std::size_t k = 0; k < a.stats.size(); ++k)
        for (std::size_t p = 0; p < 2; ++p) {
            CHECK(a.stats[k].mean[p] == b.stats[k].mean[p]);
            CHECK(a.stats[k].var[p] == b.stats[k].var[p]);
            CHECK(a.stats[k].mean[p] == c.stats[k].mean[p]);
            CHECK(a.stats[k].var[p] == c.stats[k].var[p]);
        }
    for (std::size_t i = 0; i < a.final_state.voltages.size(); ++i)
        CHECK(a.final_state.voltages[i] == b.final_state.voltages[i]);
}

TEST_CASE("empirical_stats hand computations") {
    EnsembleState state;
    state.num_neurons = 4;
    state.num_realizations = 1;
    state.population_of = {0, 0, 1, 1};
    state.voltages = {3.0, 3.0, 0.0, 2.0};
    const auto stats = empirical_stats(state);
    CHECK(stats.mean[0] == 3.0);
    CHECK(stats.var[0] == 0.0);
    CHECK(stats.mean[1] == 1.0);
    CHECK(stats.var[1] == 2.0);  // unbiased: ((0-1)^2 + (2-1)^2) / (2-1)
}

TEST_CASE("stationary empirical variance approaches tau lambda^2 / 2") {
    auto spec = systems::two_pop_ei(0.6);
    SimConfig sim;
    sim.n_total = 2000;
    sim.dt = 0.005;
    sim.t_end = 15.0;
    sim.seed = 11;
    sim.record_mode = RecordMode::final_state;
    InitialLaw law = delta_law(2, 4.0, 0.18);  // start at the stationary spread
    const auto rec = run_ensemble(spec, sim, law);
    const auto stats = empirical_stats(rec.final_state);
    const double expect = 0.6 * 0.6 / 2.0;
    for (std::size_t a = 0; a < 2; ++a)
        CHECK(std::abs(stats.var[a] - expect) / expect < 0.10);
}

TEST_CASE("memory cap refuses oversized full recordings") {
    auto spec = systems::one_pop(1.0, 0.1);
    SimConfig sim;
    sim.n_total = 1000;
    sim.dt = 0.001;
    sim.t_end = 10.0;
    sim.n_realizations = 10;
    sim.record_mode = RecordMode::full_trajectories;
    sim.memory_cap_bytes = 1 << 20;
    CHECK_THROWS_WITH_AS(run_ensemble(spec, sim, delta_law(1, 0.0)),
                         doctest::Contains("bytes"), std::runtime_error);
}

TEST_CASE("diverging integration reports the failing step") {
    // dt far beyond the stability limit of the linear decay: the explicit
    // update multiplies the state by (1 - dt/tau) = -999 every step
    auto spec = systems::one_pop(1.0, 0.0, 0.0);
    spec.populations[0].tau = 1e-3;
    spec.populations[0].input = 0.0;
    SimConfig sim;
    sim.n_total = 2;
    sim.dt = 1.0;
    sim.t_end = 200.0;
    CHECK_THROWS_WITH_AS(run_ensemble(spec, sim, delta_law(1, 1.0)),
                         doctest::Contains("step"), std::runtime_error);
}

TEST_CASE("run_coupled: zero coupling gives zero discrepancy") {
    auto spec = systems::one_pop(1.0, 0.5, 0.0);  // J = 0, lambda = 0.5
    spec.populations[0].input = 0.2;
    SimConfig sim;
    sim.n_total = 50;
    sim.dt = 0.01;
    sim.t_end = 5.0;
    sim.n_realizations = 3;
    sim.seed = 21;
    sim.record_mode = RecordMode::final_state;
    InitialLaw law = delta_law(1, 0.3, 0.5);

    MomentState init;
    init.mean = {0.3};
    init.variance = {0.5};
    OdeConfig cfg;
    cfg.t_end = 5.0;
    const auto moments = integrate(spec, init, cfg);
    const auto coupled = run_coupled(spec, sim, law, moments);
    for (double d : coupled.sup_discrepancy)
        CHECK(d < 1e-12);
}

TEST_CASE("run_coupled: running sup is non-negative and non-decreasing") {
    auto spec = systems::one_pop(2.0, 0.4);
    SimConfig sim;
    sim.n_total = 100;
    sim.dt = 0.005;
    sim.t_end = 4.0;
    sim.n_realizations = 2;
    sim.seed = 5;
    sim.record_mode = RecordMode::final_state;
    InitialLaw law = delta_law(1, 0.5, 0.08);
    MomentState init;
    init.mean = {0.5};
    init.variance = {0.08};
    OdeConfig cfg;
    cfg.t_end = 4.0;
    const auto moments = integrate(spec, init, cfg);
    const auto coupled = run_coupled(spec, sim, law, moments);
    CHECK(coupled.mean_sup_discrepancy > 0.0);
    for (std::size_t k = 1; k < coupled.running_sup.size(); ++k)
        CHECK(coupled.running_sup[k] >= coupled.running_sup[k - 1]);
}

TEST_CASE("run_coupled discrepancy shrinks with N") {
    auto spec = systems::one_pop(2.0, 0.4);
    InitialLaw law = delta_law(1, 0.5, 0.08);
    MomentState init;
    init.mean = {0.5};
    init.variance = {0.08};
    OdeConfig cfg;
    cfg.t_end = 5.0;
    const auto moments = integrate(spec, init, cfg);

    auto mean_sup = [&](std::uint64_t n) {
        SimConfig sim;
        sim.n_total = n;
        sim.dt = 0.01;
        sim.t_end = 5.0;
        sim.n_realizations = 8;
        sim.seed = 1234;
        sim.record_mode = RecordMode::final_state;
        return run_coupled(spec, sim, law, moments).mean_sup_discrepancy;
    };
    const double d100 = mean_sup(100);
    const double d1600 = mean_sup(1600);
    CHECK(d1600 < d100);  // rough 1/sqrt(N) trend; the slope test is in acceptance
}

TEST_CASE("record modes populate the expected views") {
    auto spec = systems::two_pop_ei(0.8);
    SimConfig sim;
    sim.n_total = 20;
    sim.dt = 0.01;
    sim.t_end = 0.5;
    sim.seed = 9;
    sim.record_stride = 10;
    InitialLaw law = delta_law(2, 0.5, 1.0);

    sim.record_mode = RecordMode::population_stats;
    const auto stats_rec = run_ensemble(spec, sim, law);
    CHECK(stats_rec.stats.size() == stats_rec.times.size());
    CHECK(stats_rec.times.front() == 0.0);
    CHECK(stats_rec.times.back() == doctest::Approx(0.5));

    sim.record_mode = RecordMode::full_trajectories;
    const auto full_rec = run_ensemble(spec, sim, law);
    CHECK(full_rec.full.size() == full_rec.times.size());
    CHECK(full_rec.full.front().size() == 20);

    // the initial sample matches the initial law draw
    const auto state0 = make_initial_state(spec, sim, law);
    for (std::size_t i = 0; i < 20; ++i)
        CHECK(full_rec.full.front()[i] == state0.voltages[i]);
}

TEST_CASE("empirical means track the moment trajectory within 3 standard errors") {
    // fixed-point regimes pointwise over the whole run; the oscillatory
    // regime over an initial window, before the O(dt) phase drift of the
    // explicit scheme accumulates
    // The standard error is estimated across independent runs: near a weakly
    // damped focus the collective mode resonantly amplifies the fluctuation
    // of the empirical mean far beyond the i.i.d. value sqrt(v/N), and the
    // across-run spread is what actually carries that amplification.
    // Initial conditions transiting unstable structures (the lambda = 1.2
    // start spirals off a focus with Re ~ +0.28) amplify differences
    // exponentially, so that case is checked on an initial window only;
    // attractor-level agreement in the oscillatory regime is covered by the
    // spectral checks.
    struct Case {
        double lambda;
        std::vector<double> checkpoints;
        std::uint64_t n;
        double init_mean;
    };
    const std::vector<Case> cases = {
        {0.6, {5.0, 10.0, 20.0, 30.0}, 4000, 4.0},
        {2.5, {5.0, 10.0, 20.0, 30.0}, 4000, 0.5},
        {1.2, {1.0, 2.0, 3.0}, 10000, 0.5},
    };
    const std::size_t runs = 8;
    for (const Case& c : cases) {
        auto spec = systems::two_pop_ei(c.lambda);
        const double t_end = c.checkpoints.back();
        InitialLaw law = delta_law(2, c.init_mean, 1.0);

        MomentState init;
        init.mean = law.mean;
        init.variance = law.variance;
        OdeConfig cfg;
        cfg.t_end = t_end;
        const auto traj = integrate(spec, init, cfg);

        // per-run empirical means at the checkpoints
        std::vector<std::vector<std::vector<double>>> means(
            runs, std::vector<std::vector<double>>(c.checkpoints.size()));
        for (std::size_t run = 0; run < runs; ++run) {
            SimConfig sim;
            sim.n_total = c.n;
            sim.dt = 0.005;
            sim.t_end = t_end;
            sim.seed = 77 + run;
            sim.record_mode = RecordMode::population_stats;
            sim.record_stride = 100;
            const auto rec = run_ensemble(spec, sim, law);
            for (std::size_t k = 0; k < c.checkpoints.size(); ++k) {
                std::size_t best = 0;
                for (std::size_t s = 0; s < rec.times.size(); ++s)
                    if (std::abs(rec.times[s] - c.checkpoints[k]) <
                        std::abs(rec.times[best] - c.checkpoints[k]))
                        best = s;
                means[run][k] = rec.stats[best].mean;
            }
        }

        for (std::size_t k = 0; k < c.checkpoints.size(); ++k) {
            const double t = c.checkpoints[k];
            const auto mf = traj.at(t);
            const auto dmf = moment_rhs(mf, spec);
            for (std::size_t a = 0; a < 2; ++a) {
                double avg = 0.0;
                for (std::size_t run = 0; run < runs; ++run)
                    avg += means[run][k][a];
                avg /= double(runs);
                double var = 0.0;
                for (std::size_t run = 0; run < runs; ++run)
                    var += (means[run][k][a] - avg) * (means[run][k][a] - avg);
                var /= double(runs - 1);
                const double se = std::sqrt(var / double(runs)) + 1e-4;
                // O(dt) clock error displaces steep segments by |mudot| * dt
                const double bias = (1.0 + std::abs(dmf.mean[a])) * 0.005;
                const double err = std::abs(avg - mf.mean[a]);
                INFO("lambda=", c.lambda, " t=", t, " pop=", a, " err=", err, " se=", se,
                     " bias=", bias);
                CHECK(err <= 3.0 * se + bias);
            }
        }
    }
}

TEST_CASE("network drift jacobian at the origin has the block structure") {
    auto spec = systems::two_pop_rotation(1.0, 0.0);
    const std::uint32_t n = 8;
    std::vector<double> v(n, 0.0);
    std::vector<std::uint32_t> pop = {0, 0, 0, 0, 1, 1, 1, 1};
    const auto jac = network_drift_jacobian(spec, v, pop, 0.0);
    const double s = 1.0 / std::sqrt(2.0 * std::acos(-1.0));  // S'(0) = phi(0)
    // diagonal: -1 + J_aa / N_a * phi(0)
    CHECK(jac[0] == doctest::Approx(-1.0 + 1.0 / 4.0 * s).epsilon(1e-14));
    // cross-population block: J_12 / N_2 * phi(0)
    CHECK(jac[4] == doctest::Approx(-1.0 / 4.0 * s).epsilon(1e-14));
    CHECK(jac[4 * n + 0] == doctest::Approx(1.0 / 4.0 * s).epsilon(1e-14));
}

TEST_SUITE_END();
