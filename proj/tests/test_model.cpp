#include <doctest.h>

#include <cmath>
#include <limits>
#include <stdexcept>
#include <random>

#include <ratenet/model.hpp>

#include "oracles.hpp"
#include "systems.hpp"

using namespace ratenet;

TEST_SUITE_BEGIN("model");

TEST_CASE("sigmoid basic values") {
    CHECK(sigmoid(0.0, 1.7, 0.0) == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(sigmoid(0.0, 0.3, 0.0) == doctest::Approx(0.5).epsilon(1e-15));
    // frozen from the quadrature oracle: Phi(1)
    CHECK(sigmoid(1.0, 1.0, 0.0) == doctest::Approx(0.841344746068543).epsilon(1e-9));
    CHECK(sigmoid(1.0, 1.0, 0.0) ==
          doctest::Approx(oracles::normal_cdf_quadrature(1.0)).epsilon(1e-9));
    // saturation
    CHECK(sigmoid(60.0, 1.0, 0.0) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(sigmoid(-60.0, 1.0, 0.0) == doctest::Approx(0.0).epsilon(1e-15));
    CHECK_THROWS_AS(sigmoid(std::nan(""), 1.0, 0.0), std::domain_error);
    CHECK_THROWS_AS(sigmoid(std::numeric_limits<double>::infinity(), 1.0, 0.0),
                    std::domain_error);
}

TEST_CASE("sigmoid against quadrature across a grid") {
    for (double x : {-4.0, -2.5, -1.0, -0.25, 0.0, 0.4, 1.3, 2.9, 4.5})
        CHECK(sigmoid(x, 1.0, 0.0) ==
              doctest::Approx(oracles::normal_cdf_quadrature(x)).epsilon(1e-11));
}

TEST_CASE("closure_f special cases") {
    CHECK(closure_f(0.0, 3.7, 2.0, 0.0) == doctest::Approx(0.5).epsilon(1e-15));
    for (double mu : {-1.5, 0.2, 2.0})
        CHECK(closure_f(mu, 0.0, 1.4, -0.3) ==
              doctest::Approx(sigmoid(mu, 1.4, -0.3)).epsilon(1e-15));
    // frozen from the Monte-Carlo oracle (1e7 samples, +-3e-4): Phi(1/sqrt(2))
    CHECK(closure_f(1.0, 1.0, 1.0, 0.0) == doctest::Approx(0.760250).epsilon(4e-4));
    CHECK_THROWS_AS(closure_f(0.0, -1e-9, 1.0, 0.0), std::domain_error);
}

TEST_CASE("closure_f matches the Monte-Carlo oracle at spot checks") {
    // smaller sample than the acceptance run; 4-sigma gate
    const std::size_t n = 400000;
    int idx = 0;
    for (auto [mu, v, g, gamma] : {std::array<double, 4>{1.0, 1.0, 1.0, 0.0},
                                   std::array<double, 4>{-2.0, 4.0, 0.7, 0.5},
                                   std::array<double, 4>{0.3, 0.02, 3.0, -1.0}}) {
        const auto mc = oracles::closure_mc(mu, v, g, gamma, n, 777 + idx++);
        CHECK(std::abs(closure_f(mu, v, g, gamma) - mc.value) < 4.0 * mc.stderr_);
    }
}

TEST_CASE("closure_f range, monotonicity and odd symmetry") {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u_mu(-5.0, 5.0), u_v(0.0, 10.0), u_g(0.1, 5.0);
    for (int k = 0; k < 200; ++k) {
        const double mu = u_mu(rng), v = u_v(rng), g = u_g(rng);
        const double f = closure_f(mu, v, g, 0.0);
        CHECK(f > 0.0);
        CHECK(f < 1.0);
        CHECK(closure_f(mu + 0.01, v, g, 0.0) > f);
        CHECK(closure_f(-mu, v, g, 0.0) == doctest::Approx(1.0 - f).epsilon(1e-12));
    }
}

TEST_CASE("closure_f_dmu values and finite differences") {
    CHECK(closure_f_dmu(0.0, 0.0, 1.0, 0.0) ==
          doctest::Approx(1.0 / std::sqrt(2.0 * std::acos(-1.0))).epsilon(1e-12));
    // v = lambda^2 tau / 2 with lambda = sqrt(2): 1/sqrt(4 pi)
    CHECK(closure_f_dmu(0.0, 1.0, 1.0, 0.0) ==
          doctest::Approx(1.0 / std::sqrt(4.0 * std::acos(-1.0))).epsilon(1e-12));

    std::mt19937_64 rng(29);
    std::uniform_real_distribution<double> u_mu(-5.0, 5.0), u_v(0.0, 10.0), u_g(0.1, 5.0),
        u_gamma(-3.0, 3.0);
    for (int k = 0; k < 50; ++k) {
        const double mu = u_mu(rng), v = u_v(rng), g = u_g(rng), gamma = u_gamma(rng);
        const double h = 1e-6;
        const double fd = (closure_f(mu + h, v, g, gamma) - closure_f(mu - h, v, g, gamma)) /
                          (2.0 * h);
        const double an = closure_f_dmu(mu, v, g, gamma);
        if (std::abs(an) > 1e-12)
            CHECK(std::abs(fd - an) / std::abs(an) < 1e-5);
    }
    // spot check away from the origin
    {
        const double h = 1e-6;
        const double fd =
            (closure_f(2.0 + h, 3.0, 0.7, -0.2) - closure_f(2.0 - h, 3.0, 0.7, -0.2)) / (2.0 * h);
        CHECK(closure_f_dmu(2.0, 3.0, 0.7, -0.2) == doctest::Approx(fd).epsilon(1e-6));
    }
}

TEST_CASE("increasing variance flattens the effective sigmoid") {
    // smoothing pulls every value toward 1/2 ...
    for (double mu : {-2.0, -0.3, 0.7, 3.0})
        for (double g : {0.5, 1.0, 2.5}) {
            double prev = std::abs(closure_f(mu, 0.0, g, 0.0) - 0.5);
            for (double v : {0.5, 1.0, 2.0, 5.0}) {
                const double cur = std::abs(closure_f(mu, v, g, 0.0) - 0.5);
                CHECK(cur < prev);
                prev = cur;
            }
        }
    // ... because the effective slope parameter g/sqrt(1 + g^2 v) decreases;
    // at the symmetry point the mu-derivative itself carries that decrease
    for (double g : {0.5, 1.0, 2.5}) {
        double prev_slope = closure_f_dmu(0.0, 0.0, g, 0.0);
        for (double v : {0.5, 1.0, 2.0, 5.0}) {
            const double cur = closure_f_dmu(0.0, v, g, 0.0);
            CHECK(cur < prev_slope);
            prev_slope = cur;
        }
    }
    // note the derivative away from the center is NOT monotone in v: for
    // large |mu| the smoothed argument moves toward the density peak and
    // the local slope rises even as the curve flattens overall
    CHECK(closure_f_dmu(3.0, 5.0, 1.0, 0.0) > closure_f_dmu(3.0, 0.0, 1.0, 0.0));
}

TEST_CASE("closure_f_dmu2 matches second differences") {
    for (double mu : {-1.0, 0.3, 2.0}) {
        const double h = 1e-5;
        const double fd = (closure_f(mu + h, 2.0, 1.3, 0.4) - 2.0 * closure_f(mu, 2.0, 1.3, 0.4) +
                           closure_f(mu - h, 2.0, 1.3, 0.4)) /
                          (h * h);
        CHECK(closure_f_dmu2(mu, 2.0, 1.3, 0.4) == doctest::Approx(fd).epsilon(1e-4));
    }
}

TEST_CASE("stationary variance") {
    auto spec = systems::one_pop(1.0, 0.0);
    CHECK(stationary_variance(spec)[0] == 0.0);
    spec = systems::one_pop(1.0, 1.0);
    CHECK(stationary_variance(spec)[0] == doctest::Approx(0.5).epsilon(1e-15));
    spec.populations[0].tau = 2.0;
    spec.populations[0].noise = 3.0;
    CHECK(stationary_variance(spec)[0] == doctest::Approx(9.0).epsilon(1e-15));
}

TEST_CASE("variance_trajectory closed form") {
    // fixed point stays put
    for (double t : {0.0, 0.3, 2.0, 50.0})
        CHECK(variance_trajectory(0.5, 1.0, 1.0, t) == doctest::Approx(0.5).epsilon(1e-14));
    CHECK(variance_trajectory(0.0, 1.0, 1.0, 60.0) == doctest::Approx(0.5).epsilon(1e-12));
    // frozen from the RK4 oracle of vdot = -2v + 1: 0.5 (1 - e^-2)
    CHECK(variance_trajectory(0.0, 1.0, 1.0, 1.0) ==
          doctest::Approx(0.43233235838169365).epsilon(1e-12));
    auto ode = [](double, double v) { return -2.0 * v + 1.0; };
    CHECK(variance_trajectory(0.0, 1.0, 1.0, 1.0) ==
          doctest::Approx(oracles::rk4_scalar(ode, 0.0, 0.0, 1.0, 4000)).epsilon(1e-9));
    CHECK_THROWS_AS(variance_trajectory(0.0, 1.0, 1.0, -0.1), std::domain_error);
}

TEST_CASE("variance_trajectory satisfies its ODE by finite differences") {
    const double tau = 1.7, lambda = 0.9, v0 = 0.2;
    for (double t : {0.1, 0.8, 2.5, 6.0}) {
        const double h = 1e-5;
        const double fd = (variance_trajectory(v0, tau, lambda, t + h) -
                           variance_trajectory(v0, tau, lambda, t - h)) /
                          (2.0 * h);
        const double rhs =
            -2.0 * variance_trajectory(v0, tau, lambda, t) / tau + lambda * lambda;
        CHECK(std::abs(fd - rhs) < 1e-8);
    }
}

TEST_CASE("covariance kernel") {
    auto spec = systems::one_pop(1.0, 1.0);
    std::vector<double> v0_cov = {0.0};

    SUBCASE("diagonal at equal times reproduces the variance") {
        for (double t : {0.0, 0.5, 1.0, 3.0})
            CHECK(covariance(spec, 0, 0, t, t, v0_cov) ==
                  doctest::Approx(variance_trajectory(0.0, 1.0, 1.0, t)).epsilon(1e-14));
    }
    SUBCASE("frozen two-time value e^-3 (e^2 - 1)/2") {
        const double expected = std::exp(-3.0) * (std::exp(2.0) - 1.0) / 2.0;
        CHECK(covariance(spec, 0, 0, 1.0, 2.0, v0_cov) ==
              doctest::Approx(expected).epsilon(1e-14));
        CHECK(expected == doctest::Approx(0.159046).epsilon(1e-5));
        // Monte-Carlo oracle over 1e6 exact OU transitions, +-2e-3
        const double mc = oracles::ou_covariance_mc(1.0, 1.0, 0.0, 1.0, 2.0, 1000000, 4242);
        CHECK(std::abs(covariance(spec, 0, 0, 1.0, 2.0, v0_cov) - mc) < 2e-3);
    }
    SUBCASE("symmetry in (a,t1) <-> (b,t2)") {
        CHECK(covariance(spec, 0, 0, 1.0, 2.0, v0_cov) ==
              doctest::Approx(covariance(spec, 0, 0, 2.0, 1.0, v0_cov)).epsilon(1e-15));
    }
    SUBCASE("independent populations stay uncorrelated") {
        auto two = systems::two_pop_ei(1.0);
        std::vector<double> zero_cov(4, 0.0);
        for (double t1 : {0.2, 1.0})
            for (double t2 : {0.4, 2.5})
                CHECK(covariance(two, 0, 1, t1, t2, zero_cov) == 0.0);
        // a nonzero initial cross-covariance decays with both rates
        std::vector<double> cross_cov = {0.3, 0.1, 0.1, 0.2};
        CHECK(covariance(two, 0, 1, 1.0, 2.0, cross_cov) ==
              doctest::Approx(0.1 * std::exp(-3.0)).epsilon(1e-14));
    }
    SUBCASE("negative times rejected") {
        CHECK_THROWS_AS(covariance(spec, 0, 0, -1.0, 2.0, v0_cov), std::domain_error);
    }
}

TEST_CASE("schedules") {
    Schedule s(std::vector<std::pair<double, double>>{{0.0, 1.0}, {5.0, 2.0}, {10.0, 0.5}});
    CHECK(s(-1.0) == 1.0);
    CHECK(s(0.0) == 1.0);
    CHECK(s(4.999) == 1.0);
    CHECK(s(5.0) == 2.0);
    CHECK(s(9.0) == 2.0);
    CHECK(s(11.0) == 0.5);
    CHECK(s.final_value() == 0.5);
    CHECK_FALSE(s.is_constant());
    Schedule c(0.7);
    CHECK(c.is_constant());
    CHECK(c(123.0) == 0.7);

    // piecewise-constant noise keeps the covariance integral per segment
    ModelSpec spec = systems::one_pop(1.0, 1.0);
    spec.populations[0].noise =
        Schedule(std::vector<std::pair<double, double>>{{0.0, 1.0}, {1.0, 0.0}});
    std::vector<double> v0_cov = {0.0};
    // after the noise switches off, only decay remains
    const double v_at_1 = variance_trajectory(0.0, 1.0, 1.0, 1.0);
    CHECK(covariance(spec, 0, 0, 2.0, 2.0, v0_cov) ==
          doctest::Approx(v_at_1 * std::exp(-2.0)).epsilon(1e-12));
}

TEST_CASE("model spec validation and JSON round trip") {
    auto spec = systems::two_pop_ei(1.2);
    spec.validate();

    SUBCASE("round trip preserves fields") {
        const std::string text = spec.to_json_string();
        const ModelSpec back = ModelSpec::from_json_string(text);
        CHECK(back.num_populations() == 2);
        CHECK(back.label == spec.label);
        for (std::size_t a = 0; a < 2; ++a) {
            CHECK(back.populations[a].tau == spec.populations[a].tau);
            CHECK(back.populations[a].gain == spec.populations[a].gain);
            CHECK(back.populations[a].threshold == spec.populations[a].threshold);
            CHECK(back.populations[a].fraction == spec.populations[a].fraction);
            CHECK(back.populations[a].noise.final_value() ==
                  spec.populations[a].noise.final_value());
            CHECK(back.populations[a].input.final_value() ==
                  spec.populations[a].input.final_value());
            for (std::size_t b = 0; b < 2; ++b)
                CHECK(back.weight(a, b) == spec.weight(a, b));
        }
    }
    SUBCASE("field names are exactly as documented") {
        const std::string text = spec.to_json_string();
        for (const char* key : {"\"populations\"", "\"tau\"", "\"gain\"", "\"threshold\"",
                                "\"noise\"", "\"input\"", "\"fraction\"", "\"connectivity\"",
                                "\"label\""})
            CHECK(text.find(key) != std::string::npos);
    }
    SUBCASE("invariants rejected") {
        ModelSpec bad = spec;
        bad.populations[0].tau = 0.0;
        CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
        bad = spec;
        bad.populations[0].gain = -1.0;
        CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
        bad = spec;
        bad.populations[0].noise = -0.1;
        CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
        bad = spec;
        bad.populations[0].fraction = 0.7;  // sum != 1
        CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
        bad = spec;
        bad.connectivity = {1.0, 2.0, 3.0};
        CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
        bad = spec;
        bad.connectivity[2] = std::nan("");
        CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    }
}

TEST_SUITE_END();
