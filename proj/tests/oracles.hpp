// Test-side oracles: small, independent reference computations used to pin
// expected values. Deliberately decoupled from the library implementations
// they validate.
#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <vector>

namespace oracles {

// adaptive Simpson quadrature
inline double simpson_rec(const std::function<double(double)>& f, double a, double b, double fa,
                          double fb, double fm, double whole, double tol, int depth) {
    const double m = 0.5 * (a + b);
    const double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
    const double flm = f(lm), frm = f(rm);
    const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    if (depth <= 0 || std::abs(left + right - whole) < 15.0 * tol)
        return left + right + (left + right - whole) / 15.0;
    return simpson_rec(f, a, m, fa, fm, flm, left, tol / 2.0, depth - 1) +
           simpson_rec(f, m, b, fm, fb, frm, right, tol / 2.0, depth - 1);
}

inline double integrate(const std::function<double(double)>& f, double a, double b,
                        double tol = 1e-12) {
    const double fa = f(a), fb = f(b), fm = f(0.5 * (a + b));
    const double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    return simpson_rec(f, a, b, fa, fb, fm, whole, tol, 48);
}

// standard-normal CDF by quadrature of the density (reference for sigmoid)
inline double normal_cdf_quadrature(double x) {
    auto density = [](double t) {
        return std::exp(-0.5 * t * t) / std::sqrt(2.0 * std::acos(-1.0));
    };
    if (x < -12.0)
        return 0.0;
    return integrate(density, -12.0, x, 1e-13);
}

// Monte-Carlo estimate of E[Phi(g U + gamma)] for U ~ N(mu, v); returns
// (estimate, standard error)
struct McEstimate {
    double value;
    double stderr_;
};

inline McEstimate closure_mc(double mu, double v, double g, double gamma, std::size_t n,
                             std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(mu, std::sqrt(v));
    double sum = 0.0, sumsq = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double u = normal(rng);
        const double s = 0.5 * std::erfc(-(g * u + gamma) / std::sqrt(2.0));
        sum += s;
        sumsq += s * s;
    }
    const double mean = sum / double(n);
    const double var = (sumsq - sum * sum / double(n)) / double(n - 1);
    return {mean, std::sqrt(var / double(n))};
}

// classic RK4 on a scalar ODE xdot = f(t, x)
inline double rk4_scalar(const std::function<double(double, double)>& f, double x0, double t0,
                         double t1, std::size_t steps) {
    double x = x0, t = t0;
    const double h = (t1 - t0) / double(steps);
    for (std::size_t k = 0; k < steps; ++k) {
        const double k1 = f(t, x);
        const double k2 = f(t + 0.5 * h, x + 0.5 * h * k1);
        const double k3 = f(t + 0.5 * h, x + 0.5 * h * k2);
        const double k4 = f(t + h, x + h * k3);
        x += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        t += h;
    }
    return x;
}

// Monte-Carlo covariance of an Ornstein-Uhlenbeck path at (t1, t2), exact
// Gaussian transitions
inline double ou_covariance_mc(double tau, double lambda, double v0, double t1, double t2,
                               std::size_t paths, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    const double ta = std::min(t1, t2), tb = std::max(t1, t2);
    const double var_inf = tau * lambda * lambda / 2.0;
    auto transition_sd = [&](double dt) {
        return std::sqrt(var_inf * (1.0 - std::exp(-2.0 * dt / tau)));
    };
    double sa = 0.0, sb = 0.0, sab = 0.0;
    for (std::size_t k = 0; k < paths; ++k) {
        const double x0 = std::sqrt(v0) * normal(rng);
        const double xa = x0 * std::exp(-ta / tau) + transition_sd(ta) * normal(rng);
        const double xb = xa * std::exp(-(tb - ta) / tau) + transition_sd(tb - ta) * normal(rng);
        sa += xa;
        sb += xb;
        sab += xa * xb;
    }
    const double n = double(paths);
    return sab / n - (sa / n) * (sb / n);
}

}  // namespace oracles
