#include "ratenet/meanfield.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <functional>
#include <stdexcept>

namespace ratenet {

namespace {

// negative variance below this magnitude is integrator round-off, clamped to 0
constexpr double kVarianceSlack = 1e-12;

void pack(const MomentState& s, std::vector<double>& y) {
    const std::size_t p = s.mean.size();
    y.resize(2 * p);
    std::copy(s.mean.begin(), s.mean.end(), y.begin());
    std::copy(s.variance.begin(), s.variance.end(), y.begin() + p);
}

void rhs_raw(const ModelSpec& spec, double t, const double* y, double* dy) {
    const std::size_t p = spec.num_populations();
    const double* mu = y;
    const double* v = y + p;
    for (std::size_t a = 0; a < p; ++a) {
        const auto& pop = spec.populations[a];
        double va = v[a];
        if (va < 0.0) {
            if (va < -kVarianceSlack)
                throw std::domain_error("moment_rhs: negative variance");
            va = 0.0;
        }
        double coupling = 0.0;
        for (std::size_t b = 0; b < p; ++b) {
            double vb = std::max(v[b], 0.0);
            coupling += spec.weight(a, b) *
                        closure_f(mu[b], vb, spec.populations[b].gain, spec.populations[b].threshold);
        }
        const double lam = pop.noise(t);
        dy[a] = -mu[a] / pop.tau + coupling + pop.input(t);
        dy[p + a] = -2.0 * va / pop.tau + lam * lam;
    }
}

}  // namespace

MomentState moment_rhs(const MomentState& state, const ModelSpec& spec) {
    const std::size_t p = spec.num_populations();
    if (state.mean.size() != p || state.variance.size() != p)
        throw std::invalid_argument("moment_rhs: state dimension mismatch");
    for (double v : state.variance)
        if (v < 0.0)
            throw std::domain_error("moment_rhs: negative variance");
    std::vector<double> y(2 * p), dy(2 * p);
    std::copy(state.mean.begin(), state.mean.end(), y.begin());
    std::copy(state.variance.begin(), state.variance.end(), y.begin() + p);
    rhs_raw(spec, state.time, y.data(), dy.data());
    MomentState out;
    out.time = state.time;
    out.mean.assign(dy.begin(), dy.begin() + p);
    out.variance.assign(dy.begin() + p, dy.end());
    return out;
}

void MomentTrajectory::push_back(double t, const std::vector<double>& state,
                                 const std::vector<double>& deriv) {
    if (!times_.empty() && t <= times_.back())
        throw std::invalid_argument("MomentTrajectory: times must be strictly increasing");
    times_.push_back(t);
    states_.insert(states_.end(), state.begin(), state.end());
    derivs_.insert(derivs_.end(), deriv.begin(), deriv.end());
    if (times_.size() > 1)
        rcont5_.insert(rcont5_.end(), 2 * p_, 0.0);
}

void MomentTrajectory::set_last_interval_correction(const std::vector<double>& rcont5) {
    if (times_.size() < 2 || rcont5.size() != 2 * p_)
        throw std::invalid_argument("MomentTrajectory: no interval to correct");
    std::copy(rcont5.begin(), rcont5.end(), rcont5_.end() - 2 * p_);
}

MomentState MomentTrajectory::sample(std::size_t k) const {
    MomentState s;
    s.time = times_[k];
    const double* y = states_.data() + k * 2 * p_;
    s.mean.assign(y, y + p_);
    s.variance.assign(y + p_, y + 2 * p_);
    return s;
}

MomentState MomentTrajectory::at(double t) const {
    if (empty())
        throw std::out_of_range("MomentTrajectory: empty");
    if (t < times_.front() - 1e-12 || t > times_.back() + 1e-12)
        throw std::out_of_range("MomentTrajectory: time outside stored span");
    t = std::clamp(t, times_.front(), times_.back());
    const auto it = std::upper_bound(times_.begin(), times_.end(), t);
    std::size_t k1 = std::min<std::size_t>(it - times_.begin(), times_.size() - 1);
    if (k1 == 0)
        k1 = 1;
    const std::size_t k0 = k1 - 1;
    const double t0 = times_[k0], t1 = times_[k1];
    const double h = t1 - t0;
    const double theta = (t - t0) / h;
    const double theta1 = 1.0 - theta;
    MomentState s;
    s.time = t;
    s.mean.resize(p_);
    s.variance.resize(p_);
    const double* y0 = states_.data() + k0 * 2 * p_;
    const double* y1 = states_.data() + k1 * 2 * p_;
    const double* d0 = derivs_.data() + k0 * 2 * p_;
    const double* d1 = derivs_.data() + k1 * 2 * p_;
    const double* r5 = rcont5_.data() + k0 * 2 * p_;
    for (std::size_t i = 0; i < 2 * p_; ++i) {
        // nested dense-output form; rcont5 = 0 reduces to cubic Hermite
        const double dy = y1[i] - y0[i];
        const double r3 = h * d0[i] - dy;
        const double r4 = dy - h * d1[i] - r3;
        const double val = y0[i] + theta * (dy + theta1 * (r3 + theta * (r4 + theta1 * r5[i])));
        if (i < p_)
            s.mean[i] = val;
        else
            s.variance[i - p_] = std::max(val, 0.0);
    }
    return s;
}

namespace {

// Dormand-Prince 5(4) tableau
constexpr double a21 = 1.0 / 5;
constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561,
                 a54 = -212.0 / 729;
constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247,
                 a64 = 49.0 / 176, a65 = -5103.0 / 18656;
constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192, b5 = -2187.0 / 6784,
                 b6 = 11.0 / 84;
constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920,
                 e5 = -17253.0 / 339200, e6 = 22.0 / 525, e7 = -1.0 / 40;
constexpr double c2 = 0.2, c3 = 0.3, c4 = 0.8, c5 = 8.0 / 9;
// dense-output (fourth-order continuous extension) coefficients
constexpr double d1 = -12715105075.0 / 11282082432.0;
constexpr double d3 = 87487479700.0 / 32700410799.0;
constexpr double d4 = -10690763975.0 / 1880347072.0;
constexpr double d5 = 701980252875.0 / 199316789632.0;
constexpr double d6 = -1453857185.0 / 822651844.0;
constexpr double d7 = 69997945.0 / 29380423.0;

using Rhs = std::function<void(double, const double*, double*)>;

struct Dopri5 {
    std::size_t n;
    Rhs f;
    double abs_tol, rel_tol, max_step;
    std::vector<double> rcont5;  // dense correction of the last accepted step

    // attempt one step of size h from (t, y, k1=f(t,y)); on acceptance y and k1
    // are advanced (FSAL). Returns the scaled error estimate (accepted iff <= 1).
    double step(double t, std::vector<double>& y, std::vector<double>& k1, double h,
                std::vector<double>* work) {
        auto& k2 = work[0];
        auto& k3 = work[1];
        auto& k4 = work[2];
        auto& k5 = work[3];
        auto& k6 = work[4];
        auto& k7 = work[5];
        auto& tmp = work[6];
        auto& ynew = work[7];
        for (std::size_t i = 0; i < n; ++i) tmp[i] = y[i] + h * a21 * k1[i];
        f(t + c2 * h, tmp.data(), k2.data());
        for (std::size_t i = 0; i < n; ++i) tmp[i] = y[i] + h * (a31 * k1[i] + a32 * k2[i]);
        f(t + c3 * h, tmp.data(), k3.data());
        for (std::size_t i = 0; i < n; ++i)
            tmp[i] = y[i] + h * (a41 * k1[i] + a42 * k2[i] + a43 * k3[i]);
        f(t + c4 * h, tmp.data(), k4.data());
        for (std::size_t i = 0; i < n; ++i)
            tmp[i] = y[i] + h * (a51 * k1[i] + a52 * k2[i] + a53 * k3[i] + a54 * k4[i]);
        f(t + c5 * h, tmp.data(), k5.data());
        for (std::size_t i = 0; i < n; ++i)
            tmp[i] = y[i] + h * (a61 * k1[i] + a62 * k2[i] + a63 * k3[i] + a64 * k4[i] + a65 * k5[i]);
        f(t + h, tmp.data(), k6.data());
        for (std::size_t i = 0; i < n; ++i)
            ynew[i] = y[i] + h * (b1 * k1[i] + b3 * k3[i] + b4 * k4[i] + b5 * k5[i] + b6 * k6[i]);
        f(t + h, ynew.data(), k7.data());
        double err = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double ei = h * (e1 * k1[i] + e3 * k3[i] + e4 * k4[i] + e5 * k5[i] +
                                   e6 * k6[i] + e7 * k7[i]);
            const double scale = abs_tol + rel_tol * std::max(std::abs(y[i]), std::abs(ynew[i]));
            err += (ei / scale) * (ei / scale);
        }
        err = std::sqrt(err / double(n));
        if (!std::isfinite(err))
            return 1e6;
        if (err <= 1.0) {
            rcont5.resize(n);
            for (std::size_t i = 0; i < n; ++i)
                rcont5[i] = h * (d1 * k1[i] + d3 * k3[i] + d4 * k4[i] + d5 * k5[i] +
                                 d6 * k6[i] + d7 * k7[i]);
            y.swap(ynew);
            k1.swap(k7);  // FSAL
        }
        return err;
    }
};

}  // namespace

MomentTrajectory integrate(const ModelSpec& spec, const MomentState& init, const OdeConfig& cfg) {
    spec.validate();
    const std::size_t p = spec.num_populations();
    if (init.mean.size() != p || init.variance.size() != p)
        throw std::invalid_argument("integrate: initial state dimension mismatch");
    for (double v : init.variance)
        if (v < 0.0)
            throw std::domain_error("integrate: negative initial variance");
    const double t0 = init.time;
    const double t_end = cfg.t_end;
    if (!(t_end > t0))
        throw std::invalid_argument("integrate: t_end must exceed initial time");

    const std::size_t n = 2 * p;
    std::vector<double> y;
    pack(init, y);
    std::vector<double> k1(n);
    auto check = [&](const std::vector<double>& state, double t) {
        for (double val : state)
            if (!std::isfinite(val))
                throw std::runtime_error("integrate: non-finite state at t=" + std::to_string(t));
        for (std::size_t a = 0; a < p; ++a)
            if (state[p + a] < -kVarianceSlack)
                throw std::runtime_error("integrate: variance became negative at t=" +
                                         std::to_string(t));
    };

    // schedule breakpoints must coincide with step boundaries to keep the
    // integrator's order on discontinuous lambda(t), I(t)
    std::vector<double> breaks;
    for (const auto& pop : spec.populations) {
        for (const auto& [ts, v] : pop.noise.segments())
            if (ts > t0 && ts < t_end)
                breaks.push_back(ts);
        for (const auto& [ts, v] : pop.input.segments())
            if (ts > t0 && ts < t_end)
                breaks.push_back(ts);
    }
    breaks.push_back(t_end);
    std::sort(breaks.begin(), breaks.end());
    breaks.erase(std::unique(breaks.begin(), breaks.end()), breaks.end());

    MomentTrajectory traj(p);
    auto f = [&](double t, const double* yy, double* dyy) { rhs_raw(spec, t, yy, dyy); };
    f(t0, y.data(), k1.data());
    {
        std::vector<double> d(k1);
        traj.push_back(t0, y, d);
    }

    if (cfg.method == OdeMethod::rk4_fixed) {
        if (!(cfg.dt > 0.0))
            throw std::invalid_argument("integrate: rk4_fixed requires dt > 0");
        std::vector<double> k2(n), k3(n), k4(n), tmp(n);
        double t = t0;
        for (double stop : breaks) {
            const std::size_t steps = std::max<std::size_t>(1, std::llround((stop - t) / cfg.dt));
            const double h = (stop - t) / double(steps);
            for (std::size_t s = 0; s < steps; ++s) {
                f(t, y.data(), k1.data());
                for (std::size_t i = 0; i < n; ++i) tmp[i] = y[i] + 0.5 * h * k1[i];
                f(t + 0.5 * h, tmp.data(), k2.data());
                for (std::size_t i = 0; i < n; ++i) tmp[i] = y[i] + 0.5 * h * k2[i];
                f(t + 0.5 * h, tmp.data(), k3.data());
                for (std::size_t i = 0; i < n; ++i) tmp[i] = y[i] + h * k3[i];
                f(t + h, tmp.data(), k4.data());
                for (std::size_t i = 0; i < n; ++i)
                    y[i] += h / 6.0 * (k1[i] + 2 * k2[i] + 2 * k3[i] + k4[i]);
                t = (s + 1 == steps) ? stop : t + h;
                check(y, t);
                f(t, y.data(), k1.data());
                traj.push_back(t, y, k1);
            }
        }
        return traj;
    }

    // rk45_adaptive
    Dopri5 stepper{n, f, cfg.abs_tol, cfg.rel_tol, cfg.max_step, {}};
    std::vector<double> work[8];
    for (auto& w : work) w.resize(n);
    double t = t0;
    double h = std::min(cfg.max_step, (t_end - t0) / 10.0);
    std::size_t rejects_in_a_row = 0;
    for (double stop : breaks) {
        // entering a new segment: refresh derivative (rhs may jump at the break)
        f(t, y.data(), k1.data());
        while (t < stop - 1e-14 * std::max(1.0, std::abs(stop))) {
            h = std::min(h, stop - t);
            const double err = stepper.step(t, y, k1, h, work);
            const double factor =
                std::clamp(0.9 * std::pow(std::max(err, 1e-10), -0.2), 0.2, 5.0);
            if (err > 1.0) {
                h *= std::min(factor, 0.9);
                if (++rejects_in_a_row > 60 || h < 1e-14)
                    throw std::runtime_error("integrate: step rejection cascade at t=" +
                                             std::to_string(t));
                continue;
            }
            rejects_in_a_row = 0;
            t += h;
            check(y, t);
            traj.push_back(t, y, k1);
            traj.set_last_interval_correction(stepper.rcont5);
            h = std::min(h * factor, cfg.max_step);
        }
    }
    return traj;
}

MomentState gaussian_law_at(const MomentTrajectory& traj, double t) { return traj.at(t); }

}  // namespace ratenet
