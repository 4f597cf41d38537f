#pragma once

#include <cstddef>
#include <vector>

#include "ratenet/model.hpp"

namespace ratenet {

enum class OdeMethod { rk4_fixed, rk45_adaptive };

struct OdeConfig {
    OdeMethod method = OdeMethod::rk45_adaptive;
    double dt = 1e-3;         // fixed step for rk4_fixed
    double abs_tol = 1e-9;    // rk45 error control
    double rel_tol = 1e-9;
    double t_end = 0.0;
    double max_step = 0.5;
};

/// Moment samples (t, mu, v) with a continuous extension between accepted
/// steps: cubic Hermite from the stored derivatives, upgraded to the
/// integrator's fourth-order dense output when available.
class MomentTrajectory {
public:
    MomentTrajectory(std::size_t num_populations) : p_(num_populations) {}

    std::size_t num_populations() const { return p_; }
    std::size_t size() const { return times_.size(); }
    bool empty() const { return times_.empty(); }
    double t_begin() const { return times_.front(); }
    double t_end() const { return times_.back(); }
    const std::vector<double>& times() const { return times_; }

    MomentState sample(std::size_t k) const;
    void push_back(double t, const std::vector<double>& state, const std::vector<double>& deriv);

    /// Adds the quartic correction of the dense interpolant on the interval
    /// that push_back just closed.
    void set_last_interval_correction(const std::vector<double>& rcont5);

    /// Law at time t; throws std::out_of_range outside the stored span.
    MomentState at(double t) const;

private:
    std::size_t p_;
    std::vector<double> times_;
    std::vector<double> states_;  // size() * 2p, [mu..., v...]
    std::vector<double> derivs_;
    std::vector<double> rcont5_;  // (size()-1) * 2p quartic coefficients
};

/// Right-hand side of the closed moment equations:
///   mudot_a = -mu_a/tau_a + sum_b J_ab f_b(mu_b, v_b) + I_a(t)
///   vdot_a  = -2 v_a/tau_a + lambda_a(t)^2
/// Throws std::domain_error if any variance component is negative.
MomentState moment_rhs(const MomentState& state, const ModelSpec& spec);

/// Integrate the moment equations from init to cfg.t_end.
MomentTrajectory integrate(const ModelSpec& spec, const MomentState& init, const OdeConfig& cfg);

/// Per-population (mean, variance) of the Gaussian law at time t.
MomentState gaussian_law_at(const MomentTrajectory& traj, double t);

}  // namespace ratenet
