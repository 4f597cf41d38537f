#pragma once

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

namespace ratenet {

/// Piecewise-constant time course for a model parameter. A plain number is
/// a single segment starting at t = -inf; segments are (t_start, value)
/// pairs sorted by t_start, each active on [t_start, next t_start).
class Schedule {
public:
    Schedule() : Schedule(0.0) {}
    Schedule(double constant_value);  // NOLINT: implicit by design
    explicit Schedule(std::vector<std::pair<double, double>> segments);

    double operator()(double t) const;
    bool is_constant() const { return segments_.size() == 1; }
    double final_value() const { return segments_.back().second; }
    const std::vector<std::pair<double, double>>& segments() const { return segments_; }

private:
    std::vector<std::pair<double, double>> segments_;
};

/// Parameters of one neural population: linear relaxation with time
/// constant tau, sigmoid slope/offset (gain, threshold), additive noise
/// amplitude, external input current, and the asymptotic fraction of the
/// network this population occupies.
struct PopulationParams {
    double tau = 1.0;
    double gain = 1.0;
    double threshold = 0.0;
    Schedule noise = 0.0;
    Schedule input = 0.0;
    double fraction = 1.0;
};

/// A P-population rate network. connectivity is the P x P matrix of
/// population-level synaptic weights, row-major; entry (a,b) scales the
/// mean firing rate of population b as input current to population a.
struct ModelSpec {
    std::vector<PopulationParams> populations;
    std::vector<double> connectivity;
    std::string label;

    std::size_t num_populations() const { return populations.size(); }
    double weight(std::size_t a, std::size_t b) const {
        return connectivity[a * populations.size() + b];
    }
    double& weight(std::size_t a, std::size_t b) {
        return connectivity[a * populations.size() + b];
    }

    /// Throws std::invalid_argument if any invariant is violated:
    /// tau > 0, gain > 0, noise >= 0, fractions in (0,1] summing to 1
    /// within 1e-12, connectivity finite and square of dimension P.
    void validate() const;

    std::string to_json_string(int indent = 2) const;
    static ModelSpec from_json_string(const std::string& text);
    static ModelSpec load(const std::string& path);
    void save(const std::string& path) const;
};

/// Mean and variance of the Gaussian one-time marginal, per population.
struct MomentState {
    double time = 0.0;
    std::vector<double> mean;
    std::vector<double> variance;
};

/// Standard-normal density and distribution function. normal_cdf is
/// accurate to better than 1e-14 absolute (erfc-based).
double normal_pdf(double x);
double normal_cdf(double x);

/// Firing-rate sigmoid: the standard-normal CDF evaluated at g*x + gamma.
/// Monotone increasing, 0 at -inf, 1 at +inf. Throws std::domain_error on
/// non-finite x.
double sigmoid(double x, double gain, double threshold);

/// E[sigmoid(U)] for U ~ Gaussian(mu, v): the Gaussian smoothing of the
/// sigmoid collapses to the same CDF at (g*mu + gamma)/sqrt(1 + g^2 v).
/// Throws std::domain_error if v < 0.
double closure_f(double mu, double v, double gain, double threshold);

/// d closure_f / d mu = g/sqrt(1+g^2 v) * phi((g mu + gamma)/sqrt(1+g^2 v)).
double closure_f_dmu(double mu, double v, double gain, double threshold);

/// Second mu-derivative, used for fold normal-form coefficients.
double closure_f_dmu2(double mu, double v, double gain, double threshold);

/// Fixed point of the variance equation, tau_a * lambda_a^2 / 2 per
/// population (final schedule value when noise is time-varying).
std::vector<double> stationary_variance(const ModelSpec& spec);

/// Closed-form solution of vdot = -2 v / tau + lambda^2 at time t >= 0.
double variance_trajectory(double v0, double tau, double lambda, double t);

/// Two-time covariance C_ab(t1, t2) of the mean-field Gaussian solution
/// given the initial covariance matrix v0_cov (P x P row-major). For a == b
/// this is exp(-(t1+t2)/tau) * [v0 + int_0^{t1^t2} exp(2s/tau) lambda(s)^2 ds];
/// for a != b only the initial covariance propagates, since the driving
/// noises are independent. Throws std::domain_error on negative times.
double covariance(const ModelSpec& spec, std::size_t a, std::size_t b,
                  double t1, double t2, const std::vector<double>& v0_cov);

}  // namespace ratenet
