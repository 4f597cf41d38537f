#pragma once

#include <array>
#include <complex>
#include <optional>
#include <string>
#include <vector>

#include "ratenet/meanfield.hpp"
#include "ratenet/model.hpp"

namespace ratenet {

enum class Stability { stable, saddle, unstable };

struct ParamValue {
    std::string name;
    double value = 0.0;
};

/// A fixed point of the stationary mean dynamics (variance pinned at
/// tau lambda^2 / 2), with its Jacobian spectrum and classification.
struct EquilibriumRecord {
    std::vector<double> mu;
    std::vector<double> jacobian;  // P x P row-major
    std::vector<std::complex<double>> eigenvalues;
    Stability stability = Stability::stable;
    bool near_saddle_node = false;
    bool near_hopf = false;
    double residual = 0.0;
};

enum class BifKind {
    saddle_node,
    pitchfork,
    hopf,
    bogdanov_takens,
    cusp,
    homoclinic_estimate,
    hopf_turning_point,
};

std::string to_string(BifKind kind);
std::string to_string(Stability s);

struct BifurcationPoint {
    BifKind kind;
    std::vector<ParamValue> params;
    std::vector<double> state;   // mu at the point
    double aux = 0.0;            // Hopf angular frequency where applicable
    double tolerance = 0.0;      // declared accuracy of the parameter location
};

/// Returns a copy of spec with the named parameter set. Recognized names:
/// "g"/"gain", "gamma"/"threshold", "lambda"/"noise", "tau" (all
/// populations; suffix 1..P addresses one, e.g. "g2"), "I1".."IP"
/// (per-population input), and "j" (scales the connectivity matrix of the
/// base spec).
ModelSpec apply_param(const ModelSpec& spec, const std::string& name, double value);

/// Newton search from each seed (default: 5x5 lattice over [-10,10]^P),
/// duplicates merged at distance 1e-7. Every returned record satisfies
/// ||F(mu*)||_inf < 1e-10.
std::vector<EquilibriumRecord> find_equilibria(
    const ModelSpec& spec, const std::vector<std::vector<double>>& seeds = {});

/// Stationary mean dynamics F and its Jacobian at mu (variance at the
/// stationary value). Exposed for tests and custom solvers.
void stationary_flow(const ModelSpec& spec, const std::vector<double>& mu,
                     std::vector<double>& f_out);
void stationary_jacobian(const ModelSpec& spec, const std::vector<double>& mu,
                         std::vector<double>& jac_out);

/// Slope at which the one-population symmetric system (tau-normalized)
/// loses stability: sqrt(2 pi) / sqrt(J^2 tau^2 - pi tau lambda^2).
/// Empty when J <= 0 or the noise is large enough to stabilize the origin
/// for every slope (lambda >= J sqrt(tau/pi)).
std::optional<double> pitchfork_threshold(double coupling, double lambda, double tau = 1.0);

struct HopfThreshold {
    double g_star = 0.0;
    double frequency = 0.0;  // angular frequency of the critical pair
};

/// Same threshold for the symmetric two-population rotation structure
/// (connectivity J*[[1,-1],[1,1]], I = (0, -J)); also reports the
/// imaginary part of the critical eigenvalue pair.
std::optional<HopfThreshold> hopf_threshold_2pop(double coupling, double lambda);

struct Branch {
    std::string parameter;
    std::vector<double> param;
    std::vector<std::vector<double>> mu;
    std::vector<Stability> stability;
    std::vector<BifurcationPoint> bifurcations;
    bool truncated = false;
};

/// Trace all equilibrium branches over parameter in [lo, hi] with the given
/// output step. Secant predictor + Newton corrector, pseudo-arclength
/// around folds. Sign changes of det(J) and of complex-pair real parts are
/// bisected along the branch; symmetric det crossings on an odd-symmetric
/// branch are classified as pitchforks.
std::vector<Branch> continue_equilibria(const ModelSpec& spec, const std::string& parameter,
                                        double lo, double hi, double step);

struct SearchBox {
    double p1_lo = 0.0, p1_hi = 0.0;
    double p2_lo = 0.0, p2_hi = 0.0;
};

/// Codimension-2 points in the (p1, p2) plane: Bogdanov-Takens (double-zero
/// eigenvalue), cusps (fold with vanishing quadratic coefficient), and the
/// turning point of the Hopf curve. P = 2 systems only.
std::vector<BifurcationPoint> find_codim2(const ModelSpec& spec, const std::string& p1,
                                          const std::string& p2, const SearchBox& box);

/// Period-blow-up estimate of the turning point of the homoclinic curve
/// organized by the Bogdanov-Takens point. Declared accuracy 0.05 in p2.
std::optional<BifurcationPoint> estimate_homoclinic_turning_point(
    const ModelSpec& spec, const std::string& p1, const std::string& p2, const SearchBox& box);

struct CycleResult {
    enum class Kind { none, cycle, unresolved };
    Kind kind = Kind::none;
    std::vector<double> amplitude;  // peak-to-peak per population
    double period = 0.0;
    double period_jitter = 0.0;     // (max-min)/mean over successive periods
    bool homoclinic_suspect = false;

    bool has_cycle() const { return kind == Kind::cycle; }
};

/// Simulate the moment equations, discard t_transient, and detect a limit
/// cycle from the oscillation of the mean. Amplitude floor 1e-4; relative
/// period jitter above 1% yields "unresolved"; a single long excursion with
/// no complete period marks homoclinic_suspect.
CycleResult characterize_cycle(const ModelSpec& spec, const MomentState& init,
                               double t_transient, double t_measure);

enum class AttractorLabel { low_fp, high_fp, oscillation, bistable_fp, fp_plus_cycle, other, unresolved };

std::string to_string(AttractorLabel label);

struct GridAxis {
    std::string name;
    double lo = 0.0, hi = 0.0;
    std::size_t n = 1;
    double value(std::size_t i) const {
        return n <= 1 ? lo : lo + (hi - lo) * double(i) / double(n - 1);
    }
    double resolution() const { return n <= 1 ? 0.0 : (hi - lo) / double(n - 1); }
};

struct SweepResult {
    GridAxis axis1, axis2;
    std::vector<AttractorLabel> labels;  // axis1-major: labels[i1 * axis2.n + i2]
    struct Boundary {
        std::string axis;
        double p1 = 0.0, p2 = 0.0;  // refined boundary location
        AttractorLabel before, after;
    };
    std::vector<Boundary> boundaries;
    std::vector<BifurcationPoint> points;

    AttractorLabel label_at(std::size_t i1, std::size_t i2) const {
        return labels[i1 * axis2.n + i2];
    }
};

/// Label every grid cell by the set of attractors reached from init_set
/// (stable equilibria counted from Newton searches, cycles from
/// characterize_cycle). Boundaries between differing labels are refined by
/// bisection to a quarter of the grid resolution.
SweepResult attractor_census(const ModelSpec& spec, const GridAxis& axis1, const GridAxis& axis2,
                             const std::vector<MomentState>& init_set);

struct PhasePortrait {
    // nullcline segments of each component, as (mu1, mu2) pairs
    std::vector<std::array<double, 4>> nullcline_mu1;  // x0,y0,x1,y1
    std::vector<std::array<double, 4>> nullcline_mu2;
    std::vector<EquilibriumRecord> equilibria;
    std::vector<std::vector<std::array<double, 2>>> unstable_manifolds;
    std::vector<std::vector<std::array<double, 2>>> stable_manifolds;
};

/// Nullclines (marching squares), equilibria, and saddle invariant
/// manifolds of the stationary mean dynamics inside box. P = 2 only.
PhasePortrait phase_portrait(const ModelSpec& spec, const SearchBox& box, std::size_t resolution);

/// Eigenvalues of a dense real matrix (row-major n x n).
std::vector<std::complex<double>> dense_eigenvalues(const std::vector<double>& matrix,
                                                    std::size_t n);

}  // namespace ratenet
