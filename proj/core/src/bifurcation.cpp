#include "ratenet/bifurcation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <numeric>
#include <stdexcept>

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

namespace ratenet {

namespace {

constexpr double kNewtonTol = 1e-12;
constexpr int kNewtonMaxIter = 100;
constexpr double kResidualGate = 1e-10;
constexpr double kMergeDistance = 1e-7;
constexpr double kCycleAmplitudeFloor = 1e-4;
constexpr double kCycleJitterBound = 0.01;

using Eigen::MatrixXd;
using Eigen::VectorXd;

std::vector<double> stationary_variance_of(const ModelSpec& spec) {
    return stationary_variance(spec);
}

}  // namespace

std::string to_string(BifKind kind) {
    switch (kind) {
        case BifKind::saddle_node: return "saddle_node";
        case BifKind::pitchfork: return "pitchfork";
        case BifKind::hopf: return "hopf";
        case BifKind::bogdanov_takens: return "bogdanov_takens";
        case BifKind::cusp: return "cusp";
        case BifKind::homoclinic_estimate: return "homoclinic_estimate";
        case BifKind::hopf_turning_point: return "hopf_turning_point";
    }
    return "unknown";
}

std::string to_string(Stability s) {
    switch (s) {
        case Stability::stable: return "stable";
        case Stability::saddle: return "saddle";
        case Stability::unstable: return "unstable";
    }
    return "unknown";
}

std::string to_string(AttractorLabel label) {
    switch (label) {
        case AttractorLabel::low_fp: return "low_fp";
        case AttractorLabel::high_fp: return "high_fp";
        case AttractorLabel::oscillation: return "oscillation";
        case AttractorLabel::bistable_fp: return "bistable_fp";
        case AttractorLabel::fp_plus_cycle: return "fp_plus_cycle";
        case AttractorLabel::other: return "other";
        case AttractorLabel::unresolved: return "unresolved";
    }
    return "unknown";
}

ModelSpec apply_param(const ModelSpec& spec, const std::string& name, double value) {
    ModelSpec out = spec;
    const std::size_t p = out.num_populations();
    auto set_all = [&](auto setter) {
        for (auto& pop : out.populations)
            setter(pop);
    };
    auto pop_index = [&](const std::string& suffix) -> std::size_t {
        const std::size_t k = std::stoul(suffix);
        if (k < 1 || k > p)
            throw std::invalid_argument("apply_param: population index out of range in " + name);
        return k - 1;
    };
    if (name == "g" || name == "gain") {
        set_all([&](PopulationParams& q) { q.gain = value; });
    } else if (name == "gamma" || name == "threshold") {
        set_all([&](PopulationParams& q) { q.threshold = value; });
    } else if (name == "lambda" || name == "noise") {
        set_all([&](PopulationParams& q) { q.noise = value; });
    } else if (name == "tau") {
        set_all([&](PopulationParams& q) { q.tau = value; });
    } else if (name == "j") {
        for (auto& w : out.connectivity)
            w *= value;
    } else if (name.size() > 1 && name[0] == 'I') {
        out.populations[pop_index(name.substr(1))].input = value;
    } else if (name.size() > 1 && name[0] == 'g') {
        out.populations[pop_index(name.substr(1))].gain = value;
    } else if (name.size() > 6 && name.rfind("lambda", 0) == 0) {
        out.populations[pop_index(name.substr(6))].noise = value;
    } else if (name.size() > 3 && name.rfind("tau", 0) == 0) {
        out.populations[pop_index(name.substr(3))].tau = value;
    } else if (name.size() > 5 && name.rfind("gamma", 0) == 0) {
        out.populations[pop_index(name.substr(5))].threshold = value;
    } else {
        throw std::invalid_argument("apply_param: unknown parameter '" + name + "'");
    }
    return out;
}

void stationary_flow(const ModelSpec& spec, const std::vector<double>& mu,
                     std::vector<double>& f_out) {
    const std::size_t p = spec.num_populations();
    const auto v = stationary_variance_of(spec);
    f_out.resize(p);
    for (std::size_t a = 0; a < p; ++a) {
        double drive = spec.populations[a].input.final_value();
        for (std::size_t b = 0; b < p; ++b)
            drive += spec.weight(a, b) * closure_f(mu[b], v[b], spec.populations[b].gain,
                                                   spec.populations[b].threshold);
        f_out[a] = -mu[a] / spec.populations[a].tau + drive;
    }
}

void stationary_jacobian(const ModelSpec& spec, const std::vector<double>& mu,
                         std::vector<double>& jac_out) {
    const std::size_t p = spec.num_populations();
    const auto v = stationary_variance_of(spec);
    jac_out.assign(p * p, 0.0);
    for (std::size_t a = 0; a < p; ++a) {
        jac_out[a * p + a] -= 1.0 / spec.populations[a].tau;
        for (std::size_t b = 0; b < p; ++b)
            jac_out[a * p + b] += spec.weight(a, b) * closure_f_dmu(mu[b], v[b],
                                                                    spec.populations[b].gain,
                                                                    spec.populations[b].threshold);
    }
}

namespace {

double inf_norm(const std::vector<double>& x) {
    double m = 0.0;
    for (double v : x)
        m = std::max(m, std::abs(v));
    return m;
}

bool newton_equilibrium(const ModelSpec& spec, std::vector<double>& mu, double* residual_out) {
    const std::size_t p = spec.num_populations();
    std::vector<double> f, jac;
    for (int it = 0; it < kNewtonMaxIter; ++it) {
        stationary_flow(spec, mu, f);
        const double res = inf_norm(f);
        if (!std::isfinite(res) || inf_norm(mu) > 1e8)
            return false;
        if (res < kNewtonTol) {
            if (residual_out)
                *residual_out = res;
            return true;
        }
        stationary_jacobian(spec, mu, jac);
        MatrixXd J = Eigen::Map<MatrixXd>(jac.data(), p, p).transpose();
        VectorXd rhs = -Eigen::Map<VectorXd>(f.data(), p);
        Eigen::PartialPivLU<MatrixXd> lu(J);
        VectorXd d = lu.solve(rhs);
        if (!d.allFinite())
            return false;
        // damp very large steps
        const double dn = d.lpNorm<Eigen::Infinity>();
        if (dn > 10.0)
            d *= 10.0 / dn;
        for (std::size_t i = 0; i < p; ++i)
            mu[i] += d[i];
    }
    stationary_flow(spec, mu, f);
    const double res = inf_norm(f);
    if (res < kResidualGate) {
        if (residual_out)
            *residual_out = res;
        return true;
    }
    return false;
}

EquilibriumRecord make_record(const ModelSpec& spec, std::vector<double> mu, double residual) {
    const std::size_t p = spec.num_populations();
    EquilibriumRecord rec;
    rec.mu = std::move(mu);
    rec.residual = residual;
    stationary_jacobian(spec, rec.mu, rec.jacobian);
    rec.eigenvalues = dense_eigenvalues(rec.jacobian, p);
    int positive = 0, negative = 0;
    for (const auto& ev : rec.eigenvalues) {
        if (ev.real() > 0)
            positive++;
        else
            negative++;
        if (std::abs(ev.imag()) > 1e-12 && std::abs(ev.real()) < 1e-4)
            rec.near_hopf = true;
        if (std::abs(ev.imag()) <= 1e-12 && std::abs(ev.real()) < 1e-4)
            rec.near_saddle_node = true;
    }
    rec.stability = positive == 0 ? Stability::stable
                   : negative == 0 ? Stability::unstable
                                   : Stability::saddle;
    return rec;
}

std::vector<std::vector<double>> default_seed_lattice(std::size_t p) {
    std::vector<std::vector<double>> seeds;
    if (p > 4)
        throw std::invalid_argument("find_equilibria: default lattice supports P <= 4");
    const std::array<double, 5> grid = {-10.0, -5.0, 0.0, 5.0, 10.0};
    std::vector<std::size_t> idx(p, 0);
    while (true) {
        std::vector<double> s(p);
        for (std::size_t i = 0; i < p; ++i)
            s[i] = grid[idx[i]];
        seeds.push_back(std::move(s));
        std::size_t k = 0;
        while (k < p && ++idx[k] == grid.size()) {
            idx[k] = 0;
            ++k;
        }
        if (k == p)
            break;
    }
    return seeds;
}

}  // namespace

std::vector<EquilibriumRecord> find_equilibria(const ModelSpec& spec,
                                               const std::vector<std::vector<double>>& seeds) {
    spec.validate();
    const std::size_t p = spec.num_populations();
    std::vector<std::vector<double>> all_seeds = default_seed_lattice(p);
    for (const auto& s : seeds) {
        if (s.size() != p)
            throw std::invalid_argument("find_equilibria: seed dimension mismatch");
        all_seeds.push_back(s);
    }
    std::vector<EquilibriumRecord> found;
    for (const auto& seed : all_seeds) {
        std::vector<double> mu = seed;
        double residual = 0.0;
        if (!newton_equilibrium(spec, mu, &residual))
            continue;  // non-convergent seed skipped
        bool duplicate = false;
        for (const auto& rec : found) {
            double d = 0.0;
            for (std::size_t i = 0; i < p; ++i)
                d = std::max(d, std::abs(rec.mu[i] - mu[i]));
            if (d < kMergeDistance) {
                duplicate = true;
                break;
            }
        }
        if (!duplicate)
            found.push_back(make_record(spec, std::move(mu), residual));
    }
    std::sort(found.begin(), found.end(),
              [](const EquilibriumRecord& a, const EquilibriumRecord& b) {
                  return a.mu < b.mu;
              });
    return found;
}

std::optional<double> pitchfork_threshold(double coupling, double lambda, double tau) {
    if (!(tau > 0.0))
        throw std::invalid_argument("pitchfork_threshold: tau must be > 0");
    if (coupling <= 0.0)
        return std::nullopt;  // origin stable for every slope
    const double disc = coupling * coupling * tau * tau - std::numbers::pi * tau * lambda * lambda;
    if (disc <= 0.0)
        return std::nullopt;  // large-noise stabilization
    return std::sqrt(2.0 * std::numbers::pi) / std::sqrt(disc);
}

std::optional<HopfThreshold> hopf_threshold_2pop(double coupling, double lambda) {
    const auto g = pitchfork_threshold(coupling, lambda, 1.0);
    if (!g)
        return std::nullopt;
    HopfThreshold out;
    out.g_star = *g;
    const double v = lambda * lambda / 2.0;
    out.frequency = out.g_star * coupling /
                    std::sqrt(2.0 * std::numbers::pi * (1.0 + out.g_star * out.g_star * v));
    return out;
}

std::vector<std::complex<double>> dense_eigenvalues(const std::vector<double>& matrix,
                                                    std::size_t n) {
    if (matrix.size() != n * n)
        throw std::invalid_argument("dense_eigenvalues: shape mismatch");
    MatrixXd m(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            m(i, j) = matrix[i * n + j];
    Eigen::EigenSolver<MatrixXd> solver(m, /*computeEigenvectors=*/false);
    std::vector<std::complex<double>> ev(n);
    for (std::size_t i = 0; i < n; ++i)
        ev[i] = solver.eigenvalues()[i];
    std::sort(ev.begin(), ev.end(), [](const auto& a, const auto& b) {
        return a.real() != b.real() ? a.real() < b.real() : a.imag() < b.imag();
    });
    return ev;
}

// --- continuation ------------------------------------------------------------

namespace {

struct PathPoint {
    std::vector<double> mu;
    double p = 0.0;
    double det = 0.0;
    double hopf_re = 0.0;   // max real part over complex pairs
    bool has_pair = false;
    Stability stability = Stability::stable;
};

struct FlowAt {
    const ModelSpec& base;
    const std::string& name;

    ModelSpec at(double p) const { return apply_param(base, name, p); }

    void eval(double p, const std::vector<double>& mu, std::vector<double>& f) const {
        const ModelSpec spec = at(p);
        stationary_flow(spec, mu, f);
    }
};

PathPoint analyze_point(const FlowAt& flow, const std::vector<double>& mu, double p) {
    PathPoint pt;
    pt.mu = mu;
    pt.p = p;
    const ModelSpec spec = flow.at(p);
    std::vector<double> jac;
    stationary_jacobian(spec, mu, jac);
    const std::size_t n = mu.size();
    MatrixXd J(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            J(i, j) = jac[i * n + j];
    pt.det = J.determinant();
    const auto ev = dense_eigenvalues(jac, n);
    int pos = 0, neg = 0;
    pt.hopf_re = -std::numeric_limits<double>::infinity();
    for (const auto& e : ev) {
        (e.real() > 0 ? pos : neg)++;
        if (std::abs(e.imag()) > 1e-10) {
            pt.has_pair = true;
            pt.hopf_re = std::max(pt.hopf_re, e.real());
        }
    }
    pt.stability = pos == 0 ? Stability::stable : neg == 0 ? Stability::unstable : Stability::saddle;
    return pt;
}

// corrector: Newton on [F(mu, p); n_vec . (z - z_ref)] for z = (mu, p)
bool arclength_correct(const FlowAt& flow, std::vector<double>& mu, double& p,
                       const VectorXd& normal, const VectorXd& z_ref) {
    const std::size_t n = mu.size();
    std::vector<double> f, jac;
    for (int it = 0; it < 60; ++it) {
        flow.eval(p, mu, f);
        double plane = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            plane += normal[i] * (mu[i] - z_ref[i]);
        plane += normal[n] * (p - z_ref[n]);
        double res = inf_norm(f) + std::abs(plane);
        if (!std::isfinite(res))
            return false;
        if (res < 1e-11)
            return true;
        const ModelSpec spec = flow.at(p);
        stationary_jacobian(spec, mu, jac);
        MatrixXd A(n + 1, n + 1);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j)
                A(i, j) = jac[i * n + j];
        // dF/dp by central difference
        std::vector<double> fp, fm;
        const double h = std::max(1e-7, 1e-7 * std::abs(p));
        flow.eval(p + h, mu, fp);
        flow.eval(p - h, mu, fm);
        for (std::size_t i = 0; i < n; ++i)
            A(i, n) = (fp[i] - fm[i]) / (2.0 * h);
        for (std::size_t j = 0; j <= n; ++j)
            A(n, j) = normal[j];
        VectorXd rhs(n + 1);
        for (std::size_t i = 0; i < n; ++i)
            rhs[i] = -f[i];
        rhs[n] = -plane;
        VectorXd d = A.partialPivLu().solve(rhs);
        if (!d.allFinite())
            return false;
        for (std::size_t i = 0; i < n; ++i)
            mu[i] += d[i];
        p += d[n];
    }
    return false;
}

bool is_odd_symmetric(const ModelSpec& spec) {
    const std::size_t p = spec.num_populations();
    std::vector<double> mu(p), f1, f2;
    // fixed probe points; no randomness needed for a yes/no structural test
    for (int probe = 0; probe < 3; ++probe) {
        for (std::size_t i = 0; i < p; ++i)
            mu[i] = 0.31 * double(probe + 1) + 0.17 * double(i + 1);
        stationary_flow(spec, mu, f1);
        for (auto& x : mu)
            x = -x;
        stationary_flow(spec, mu, f2);
        for (std::size_t i = 0; i < p; ++i)
            if (std::abs(f1[i] + f2[i]) > 1e-9 * (1.0 + std::abs(f1[i])))
                return false;
        for (auto& x : mu)
            x = -x;
    }
    return true;
}

// locate a test-function crossing between two consecutive path points by
// bisection along the connecting segment, correcting back onto the branch
PathPoint bisect_crossing(const FlowAt& flow, const PathPoint& a, const PathPoint& b,
                          auto&& test) {
    const std::size_t n = a.mu.size();
    PathPoint lo = a, hi = b;
    double t_lo = test(a);
    VectorXd dir(n + 1);
    for (std::size_t i = 0; i < n; ++i)
        dir[i] = b.mu[i] - a.mu[i];
    dir[n] = b.p - a.p;
    const double len = dir.norm();
    if (len > 0)
        dir /= len;
    for (int it = 0; it < 60; ++it) {
        std::vector<double> mu(n);
        for (std::size_t i = 0; i < n; ++i)
            mu[i] = 0.5 * (lo.mu[i] + hi.mu[i]);
        double p = 0.5 * (lo.p + hi.p);
        VectorXd z_ref(n + 1);
        for (std::size_t i = 0; i < n; ++i)
            z_ref[i] = mu[i];
        z_ref[n] = p;
        if (!arclength_correct(flow, mu, p, dir, z_ref))
            break;
        PathPoint mid = analyze_point(flow, mu, p);
        const double t_mid = test(mid);
        if ((t_mid < 0) == (t_lo < 0)) {
            lo = mid;
            t_lo = t_mid;
        } else {
            hi = mid;
        }
        double gap = std::abs(hi.p - lo.p);
        for (std::size_t i = 0; i < n; ++i)
            gap += std::abs(hi.mu[i] - lo.mu[i]);
        if (gap < 1e-10)
            break;
    }
    return lo;
}

}  // namespace

std::vector<Branch> continue_equilibria(const ModelSpec& spec, const std::string& parameter,
                                        double lo, double hi, double step) {
    spec.validate();
    if (!(hi > lo) || !(step > 0.0))
        throw std::invalid_argument("continue_equilibria: need hi > lo and step > 0");
    const std::size_t n = spec.num_populations();
    FlowAt flow{spec, parameter};

    std::vector<Branch> branches;
    const std::uint64_t budget = std::uint64_t(12.0 * (hi - lo) / step) + 4000;

    auto already_traced = [&](const std::vector<double>& mu, double p) {
        for (const auto& br : branches)
            for (std::size_t k = 0; k < br.param.size(); ++k) {
                if (std::abs(br.param[k] - p) > step)
                    continue;
                double d = std::abs(br.param[k] - p);
                for (std::size_t i = 0; i < n; ++i)
                    d = std::max(d, std::abs(br.mu[k][i] - mu[i]));
                if (d < 1e-4)
                    return true;
            }
        return false;
    };

    struct Start {
        std::vector<double> mu;
        double p;
        double direction;
    };
    std::vector<Start> starts;
    for (const auto& rec : find_equilibria(flow.at(lo)))
        starts.push_back({rec.mu, lo, +1.0});
    for (const auto& rec : find_equilibria(flow.at(hi)))
        starts.push_back({rec.mu, hi, -1.0});

    for (const auto& start : starts) {
        if (already_traced(start.mu, start.p))
            continue;
        Branch br;
        br.parameter = parameter;

        PathPoint prev = analyze_point(flow, start.mu, start.p);
        auto push_point = [&](const PathPoint& pt) {
            br.param.push_back(pt.p);
            br.mu.push_back(pt.mu);
            br.stability.push_back(pt.stability);
        };
        push_point(prev);

        // initial tangent: follow the parameter
        VectorXd tangent = VectorXd::Zero(n + 1);
        tangent[n] = start.direction;
        {
            std::vector<double> jac;
            stationary_jacobian(flow.at(start.p), start.mu, jac);
            MatrixXd J(n, n);
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < n; ++j)
                    J(i, j) = jac[i * n + j];
            std::vector<double> fp, fm;
            const double h = std::max(1e-7, 1e-7 * std::abs(start.p));
            flow.eval(start.p + h, start.mu, fp);
            flow.eval(start.p - h, start.mu, fm);
            VectorXd dfdp(n);
            for (std::size_t i = 0; i < n; ++i)
                dfdp[i] = (fp[i] - fm[i]) / (2.0 * h);
            const VectorXd dmu = J.partialPivLu().solve(-dfdp);
            if (dmu.allFinite()) {
                for (std::size_t i = 0; i < n; ++i)
                    tangent[i] = dmu[i] * start.direction;
                tangent /= tangent.norm();
            }
        }

        double ds = step;
        const double ds_min = step * 1e-4;
        const double ds_max = step;
        std::uint64_t used = 0;
        bool out_of_budget = false;

        while (true) {
            if (++used > budget) {
                out_of_budget = true;
                break;
            }
            // predictor along the tangent, corrector in its normal plane
            std::vector<double> mu(n);
            VectorXd z_ref(n + 1);
            for (std::size_t i = 0; i < n; ++i) {
                mu[i] = prev.mu[i] + tangent[i] * ds;
                z_ref[i] = mu[i];
            }
            double p = prev.p + tangent[n] * ds;
            z_ref[n] = p;
            if (!arclength_correct(flow, mu, p, tangent, z_ref)) {
                ds *= 0.5;
                if (ds < ds_min) {
                    out_of_budget = true;
                    break;
                }
                continue;
            }
            PathPoint cur = analyze_point(flow, mu, p);

            // bifurcation test functions between prev and cur
            if (prev.det * cur.det < 0.0) {
                PathPoint at = bisect_crossing(flow, prev, cur,
                                               [](const PathPoint& q) { return q.det; });
                BifurcationPoint bp;
                // the symmetric construction forces pitchforks onto the
                // invariant branch mu = 0; anything else is a fold
                const bool symmetric = is_odd_symmetric(flow.at(at.p)) && inf_norm(at.mu) < 1e-5;
                bp.kind = symmetric ? BifKind::pitchfork : BifKind::saddle_node;
                bp.params = {{parameter, at.p}};
                bp.state = at.mu;
                bp.tolerance = 1e-6;
                br.bifurcations.push_back(std::move(bp));
            }
            if (prev.has_pair && cur.has_pair && prev.hopf_re * cur.hopf_re < 0.0) {
                PathPoint at = bisect_crossing(flow, prev, cur,
                                               [](const PathPoint& q) { return q.hopf_re; });
                BifurcationPoint bp;
                bp.kind = BifKind::hopf;
                bp.params = {{parameter, at.p}};
                bp.state = at.mu;
                // angular frequency of the critical pair
                const ModelSpec s_at = flow.at(at.p);
                std::vector<double> jac;
                stationary_jacobian(s_at, at.mu, jac);
                double freq = 0.0;
                for (const auto& e : dense_eigenvalues(jac, n))
                    if (std::abs(e.imag()) > 1e-10)
                        freq = std::max(freq, std::abs(e.imag()));
                bp.aux = freq;
                bp.tolerance = 1e-6;
                br.bifurcations.push_back(std::move(bp));
            }

            push_point(cur);

            VectorXd new_tangent(n + 1);
            for (std::size_t i = 0; i < n; ++i)
                new_tangent[i] = cur.mu[i] - prev.mu[i];
            new_tangent[n] = cur.p - prev.p;
            if (new_tangent.norm() > 0)
                tangent = new_tangent / new_tangent.norm();
            prev = cur;
            ds = std::min(ds * 1.4, ds_max);

            if (cur.p > hi + 1e-9 || cur.p < lo - 1e-9)
                break;
            if (inf_norm(cur.mu) > 1e4) {
                out_of_budget = true;
                break;
            }
        }
        br.truncated = out_of_budget;
        if (br.param.size() >= 2)
            branches.push_back(std::move(br));
    }
    return branches;
}

// --- codimension 2 -----------------------------------------------------------

namespace {

struct TwoParamFlow {
    const ModelSpec& base;
    std::string p1, p2;

    ModelSpec at(double q1, double q2) const {
        return apply_param(apply_param(base, p1, q1), p2, q2);
    }
};

// fold normal-form quadratic coefficient w . F_xx(v, v) at (mu, q1, q2)
double fold_coefficient(const ModelSpec& spec, const std::vector<double>& mu) {
    const std::size_t n = mu.size();
    std::vector<double> jac;
    stationary_jacobian(spec, mu, jac);
    MatrixXd J(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            J(i, j) = jac[i * n + j];
    // null vectors with a canonical orientation: eigenvector signs from the
    // solver are arbitrary, and a sign flip between neighboring evaluations
    // would corrupt finite differences of the coefficient
    auto oriented_null = [](const MatrixXd& m) {
        Eigen::EigenSolver<MatrixXd> es(m);
        Eigen::Index k = 0;
        es.eigenvalues().cwiseAbs().minCoeff(&k);
        VectorXd u = es.eigenvectors().col(k).real();
        u.normalize();
        Eigen::Index kmax = 0;
        u.cwiseAbs().maxCoeff(&kmax);
        if (u[kmax] < 0)
            u = -u;
        return u;
    };
    const VectorXd v = oriented_null(J);
    const VectorXd w = oriented_null(J.transpose());
    // F_i depends on mu_b only through closure(mu_b):
    // (F_xx(v,v))_i = sum_b J_ib f''(mu_b) v_b^2
    const auto vstar = stationary_variance_of(spec);
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double row = 0.0;
        for (std::size_t b = 0; b < n; ++b)
            row += spec.weight(i, b) * closure_f_dmu2(mu[b], vstar[b],
                                                      spec.populations[b].gain,
                                                      spec.populations[b].threshold) *
                   v[b] * v[b];
        acc += w[i] * row;
    }
    return acc;
}

double det_of(const ModelSpec& spec, const std::vector<double>& mu) {
    std::vector<double> jac;
    stationary_jacobian(spec, mu, jac);
    const std::size_t n = mu.size();
    MatrixXd J(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            J(i, j) = jac[i * n + j];
    return J.determinant();
}

double tr_of(const ModelSpec& spec, const std::vector<double>& mu) {
    std::vector<double> jac;
    stationary_jacobian(spec, mu, jac);
    const std::size_t n = mu.size();
    double tr = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        tr += jac[i * n + i];
    return tr;
}

// generic damped Newton with forward-difference Jacobian on a small system
template <class Fn>
bool fd_newton(Fn&& G, std::vector<double>& x, int max_iter = 80, double tol = 1e-11) {
    const std::size_t m = x.size();
    std::vector<double> g0, g1;
    for (int it = 0; it < max_iter; ++it) {
        G(x, g0);
        double res = inf_norm(g0);
        if (!std::isfinite(res))
            return false;
        if (res < tol)
            return true;
        MatrixXd A(m, m);
        for (std::size_t j = 0; j < m; ++j) {
            const double h = 1e-6 * std::max(1.0, std::abs(x[j]));
            std::vector<double> xp = x;
            xp[j] += h;
            G(xp, g1);
            for (std::size_t i = 0; i < m; ++i)
                A(i, j) = (g1[i] - g0[i]) / h;
        }
        VectorXd rhs(m);
        for (std::size_t i = 0; i < m; ++i)
            rhs[i] = -g0[i];
        VectorXd d = A.fullPivLu().solve(rhs);
        if (!d.allFinite())
            return false;
        const double dn = d.lpNorm<Eigen::Infinity>();
        if (dn > 2.0)
            d *= 2.0 / dn;
        for (std::size_t i = 0; i < m; ++i)
            x[i] += d[i];
    }
    G(x, g0);
    return inf_norm(g0) < 1e-9;
}

}  // namespace

std::vector<BifurcationPoint> find_codim2(const ModelSpec& spec, const std::string& p1,
                                          const std::string& p2, const SearchBox& box) {
    spec.validate();
    if (spec.num_populations() != 2)
        throw std::invalid_argument("find_codim2: implemented for P = 2 systems");
    TwoParamFlow flow{spec, p1, p2};

    // coarse scan: all equilibria over a parameter grid, ranked by closeness
    // to each codim-2 condition
    struct Candidate {
        std::vector<double> mu;
        double q1, q2;
        double det, tr, a;
    };
    std::vector<Candidate> scan;
    const std::size_t grid1 = 20, grid2 = 20;
    for (std::size_t i = 0; i < grid1; ++i) {
        const double q1 = box.p1_lo + (box.p1_hi - box.p1_lo) * double(i) / double(grid1 - 1);
        for (std::size_t j = 0; j < grid2; ++j) {
            const double q2 = box.p2_lo + (box.p2_hi - box.p2_lo) * double(j) / double(grid2 - 1);
            const ModelSpec s = flow.at(q1, q2);
            for (const auto& rec : find_equilibria(s)) {
                Candidate c;
                c.mu = rec.mu;
                c.q1 = q1;
                c.q2 = q2;
                c.det = det_of(s, rec.mu);
                c.tr = tr_of(s, rec.mu);
                c.a = fold_coefficient(s, rec.mu);
                scan.push_back(std::move(c));
            }
        }
    }

    std::vector<BifurcationPoint> out;
    auto in_box = [&](double q1, double q2) {
        const double m1 = 1e-6 * (1.0 + std::abs(box.p1_hi - box.p1_lo));
        const double m2 = 1e-6 * (1.0 + std::abs(box.p2_hi - box.p2_lo));
        return q1 >= box.p1_lo - m1 && q1 <= box.p1_hi + m1 && q2 >= box.p2_lo - m2 &&
               q2 <= box.p2_hi + m2;
    };
    auto push_unique = [&](BifurcationPoint bp) {
        for (const auto& q : out)
            if (q.kind == bp.kind && std::abs(q.params[0].value - bp.params[0].value) < 1e-3 &&
                std::abs(q.params[1].value - bp.params[1].value) < 1e-3)
                return;
        out.push_back(std::move(bp));
    };

    // Bogdanov-Takens: F = 0, det = 0, tr = 0
    {
        auto ranked = scan;
        std::sort(ranked.begin(), ranked.end(), [](const Candidate& a, const Candidate& b) {
            return std::abs(a.det) + std::abs(a.tr) < std::abs(b.det) + std::abs(b.tr);
        });
        ranked.resize(std::min<std::size_t>(ranked.size(), 24));
        for (const auto& c : ranked) {
            std::vector<double> x = {c.mu[0], c.mu[1], c.q1, c.q2};
            auto G = [&](const std::vector<double>& z, std::vector<double>& g) {
                const ModelSpec s = flow.at(z[2], z[3]);
                std::vector<double> mu = {z[0], z[1]}, f;
                stationary_flow(s, mu, f);
                g = {f[0], f[1], det_of(s, mu), tr_of(s, mu)};
            };
            if (!fd_newton(G, x))
                continue;
            if (!in_box(x[2], x[3]))
                continue;
            BifurcationPoint bp;
            bp.kind = BifKind::bogdanov_takens;
            bp.params = {{p1, x[2]}, {p2, x[3]}};
            bp.state = {x[0], x[1]};
            bp.tolerance = 1e-6;
            push_unique(std::move(bp));
        }
    }

    // Cusps: trace the fold curve {F = 0, det = 0} through the box by
    // pseudo-arclength continuation and bisect sign changes of the quadratic
    // normal-form coefficient along it. Cusps live in narrow wedges that
    // plain multistart Newton rarely hits.
    {
        auto fold_G = [&](const std::vector<double>& z, std::vector<double>& g) {
            const ModelSpec s = flow.at(z[2], z[3]);
            std::vector<double> mu = {z[0], z[1]}, f;
            stationary_flow(s, mu, f);
            g = {f[0], f[1], det_of(s, mu)};
        };
        auto coeff_at = [&](const std::vector<double>& z) {
            const ModelSpec s = flow.at(z[2], z[3]);
            return fold_coefficient(s, {z[0], z[1]});
        };
        // underdetermined corrector: Newton on [G; n . (z - z_ref)]
        auto correct = [&](std::vector<double>& z, const Eigen::Vector4d& normal,
                           const Eigen::Vector4d& z_ref) {
            std::vector<double> g0, g1;
            for (int it = 0; it < 50; ++it) {
                fold_G(z, g0);
                double plane = 0.0;
                for (int i = 0; i < 4; ++i)
                    plane += normal[i] * (z[i] - z_ref[i]);
                const double res = inf_norm(g0) + std::abs(plane);
                if (!std::isfinite(res))
                    return false;
                if (res < 1e-10)
                    return true;
                Eigen::Matrix4d A;
                for (int j = 0; j < 4; ++j) {
                    const double h = 1e-6 * std::max(1.0, std::abs(z[j]));
                    auto zp = z;
                    zp[j] += h;
                    fold_G(zp, g1);
                    for (int i = 0; i < 3; ++i)
                        A(i, j) = (g1[i] - g0[i]) / h;
                    A(3, j) = normal[j];
                }
                Eigen::Vector4d rhs(-g0[0], -g0[1], -g0[2], -plane);
                Eigen::Vector4d dz = A.fullPivLu().solve(rhs);
                if (!dz.allFinite())
                    return false;
                for (int i = 0; i < 4; ++i)
                    z[i] += dz[i];
            }
            fold_G(z, g0);
            return inf_norm(g0) < 1e-9;
        };
        auto tangent_at = [&](const std::vector<double>& z) {
            std::vector<double> g0, g1;
            fold_G(z, g0);
            Eigen::Matrix<double, 3, 4> Jg;
            for (int j = 0; j < 4; ++j) {
                const double h = 1e-6 * std::max(1.0, std::abs(z[j]));
                auto zp = z;
                zp[j] += h;
                fold_G(zp, g1);
                for (int i = 0; i < 3; ++i)
                    Jg(i, j) = (g1[i] - g0[i]) / h;
            }
            Eigen::JacobiSVD<Eigen::Matrix<double, 3, 4>> svd(Jg, Eigen::ComputeFullV);
            Eigen::Vector4d t = svd.matrixV().col(3);
            return t;
        };

        // seed fold points everywhere: keep the smallest-|det| candidate per
        // scan cell and polish each onto the fold at its q2 (solve F = 0,
        // det = 0 in (mu, q1)); disconnected fold branches each get a seed
        std::vector<const Candidate*> bucket(grid1 * grid2, nullptr);
        for (const auto& c : scan) {
            const auto i = std::size_t((c.q1 - box.p1_lo) / (box.p1_hi - box.p1_lo) *
                                       double(grid1 - 1) + 0.5);
            const auto j = std::size_t((c.q2 - box.p2_lo) / (box.p2_hi - box.p2_lo) *
                                       double(grid2 - 1) + 0.5);
            auto& slot = bucket[i * grid2 + j];
            if (!slot || std::abs(c.det) < std::abs(slot->det))
                slot = &c;
        }
        std::vector<std::vector<double>> fold_seeds;
        for (const auto* c : bucket) {
            if (!c)
                continue;
            std::vector<double> x = {c->mu[0], c->mu[1], c->q1};
            const double q2 = c->q2;
            auto G = [&](const std::vector<double>& z, std::vector<double>& g) {
                const ModelSpec s = flow.at(z[2], q2);
                std::vector<double> mu = {z[0], z[1]}, f;
                stationary_flow(s, mu, f);
                g = {f[0], f[1], det_of(s, mu)};
            };
            if (!fd_newton(G, x))
                continue;
            if (!in_box(x[2], q2))
                continue;
            bool dup = false;
            for (const auto& fs : fold_seeds)
                if (std::abs(fs[2] - x[2]) < 0.05 && std::abs(fs[3] - q2) < 0.05)
                    dup = true;
            if (!dup)
                fold_seeds.push_back({x[0], x[1], x[2], q2});
        }

        const double scale1 = box.p1_hi - box.p1_lo;
        const double scale2 = box.p2_hi - box.p2_lo;
        std::vector<std::vector<double>> visited;
        auto near_visited = [&](const std::vector<double>& z) {
            for (const auto& v : visited)
                if (std::abs(v[2] - z[2]) < 0.02 * scale1 && std::abs(v[3] - z[3]) < 0.02 * scale2 &&
                    std::abs(v[0] - z[0]) < 0.05)
                    return true;
            return false;
        };

        for (const auto& seed : fold_seeds) {
            if (near_visited(seed))
                continue;
            for (double direction : {+1.0, -1.0}) {
                std::vector<double> z = seed;
                Eigen::Vector4d tangent = tangent_at(z) * direction;
                double prev_a = coeff_at(z);
                double ds = 0.01 * std::max(scale1, scale2);
                const double ds_min = ds * 1e-3;
                for (int step = 0; step < 2500; ++step) {
                    auto z_try = z;
                    Eigen::Vector4d z_ref;
                    for (int i = 0; i < 4; ++i) {
                        z_try[i] += tangent[i] * ds;
                        z_ref[i] = z_try[i];
                    }
                    if (!correct(z_try, tangent, z_ref)) {
                        ds *= 0.5;
                        if (ds < ds_min)
                            break;
                        continue;
                    }
                    if (!in_box(z_try[2], z_try[3]))
                        break;
                    const double a_now = coeff_at(z_try);
                    if (prev_a * a_now < 0.0) {
                        // bisect the sign change along the curve
                        auto lo = z, hi = z_try;
                        double a_lo = prev_a;
                        for (int bis = 0; bis < 50; ++bis) {
                            std::vector<double> mid(4);
                            Eigen::Vector4d mid_ref;
                            for (int i = 0; i < 4; ++i) {
                                mid[i] = 0.5 * (lo[i] + hi[i]);
                                mid_ref[i] = mid[i];
                            }
                            if (!correct(mid, tangent, mid_ref))
                                break;
                            const double a_mid = coeff_at(mid);
                            if ((a_mid < 0) == (a_lo < 0)) {
                                lo = mid;
                                a_lo = a_mid;
                            } else {
                                hi = mid;
                            }
                            double gap = 0.0;
                            for (int i = 0; i < 4; ++i)
                                gap += std::abs(hi[i] - lo[i]);
                            if (gap < 1e-9)
                                break;
                        }
                        const ModelSpec s_at = flow.at(lo[2], lo[3]);
                        if (std::abs(coeff_at(lo)) < 1e-5 &&
                            std::abs(tr_of(s_at, {lo[0], lo[1]})) > 1e-3) {
                            BifurcationPoint bp;
                            bp.kind = BifKind::cusp;
                            bp.params = {{p1, lo[2]}, {p2, lo[3]}};
                            bp.state = {lo[0], lo[1]};
                            bp.tolerance = 1e-6;
                            push_unique(std::move(bp));
                        }
                    }
                    prev_a = a_now;
                    // keep direction continuity
                    Eigen::Vector4d new_tangent = tangent_at(z_try);
                    if (new_tangent.dot(tangent) < 0)
                        new_tangent = -new_tangent;
                    tangent = new_tangent;
                    visited.push_back(z_try);
                    z = z_try;
                    ds = std::min(ds * 1.3, 0.01 * std::max(scale1, scale2));
                }
            }
        }
    }

    // Hopf-curve turning point: trace the Hopf locus (F = 0, tr = 0, det > 0)
    // in q1 and locate the interior extremum of q2 along it.
    {
        // starting roots from scan candidates with small |tr| and det > 0
        auto ranked = scan;
        ranked.erase(std::remove_if(ranked.begin(), ranked.end(),
                                    [](const Candidate& c) { return c.det <= 1e-6; }),
                     ranked.end());
        std::sort(ranked.begin(), ranked.end(), [](const Candidate& a, const Candidate& b) {
            return std::abs(a.tr) < std::abs(b.tr);
        });
        ranked.resize(std::min<std::size_t>(ranked.size(), 12));
        struct LocusPt {
            double q1, q2, m1, m2;
            bool operator<(const LocusPt& o) const { return q1 < o.q1; }
        };
        std::vector<LocusPt> locus;
        const double dq1 = (box.p1_hi - box.p1_lo) / 400.0;
        for (const auto& c : ranked) {
            // polish the starting root at fixed q1
            auto solve_at = [&](double q1, std::vector<double>& x) {
                auto G = [&](const std::vector<double>& z, std::vector<double>& g) {
                    const ModelSpec s = flow.at(q1, z[2]);
                    std::vector<double> mu = {z[0], z[1]}, f;
                    stationary_flow(s, mu, f);
                    g = {f[0], f[1], tr_of(s, mu)};
                };
                return fd_newton(G, x);
            };
            std::vector<double> x0 = {c.mu[0], c.mu[1], c.q2};
            if (!solve_at(c.q1, x0))
                continue;
            for (double dir : {+1.0, -1.0}) {
                std::vector<double> x = x0;
                double q1 = c.q1;
                for (int k = 0; k < 900; ++k) {
                    const ModelSpec s = flow.at(q1, x[2]);
                    if (det_of(s, {x[0], x[1]}) <= 1e-8)
                        break;  // reached the BT end of the locus
                    if (in_box(q1, x[2]))
                        locus.push_back({q1, x[2], x[0], x[1]});
                    else
                        break;
                    q1 += dir * dq1;
                    if (!solve_at(q1, x))
                        break;
                }
            }
        }
        if (locus.size() >= 5) {
            std::sort(locus.begin(), locus.end());
            locus.erase(std::unique(locus.begin(), locus.end(),
                                    [](const LocusPt& a, const LocusPt& b) {
                                        return std::abs(a.q1 - b.q1) < 1e-9 &&
                                               std::abs(a.q2 - b.q2) < 1e-6;
                                    }),
                        locus.end());
            std::size_t k_max = 0;
            for (std::size_t k = 0; k < locus.size(); ++k)
                if (locus[k].q2 > locus[k_max].q2)
                    k_max = k;
            if (k_max > 0 && k_max + 1 < locus.size()) {
                const std::size_t lo_k = k_max > 2 ? k_max - 2 : 0;
                const std::size_t hi_k = std::min(locus.size() - 1, k_max + 2);
                // parabola fit q2(q1) around the extremum
                double sx = 0, sx2 = 0, sx3 = 0, sx4 = 0, sy = 0, sxy = 0, sx2y = 0, m = 0;
                for (std::size_t k = lo_k; k <= hi_k; ++k) {
                    const double xx = locus[k].q1 - locus[k_max].q1;
                    const double yy = locus[k].q2;
                    sx += xx; sx2 += xx * xx; sx3 += xx * xx * xx; sx4 += xx * xx * xx * xx;
                    sy += yy; sxy += xx * yy; sx2y += xx * xx * yy;
                    m += 1.0;
                }
                Eigen::Matrix3d A;
                A << m, sx, sx2, sx, sx2, sx3, sx2, sx3, sx4;
                Eigen::Vector3d rhs(sy, sxy, sx2y);
                Eigen::Vector3d coef = A.fullPivLu().solve(rhs);
                double q1_tp = locus[k_max].q1;
                double q2_tp = locus[k_max].q2;
                if (std::abs(coef[2]) > 1e-12) {
                    const double dx = -coef[1] / (2.0 * coef[2]);
                    if (std::abs(dx) < 5.0 * dq1) {
                        q1_tp = locus[k_max].q1 + dx;
                        q2_tp = coef[0] + coef[1] * dx + coef[2] * dx * dx;
                    }
                }
                BifurcationPoint bp;
                bp.kind = BifKind::hopf_turning_point;
                bp.params = {{p1, q1_tp}, {p2, q2_tp}};
                bp.state = {locus[k_max].m1, locus[k_max].m2};
                bp.tolerance = 1e-3;
                push_unique(std::move(bp));
            }
        }
    }

    return out;
}

// --- cycles ------------------------------------------------------------------

CycleResult characterize_cycle(const ModelSpec& spec, const MomentState& init,
                               double t_transient, double t_measure) {
    spec.validate();
    const std::size_t p = spec.num_populations();
    CycleResult result;
    result.amplitude.assign(p, 0.0);

    OdeConfig cfg;
    cfg.method = OdeMethod::rk45_adaptive;
    cfg.abs_tol = 1e-9;
    cfg.rel_tol = 1e-9;
    cfg.max_step = 0.25;

    MomentState start = init;
    start.time = 0.0;
    if (t_transient > 0.0) {
        cfg.t_end = t_transient;
        const auto traj = integrate(spec, start, cfg);
        start = traj.at(t_transient);
        start.time = 0.0;
    }

    // Measurement windows are repeated until the swing of mu_1 settles.
    // Slowly decaying spirals near a Hopf point look periodic on any single
    // window; the block loop lets them decay away.
    const int max_blocks = 8;
    const double dt_s = std::min(0.02, t_measure / 4096.0);
    const std::size_t m = std::size_t(t_measure / dt_s);
    std::vector<double> ts(m), x0(m);
    std::vector<std::vector<double>> mu(p, std::vector<double>(m));
    double first_swing = -1.0, prev_swing = -1.0, swing = 0.0;
    bool settled = false;
    for (int block = 0; block < max_blocks; ++block) {
        cfg.t_end = t_measure;
        start.time = 0.0;
        const auto traj = integrate(spec, start, cfg);
        for (std::size_t k = 0; k < m; ++k) {
            ts[k] = double(k) * dt_s;
            const MomentState s = traj.at(ts[k]);
            for (std::size_t a = 0; a < p; ++a)
                mu[a][k] = s.mean[a];
            x0[k] = s.mean[0];
        }
        const auto [mn, mx] = std::minmax_element(x0.begin(), x0.end());
        swing = *mx - *mn;
        if (first_swing < 0.0)
            first_swing = swing;
        if (swing < kCycleAmplitudeFloor) {
            result.kind = CycleResult::Kind::none;
            return result;
        }
        if (prev_swing >= 0.0 && std::abs(swing - prev_swing) < 0.02 * swing) {
            settled = true;
            break;
        }
        prev_swing = swing;
        start = traj.at(t_measure);
    }
    if (!settled) {
        // still drifting after the budget: a clear downward trend means a
        // decaying spiral, anything else stays unresolved
        result.kind = swing < 0.7 * first_swing ? CycleResult::Kind::none
                                                : CycleResult::Kind::unresolved;
        return result;
    }

    for (std::size_t a = 0; a < p; ++a) {
        const auto [mn, mx] = std::minmax_element(mu[a].begin(), mu[a].end());
        result.amplitude[a] = *mx - *mn;
    }

    // interior maxima of mu_1(t), quadratically refined
    std::vector<double> peak_times;
    const auto [mn_it, mx_it] = std::minmax_element(x0.begin(), x0.end());
    const double level = 0.5 * (*mn_it + *mx_it);
    for (std::size_t k = 1; k + 1 < m; ++k) {
        if (x0[k] >= x0[k - 1] && x0[k] > x0[k + 1] && x0[k] > level) {
            const double denom = x0[k - 1] - 2.0 * x0[k] + x0[k + 1];
            double shift = 0.0;
            if (denom < -1e-300)
                shift = 0.5 * (x0[k - 1] - x0[k + 1]) / denom;
            peak_times.push_back(ts[k] + shift * dt_s);
        }
    }

    if (peak_times.size() < 3) {
        // sustained swing but no repeating maxima inside the window: a period
        // longer than the window, the signature of a near-homoclinic orbit
        result.kind = CycleResult::Kind::unresolved;
        result.homoclinic_suspect = true;
        return result;
    }

    std::vector<double> periods;
    for (std::size_t k = 1; k < peak_times.size(); ++k)
        periods.push_back(peak_times[k] - peak_times[k - 1]);
    const double mean_period =
        std::accumulate(periods.begin(), periods.end(), 0.0) / double(periods.size());
    const auto [pmn, pmx] = std::minmax_element(periods.begin(), periods.end());
    const double jitter = (*pmx - *pmn) / mean_period;

    result.period = mean_period;
    result.period_jitter = jitter;
    result.kind =
        jitter < kCycleJitterBound ? CycleResult::Kind::cycle : CycleResult::Kind::unresolved;
    return result;
}

// --- attractor census --------------------------------------------------------

namespace {

AttractorLabel label_point(const ModelSpec& spec, const std::vector<MomentState>& init_set,
                           double t_transient, double t_measure) {
    bool any_cycle = false;
    bool any_unresolved = false;
    std::vector<std::vector<double>> extra_seeds;
    for (const auto& init : init_set) {
        const auto cyc = characterize_cycle(spec, init, t_transient, t_measure);
        if (cyc.kind == CycleResult::Kind::cycle)
            any_cycle = true;
        else if (cyc.kind == CycleResult::Kind::unresolved)
            any_unresolved = true;
        // settled endpoints seed the equilibrium search
        OdeConfig cfg;
        cfg.t_end = t_transient > 0 ? t_transient : 1.0;
        cfg.max_step = 0.25;
        try {
            const auto traj = integrate(spec, init, cfg);
            extra_seeds.push_back(traj.at(cfg.t_end).mean);
        } catch (const std::exception&) {
        }
    }
    const auto eqs = find_equilibria(spec, extra_seeds);
    std::vector<const EquilibriumRecord*> stable;
    for (const auto& e : eqs)
        if (e.stability == Stability::stable)
            stable.push_back(&e);

    if (any_cycle)
        return stable.empty() ? AttractorLabel::oscillation : AttractorLabel::fp_plus_cycle;
    if (stable.size() >= 2)
        return AttractorLabel::bistable_fp;
    if (stable.size() == 1) {
        const auto& e = *stable.front();
        const auto v = stationary_variance_of(spec);
        const double activity = closure_f(e.mu[0], v[0], spec.populations[0].gain,
                                          spec.populations[0].threshold);
        return activity < 0.5 ? AttractorLabel::low_fp : AttractorLabel::high_fp;
    }
    return any_unresolved ? AttractorLabel::unresolved : AttractorLabel::other;
}

}  // namespace

SweepResult attractor_census(const ModelSpec& spec, const GridAxis& axis1, const GridAxis& axis2,
                             const std::vector<MomentState>& init_set) {
    spec.validate();
    if (axis1.n == 0 || axis2.n == 0)
        throw std::invalid_argument("attractor_census: axes must have at least one cell");
    if (init_set.empty())
        throw std::invalid_argument("attractor_census: need at least one initial condition");
    const double t_transient = 150.0, t_measure = 120.0;

    SweepResult sweep;
    sweep.axis1 = axis1;
    sweep.axis2 = axis2;
    sweep.labels.resize(axis1.n * axis2.n, AttractorLabel::unresolved);

    auto label_cell = [&](double v1, double v2) {
        const ModelSpec s = apply_param(apply_param(spec, axis1.name, v1), axis2.name, v2);
        return label_point(s, init_set, t_transient, t_measure);
    };

    for (std::size_t i = 0; i < axis1.n; ++i)
        for (std::size_t j = 0; j < axis2.n; ++j)
            sweep.labels[i * axis2.n + j] = label_cell(axis1.value(i), axis2.value(j));

    // refine boundaries between differing neighbors to resolution/4
    auto bisect_boundary = [&](double v1a, double v2a, double v1b, double v2b,
                               AttractorLabel la, AttractorLabel lb, const std::string& axis) {
        double a1 = v1a, a2 = v2a, b1 = v1b, b2 = v2b;
        for (int it = 0; it < 2; ++it) {
            const double m1 = 0.5 * (a1 + b1), m2 = 0.5 * (a2 + b2);
            const AttractorLabel lm = label_cell(m1, m2);
            if (lm == la) {
                a1 = m1;
                a2 = m2;
            } else {
                b1 = m1;
                b2 = m2;
            }
        }
        SweepResult::Boundary bd;
        bd.axis = axis;
        bd.p1 = 0.5 * (a1 + b1);
        bd.p2 = 0.5 * (a2 + b2);
        bd.before = la;
        bd.after = lb;
        sweep.boundaries.push_back(std::move(bd));
    };

    for (std::size_t i = 0; i < axis1.n; ++i)
        for (std::size_t j = 0; j < axis2.n; ++j) {
            const AttractorLabel l = sweep.label_at(i, j);
            if (i + 1 < axis1.n && sweep.label_at(i + 1, j) != l)
                bisect_boundary(axis1.value(i), axis2.value(j), axis1.value(i + 1), axis2.value(j),
                                l, sweep.label_at(i + 1, j), axis1.name);
            if (j + 1 < axis2.n && sweep.label_at(i, j + 1) != l)
                bisect_boundary(axis1.value(i), axis2.value(j), axis1.value(i), axis2.value(j + 1),
                                l, sweep.label_at(i, j + 1), axis2.name);
        }
    return sweep;
}

// --- homoclinic turning point (period blow-up estimate) ----------------------

std::optional<BifurcationPoint> estimate_homoclinic_turning_point(const ModelSpec& spec,
                                                                  const std::string& p1,
                                                                  const std::string& p2,
                                                                  const SearchBox& box) {
    spec.validate();
    if (spec.num_populations() != 2)
        throw std::invalid_argument("estimate_homoclinic_turning_point: P = 2 only");
    const auto codim2 = find_codim2(spec, p1, p2, box);
    const BifurcationPoint* bt = nullptr;
    const BifurcationPoint* htp = nullptr;
    for (const auto& bp : codim2) {
        if (bp.kind == BifKind::bogdanov_takens)
            bt = &bp;
        if (bp.kind == BifKind::hopf_turning_point)
            htp = &bp;
    }
    if (!bt || !htp)
        return std::nullopt;
    const double q2_lo = bt->params[1].value;
    const double q2_hi = htp->params[1].value;
    if (!(q2_hi > q2_lo))
        return std::nullopt;

    TwoParamFlow flow{spec, p1, p2};

    // The two Hopf roots in q1 bracketing the cycle washer at fixed q2. The
    // branch tracer follows the equilibrium curve through its folds, which is
    // where the near-BT Hopf root hides.
    auto hopf_pair = [&](double q2) -> std::optional<std::pair<double, double>> {
        std::vector<double> roots;
        const ModelSpec s_q2 = apply_param(spec, p2, q2);
        const double step = (box.p1_hi - box.p1_lo) / 300.0;
        for (const auto& br : continue_equilibria(s_q2, p1, box.p1_lo, box.p1_hi, step))
            for (const auto& bp : br.bifurcations)
                if (bp.kind == BifKind::hopf) {
                    bool dup = false;
                    for (double r : roots)
                        if (std::abs(r - bp.params[0].value) < 1e-5)
                            dup = true;
                    if (!dup)
                        roots.push_back(bp.params[0].value);
                }
        if (roots.size() < 2)
            return std::nullopt;
        std::sort(roots.begin(), roots.end());
        return std::make_pair(roots.front(), roots.back());
    };

    // Between the two homoclinics there is no cycle encircling the unstable
    // focus: orbits spiraling out of it escape to the remote stable node.
    // Inside the cycle washer they settle on the innermost cycle instead.
    // The start offset must stay well below the focus-saddle distance, or
    // the orbit begins outside the squeezed basin and fakes an escape.
    auto gap_exists = [&](double q2) {
        const auto pair = hopf_pair(q2);
        if (!pair)
            return false;
        const auto [q1a, q1b] = *pair;
        const int samples = 25;
        for (int k = 1; k < samples - 1; ++k) {
            const double q1 = q1a + (q1b - q1a) * double(k) / double(samples - 1);
            const ModelSpec s = flow.at(q1, q2);
            const auto eqs = find_equilibria(s);
            const EquilibriumRecord* focus = nullptr;
            const EquilibriumRecord* saddle = nullptr;
            std::vector<const EquilibriumRecord*> stable;
            for (const auto& rec : eqs) {
                if (rec.stability == Stability::stable)
                    stable.push_back(&rec);
                if (rec.stability == Stability::saddle)
                    saddle = &rec;
                if (rec.stability != Stability::unstable)
                    continue;
                bool has_pair = false;
                for (const auto& ev : rec.eigenvalues)
                    if (std::abs(ev.imag()) > 1e-10)
                        has_pair = true;
                if (has_pair || !focus)
                    focus = &rec;
            }
            if (!focus || stable.empty())
                continue;
            double d_saddle = 1.0;
            if (saddle)
                d_saddle = std::hypot(saddle->mu[0] - focus->mu[0],
                                      saddle->mu[1] - focus->mu[1]);
            MomentState init;
            init.mean = focus->mu;
            init.mean[0] += std::max(1e-4, 0.01 * d_saddle);
            init.variance = stationary_variance_of(s);
            OdeConfig cfg;
            cfg.t_end = 1500.0;
            cfg.max_step = 0.25;
            std::vector<double> end;
            try {
                end = integrate(s, init, cfg).at(cfg.t_end).mean;
            } catch (const std::exception&) {
                continue;
            }
            const double d_focus = std::hypot(end[0] - focus->mu[0], end[1] - focus->mu[1]);
            double d_stable = 1e300;
            for (const auto* st : stable)
                d_stable = std::min(d_stable,
                                    std::hypot(end[0] - st->mu[0], end[1] - st->mu[1]));
            if (d_stable < 0.5 && d_focus > 2.0)
                return true;  // escaped the washer
        }
        return false;
    };

    // scan down from the Hopf turning point until the window opens, then
    // tighten by bisection
    const double step = std::max(1e-3, (q2_hi - q2_lo) / 40.0);
    double found = 0.0, above = q2_hi - 1e-4;
    for (double q2 = q2_hi - 1e-4; q2 > q2_lo; q2 -= step) {
        if (gap_exists(q2)) {
            found = q2;
            break;
        }
        above = q2;
    }
    if (found == 0.0)
        return std::nullopt;
    double lo = found, hi = above;
    for (int it = 0; it < 6; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (gap_exists(mid))
            lo = mid;
        else
            hi = mid;
    }
    BifurcationPoint bp;
    bp.kind = BifKind::homoclinic_estimate;
    bp.params = {{p2, 0.5 * (lo + hi)}};
    bp.state = {};
    bp.tolerance = 0.05;
    return bp;
}

// --- phase portrait ----------------------------------------------------------

PhasePortrait phase_portrait(const ModelSpec& spec, const SearchBox& box,
                             std::size_t resolution) {
    spec.validate();
    if (spec.num_populations() != 2)
        throw std::invalid_argument("phase_portrait: P = 2 only");
    if (resolution < 2)
        throw std::invalid_argument("phase_portrait: resolution must be >= 2");
    PhasePortrait out;
    const std::size_t nx = resolution, ny = resolution;
    const double dx = (box.p1_hi - box.p1_lo) / double(nx);
    const double dy = (box.p2_hi - box.p2_lo) / double(ny);

    std::vector<double> f1((nx + 1) * (ny + 1)), f2((nx + 1) * (ny + 1));
    std::vector<double> f(2);
    for (std::size_t i = 0; i <= nx; ++i)
        for (std::size_t j = 0; j <= ny; ++j) {
            const std::vector<double> mu = {box.p1_lo + dx * double(i), box.p2_lo + dy * double(j)};
            stationary_flow(spec, mu, f);
            f1[i * (ny + 1) + j] = f[0];
            f2[i * (ny + 1) + j] = f[1];
        }

    auto extract = [&](const std::vector<double>& field,
                       std::vector<std::array<double, 4>>& segments) {
        for (std::size_t i = 0; i < nx; ++i)
            for (std::size_t j = 0; j < ny; ++j) {
                const double x0 = box.p1_lo + dx * double(i), y0 = box.p2_lo + dy * double(j);
                const double v00 = field[i * (ny + 1) + j];
                const double v10 = field[(i + 1) * (ny + 1) + j];
                const double v01 = field[i * (ny + 1) + j + 1];
                const double v11 = field[(i + 1) * (ny + 1) + j + 1];
                std::vector<std::array<double, 2>> pts;
                auto edge = [&](double va, double vb, double xa, double ya, double xb, double yb) {
                    if ((va < 0) != (vb < 0)) {
                        const double t = va / (va - vb);
                        pts.push_back({xa + t * (xb - xa), ya + t * (yb - ya)});
                    }
                };
                edge(v00, v10, x0, y0, x0 + dx, y0);
                edge(v10, v11, x0 + dx, y0, x0 + dx, y0 + dy);
                edge(v01, v11, x0, y0 + dy, x0 + dx, y0 + dy);
                edge(v00, v01, x0, y0, x0, y0 + dy);
                if (pts.size() == 2)
                    segments.push_back({pts[0][0], pts[0][1], pts[1][0], pts[1][1]});
                else if (pts.size() == 4) {
                    segments.push_back({pts[0][0], pts[0][1], pts[1][0], pts[1][1]});
                    segments.push_back({pts[2][0], pts[2][1], pts[3][0], pts[3][1]});
                }
            }
    };
    extract(f1, out.nullcline_mu1);
    extract(f2, out.nullcline_mu2);

    // equilibria inside the box (seeded from the box lattice)
    std::vector<std::vector<double>> seeds;
    for (int i = 0; i < 7; ++i)
        for (int j = 0; j < 7; ++j)
            seeds.push_back({box.p1_lo + (box.p1_hi - box.p1_lo) * double(i) / 6.0,
                             box.p2_lo + (box.p2_hi - box.p2_lo) * double(j) / 6.0});
    for (const auto& rec : find_equilibria(spec, seeds)) {
        if (rec.mu[0] < box.p1_lo - dx || rec.mu[0] > box.p1_hi + dx || rec.mu[1] < box.p2_lo - dy ||
            rec.mu[1] > box.p2_hi + dy)
            continue;
        out.equilibria.push_back(rec);
    }

    // invariant manifolds of saddles: fixed-step RK4 on the planar flow
    auto integrate_manifold = [&](std::vector<double> mu, double direction) {
        std::vector<std::array<double, 2>> line;
        std::vector<double> k1(2), k2(2), k3(2), k4(2), tmp(2);
        const double h = 2e-3 * direction;
        const double margin_x = 0.25 * (box.p1_hi - box.p1_lo);
        const double margin_y = 0.25 * (box.p2_hi - box.p2_lo);
        for (int step = 0; step < 400000; ++step) {
            if (step % 25 == 0)
                line.push_back({mu[0], mu[1]});
            stationary_flow(spec, mu, k1);
            tmp = {mu[0] + 0.5 * h * k1[0], mu[1] + 0.5 * h * k1[1]};
            stationary_flow(spec, tmp, k2);
            tmp = {mu[0] + 0.5 * h * k2[0], mu[1] + 0.5 * h * k2[1]};
            stationary_flow(spec, tmp, k3);
            tmp = {mu[0] + h * k3[0], mu[1] + h * k3[1]};
            stationary_flow(spec, tmp, k4);
            mu[0] += h / 6.0 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0]);
            mu[1] += h / 6.0 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1]);
            if (mu[0] < box.p1_lo - margin_x || mu[0] > box.p1_hi + margin_x ||
                mu[1] < box.p2_lo - margin_y || mu[1] > box.p2_hi + margin_y)
                break;
            if (std::abs(k1[0]) + std::abs(k1[1]) < 1e-9)
                break;  // parked at an equilibrium
        }
        line.push_back({mu[0], mu[1]});
        return line;
    };

    for (const auto& rec : out.equilibria) {
        if (rec.stability != Stability::saddle)
            continue;
        MatrixXd J(2, 2);
        for (int i = 0; i < 2; ++i)
            for (int j = 0; j < 2; ++j)
                J(i, j) = rec.jacobian[i * 2 + j];
        Eigen::EigenSolver<MatrixXd> es(J);
        for (int k = 0; k < 2; ++k) {
            if (std::abs(es.eigenvalues()[k].imag()) > 1e-10)
                continue;
            const double lam = es.eigenvalues()[k].real();
            VectorXd v = es.eigenvectors().col(k).real();
            v.normalize();
            const double eps = 1e-5 * std::max(box.p1_hi - box.p1_lo, box.p2_hi - box.p2_lo);
            for (double sign : {+1.0, -1.0}) {
                std::vector<double> start = {rec.mu[0] + sign * eps * v[0],
                                             rec.mu[1] + sign * eps * v[1]};
                if (lam > 0)
                    out.unstable_manifolds.push_back(integrate_manifold(start, +1.0));
                else
                    out.stable_manifolds.push_back(integrate_manifold(start, -1.0));
            }
        }
    }
    return out;
}

}  // namespace ratenet
