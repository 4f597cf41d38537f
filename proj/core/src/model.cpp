#include "ratenet/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace ratenet {

Schedule::Schedule(double constant_value)
    : segments_{{-std::numeric_limits<double>::infinity(), constant_value}} {}

Schedule::Schedule(std::vector<std::pair<double, double>> segments)
    : segments_(std::move(segments)) {
    if (segments_.empty())
        throw std::invalid_argument("Schedule: empty segment list");
    if (!std::is_sorted(segments_.begin(), segments_.end(),
                        [](auto& a, auto& b) { return a.first < b.first; }))
        throw std::invalid_argument("Schedule: segment starts must be increasing");
}

double Schedule::operator()(double t) const {
    // last segment whose start is <= t; before the first start, the first value
    double value = segments_.front().second;
    for (const auto& [start, v] : segments_) {
        if (start <= t)
            value = v;
        else
            break;
    }
    return value;
}

void ModelSpec::validate() const {
    const std::size_t p = populations.size();
    if (p == 0)
        throw std::invalid_argument("ModelSpec: at least one population required");
    if (connectivity.size() != p * p)
        throw std::invalid_argument("ModelSpec: connectivity must be P x P");
    for (double w : connectivity)
        if (!std::isfinite(w))
            throw std::invalid_argument("ModelSpec: connectivity has non-finite entries");
    double fraction_sum = 0.0;
    for (const auto& pop : populations) {
        if (!(pop.tau > 0.0))
            throw std::invalid_argument("ModelSpec: tau must be > 0");
        if (!(pop.gain > 0.0))
            throw std::invalid_argument("ModelSpec: gain must be > 0");
        for (const auto& [t, v] : pop.noise.segments())
            if (!(v >= 0.0))
                throw std::invalid_argument("ModelSpec: noise must be >= 0");
        if (!(pop.fraction > 0.0) || pop.fraction > 1.0)
            throw std::invalid_argument("ModelSpec: fractions must lie in (0,1]");
        if (p > 1 && pop.fraction >= 1.0)
            throw std::invalid_argument("ModelSpec: fractions must lie in (0,1)");
        fraction_sum += pop.fraction;
    }
    if (std::abs(fraction_sum - 1.0) > 1e-12)
        throw std::invalid_argument("ModelSpec: fractions must sum to 1");
}

namespace {

inline double phi(double x) {
    constexpr double inv_sqrt_2pi = 0.39894228040143267794;
    return inv_sqrt_2pi * std::exp(-0.5 * x * x);
}

inline double Phi(double x) {
    constexpr double inv_sqrt2 = 0.70710678118654752440;
    return 0.5 * std::erfc(-x * inv_sqrt2);
}

}  // namespace

double normal_pdf(double x) { return phi(x); }
double normal_cdf(double x) { return Phi(x); }

double sigmoid(double x, double gain, double threshold) {
    if (!std::isfinite(x))
        throw std::domain_error("sigmoid: non-finite input");
    return Phi(gain * x + threshold);
}

double closure_f(double mu, double v, double gain, double threshold) {
    if (v < 0.0)
        throw std::domain_error("closure_f: negative variance");
    return Phi((gain * mu + threshold) / std::sqrt(1.0 + gain * gain * v));
}

double closure_f_dmu(double mu, double v, double gain, double threshold) {
    if (v < 0.0)
        throw std::domain_error("closure_f_dmu: negative variance");
    const double s = std::sqrt(1.0 + gain * gain * v);
    return gain / s * phi((gain * mu + threshold) / s);
}

double closure_f_dmu2(double mu, double v, double gain, double threshold) {
    if (v < 0.0)
        throw std::domain_error("closure_f_dmu2: negative variance");
    const double s2 = 1.0 + gain * gain * v;
    const double z = (gain * mu + threshold) / std::sqrt(s2);
    return -(gain * gain / s2) * z * phi(z);
}

std::vector<double> stationary_variance(const ModelSpec& spec) {
    std::vector<double> out;
    out.reserve(spec.populations.size());
    for (const auto& pop : spec.populations) {
        const double lam = pop.noise.final_value();
        out.push_back(pop.tau * lam * lam / 2.0);
    }
    return out;
}

double variance_trajectory(double v0, double tau, double lambda, double t) {
    if (t < 0.0)
        throw std::domain_error("variance_trajectory: negative time");
    const double v_inf = tau * lambda * lambda / 2.0;
    return v_inf + std::exp(-2.0 * t / tau) * (v0 - v_inf);
}

namespace {

// int_0^m exp(2s/tau) lambda(s)^2 ds for piecewise-constant lambda
double noise_kernel_integral(const Schedule& noise, double tau, double m) {
    const auto& segs = noise.segments();
    double total = 0.0;
    for (std::size_t k = 0; k < segs.size(); ++k) {
        const double a = std::max(0.0, segs[k].first);
        const double b = std::min(m, k + 1 < segs.size() ? segs[k + 1].first : m);
        if (b <= a)
            continue;
        const double lam2 = segs[k].second * segs[k].second;
        total += lam2 * tau / 2.0 * (std::exp(2.0 * b / tau) - std::exp(2.0 * a / tau));
    }
    return total;
}

}  // namespace

double covariance(const ModelSpec& spec, std::size_t a, std::size_t b,
                  double t1, double t2, const std::vector<double>& v0_cov) {
    if (t1 < 0.0 || t2 < 0.0)
        throw std::domain_error("covariance: negative time");
    const std::size_t p = spec.num_populations();
    if (a >= p || b >= p || v0_cov.size() != p * p)
        throw std::invalid_argument("covariance: index or v0_cov shape mismatch");
    const double tau_a = spec.populations[a].tau;
    const double tau_b = spec.populations[b].tau;
    const double decay = std::exp(-(t1 / tau_a + t2 / tau_b));
    if (a != b)
        return decay * v0_cov[a * p + b];
    const double m = std::min(t1, t2);
    return decay * (v0_cov[a * p + a] + noise_kernel_integral(spec.populations[a].noise, tau_a, m));
}

// --- JSON serialization -----------------------------------------------------

namespace {

using nlohmann::json;

json schedule_to_json(const Schedule& s) {
    if (s.is_constant())
        return json(s.final_value());
    json arr = json::array();
    for (const auto& [t, v] : s.segments())
        arr.push_back(json::array({std::isinf(t) ? 0.0 : t, v}));
    return arr;
}

Schedule schedule_from_json(const json& j, const char* field) {
    if (j.is_number())
        return Schedule(j.get<double>());
    if (j.is_array()) {
        std::vector<std::pair<double, double>> segs;
        for (const auto& e : j) {
            if (!e.is_array() || e.size() != 2)
                throw std::invalid_argument(std::string("ModelSpec: bad schedule entry in ") + field);
            segs.emplace_back(e[0].get<double>(), e[1].get<double>());
        }
        return Schedule(std::move(segs));
    }
    throw std::invalid_argument(std::string("ModelSpec: field ") + field +
                                " must be a number or [t,value] list");
}

}  // namespace

std::string ModelSpec::to_json_string(int indent) const {
    json j;
    j["populations"] = json::array();
    for (const auto& pop : populations) {
        json p;
        p["tau"] = pop.tau;
        p["gain"] = pop.gain;
        p["threshold"] = pop.threshold;
        p["noise"] = schedule_to_json(pop.noise);
        p["input"] = schedule_to_json(pop.input);
        p["fraction"] = pop.fraction;
        j["populations"].push_back(std::move(p));
    }
    const std::size_t p = num_populations();
    json rows = json::array();
    for (std::size_t a = 0; a < p; ++a) {
        json row = json::array();
        for (std::size_t b = 0; b < p; ++b)
            row.push_back(weight(a, b));
        rows.push_back(std::move(row));
    }
    j["connectivity"] = std::move(rows);
    j["label"] = label;
    return j.dump(indent);
}

ModelSpec ModelSpec::from_json_string(const std::string& text) {
    json j = json::parse(text);
    ModelSpec spec;
    if (!j.contains("populations") || !j["populations"].is_array())
        throw std::invalid_argument("ModelSpec: missing populations array");
    for (const auto& p : j["populations"]) {
        PopulationParams pop;
        pop.tau = p.at("tau").get<double>();
        pop.gain = p.at("gain").get<double>();
        pop.threshold = p.at("threshold").get<double>();
        pop.noise = schedule_from_json(p.at("noise"), "noise");
        pop.input = schedule_from_json(p.at("input"), "input");
        pop.fraction = p.at("fraction").get<double>();
        spec.populations.push_back(std::move(pop));
    }
    const std::size_t np = spec.populations.size();
    const auto& rows = j.at("connectivity");
    if (!rows.is_array() || rows.size() != np)
        throw std::invalid_argument("ModelSpec: connectivity must have P rows");
    for (const auto& row : rows) {
        if (!row.is_array() || row.size() != np)
            throw std::invalid_argument("ModelSpec: connectivity rows must have P entries");
        for (const auto& w : row)
            spec.connectivity.push_back(w.get<double>());
    }
    spec.label = j.value("label", "");
    spec.validate();
    return spec;
}

ModelSpec ModelSpec::load(const std::string& path) {
    std::ifstream in(path);
    if (!in)
        throw std::runtime_error("ModelSpec: cannot open " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return from_json_string(ss.str());
}

void ModelSpec::save(const std::string& path) const {
    std::ofstream out(path);
    if (!out)
        throw std::runtime_error("ModelSpec: cannot write " + path);
    out << to_json_string() << '\n';
}

}  // namespace ratenet
