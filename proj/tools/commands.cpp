#include "commands.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <stdexcept>

#include <ratenet/bifurcation.hpp>
#include <ratenet/csvio.hpp>
#include <ratenet/stats.hpp>

namespace cli {

using nlohmann::json;
using namespace ratenet;

namespace {

json parse_override_value(const std::string& text) {
    try {
        return json::parse(text);
    } catch (const json::parse_error&) {
        return json(text);  // bare strings need no quotes on the command line
    }
}

double now_seconds() {
    return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch())
        .count();
}

std::vector<double> expand(const json& j, std::size_t p, const char* field) {
    std::vector<double> out;
    if (j.is_number()) {
        out.assign(p, j.get<double>());
    } else if (j.is_array()) {
        for (const auto& v : j)
            out.push_back(v.get<double>());
        if (out.size() != p)
            throw std::invalid_argument(std::string("config: ") + field + " must have P entries");
    } else {
        throw std::invalid_argument(std::string("config: ") + field +
                                    " must be a number or array");
    }
    return out;
}

}  // namespace

Context make_context(const std::string& config_path, const std::vector<std::string>& overrides,
                     const std::optional<std::uint64_t>& seed, const std::string& out_dir,
                     unsigned threads) {
    Context ctx;
    if (!config_path.empty()) {
        std::ifstream in(config_path);
        if (!in)
            throw std::runtime_error("cannot open config " + config_path);
        in >> ctx.config;
        if (ctx.config.contains("model_path")) {
            const auto base = std::filesystem::path(config_path).parent_path();
            const auto model_path = base / ctx.config["model_path"].get<std::string>();
            std::ifstream min(model_path);
            if (!min)
                throw std::runtime_error("cannot open model " + model_path.string());
            min >> ctx.config["model"];
        }
    }
    for (const auto& ov : overrides) {
        const auto eq = ov.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument("override must look like key=value: " + ov);
        std::string key = ov.substr(0, eq);
        for (auto& c : key)
            if (c == '.')
                c = '/';
        ctx.config[json::json_pointer("/" + key)] = parse_override_value(ov.substr(eq + 1));
    }
    if (seed)
        ctx.config["sim"]["seed"] = *seed;
    ctx.seed = ctx.config.contains("sim") ? ctx.config["sim"].value("seed", std::uint64_t(0))
                                          : std::uint64_t(0);
    ctx.out_dir = out_dir.empty() ? "." : out_dir;
    std::filesystem::create_directories(ctx.out_dir);
    ctx.threads = threads;
    return ctx;
}

ModelSpec Context::model() const {
    if (!config.contains("model"))
        throw std::invalid_argument("config: missing \"model\" section");
    auto spec = ModelSpec::from_json_string(config["model"].dump());
    return spec;
}

SimConfig Context::sim() const {
    SimConfig cfg;
    const json j = config.value("sim", json::object());
    cfg.n_total = j.value("n_total", std::uint64_t(0));
    cfg.dt = j.value("dt", 0.01);
    cfg.t_end = j.value("t_end", 1.0);
    cfg.n_realizations = j.value("n_realizations", std::uint32_t(1));
    cfg.seed = j.value("seed", std::uint64_t(0));
    cfg.record_stride = j.value("record_stride", std::uint32_t(1));
    cfg.memory_cap_bytes = j.value("memory_cap_bytes", std::uint64_t(4) << 30);
    const std::string mode = j.value("record_mode", "population_stats");
    if (mode == "population_stats")
        cfg.record_mode = RecordMode::population_stats;
    else if (mode == "full_trajectories")
        cfg.record_mode = RecordMode::full_trajectories;
    else if (mode == "final_state")
        cfg.record_mode = RecordMode::final_state;
    else
        throw std::invalid_argument("config: unknown record_mode " + mode);
    cfg.threads = threads;
    return cfg;
}

OdeConfig Context::ode() const {
    OdeConfig cfg;
    const json j = config.value("ode", json::object());
    const std::string method = j.value("method", "rk45_adaptive");
    if (method == "rk45_adaptive")
        cfg.method = OdeMethod::rk45_adaptive;
    else if (method == "rk4_fixed")
        cfg.method = OdeMethod::rk4_fixed;
    else
        throw std::invalid_argument("config: unknown ode method " + method);
    cfg.dt = j.value("dt", 1e-3);
    cfg.abs_tol = j.value("abs_tol", 1e-9);
    cfg.rel_tol = j.value("rel_tol", 1e-9);
    cfg.max_step = j.value("max_step", 0.25);
    cfg.t_end = j.value("t_end", config.value("sim", json::object()).value("t_end", 1.0));
    return cfg;
}

InitialLaw Context::init(std::size_t populations) const {
    if (!config.contains("init"))
        throw std::invalid_argument("config: missing \"init\" section");
    InitialLaw law;
    law.mean = expand(config["init"].value("mean", json(0.0)), populations, "init.mean");
    law.variance =
        expand(config["init"].value("variance", json(0.0)), populations, "init.variance");
    return law;
}

MomentState Context::init_moments(std::size_t populations) const {
    const InitialLaw law = init(populations);
    MomentState s;
    s.mean = law.mean;
    s.variance = law.variance;
    return s;
}

std::string Context::out_path(const std::string& name) const {
    return (std::filesystem::path(out_dir) / name).string();
}

std::vector<std::pair<std::string, std::string>> Context::metadata() const {
    std::vector<std::pair<std::string, std::string>> meta;
    meta.emplace_back("seed", std::to_string(seed));
    meta.emplace_back("config", config.dump());
    return meta;
}

void Context::write_manifest(const std::string& command, double wall_seconds,
                             const json& extra) const {
    json manifest;
    manifest["command"] = command;
    manifest["tool_version"] = kToolVersion;
    manifest["seed"] = seed;
    manifest["threads"] = threads;
    manifest["wall_seconds"] = wall_seconds;
    manifest["resolved_config"] = config;
    if (!extra.is_null())
        manifest["results"] = extra;
    write_file_atomic(out_path("manifest.json"), manifest.dump(2) + "\n");
}

namespace {

void write_stats_csv(const Context& ctx, const std::string& name, const TrajectoryRecord& rec) {
    CsvWriter csv(ctx.out_path(name), ctx.metadata(), {"t", "population", "emp_mean", "emp_var"});
    for (std::size_t k = 0; k < rec.stats.size(); ++k)
        for (std::size_t a = 0; a < rec.stats[k].mean.size(); ++a)
            csv.write_row({rec.stats[k].t, double(a), rec.stats[k].mean[a], rec.stats[k].var[a]});
    csv.close();
}

void write_full_csv(const Context& ctx, const std::string& name, const TrajectoryRecord& rec) {
    CsvWriter csv(ctx.out_path(name), ctx.metadata(),
                  {"t", "realization", "neuron", "population", "V"});
    const auto& pop = rec.final_state.population_of;
    const std::size_t n = rec.final_state.num_neurons;
    for (std::size_t k = 0; k < rec.full.size(); ++k)
        for (std::size_t r = 0; r < rec.final_state.num_realizations; ++r)
            for (std::size_t i = 0; i < n; ++i)
                csv.write_row({rec.times[k], double(r), double(i), double(pop[i]),
                               rec.full[k][r * n + i]});
    csv.close();
}

void write_final_csv(const Context& ctx, const std::string& name, const EnsembleState& state) {
    CsvWriter csv(ctx.out_path(name), ctx.metadata(), {"realization", "neuron", "population", "V"});
    for (std::uint32_t r = 0; r < state.num_realizations; ++r)
        for (std::uint32_t i = 0; i < state.num_neurons; ++i)
            csv.write_row({double(r), double(i), double(state.population_of[i]), state.at(r, i)});
    csv.close();
}

}  // namespace

int cmd_simulate_net(Context& ctx) {
    const auto spec = ctx.model();
    const auto sim = ctx.sim();
    const auto law = ctx.init(spec.num_populations());
    const double t0 = now_seconds();
    const auto rec = run_ensemble(spec, sim, law);
    const double wall = now_seconds() - t0;

    switch (rec.mode) {
        case RecordMode::population_stats:
            write_stats_csv(ctx, "stats.csv", rec);
            break;
        case RecordMode::full_trajectories:
            write_full_csv(ctx, "trajectory.csv", rec);
            write_stats_csv(ctx, "stats.csv", rec);
            break;
        case RecordMode::final_state:
            break;
    }
    write_final_csv(ctx, "final.csv", rec.final_state);

    json extra;
    extra["steps"] = rec.info.steps;
    extra["neuron_steps_per_second"] = rec.info.neuron_steps_per_second;
    ctx.write_manifest("simulate-net", wall, extra);
    return 0;
}

int cmd_simulate_mf(Context& ctx) {
    const auto spec = ctx.model();
    const auto cfg = ctx.ode();
    const auto init = ctx.init_moments(spec.num_populations());
    const double t0 = now_seconds();
    const auto traj = integrate(spec, init, cfg);
    const double wall = now_seconds() - t0;

    const double sample_dt =
        ctx.config.value("ode", json::object()).value("sample_dt", std::min(0.05, cfg.t_end / 64));
    CsvWriter csv(ctx.out_path("moments.csv"), ctx.metadata(), {"t", "population", "mu", "v"});
    for (double t = 0.0; t <= cfg.t_end + 1e-12; t += sample_dt) {
        const auto law = gaussian_law_at(traj, std::min(t, traj.t_end()));
        for (std::size_t a = 0; a < spec.num_populations(); ++a)
            csv.write_row({t, double(a), law.mean[a], law.variance[a]});
    }
    csv.close();
    ctx.write_manifest("simulate-mf", wall);
    return 0;
}

namespace {

json bif_point_to_json(const BifurcationPoint& bp) {
    json j;
    j["kind"] = to_string(bp.kind);
    for (const auto& pv : bp.params)
        j["params"][pv.name] = pv.value;
    j["state"] = bp.state;
    if (bp.aux != 0.0)
        j["aux"] = bp.aux;
    j["tolerance"] = bp.tolerance;
    return j;
}

}  // namespace

int cmd_sweep(Context& ctx) {
    const auto spec = ctx.model();
    const json j = ctx.config.value("sweep", json::object());
    const std::string mode = j.value("mode", "census");
    const double t0 = now_seconds();
    json sidecar = json::array();

    if (mode == "branch") {
        const json ja = j.at("axis");
        const auto branches = continue_equilibria(spec, ja.at("name").get<std::string>(),
                                                  ja.at("lo").get<double>(),
                                                  ja.at("hi").get<double>(),
                                                  ja.value("step", 0.05));
        std::vector<std::string> cols = {"param"};
        for (std::size_t a = 0; a < spec.num_populations(); ++a)
            cols.push_back("mu_" + std::to_string(a + 1));
        cols.push_back("stability");
        CsvWriter csv(ctx.out_path("branch.csv"), ctx.metadata(), cols);
        for (std::size_t b = 0; b < branches.size(); ++b) {
            const auto& br = branches[b];
            for (std::size_t k = 0; k < br.param.size(); ++k) {
                std::vector<std::string> row = {format_double(br.param[k])};
                for (double m : br.mu[k])
                    row.push_back(format_double(m));
                row.push_back(to_string(br.stability[k]));
                csv.write_row_raw(row);
            }
            for (const auto& bp : br.bifurcations)
                sidecar.push_back(bif_point_to_json(bp));
        }
        csv.close();
    } else if (mode == "census") {
        GridAxis axis1{j.at("axis1").at("name").get<std::string>(),
                       j.at("axis1").at("lo").get<double>(), j.at("axis1").at("hi").get<double>(),
                       j.at("axis1").value("n", std::size_t(11))};
        GridAxis axis2{j.at("axis2").at("name").get<std::string>(),
                       j.at("axis2").at("lo").get<double>(), j.at("axis2").at("hi").get<double>(),
                       j.at("axis2").value("n", std::size_t(11))};
        std::vector<MomentState> init_set;
        for (const auto& ji : j.at("init_set")) {
            MomentState s;
            s.mean = expand(ji.at("mean"), spec.num_populations(), "init_set.mean");
            s.variance = expand(ji.at("variance"), spec.num_populations(), "init_set.variance");
            init_set.push_back(std::move(s));
        }
        const auto sweep = attractor_census(spec, axis1, axis2, init_set);

        CsvWriter csv(ctx.out_path("census.csv"), ctx.metadata(), {"p1", "p2", "label"});
        for (std::size_t i = 0; i < axis1.n; ++i)
            for (std::size_t k = 0; k < axis2.n; ++k)
                csv.write_row_raw({format_double(axis1.value(i)), format_double(axis2.value(k)),
                                   to_string(sweep.label_at(i, k))});
        csv.close();

        for (const auto& bd : sweep.boundaries) {
            json jb;
            jb["kind"] = "census_boundary";
            jb["axis"] = bd.axis;
            jb["params"][axis1.name] = bd.p1;
            jb["params"][axis2.name] = bd.p2;
            jb["labels"] = {to_string(bd.before), to_string(bd.after)};
            jb["tolerance"] = (bd.axis == axis1.name ? axis1.resolution() : axis2.resolution()) / 4;
            sidecar.push_back(std::move(jb));
        }
        if (j.value("codim2", false)) {
            SearchBox box{axis1.lo, axis1.hi, axis2.lo, axis2.hi};
            for (const auto& bp : find_codim2(spec, axis1.name, axis2.name, box))
                sidecar.push_back(bif_point_to_json(bp));
            if (j.value("homoclinic", false)) {
                const auto hom =
                    estimate_homoclinic_turning_point(spec, axis1.name, axis2.name, box);
                if (hom)
                    sidecar.push_back(bif_point_to_json(*hom));
            }
        }
    } else {
        throw std::invalid_argument("sweep: unknown mode " + mode);
    }
    write_file_atomic(ctx.out_path("bifurcations.json"), sidecar.dump(2) + "\n");
    ctx.write_manifest("sweep", now_seconds() - t0, {{"points", sidecar.size()}});
    return 0;
}

int cmd_converge(Context& ctx) {
    const auto spec = ctx.model();
    const json j = ctx.config.value("converge", json::object());
    const auto n_values = j.value("n_values", std::vector<std::uint64_t>{100, 400, 1600, 6400});
    if (n_values.size() < 3)
        throw std::invalid_argument("converge: need at least 3 network sizes");
    auto sim = ctx.sim();
    const auto law = ctx.init(spec.num_populations());

    OdeConfig ode_cfg = ctx.ode();
    ode_cfg.t_end = sim.t_end;
    MomentState init;
    init.mean = law.mean;
    init.variance = law.variance;
    const auto moments = integrate(spec, init, ode_cfg);

    const double t0 = now_seconds();
    std::vector<std::pair<double, double>> points;
    CsvWriter csv(ctx.out_path("convergence.csv"), ctx.metadata(),
                  {"N", "mean_sup_discrepancy"});
    for (const auto n : n_values) {
        sim.n_total = n;
        sim.record_mode = RecordMode::final_state;
        const auto coupled = run_coupled(spec, sim, law, moments);
        points.push_back({double(n), coupled.mean_sup_discrepancy});
        csv.write_row({double(n), coupled.mean_sup_discrepancy});
    }
    csv.close();
    const auto fit = convergence_rate(points);
    json extra;
    extra["slope"] = fit.slope;
    extra["intercept"] = fit.intercept;
    ctx.write_manifest("converge", now_seconds() - t0, extra);
    std::cout << "convergence slope " << fit.slope << " (intercept " << fit.intercept << ")\n";
    return 0;
}

int cmd_spectrum(Context& ctx) {
    const auto base = ctx.model();
    const json j = ctx.config.value("spectrum", json::object());
    const auto lambdas = j.value("lambdas", std::vector<double>{});
    if (lambdas.empty())
        throw std::invalid_argument("spectrum: empty lambda list");
    const double transient = j.value("transient", 20.0);
    const double f_min = j.value("f_min", 0.05);
    const bool rectangular = j.value("rectangular", false);
    const auto window = rectangular ? SpectralWindow::rectangular : SpectralWindow::hann;

    auto sim = ctx.sim();
    sim.record_mode = RecordMode::population_stats;
    const auto law = ctx.init(base.num_populations());
    const double t0 = now_seconds();

    CsvWriter summary(ctx.out_path("summary.csv"), ctx.metadata(),
                      {"lambda", "peak_freq_net", "peak_amp_net", "peak_freq_mf", "peak_amp_mf"});
    std::vector<std::string> failures;
    for (double lam : lambdas) {
        try {
            const auto spec = apply_param(base, "lambda", lam);
            const auto rec = run_ensemble(spec, sim, law);
            std::vector<double> net_series;
            const double dt_rec = sim.dt * sim.record_stride;
            for (std::size_t k = 0; k < rec.stats.size(); ++k)
                if (rec.stats[k].t >= transient)
                    net_series.push_back(rec.stats[k].mean[0]);
            const auto net_spec = power_spectrum(net_series, dt_rec, window);

            OdeConfig ode_cfg = ctx.ode();
            ode_cfg.t_end = sim.t_end;
            MomentState init;
            init.mean = law.mean;
            init.variance = law.variance;
            const auto traj = integrate(spec, init, ode_cfg);
            std::vector<double> mf_series;
            for (double t = transient; t <= sim.t_end + 1e-12; t += dt_rec)
                mf_series.push_back(gaussian_law_at(traj, std::min(t, traj.t_end())).mean[0]);
            mf_series.resize(net_series.size());
            const auto mf_spec = power_spectrum(mf_series, dt_rec, window);

            std::ostringstream tag;
            tag.precision(6);
            tag << lam;
            auto dump = [&](const SpectrumResult& sr, const std::string& name) {
                CsvWriter csv(ctx.out_path(name), ctx.metadata(), {"freq", "power"});
                for (std::size_t k = 0; k < sr.frequency.size(); ++k)
                    csv.write_row({sr.frequency[k], sr.power[k]});
                csv.close();
            };
            dump(net_spec, "spectrum_net_" + tag.str() + ".csv");
            dump(mf_spec, "spectrum_mf_" + tag.str() + ".csv");

            summary.write_row({lam, net_spec.frequency[net_spec.peak_bin(f_min)],
                               net_spec.peak_amplitude(f_min),
                               mf_spec.frequency[mf_spec.peak_bin(f_min)],
                               mf_spec.peak_amplitude(f_min)});
        } catch (const std::exception& e) {
            failures.push_back("lambda=" + std::to_string(lam) + ": " + e.what());
        }
    }
    summary.close();
    ctx.write_manifest("spectrum", now_seconds() - t0);
    if (!failures.empty()) {
        for (const auto& f : failures)
            std::cerr << "spectrum: failed " << f << "\n";
        return 2;
    }
    return 0;
}

int cmd_validate(Context& ctx) {
    const auto spec = ctx.model();
    const json j = ctx.config.value("validate", json::object());
    const std::size_t per_realization = j.value("subsample_per_realization", std::size_t(25));
    const double alpha = j.value("alpha", 0.05);

    auto sim = ctx.sim();
    sim.record_mode = RecordMode::final_state;
    const auto law = ctx.init(spec.num_populations());
    const double t0 = now_seconds();
    const auto rec = run_ensemble(spec, sim, law);
    const auto& state = rec.final_state;

    OdeConfig ode_cfg = ctx.ode();
    ode_cfg.t_end = sim.t_end;
    MomentState init;
    init.mean = law.mean;
    init.variance = law.variance;
    const auto traj = integrate(spec, init, ode_cfg);
    const auto final_law = gaussian_law_at(traj, std::min(sim.t_end, traj.t_end()));

    const std::size_t p = spec.num_populations();
    std::vector<std::vector<std::uint32_t>> members(p);
    for (std::uint32_t i = 0; i < state.num_neurons; ++i)
        members[state.population_of[i]].push_back(i);

    json report;
    bool all_ok = true;

    // Gaussianity: pool a thin subsample per realization to curb dependence
    for (std::size_t a = 0; a < p; ++a) {
        std::vector<double> samples;
        const std::size_t take = std::min(per_realization, members[a].size());
        for (std::uint32_t r = 0; r < state.num_realizations; ++r) {
            const std::size_t stride = std::max<std::size_t>(1, members[a].size() / take);
            for (std::size_t k = 0; k < take; ++k)
                samples.push_back(state.at(r, members[a][k * stride]));
        }
        const auto ks = ks_gaussian_test(samples, final_law.mean[a], final_law.variance[a], alpha);
        report["gaussianity"].push_back(json::parse(ks.to_json_string()));
        report["gaussianity"].back()["population"] = a;
        report["gaussianity"].back()["mu"] = final_law.mean[a];
        report["gaussianity"].back()["v"] = final_law.variance[a];
        all_ok = all_ok && !ks.reject;
    }

    // independence: within-population neuron pairs and cross-population pairs
    auto paired = [&](std::size_t pop_x, std::size_t pop_y, bool disjoint) {
        std::vector<double> x, y;
        for (std::uint32_t r = 0; r < state.num_realizations; ++r) {
            const auto& mx = members[pop_x];
            const auto& my = members[pop_y];
            const std::size_t pairs = disjoint ? mx.size() / 2 : std::min(mx.size(), my.size());
            for (std::size_t k = 0; k < pairs && x.size() < 500; ++k) {
                if (disjoint) {
                    x.push_back(state.at(r, mx[2 * k]));
                    y.push_back(state.at(r, mx[2 * k + 1]));
                } else {
                    x.push_back(state.at(r, mx[k]));
                    y.push_back(state.at(r, my[k]));
                }
            }
        }
        return independence_test(x, y, alpha);
    };
    for (std::size_t a = 0; a < p; ++a) {
        const auto rep = paired(a, a, true);
        report["independence"].push_back(json::parse(rep.to_json_string()));
        report["independence"].back()["pairing"] = "within_population_" + std::to_string(a + 1);
        all_ok = all_ok && !rep.reject;
    }
    if (p >= 2) {
        const auto rep = paired(0, 1, false);
        report["independence"].push_back(json::parse(rep.to_json_string()));
        report["independence"].back()["pairing"] = "cross_population";
        all_ok = all_ok && !rep.reject;
    }
    report["all_fail_to_reject"] = all_ok;

    write_file_atomic(ctx.out_path("reports.json"), report.dump(2) + "\n");
    ctx.write_manifest("validate", now_seconds() - t0, report);
    return 0;
}

int cmd_bench(Context& ctx) {
    const auto spec = ctx.model();
    const json j = ctx.config.value("bench", json::object());
    const auto n_values = j.value("n_values", std::vector<std::uint64_t>{50000, 100000, 200000});
    if (n_values.empty())
        throw std::invalid_argument("bench: empty N list");
    const int repeats = j.value("repeats", 3);

    auto sim = ctx.sim();
    sim.record_mode = RecordMode::final_state;
    const auto law = ctx.init(spec.num_populations());
    const double t0 = now_seconds();

    CsvWriter csv(ctx.out_path("bench.csv"), ctx.metadata(),
                  {"N", "wall_seconds", "neuron_steps_per_second", "ratio_vs_prev"});
    json table = json::array();
    double prev_time = 0.0;
    for (const auto n : n_values) {
        sim.n_total = n;
        double best = 1e300;
        double rate = 0.0;
        for (int rep = 0; rep < repeats; ++rep) {
            const auto rec = run_ensemble(spec, sim, law);
            if (rec.info.wall_seconds < best) {
                best = rec.info.wall_seconds;
                rate = rec.info.neuron_steps_per_second;
            }
        }
        const double ratio = prev_time > 0.0 ? best / prev_time : 0.0;
        csv.write_row({double(n), best, rate, ratio});
        table.push_back({{"N", n}, {"wall_seconds", best}, {"rate", rate}, {"ratio", ratio}});
        prev_time = best;
    }
    csv.close();
    ctx.write_manifest("bench", now_seconds() - t0, table);
    return 0;
}

}  // namespace cli
