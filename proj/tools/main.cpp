#include <cstdint>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "commands.hpp"

int main(int argc, char** argv) {
    CLI::App app{"ratenet: noisy firing-rate networks and their Gaussian mean-field limit"};
    app.require_subcommand(1);

    struct CommonArgs {
        std::string config;
        std::string out = ".";
        std::vector<std::string> overrides;
        std::optional<std::uint64_t> seed;
        unsigned threads = 0;
    };

    auto add_common = [](CLI::App* sub, CommonArgs& args) {
        sub->add_option("--config", args.config, "experiment config (JSON)");
        sub->add_option("--out", args.out, "output directory");
        sub->add_option("--override", args.overrides,
                        "config override key=value (repeatable, dotted keys)");
        sub->add_option_function<std::uint64_t>(
            "--seed", [&args](const std::uint64_t& s) { args.seed = s; }, "PRNG seed");
        sub->add_option("--threads", args.threads, "worker threads (speed only, never results)");
    };

    // common shorthand overrides
    auto add_shorthands = [](CLI::App* sub, CommonArgs& args) {
        sub->add_option_function<std::uint64_t>(
            "--n", [&args](const std::uint64_t& n) {
                args.overrides.push_back("sim.n_total=" + std::to_string(n));
            },
            "network size (sim.n_total)");
        sub->add_option_function<double>(
            "--t", [&args](const double& t) {
                args.overrides.push_back("sim.t_end=" + std::to_string(t));
            },
            "time horizon (sim.t_end)");
        sub->add_option_function<double>(
            "--dt", [&args](const double& dt) {
                args.overrides.push_back("sim.dt=" + std::to_string(dt));
            },
            "time step (sim.dt)");
    };

    CommonArgs net, mf, sweep, converge, spectrum, validate, bench;
    auto* c_net = app.add_subcommand("simulate-net", "Euler-Maruyama network ensemble");
    add_common(c_net, net);
    add_shorthands(c_net, net);
    auto* c_mf = app.add_subcommand("simulate-mf", "moment equations of the mean-field limit");
    add_common(c_mf, mf);
    add_shorthands(c_mf, mf);
    auto* c_sweep = app.add_subcommand("sweep", "attractor census / branch continuation");
    add_common(c_sweep, sweep);
    auto* c_conv = app.add_subcommand("converge", "coupled network/mean-field discrepancy vs N");
    add_common(c_conv, converge);
    auto* c_spec = app.add_subcommand("spectrum", "power spectra across noise levels");
    add_common(c_spec, spectrum);
    auto* c_val = app.add_subcommand("validate", "Gaussianity and independence tests");
    add_common(c_val, validate);
    auto* c_bench = app.add_subcommand("bench", "throughput scaling table");
    add_common(c_bench, bench);

    CLI11_PARSE(app, argc, argv);

    try {
        if (c_net->parsed()) {
            auto ctx = cli::make_context(net.config, net.overrides, net.seed, net.out, net.threads);
            return cli::cmd_simulate_net(ctx);
        }
        if (c_mf->parsed()) {
            auto ctx = cli::make_context(mf.config, mf.overrides, mf.seed, mf.out, mf.threads);
            return cli::cmd_simulate_mf(ctx);
        }
        if (c_sweep->parsed()) {
            auto ctx = cli::make_context(sweep.config, sweep.overrides, sweep.seed, sweep.out,
                                         sweep.threads);
            return cli::cmd_sweep(ctx);
        }
        if (c_conv->parsed()) {
            auto ctx = cli::make_context(converge.config, converge.overrides, converge.seed,
                                         converge.out, converge.threads);
            return cli::cmd_converge(ctx);
        }
        if (c_spec->parsed()) {
            auto ctx = cli::make_context(spectrum.config, spectrum.overrides, spectrum.seed,
                                         spectrum.out, spectrum.threads);
            return cli::cmd_spectrum(ctx);
        }
        if (c_val->parsed()) {
            auto ctx = cli::make_context(validate.config, validate.overrides, validate.seed,
                                         validate.out, validate.threads);
            return cli::cmd_validate(ctx);
        }
        if (c_bench->parsed()) {
            auto ctx = cli::make_context(bench.config, bench.overrides, bench.seed, bench.out,
                                         bench.threads);
            return cli::cmd_bench(ctx);
        }
    } catch (const std::exception& e) {
        std::cerr << "ratenet: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
