#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include <ratenet/meanfield.hpp>
#include <ratenet/network.hpp>

namespace cli {

/// Resolved run context shared by all subcommands: parsed config with
/// overrides applied, output directory, and bookkeeping for the manifest.
struct Context {
    nlohmann::json config;
    std::string out_dir;
    std::uint64_t seed = 0;
    unsigned threads = 0;

    ratenet::ModelSpec model() const;
    ratenet::SimConfig sim() const;
    ratenet::OdeConfig ode() const;
    ratenet::InitialLaw init(std::size_t populations) const;
    ratenet::MomentState init_moments(std::size_t populations) const;

    std::string out_path(const std::string& name) const;
    std::vector<std::pair<std::string, std::string>> metadata() const;
    void write_manifest(const std::string& command, double wall_seconds,
                        const nlohmann::json& extra = {}) const;
};

Context make_context(const std::string& config_path, const std::vector<std::string>& overrides,
                     const std::optional<std::uint64_t>& seed, const std::string& out_dir,
                     unsigned threads);

int cmd_simulate_net(Context& ctx);
int cmd_simulate_mf(Context& ctx);
int cmd_sweep(Context& ctx);
int cmd_converge(Context& ctx);
int cmd_spectrum(Context& ctx);
int cmd_validate(Context& ctx);
int cmd_bench(Context& ctx);

}  // namespace cli
