#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ratenet/meanfield.hpp"
#include "ratenet/model.hpp"

namespace ratenet {

enum class RecordMode { full_trajectories, population_stats, final_state };

struct SimConfig {
    std::uint64_t n_total = 0;
    double dt = 0.01;
    double t_end = 1.0;
    std::uint32_t n_realizations = 1;
    std::uint64_t seed = 0;
    RecordMode record_mode = RecordMode::population_stats;
    std::uint32_t record_stride = 1;  // keep every k-th step in records
    unsigned threads = 0;             // 0 = hardware concurrency; never affects results
    std::uint64_t memory_cap_bytes = std::uint64_t(4) << 30;

    void validate() const;
};

/// Per-population i.i.d. Gaussian initial condition.
struct InitialLaw {
    std::vector<double> mean;
    std::vector<double> variance;
};

/// Membrane potentials of n neurons across r independent realizations.
/// Neurons are ordered population-major; population_of is constant over a run.
struct EnsembleState {
    std::uint32_t num_neurons = 0;
    std::uint32_t num_realizations = 0;
    double time = 0.0;
    std::vector<double> voltages;               // num_realizations * num_neurons
    std::vector<std::uint32_t> population_of;   // num_neurons

    double& at(std::uint32_t realization, std::uint32_t neuron) {
        return voltages[std::size_t(realization) * num_neurons + neuron];
    }
    double at(std::uint32_t realization, std::uint32_t neuron) const {
        return voltages[std::size_t(realization) * num_neurons + neuron];
    }
};

/// N_a = round(fraction_a * N) with largest-remainder correction so the
/// sizes sum to N. Throws if any population would be empty.
std::vector<std::uint32_t> population_sizes(const ModelSpec& spec, std::uint64_t n_total);

/// Population-major state with V(0) ~ Gaussian(init) drawn from the
/// initial_condition stream of seed.
EnsembleState make_initial_state(const ModelSpec& spec, const SimConfig& sim,
                                 const InitialLaw& init);

/// One Euler-Maruyama step with caller-provided standard-normal draws
/// (one per realization x neuron, realization-major). Two-phase update:
/// population firing means are computed from the pre-step state.
void em_step(EnsembleState& state, const ModelSpec& spec, double dt,
             std::span<const double> noise_draws);

struct PopulationStatsSample {
    double t = 0.0;
    // per population: mean over neurons, averaged across realizations
    std::vector<double> mean;
    // unbiased variance over neurons within a realization, averaged across
    // realizations (realizations may decohere in phase, so voltages are
    // never pooled across them)
    std::vector<double> var;
};

struct RunInfo {
    double wall_seconds = 0.0;
    double neuron_steps_per_second = 0.0;
    std::uint64_t steps = 0;
};

struct TrajectoryRecord {
    RecordMode mode = RecordMode::population_stats;
    std::vector<double> times;                       // recorded sample times
    std::vector<PopulationStatsSample> stats;        // population_stats mode
    std::vector<std::vector<double>> full;           // full mode: per time, r*n voltages
    EnsembleState final_state;                       // always filled
    RunInfo info;
};

/// Simulate the network SDE over [0, t_end]. Deterministic in
/// (spec, sim, init) including sim.seed, for any thread count.
TrajectoryRecord run_ensemble(const ModelSpec& spec, const SimConfig& sim,
                              const InitialLaw& init);

/// Per-population mean and within-realization unbiased variance of a
/// state, averaged across realizations.
PopulationStatsSample empirical_stats(const EnsembleState& state);

struct CoupledResult {
    std::vector<double> sup_discrepancy;   // per realization: sup_t max_i |V - Vbar|
    double mean_sup_discrepancy = 0.0;
    std::vector<double> times;             // recorded step times
    std::vector<double> running_sup;       // sup over [0, t], max across realizations
    TrajectoryRecord network;              // per sim.record_mode
    EnsembleState companion_final;
};

/// Coupling construction: each neuron's mean-field companion is driven by
/// the same Brownian increments and initial sample; the companion drift
/// uses the Gaussian closure along the supplied moment trajectory.
CoupledResult run_coupled(const ModelSpec& spec, const SimConfig& sim, const InitialLaw& init,
                          const MomentTrajectory& moments);

/// Dense N x N Jacobian of the network drift at the given voltages, row-major.
std::vector<double> network_drift_jacobian(const ModelSpec& spec,
                                           std::span<const double> voltages,
                                           std::span<const std::uint32_t> population_of,
                                           double t);

}  // namespace ratenet
