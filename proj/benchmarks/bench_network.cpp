#include <benchmark/benchmark.h>

#include <ratenet/network.hpp>

using namespace ratenet;

namespace {

ModelSpec ei_system(double lambda) {
    ModelSpec spec;
    PopulationParams pop;
    pop.fraction = 0.5;
    pop.noise = lambda;
    spec.populations = {pop, pop};
    spec.populations[1].input = -3.0;
    spec.connectivity = {15.0, -12.0, 16.0, -5.0};
    spec.label = "bench-ei";
    return spec;
}

}  // namespace

// one Euler-Maruyama step over the whole ensemble, per network size
static void bm_em_step(benchmark::State& state) {
    const auto spec = ei_system(1.2);
    SimConfig sim;
    sim.n_total = std::uint64_t(state.range(0));
    sim.dt = 0.01;
    sim.t_end = 1.0;
    sim.seed = 7;
    InitialLaw law{{0.5, 0.5}, {1.0, 1.0}};
    auto ens = make_initial_state(spec, sim, law);
    std::vector<double> noise(ens.voltages.size(), 0.3);
    for (auto _ : state) {
        em_step(ens, spec, sim.dt, noise);
        benchmark::DoNotOptimize(ens.voltages.data());
    }
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(bm_em_step)->Arg(1000)->Arg(10000)->Arg(100000);

// full run including counter-based noise generation
static void bm_run_ensemble(benchmark::State& state) {
    const auto spec = ei_system(1.2);
    SimConfig sim;
    sim.n_total = std::uint64_t(state.range(0));
    sim.dt = 0.01;
    sim.t_end = 1.0;
    sim.seed = 7;
    sim.record_mode = RecordMode::final_state;
    sim.threads = 1;
    InitialLaw law{{0.5, 0.5}, {1.0, 1.0}};
    for (auto _ : state) {
        const auto rec = run_ensemble(spec, sim, law);
        benchmark::DoNotOptimize(rec.final_state.voltages.data());
    }
    state.SetItemsProcessed(state.iterations() * state.range(0) * 100);
}
BENCHMARK(bm_run_ensemble)->Arg(1000)->Arg(10000)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
