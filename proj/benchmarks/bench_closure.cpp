#include <benchmark/benchmark.h>

#include <ratenet/model.hpp>
#include <ratenet/rng.hpp>

using namespace ratenet;

static void bm_sigmoid(benchmark::State& state) {
    double x = -4.0;
    for (auto _ : state) {
        benchmark::DoNotOptimize(sigmoid(x, 1.3, 0.2));
        x += 1e-4;
        if (x > 4.0)
            x = -4.0;
    }
}
BENCHMARK(bm_sigmoid);

static void bm_closure_f(benchmark::State& state) {
    double mu = -3.0;
    for (auto _ : state) {
        benchmark::DoNotOptimize(closure_f(mu, 0.72, 1.0, 0.0));
        mu += 1e-4;
        if (mu > 3.0)
            mu = -3.0;
    }
}
BENCHMARK(bm_closure_f);

static void bm_philox_normal_pair(benchmark::State& state) {
    const CounterRng rng(42);
    std::uint32_t i = 0;
    for (auto _ : state) {
        benchmark::DoNotOptimize(
            rng.normal_pair(0, i++, 17, CounterRng::Stream::path_noise));
    }
}
BENCHMARK(bm_philox_normal_pair);
