#include "ratenet/network.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iostream>
#include <numeric>
#include <stdexcept>
#include <thread>

#include "ratenet/rng.hpp"

namespace ratenet {

void SimConfig::validate() const {
    if (n_total == 0)
        throw std::invalid_argument("SimConfig: n_total must be >= 1");
    if (n_total > 0xFFFFFFFFull)
        throw std::invalid_argument("SimConfig: n_total exceeds 2^32-1");
    if (!(dt > 0.0))
        throw std::invalid_argument("SimConfig: dt must be > 0");
    if (!(t_end > 0.0))
        throw std::invalid_argument("SimConfig: t_end must be > 0");
    if (n_realizations == 0)
        throw std::invalid_argument("SimConfig: n_realizations must be >= 1");
    if (record_stride == 0)
        throw std::invalid_argument("SimConfig: record_stride must be >= 1");
}

std::vector<std::uint32_t> population_sizes(const ModelSpec& spec, std::uint64_t n_total) {
    const std::size_t p = spec.num_populations();
    std::vector<std::uint32_t> sizes(p);
    std::vector<std::pair<double, std::size_t>> remainders(p);
    std::uint64_t assigned = 0;
    for (std::size_t a = 0; a < p; ++a) {
        const double exact = spec.populations[a].fraction * double(n_total);
        sizes[a] = std::uint32_t(exact);
        remainders[a] = {exact - double(sizes[a]), a};
        assigned += sizes[a];
    }
    // distribute leftover seats by largest fractional part, lower index first on ties
    std::stable_sort(remainders.begin(), remainders.end(),
                     [](auto& x, auto& y) { return x.first > y.first; });
    for (std::size_t k = 0; assigned < n_total; ++k, ++assigned)
        sizes[remainders[k % p].second]++;
    for (std::size_t a = 0; a < p; ++a)
        if (sizes[a] == 0)
            throw std::invalid_argument("population_sizes: population " + std::to_string(a) +
                                        " would be empty; increase n_total");
    return sizes;
}

EnsembleState make_initial_state(const ModelSpec& spec, const SimConfig& sim,
                                 const InitialLaw& init) {
    spec.validate();
    sim.validate();
    const std::size_t p = spec.num_populations();
    if (init.mean.size() != p || init.variance.size() != p)
        throw std::invalid_argument("InitialLaw: dimension mismatch");
    for (double v : init.variance)
        if (v < 0.0)
            throw std::invalid_argument("InitialLaw: negative variance");

    const auto sizes = population_sizes(spec, sim.n_total);
    EnsembleState state;
    state.num_neurons = std::uint32_t(sim.n_total);
    state.num_realizations = sim.n_realizations;
    state.time = 0.0;
    state.population_of.reserve(state.num_neurons);
    for (std::size_t a = 0; a < p; ++a)
        state.population_of.insert(state.population_of.end(), sizes[a], std::uint32_t(a));

    state.voltages.resize(std::size_t(state.num_realizations) * state.num_neurons);
    const CounterRng rng(sim.seed);
    for (std::uint32_t r = 0; r < state.num_realizations; ++r) {
        for (std::uint32_t i = 0; i < state.num_neurons; ++i) {
            const auto a = state.population_of[i];
            const double sd = std::sqrt(init.variance[a]);
            state.at(r, i) =
                init.mean[a] + sd * rng.normal(r, i, 0, CounterRng::Stream::initial_condition);
        }
    }
    return state;
}

namespace {

struct PopLayout {
    std::vector<std::uint32_t> offset;  // size p+1, contiguous population blocks
    std::vector<std::uint32_t> size;
};

PopLayout layout_of(const EnsembleState& state, std::size_t p) {
    PopLayout lay;
    lay.offset.assign(p + 1, 0);
    lay.size.assign(p, 0);
    for (auto a : state.population_of) {
        if (a >= p)
            throw std::invalid_argument("EnsembleState: population index out of range");
        lay.size[a]++;
    }
    for (std::size_t a = 0; a < p; ++a)
        lay.offset[a + 1] = lay.offset[a] + lay.size[a];
    // blocked kernels require population-major neuron order
    if (!std::is_sorted(state.population_of.begin(), state.population_of.end()))
        throw std::invalid_argument("EnsembleState: neurons must be population-major");
    return lay;
}

// drift input common to all neurons of each population at time t:
// c_a = I_a(t) + sum_b J_ab * mean_{i in b} S_b(V_i)
void population_drive(const ModelSpec& spec, const PopLayout& lay, const double* v,
                      double t, double* c) {
    const std::size_t p = spec.num_populations();
    double m[64];
    for (std::size_t b = 0; b < p; ++b) {
        const auto& pop = spec.populations[b];
        const double g = pop.gain, th = pop.threshold;
        double sum = 0.0;
        for (std::uint32_t i = lay.offset[b]; i < lay.offset[b + 1]; ++i)
            sum += normal_cdf(g * v[i] + th);
        m[b] = sum / double(lay.size[b]);
    }
    for (std::size_t a = 0; a < p; ++a) {
        double drive = spec.populations[a].input(t);
        for (std::size_t b = 0; b < p; ++b)
            drive += spec.weight(a, b) * m[b];
        c[a] = drive;
    }
}

}  // namespace

void em_step(EnsembleState& state, const ModelSpec& spec, double dt,
             std::span<const double> noise_draws) {
    const std::size_t p = spec.num_populations();
    if (p > 64)
        throw std::invalid_argument("em_step: more than 64 populations not supported");
    if (noise_draws.size() != state.voltages.size())
        throw std::invalid_argument("em_step: need one draw per realization x neuron");
    const auto lay = layout_of(state, p);
    const double t = state.time;
    const double sqrt_dt = std::sqrt(dt);
    double c[64], lam_sd[64], decay[64];
    for (std::size_t a = 0; a < p; ++a) {
        lam_sd[a] = spec.populations[a].noise(t) * sqrt_dt;
        decay[a] = 1.0 - dt / spec.populations[a].tau;
    }
    for (std::uint32_t r = 0; r < state.num_realizations; ++r) {
        double* v = state.voltages.data() + std::size_t(r) * state.num_neurons;
        const double* xi = noise_draws.data() + std::size_t(r) * state.num_neurons;
        population_drive(spec, lay, v, t, c);
        double checksum = 0.0;
        for (std::size_t a = 0; a < p; ++a) {
            const double dc = dt * c[a];
            for (std::uint32_t i = lay.offset[a]; i < lay.offset[a + 1]; ++i) {
                v[i] = v[i] * decay[a] + dc + lam_sd[a] * xi[i];
                checksum += v[i];
            }
        }
        if (!std::isfinite(checksum))
            throw std::runtime_error("em_step: non-finite state");
    }
    state.time = t + dt;
}

namespace {

struct RealizationStats {
    // per recorded step: per population sum and sum of squares
    std::vector<double> sum, sumsq;
};

class Engine {
public:
    Engine(const ModelSpec& spec, const SimConfig& sim, EnsembleState& state,
           const PopLayout& lay, const std::vector<double>* companion_drive,
           std::vector<double>* companion_voltages)
        : spec_(spec), sim_(sim), state_(state), lay_(lay),
          companion_drive_(companion_drive), comp_volt_(companion_voltages),
          p_(spec.num_populations()), rng_(sim.seed) {
        n_steps_ = std::uint64_t(std::llround(sim.t_end / sim.dt));
        if (n_steps_ == 0)
            n_steps_ = 1;
    }

    std::uint64_t n_steps() const { return n_steps_; }
    double time_of_step(std::uint64_t s) const { return double(s) * sim_.dt; }
    bool recorded(std::uint64_t s) const {
        return s % sim_.record_stride == 0 || s == n_steps_;
    }
    std::uint64_t recorded_count() const {
        return (n_steps_ / sim_.record_stride) + 1 + (n_steps_ % sim_.record_stride != 0);
    }

    // Advance realization r across all steps. Record callbacks are invoked at
    // step 0 (initial state) and after each recorded step.
    template <class RecordFn, class DiscFn>
    void run_realization(std::uint32_t r, RecordFn&& record, DiscFn&& disc) {
        const std::uint32_t n = state_.num_neurons;
        double* v = state_.voltages.data() + std::size_t(r) * n;
        double* w = comp_volt_ ? comp_volt_->data() + std::size_t(r) * n : nullptr;
        std::vector<double> spare(n);  // second Box-Muller component, consumed next step
        double c[64], lam_sd[64], decay[64], comp_c[64];
        const double sqrt_dt = std::sqrt(sim_.dt);
        record(r, 0, 0.0, v, w);
        std::uint64_t rec_index = 1;
        for (std::uint64_t s = 0; s < n_steps_; ++s) {
            const double t = time_of_step(s);
            for (std::size_t a = 0; a < p_; ++a) {
                lam_sd[a] = spec_.populations[a].noise(t) * sqrt_dt;
                decay[a] = 1.0 - sim_.dt / spec_.populations[a].tau;
            }
            population_drive(spec_, lay_, v, t, c);
            if (companion_drive_) {
                const double* fd = companion_drive_->data() + s * p_;
                for (std::size_t a = 0; a < p_; ++a)
                    comp_c[a] = spec_.populations[a].input(t) + fd[a];
            }
            const bool even = (s & 1u) == 0;
            double checksum = 0.0;
            for (std::size_t a = 0; a < p_; ++a) {
                const double dc = sim_.dt * c[a];
                const double dcomp = companion_drive_ ? sim_.dt * comp_c[a] : 0.0;
                for (std::uint32_t i = lay_.offset[a]; i < lay_.offset[a + 1]; ++i) {
                    double xi;
                    if (even) {
                        const auto pair = rng_.normal_pair(r, i, std::uint32_t(s >> 1),
                                                           CounterRng::Stream::path_noise);
                        xi = pair[0];
                        spare[i] = pair[1];
                    } else {
                        xi = spare[i];
                    }
                    const double kick = lam_sd[a] * xi;
                    v[i] = v[i] * decay[a] + dc + kick;
                    checksum += v[i];
                    if (w)
                        w[i] = w[i] * decay[a] + dcomp + kick;
                }
            }
            if (!std::isfinite(checksum))
                throw std::runtime_error("run_ensemble: non-finite state at step " +
                                         std::to_string(s + 1) + " (t=" +
                                         std::to_string(time_of_step(s + 1)) + ")");
            if (w)
                disc(r, s + 1, v, w);
            if (recorded(s + 1)) {
                record(r, rec_index, time_of_step(s + 1), v, w);
                rec_index++;
            }
        }
    }

private:
    const ModelSpec& spec_;
    const SimConfig& sim_;
    EnsembleState& state_;
    const PopLayout& lay_;
    const std::vector<double>* companion_drive_;
    std::vector<double>* comp_volt_;
    std::size_t p_;
    CounterRng rng_;
    std::uint64_t n_steps_;
};

unsigned resolve_threads(unsigned requested, std::uint32_t n_realizations) {
    unsigned t = requested ? requested : std::max(1u, std::thread::hardware_concurrency());
    return std::min<unsigned>(t, n_realizations);
}

}  // namespace

PopulationStatsSample empirical_stats(const EnsembleState& state) {
    std::size_t p = 0;
    for (auto a : state.population_of)
        p = std::max<std::size_t>(p, a + 1);
    PopulationStatsSample out;
    out.t = state.time;
    out.mean.assign(p, 0.0);
    out.var.assign(p, 0.0);
    std::vector<double> sum(p, 0.0), sumsq(p, 0.0);
    std::vector<std::uint64_t> count(p, 0);
    for (std::uint32_t r = 0; r < state.num_realizations; ++r) {
        for (std::uint32_t i = 0; i < state.num_neurons; ++i) {
            const double v = state.at(r, i);
            const auto a = state.population_of[i];
            sum[a] += v;
            sumsq[a] += v * v;
            count[a]++;
        }
    }
    for (std::size_t a = 0; a < p; ++a) {
        if (count[a] == 0)
            throw std::invalid_argument("empirical_stats: empty population " + std::to_string(a));
        if (count[a] < 2 * state.num_realizations)
            throw std::invalid_argument("empirical_stats: population " + std::to_string(a) +
                                        " needs at least 2 neurons");
    }
    // variance within each realization, averaged across realizations: in an
    // oscillatory regime realizations decohere in phase, so pooling voltages
    // would measure the cycle amplitude instead of the spread around the mean
    std::vector<double> var_acc(p, 0.0);
    std::vector<double> r_sum(p), r_sumsq(p);
    std::vector<std::uint32_t> r_count(p);
    for (std::uint32_t r = 0; r < state.num_realizations; ++r) {
        std::fill(r_sum.begin(), r_sum.end(), 0.0);
        std::fill(r_sumsq.begin(), r_sumsq.end(), 0.0);
        std::fill(r_count.begin(), r_count.end(), 0u);
        for (std::uint32_t i = 0; i < state.num_neurons; ++i) {
            const double v = state.at(r, i);
            const auto a = state.population_of[i];
            r_sum[a] += v;
            r_sumsq[a] += v * v;
            r_count[a]++;
        }
        for (std::size_t a = 0; a < p; ++a) {
            const double n = double(r_count[a]);
            var_acc[a] += (r_sumsq[a] - r_sum[a] * r_sum[a] / n) / (n - 1.0);
        }
    }
    for (std::size_t a = 0; a < p; ++a) {
        out.mean[a] = sum[a] / double(count[a]);
        out.var[a] = std::max(0.0, var_acc[a] / double(state.num_realizations));
    }
    return out;
}

namespace {

TrajectoryRecord run_engine(const ModelSpec& spec, const SimConfig& sim, const InitialLaw& init,
                            const MomentTrajectory* moments, CoupledResult* coupled) {
    spec.validate();
    sim.validate();
    if (sim.dt > 0.01)
        std::cerr << "[ratenet] warning: dt=" << sim.dt
                  << " exceeds the recommended fixed step 0.01\n";
    const std::size_t p = spec.num_populations();

    EnsembleState state = make_initial_state(spec, sim, init);
    const PopLayout lay = layout_of(state, p);

    // byte budget check before any trajectory allocation
    const std::uint64_t n_steps64 = std::uint64_t(std::llround(sim.t_end / sim.dt));
    const std::uint64_t n_steps = n_steps64 ? n_steps64 : 1;
    const std::uint64_t n_rec = n_steps / sim.record_stride + 1 +
                                (n_steps % sim.record_stride != 0 ? 1 : 0);
    if (sim.record_mode == RecordMode::full_trajectories) {
        const std::uint64_t bytes =
            n_rec * std::uint64_t(sim.n_realizations) * sim.n_total * sizeof(double);
        if (bytes > sim.memory_cap_bytes)
            throw std::runtime_error(
                "run_ensemble: full_trajectories would need " + std::to_string(bytes) +
                " bytes (cap " + std::to_string(sim.memory_cap_bytes) +
                "); raise memory_cap_bytes or switch to population_stats");
    }

    // companion drive table for the coupling construction
    std::vector<double> companion_drive;
    std::vector<double> companion_voltages;
    if (moments) {
        companion_drive.resize(n_steps * p);
        for (std::uint64_t s = 0; s < n_steps; ++s) {
            const MomentState law = moments->at(std::min(double(s) * sim.dt, moments->t_end()));
            for (std::size_t a = 0; a < p; ++a) {
                double drive = 0.0;
                for (std::size_t b = 0; b < p; ++b)
                    drive += spec.weight(a, b) * closure_f(law.mean[b], law.variance[b],
                                                           spec.populations[b].gain,
                                                           spec.populations[b].threshold);
                companion_drive[s * p + a] = drive;
            }
        }
        companion_voltages = state.voltages;  // same initial samples as the network
    }

    TrajectoryRecord rec;
    rec.mode = sim.record_mode;
    rec.times.clear();

    const bool want_stats = sim.record_mode == RecordMode::population_stats;
    const bool want_full = sim.record_mode == RecordMode::full_trajectories;

    std::vector<RealizationStats> stats;
    if (want_stats) {
        stats.resize(sim.n_realizations);
        for (auto& st : stats) {
            st.sum.assign(n_rec * p, 0.0);
            st.sumsq.assign(n_rec * p, 0.0);
        }
    }
    if (want_full)
        rec.full.assign(n_rec, std::vector<double>(state.voltages.size()));

    std::vector<double> disc_curves;  // (n_steps+1) per realization
    if (coupled)
        disc_curves.assign(std::size_t(sim.n_realizations) * (n_steps + 1), 0.0);

    if (p > 64)
        throw std::invalid_argument("run_ensemble: more than 64 populations not supported");

    Engine engine(spec, sim, state, lay, moments ? &companion_drive : nullptr,
                  moments ? &companion_voltages : nullptr);

    // recorded sample times, fixed up front so worker threads never touch them
    std::vector<double> rec_times;
    rec_times.reserve(n_rec);
    rec_times.push_back(0.0);
    for (std::uint64_t s = 1; s <= n_steps; ++s)
        if (s % sim.record_stride == 0 || s == n_steps)
            rec_times.push_back(double(s) * sim.dt);

    auto record = [&](std::uint32_t r, std::uint64_t rec_index, double /*t*/, const double* v,
                      const double*) {
        if (want_stats) {
            auto& st = stats[r];
            for (std::size_t a = 0; a < p; ++a) {
                double sum = 0.0, sumsq = 0.0;
                for (std::uint32_t i = lay.offset[a]; i < lay.offset[a + 1]; ++i) {
                    sum += v[i];
                    sumsq += v[i] * v[i];
                }
                st.sum[rec_index * p + a] = sum;
                st.sumsq[rec_index * p + a] = sumsq;
            }
        }
        if (want_full)
            std::copy(v, v + state.num_neurons,
                      rec.full[rec_index].begin() + std::size_t(r) * state.num_neurons);
    };
    auto disc = [&](std::uint32_t r, std::uint64_t step, const double* v, const double* w) {
        double worst = 0.0;
        for (std::uint32_t i = 0; i < state.num_neurons; ++i)
            worst = std::max(worst, std::abs(v[i] - w[i]));
        disc_curves[std::size_t(r) * (n_steps + 1) + step] = worst;
    };

    const auto t_start = std::chrono::steady_clock::now();

    const unsigned n_threads = resolve_threads(sim.threads, sim.n_realizations);
    std::exception_ptr error;
    if (n_threads <= 1) {
        for (std::uint32_t r = 0; r < sim.n_realizations; ++r)
            engine.run_realization(r, record, disc);
    } else {
        std::vector<std::thread> pool;
        std::vector<std::exception_ptr> errors(n_threads);
        for (unsigned k = 0; k < n_threads; ++k) {
            pool.emplace_back([&, k]() {
                try {
                    for (std::uint32_t r = k; r < sim.n_realizations; r += n_threads)
                        engine.run_realization(r, record, disc);
                } catch (...) {
                    errors[k] = std::current_exception();
                }
            });
        }
        for (auto& th : pool)
            th.join();
        for (auto& e : errors)
            if (e && !error)
                error = e;
    }
    if (error)
        std::rethrow_exception(error);
    state.time = double(n_steps) * sim.dt;

    const auto t_stop = std::chrono::steady_clock::now();
    rec.info.steps = n_steps;
    rec.info.wall_seconds = std::chrono::duration<double>(t_stop - t_start).count();
    rec.info.neuron_steps_per_second =
        double(n_steps) * double(sim.n_total) * double(sim.n_realizations) /
        std::max(rec.info.wall_seconds, 1e-12);

    rec.times = rec_times;
    if (want_stats) {
        rec.stats.resize(rec_times.size());
        for (std::size_t k = 0; k < rec_times.size(); ++k) {
            auto& out = rec.stats[k];
            out.t = rec_times[k];
            out.mean.assign(p, 0.0);
            out.var.assign(p, 0.0);
            for (std::size_t a = 0; a < p; ++a) {
                const double n = double(lay.size[a]);
                double mean_acc = 0.0, var_acc = 0.0;
                // merge in realization order: result independent of thread
                // count; variance within each realization (phases decohere
                // across realizations in oscillatory regimes)
                for (std::uint32_t r = 0; r < sim.n_realizations; ++r) {
                    const double sum = stats[r].sum[k * p + a];
                    const double sumsq = stats[r].sumsq[k * p + a];
                    mean_acc += sum / n;
                    if (n > 1.5)
                        var_acc += std::max(0.0, (sumsq - sum * sum / n) / (n - 1.0));
                }
                out.mean[a] = mean_acc / double(sim.n_realizations);
                out.var[a] = var_acc / double(sim.n_realizations);
            }
        }
    }

    if (coupled) {
        coupled->sup_discrepancy.assign(sim.n_realizations, 0.0);
        coupled->times.resize(n_steps + 1);
        coupled->running_sup.assign(n_steps + 1, 0.0);
        for (std::uint64_t s = 0; s <= n_steps; ++s)
            coupled->times[s] = std::min(double(s) * sim.dt, sim.t_end);
        for (std::uint32_t r = 0; r < sim.n_realizations; ++r) {
            double sup = 0.0;
            for (std::uint64_t s = 0; s <= n_steps; ++s) {
                sup = std::max(sup, disc_curves[std::size_t(r) * (n_steps + 1) + s]);
                coupled->running_sup[s] = std::max(coupled->running_sup[s], sup);
            }
            coupled->sup_discrepancy[r] = sup;
        }
        coupled->mean_sup_discrepancy =
            std::accumulate(coupled->sup_discrepancy.begin(), coupled->sup_discrepancy.end(), 0.0) /
            double(sim.n_realizations);
        coupled->companion_final = state;
        coupled->companion_final.voltages = companion_voltages;
    }

    rec.final_state = std::move(state);
    return rec;
}

}  // namespace

TrajectoryRecord run_ensemble(const ModelSpec& spec, const SimConfig& sim,
                              const InitialLaw& init) {
    return run_engine(spec, sim, init, nullptr, nullptr);
}

CoupledResult run_coupled(const ModelSpec& spec, const SimConfig& sim, const InitialLaw& init,
                          const MomentTrajectory& moments) {
    if (moments.empty() || moments.t_end() + 1e-9 < sim.t_end)
        throw std::invalid_argument("run_coupled: moment trajectory does not cover [0, t_end]");
    CoupledResult result;
    result.network = run_engine(spec, sim, init, &moments, &result);
    return result;
}

std::vector<double> network_drift_jacobian(const ModelSpec& spec,
                                           std::span<const double> voltages,
                                           std::span<const std::uint32_t> population_of,
                                           double t) {
    const std::size_t n = voltages.size();
    const std::size_t p = spec.num_populations();
    std::vector<std::uint32_t> sizes(p, 0);
    for (auto a : population_of)
        sizes[a]++;
    std::vector<double> jac(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const auto a = population_of[i];
        jac[i * n + i] -= 1.0 / spec.populations[a].tau;
        for (std::size_t j = 0; j < n; ++j) {
            const auto b = population_of[j];
            const auto& pop = spec.populations[b];
            const double sprime =
                pop.gain * normal_pdf(pop.gain * voltages[j] + pop.threshold);
            jac[i * n + j] += spec.weight(a, b) / double(sizes[b]) * sprime;
        }
    }
    (void)t;
    return jac;
}

}  // namespace ratenet
