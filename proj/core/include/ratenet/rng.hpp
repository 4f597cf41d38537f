#pragma once

#include <array>
#include <cstdint>

namespace ratenet {

/// Philox4x32-10 keyed counter block cipher (Salmon et al., SC 2011).
/// Stateless: every 128-bit counter maps to 128 independent output bits
/// under a 64-bit key, so streams indexed by (realization, neuron, step)
/// can be generated in any order, on any number of threads, with
/// bit-identical results.
std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> counter,
                                        std::array<std::uint32_t, 2> key);

/// Standard-normal draws addressed by (realization, neuron, step) plus a
/// stream id separating independent uses of the same key (path noise,
/// initial conditions, ...). One Philox block yields a Box-Muller pair,
/// consumed by consecutive steps.
class CounterRng {
public:
    enum class Stream : std::uint32_t {
        path_noise = 0,
        initial_condition = 1,
        scratch = 2,
    };

    explicit CounterRng(std::uint64_t seed) : seed_(seed) {}

    std::uint64_t seed() const { return seed_; }

    /// The Box-Muller pair generated from block (realization, neuron, pair).
    std::array<double, 2> normal_pair(std::uint32_t realization, std::uint32_t neuron,
                                      std::uint32_t pair_index, Stream stream) const;

    /// The standard-normal increment for one Euler step:
    /// normal_pair(..., step/2)[step%2]. Pure function of its arguments.
    double normal(std::uint32_t realization, std::uint32_t neuron,
                  std::uint32_t step, Stream stream) const {
        return normal_pair(realization, neuron, step >> 1, stream)[step & 1u];
    }

    /// Uniform on (0,1), one per counter block.
    double uniform(std::uint32_t realization, std::uint32_t neuron,
                   std::uint32_t index, Stream stream) const;

private:
    std::uint64_t seed_;
};

}  // namespace ratenet
