#include "ratenet/rng.hpp"

#include <cmath>
#include <numbers>

namespace ratenet {

namespace {

constexpr std::uint32_t kWeylA = 0x9E3779B9u;
constexpr std::uint32_t kWeylB = 0xBB67AE85u;
constexpr std::uint32_t kMulA = 0xD2511F53u;
constexpr std::uint32_t kMulB = 0xCD9E8D57u;

inline void philox_round(std::array<std::uint32_t, 4>& x, const std::array<std::uint32_t, 2>& k) {
    const std::uint64_t p0 = std::uint64_t(kMulA) * x[0];
    const std::uint64_t p1 = std::uint64_t(kMulB) * x[2];
    const auto hi0 = std::uint32_t(p0 >> 32), lo0 = std::uint32_t(p0);
    const auto hi1 = std::uint32_t(p1 >> 32), lo1 = std::uint32_t(p1);
    x = {hi1 ^ x[1] ^ k[0], lo1, hi0 ^ x[3] ^ k[1], lo0};
}

// 53-bit mantissa mapped into the open interval (0,1); never returns 0 or 1
inline double u64_to_open01(std::uint64_t x) {
    return double(x >> 11) * 0x1.0p-53 + 0x1.0p-54;
}

}  // namespace

std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> counter,
                                        std::array<std::uint32_t, 2> key) {
    for (int round = 0; round < 10; ++round) {
        philox_round(counter, key);
        key[0] += kWeylA;
        key[1] += kWeylB;
    }
    return counter;
}

std::array<double, 2> CounterRng::normal_pair(std::uint32_t realization, std::uint32_t neuron,
                                              std::uint32_t pair_index, Stream stream) const {
    const std::array<std::uint32_t, 4> ctr = {neuron, realization, pair_index,
                                              static_cast<std::uint32_t>(stream)};
    const std::array<std::uint32_t, 2> key = {std::uint32_t(seed_), std::uint32_t(seed_ >> 32)};
    const auto w = philox4x32(ctr, key);
    const double u1 = u64_to_open01((std::uint64_t(w[0]) << 32) | w[1]);
    const double u2 = u64_to_open01((std::uint64_t(w[2]) << 32) | w[3]);
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * std::numbers::pi * u2;
    return {r * std::cos(theta), r * std::sin(theta)};
}

double CounterRng::uniform(std::uint32_t realization, std::uint32_t neuron,
                           std::uint32_t index, Stream stream) const {
    const std::array<std::uint32_t, 4> ctr = {neuron, realization, index,
                                              0x80000000u | static_cast<std::uint32_t>(stream)};
    const std::array<std::uint32_t, 2> key = {std::uint32_t(seed_), std::uint32_t(seed_ >> 32)};
    const auto w = philox4x32(ctr, key);
    return u64_to_open01((std::uint64_t(w[0]) << 32) | w[1]);
}

}  // namespace ratenet
