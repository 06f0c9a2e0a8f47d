#pragma once

// Portable seeded draws. The standard distributions are implementation
// defined, so anything that must reproduce across toolchains goes through
// these helpers instead.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <utility>
#include <vector>

namespace raunet {

// Uniform integer in [0, n), n > 0, by rejection sampling.
inline std::uint64_t uniform_index(std::mt19937_64& rng, std::uint64_t n) {
    const std::uint64_t limit = std::mt19937_64::max() - (std::mt19937_64::max() % n + 1) % n;
    std::uint64_t r;
    do {
        r = rng();
    } while (r > limit);
    return r % n;
}

// Uniform double in [0, 1) from the top 53 bits of one draw.
inline double uniform_unit(std::mt19937_64& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

// Standard normal via Box-Muller, two draws per value.
inline double standard_normal(std::mt19937_64& rng) {
    const double u1 = 1.0 - uniform_unit(rng);  // (0, 1]
    const double u2 = uniform_unit(rng);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

// Fisher-Yates.
template <typename V>
void shuffle_in_place(std::vector<V>& values, std::mt19937_64& rng) {
    for (std::size_t i = values.size(); i > 1; --i) {
        const std::size_t j = static_cast<std::size_t>(uniform_index(rng, i));
        std::swap(values[i - 1], values[j]);
    }
}

}  // namespace raunet
