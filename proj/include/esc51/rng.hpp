#pragma once

#include <cstdint>
#include <random>

namespace esc51 {

// All stochastic components draw from this engine so a seed fixes a whole run.
using Rng = std::mt19937_64;

// Uniform double in [0, 1) built from the top 53 bits; identical on every
// standard library, unlike std::uniform_real_distribution.
inline double uniform01(Rng& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

// Uniform integer in [0, n) via multiply-shift.
inline std::uint64_t uniform_index(Rng& rng, std::uint64_t n) {
    return static_cast<std::uint64_t>((static_cast<unsigned __int128>(rng()) * n) >> 64);
}

// Independent child stream: seed and stream id are mixed through seed_seq.
inline Rng derive_rng(std::uint64_t seed, std::uint32_t stream) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), stream,
                      0x5eedu};
    return Rng(seq);
}

}  // namespace esc51
