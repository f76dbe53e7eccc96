#pragma once

#include <cstdint>
#include <random>

namespace pdnet {

using Rng = std::mt19937_64;

/// SplitMix64 finalizer; used to derive independent stream seeds.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Counter-based stream derivation: the stream for (seed, purpose, index)
/// does not depend on how many other streams were drawn before it.
constexpr std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t purpose,
                                    std::uint64_t index = 0) noexcept {
    return mix64(mix64(mix64(seed) ^ purpose) ^ index);
}

inline Rng make_stream(std::uint64_t seed, std::uint64_t purpose, std::uint64_t index = 0) {
    return Rng(stream_seed(seed, purpose, index));
}

// Purpose tags keep streams for different jobs apart.
namespace streams {
inline constexpr std::uint64_t synth = 0x53594e5448ULL;
inline constexpr std::uint64_t split = 0x53504c4954ULL;
inline constexpr std::uint64_t init = 0x494e4954ULL;
inline constexpr std::uint64_t shuffle = 0x5348554646ULL;
}  // namespace streams

}  // namespace pdnet
