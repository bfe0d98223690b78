#pragma once

#include <cstdint>
#include <random>
#include <span>

namespace dulo {

using Rng = std::mt19937_64;

// splitmix64 finalizer; used to derive independent stream seeds from a
// global seed plus structural coordinates (sample index, block id, ...).
inline std::uint64_t mix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a) {
    return mix64(mix64(seed) ^ mix64(a + 0x6a09e667f3bcc909ULL));
}

inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
    return mix_seed(mix_seed(seed, a), b);
}

// Order-sensitive FNV-1a over a span of indices, folded with a seed.
// Used by the per-subset proxy seed policy.
inline std::uint64_t hash_indices(std::uint64_t seed, std::span<const int> indices) {
    std::uint64_t h = 0xcbf29ce484222325ULL ^ mix64(seed);
    for (int idx : indices) {
        h ^= static_cast<std::uint64_t>(static_cast<std::uint32_t>(idx));
        h *= 0x100000001b3ULL;
    }
    return mix64(h);
}

}  // namespace dulo
