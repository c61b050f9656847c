#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace lfm {

/// SplitMix64 finalizer, used to derive independent stream seeds.
inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// FNV-1a of a stream label.
constexpr std::uint64_t stream_tag(std::string_view label) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (char ch : label) {
        h ^= static_cast<unsigned char>(ch);
        h *= 0x100000001b3ULL;
    }
    return h;
}

/// Seed for the named sub-stream of a run seed. Distinct labels never share a
/// generator state, so source, target, time and initialization draws stay
/// decoupled.
inline std::uint64_t derive_seed(std::uint64_t seed, std::string_view label) {
    return splitmix64(splitmix64(seed) ^ stream_tag(label));
}

using Engine = std::mt19937_64;

inline Engine make_engine(std::uint64_t seed, std::string_view label) { return Engine(derive_seed(seed, label)); }

}  // namespace lfm
