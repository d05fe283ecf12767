#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace cgcd {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (char c : s) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    return h;
}

// Seed for a named random stream ("scenario", "init", "shuffle", "replay",
// "clustering", ...) at a given step. Streams are independent of each other,
// so any stage can be replayed in isolation from the base seed alone.
inline std::uint64_t stream_seed(std::uint64_t base, std::string_view name, std::uint64_t step = 0) {
    return splitmix64(splitmix64(base ^ fnv1a(name)) + step);
}

using Rng = std::mt19937_64;

inline Rng make_rng(std::uint64_t base, std::string_view name, std::uint64_t step = 0) {
    return Rng(stream_seed(base, name, step));
}

}  // namespace cgcd
