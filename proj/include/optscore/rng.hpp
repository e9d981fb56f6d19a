#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace optscore {

/// Engine used for every random draw in the library. Paired with the Boost
/// distributions (rather than the std:: ones) the stream of variates is the
/// same on every platform.
using Engine = std::mt19937_64;

namespace detail {

constexpr std::uint64_t fnv1a(std::string_view s) noexcept {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (char c : s) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    return h;
}

constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

}  // namespace detail

/// Independent stream keyed by (seed, name, index). Distinct names or indices
/// give statistically independent engines, so Monte Carlo tasks can run in any
/// order and still reproduce.
inline Engine make_stream(std::uint64_t seed, std::string_view name, std::uint64_t index = 0) {
    const std::uint64_t a = detail::splitmix64(seed);
    const std::uint64_t b = detail::splitmix64(detail::fnv1a(name) ^ a);
    const std::uint64_t c = detail::splitmix64(index + b);
    std::seed_seq seq{static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(a >> 32),
                      static_cast<std::uint32_t>(b), static_cast<std::uint32_t>(b >> 32),
                      static_cast<std::uint32_t>(c), static_cast<std::uint32_t>(c >> 32)};
    return Engine(seq);
}

}  // namespace optscore
