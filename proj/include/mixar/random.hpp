#pragma once

// Counter-based random numbers. Every draw is a pure function of
// (seed, stream, counter), so results never depend on evaluation order
// or on how work is split across threads.

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numbers>

namespace mixar {

/// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept
{
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Order-sensitive hash of a list of integers, used to derive child seeds.
constexpr std::uint64_t hash_seed(std::initializer_list<std::uint64_t> parts) noexcept
{
    std::uint64_t h = 0x6a09e667f3bcc908ULL;
    for (auto p : parts) h = mix64(h ^ mix64(p));
    return h;
}

/// Maps 64 random bits to the open interval (0, 1).
constexpr double to_unit_open(std::uint64_t bits) noexcept
{
    return (static_cast<double>(bits >> 11) + 0.5) * 0x1.0p-53;
}

/// Uniform (0,1) variate at position `counter` of `stream`.
inline double counter_uniform(std::uint64_t seed, std::uint64_t stream, std::uint64_t counter) noexcept
{
    return to_unit_open(hash_seed({seed, stream, counter}));
}

/// Standard normal variate at position `counter` of `stream` (Box-Muller).
inline double counter_normal(std::uint64_t seed, std::uint64_t stream, std::uint64_t counter) noexcept
{
    const double u1 = to_unit_open(hash_seed({seed, stream, counter, 0}));
    const double u2 = to_unit_open(hash_seed({seed, stream, counter, 1}));
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

/// Sequential convenience wrapper over the counter generator.
class CounterRng {
public:
    explicit CounterRng(std::uint64_t seed, std::uint64_t stream = 0) noexcept
        : seed_(seed), stream_(stream) {}

    double uniform() noexcept { return counter_uniform(seed_, stream_, counter_++); }
    double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }
    double normal() noexcept { return counter_normal(seed_, stream_, counter_++); }

private:
    std::uint64_t seed_;
    std::uint64_t stream_;
    std::uint64_t counter_ = 0;
};

} // namespace mixar
