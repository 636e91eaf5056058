#pragma once

// Counter-based random numbers: every draw is a pure function of
// (seed, stream, a, b, c), so independent runs that share a seed see the same
// arrival, access and fading randomness regardless of visiting order.

#include <cmath>
#include <cstdint>
#include <limits>

namespace agemap::rng {

/// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

enum class Stream : std::uint64_t {
    Geometry = 1,
    Arrival = 2,
    Access = 3,
    Success = 4,
    DesiredGain = 5,
    InterferenceGain = 6,
    Activity = 7,
    Auxiliary = 8,
};

class CounterRng {
public:
    explicit constexpr CounterRng(std::uint64_t seed) noexcept : key_(mix64(seed ^ 0x6a09e667f3bcc908ULL)) {}

    constexpr std::uint64_t bits(Stream s, std::uint64_t a, std::uint64_t b = 0, std::uint64_t c = 0) const noexcept {
        std::uint64_t h = mix64(key_ ^ static_cast<std::uint64_t>(s));
        h = mix64(h ^ a);
        h = mix64(h ^ (b + 0x3c6ef372fe94f82bULL));
        h = mix64(h ^ (c + 0xa54ff53a5f1d36f1ULL));
        return h;
    }

    /// Uniform in [0, 1) with 53 random bits.
    constexpr double uniform(Stream s, std::uint64_t a, std::uint64_t b = 0, std::uint64_t c = 0) const noexcept {
        return static_cast<double>(bits(s, a, b, c) >> 11) * 0x1.0p-53;
    }

    /// Uniform in (0, 1].
    constexpr double uniform_open0(Stream s, std::uint64_t a, std::uint64_t b = 0, std::uint64_t c = 0) const noexcept {
        return (static_cast<double>(bits(s, a, b, c) >> 11) + 1.0) * 0x1.0p-53;
    }

    /// Unit-mean exponential.
    double exponential(Stream s, std::uint64_t a, std::uint64_t b = 0, std::uint64_t c = 0) const noexcept {
        return -std::log(uniform_open0(s, a, b, c));
    }

    constexpr std::uint64_t key() const noexcept { return key_; }

private:
    std::uint64_t key_;
};

/// Sequential generator over one stream; satisfies UniformRandomBitGenerator.
class StreamEngine {
public:
    using result_type = std::uint64_t;

    constexpr StreamEngine(const CounterRng& rng, Stream s, std::uint64_t a = 0) noexcept
        : rng_(rng), stream_(s), a_(a) {}

    static constexpr result_type min() noexcept { return 0; }
    static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }
    constexpr result_type operator()() noexcept { return rng_.bits(stream_, a_, counter_++); }

    constexpr double uniform() noexcept { return rng_.uniform(stream_, a_, counter_++); }
    double exponential() noexcept { return rng_.exponential(stream_, a_, counter_++); }

private:
    CounterRng rng_;
    Stream stream_;
    std::uint64_t a_;
    std::uint64_t counter_ = 0;
};

} // namespace agemap::rng
