#pragma once

#include <cstdint>

namespace qkd {

// Counter-based generator with explicit stream splitting: output at
// (stream, counter) is a pure function of (seed, stream, counter), so
// parallel consumers stay reproducible regardless of schedule.
// Core mixer is the SplitMix64 finalizer over golden-ratio increments.
class CounterRng {
public:
    explicit CounterRng(std::uint64_t seed, std::uint64_t stream = 0)
        : base_(mix(seed ^ mix(stream * kGamma + 0x1bd11bdaa9fc1a22ULL))) {}

    CounterRng stream(std::uint64_t id) const {
        CounterRng r = *this;
        r.base_ = mix(base_ ^ mix(id * kGamma + 0x8e9f467037264b15ULL));
        r.counter_ = 0;
        return r;
    }

    std::uint64_t at(std::uint64_t counter) const { return mix(base_ + counter * kGamma); }

    std::uint64_t next() { return at(counter_++); }

    // uniform in [0,1)
    double next_double() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    // uniform in {0,...,bound-1}; bound >= 1 (rejection-free Lemire reduction)
    std::uint64_t next_below(std::uint64_t bound) {
        unsigned __int128 prod = static_cast<unsigned __int128>(next()) * bound;
        return static_cast<std::uint64_t>(prod >> 64);
    }

    bool next_bit() { return (next() >> 63) != 0; }

private:
    static constexpr std::uint64_t kGamma = 0x9e3779b97f4a7c15ULL;

    static std::uint64_t mix(std::uint64_t z) {
        z ^= z >> 30;
        z *= 0xbf58476d1ce4e5b9ULL;
        z ^= z >> 27;
        z *= 0x94d049bb133111ebULL;
        z ^= z >> 31;
        return z;
    }

    std::uint64_t base_ = 0;
    std::uint64_t counter_ = 0;
};

}  // namespace qkd
