#pragma once

#include <cmath>
#include <cstdint>
#include <utility>

namespace rrmdp {

/**
Small counter-based generator (splitmix64) with explicit derivation of child
streams. The standard <random> distributions are implementation-defined, so
experiment results produced through them would not be reproducible across
standard libraries; everything here is fixed arithmetic on uint64 and IEEE
doubles and produces bit-identical streams for a given seed on any platform.
*/
class Rng {
public:
    explicit Rng(uint64_t seed) : state_(seed) {}

    /// Derives an independent child stream; (seed, ids...) -> same child forever.
    template <typename... Ids>
    static Rng derive(uint64_t seed, Ids... ids) {
        uint64_t h = seed;
        ((h = mix(h ^ (0x9E3779B97F4A7C15ULL + static_cast<uint64_t>(ids)))), ...);
        return Rng(mix(h));
    }

    uint64_t next_u64() {
        state_ += 0x9E3779B97F4A7C15ULL;
        return mix(state_);
    }

    /// Uniform on [0, 1); 53 random mantissa bits.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, n); n > 0. Modulo bias is < n / 2^64, irrelevant here.
    uint64_t uniform_index(uint64_t n) { return next_u64() % n; }

    /// Standard normal via Box-Muller; caches the second draw of each pair.
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        // u1 in (0, 1] so the log is finite.
        double u1 = (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;
        double u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(a);
        has_spare_ = true;
        return r * std::cos(a);
    }

private:
    static uint64_t mix(uint64_t z) {
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    uint64_t state_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

} // namespace rrmdp
