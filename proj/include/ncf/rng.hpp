#pragma once

#include <cmath>
#include <cstdint>

namespace ncf {

// Counter-style PRNG built on SplitMix64. Fully specified here so that seeded
// runs are bit-identical across platforms and standard-library versions.
inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// Derives an independent stream seed from a base seed and up to three indices
// (epoch, phase, iteration...). Stateless: the same coordinates always give
// the same stream, regardless of evaluation order.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a = 0, std::uint64_t b = 0,
                              std::uint64_t c = 0) {
    std::uint64_t s = seed;
    splitmix64(s);
    s ^= 0x517cc1b727220a95ULL + a;
    splitmix64(s);
    s ^= 0x2545f4914f6cdd1dULL + b;
    splitmix64(s);
    s ^= 0x9e3779b97f4a7c15ULL + c;
    std::uint64_t out = splitmix64(s);
    return out;
}

class Rng {
  public:
    explicit Rng(std::uint64_t seed = 0) : state_(seed) {
        // Warm up so that small seeds do not produce correlated leading draws.
        splitmix64(state_);
        splitmix64(state_);
    }

    std::uint64_t next_u64() { return splitmix64(state_); }

    // Uniform in [0, 1) with 53-bit resolution.
    double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

    // Integer in [0, n) without modulo bias worth worrying about at these sizes.
    std::uint64_t next_below(std::uint64_t n) { return next_u64() % n; }

    // Box-Muller; the spare value is cached for the next call.
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = next_double();
        double u2 = next_double();
        while (u1 <= 0.0) u1 = next_double();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(a);
        has_spare_ = true;
        return r * std::cos(a);
    }

  private:
    std::uint64_t state_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace ncf
