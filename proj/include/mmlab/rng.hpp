#pragma once
// Seeded PRNG used everywhere randomness is needed.
//
// xoshiro256** seeded via SplitMix64, Gaussian via Box-Muller. The byte
// format of generated datasets depends on this exact generator and draw
// order, so treat any change here as a format break.
//
// xoshiro256** reference: https://prng.di.unimi.it/xoshiro256starstar.c

#include <cmath>
#include <cstdint>
#include <numbers>

namespace mmlab {

struct SplitMix64 {
    std::uint64_t state = 0;
    explicit SplitMix64(std::uint64_t seed) : state(seed) {}
    std::uint64_t next() {
        std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }
};

class Rng {
  public:
    Rng() : Rng(0) {}
    explicit Rng(std::uint64_t seed) {
        SplitMix64 sm(seed);
        s_[0] = sm.next();
        s_[1] = sm.next();
        s_[2] = sm.next();
        s_[3] = sm.next();
    }

    std::uint64_t next_u64() {
        const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
        const std::uint64_t t = s_[1] << 17;
        s_[2] ^= s_[0];
        s_[3] ^= s_[1];
        s_[1] ^= s_[2];
        s_[0] ^= s_[3];
        s_[2] ^= t;
        s_[3] = rotl(s_[3], 45);
        return result;
    }

    // uniform in [0, 1), 53-bit resolution
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // integer in [0, n)
    std::uint64_t below(std::uint64_t n) { return next_u64() % n; }

    bool coin() { return (next_u64() >> 63) != 0; }

    // One Box-Muller transform: consumes exactly two uniform draws and
    // yields two independent standard normals. No state is cached across
    // calls; callers that need an odd count discard the second value.
    void gaussian_pair(double& g0, double& g1) {
        double u1 = uniform();
        double u2 = uniform();
        // avoid log(0)
        while (u1 <= 0.0) u1 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 2.0 * std::numbers::pi * u2;
        g0 = r * std::cos(theta);
        g1 = r * std::sin(theta);
    }

    // Derive an independent stream; used to give each Monte-Carlo trial or
    // training job its own generator.
    Rng split(std::uint64_t stream) {
        SplitMix64 sm(next_u64() ^ (0x6a09e667f3bcc909ULL + stream));
        return Rng(sm.next());
    }

  private:
    static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }
    std::uint64_t s_[4];
};

// Derive a per-purpose seed from a base seed without correlating streams.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
    SplitMix64 sm(base ^ (0x9e3779b97f4a7c15ULL * (stream + 1)));
    return sm.next();
}

}  // namespace mmlab
