#pragma once

#include <cmath>
#include <cstdint>
#include <utility>
#include <vector>

#include "anymodal/errors.hpp"

namespace anymodal {

// Deterministic, platform-independent RNG (xoshiro256++ seeded via splitmix64).
// Standard-library distributions are implementation-defined, so all draws are
// implemented here. Every stochastic component of the pipeline goes through
// this type; no ambient entropy anywhere.
class Rng {
  public:
    explicit Rng(uint64_t seed = 0) { reseed(seed); }

    void reseed(uint64_t seed) {
        uint64_t x = seed;
        for (auto & si : s_) {
            si = splitmix64(x);
        }
        gauss_valid_ = false;
    }

    // Independent stream derived from (this seed, stream id). Used for
    // per-sample / per-draw-index derivation so parallel order == serial order.
    static Rng derive(uint64_t seed, uint64_t stream) {
        uint64_t x = seed;
        uint64_t a = splitmix64(x);
        x ^= stream * 0x9e3779b97f4a7c15ull;
        uint64_t b = splitmix64(x);
        return Rng(a ^ (b + 0x2545f4914f6cdd1dull));
    }

    uint64_t next_u64() {
        const uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
        const uint64_t t = s_[1] << 17;
        s_[2] ^= s_[0];
        s_[3] ^= s_[1];
        s_[1] ^= s_[2];
        s_[0] ^= s_[3];
        s_[2] ^= t;
        s_[3] = rotl(s_[3], 45);
        return result;
    }

    // Uniform in [0, 1): 53-bit mantissa construction.
    double uniform() { return (double) (next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [0, n), rejection-sampled to avoid modulo bias.
    uint64_t uniform_u64(uint64_t n) {
        if (n == 0) {
            throw InvalidInput("uniform_u64: n must be > 0");
        }
        const uint64_t threshold = (0 - n) % n;
        for (;;) {
            const uint64_t r = next_u64();
            if (r >= threshold) {
                return r % n;
            }
        }
    }

    int uniform_int(int n) { return (int) uniform_u64((uint64_t) n); }

    bool bernoulli(double p) { return uniform() < p; }

    // Standard normal via Box-Muller (pair cached).
    double normal() {
        if (gauss_valid_) {
            gauss_valid_ = false;
            return gauss_next_;
        }
        double u1 = uniform();
        while (u1 <= 0.0) {
            u1 = uniform();
        }
        const double u2     = uniform();
        const double radius = std::sqrt(-2.0 * std::log(u1));
        const double angle  = 6.283185307179586476925286766559 * u2;
        gauss_next_  = radius * std::sin(angle);
        gauss_valid_ = true;
        return radius * std::cos(angle);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    // Gamma(alpha, 1) via Marsaglia-Tsang; alpha < 1 handled by the boost
    // gamma(alpha) = gamma(alpha+1) * U^(1/alpha).
    double gamma(double alpha) {
        if (alpha <= 0.0) {
            throw InvalidInput("gamma: alpha must be > 0");
        }
        if (alpha < 1.0) {
            double u = uniform();
            while (u <= 0.0) {
                u = uniform();
            }
            return gamma(alpha + 1.0) * std::pow(u, 1.0 / alpha);
        }
        const double d = alpha - 1.0 / 3.0;
        const double c = 1.0 / std::sqrt(9.0 * d);
        for (;;) {
            double x;
            double v;
            do {
                x = normal();
                v = 1.0 + c * x;
            } while (v <= 0.0);
            v = v * v * v;
            const double u = uniform();
            if (u < 1.0 - 0.0331 * (x * x) * (x * x)) {
                return d * v;
            }
            if (u > 0.0 && std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) {
                return d * v;
            }
        }
    }

    // Geometric span length >= 1 with the given mean (mean >= 1).
    int geometric_len(double mean) {
        if (mean <= 1.0) {
            return 1;
        }
        const double p = 1.0 / mean;
        double u = uniform();
        while (u >= 1.0) {
            u = uniform();
        }
        // 1 + floor(ln(1-u)/ln(1-p)) gives mean 1/p.
        const int extra = (int) std::floor(std::log(1.0 - u) / std::log(1.0 - p));
        return 1 + std::max(0, extra);
    }

    // In-place Fisher-Yates shuffle.
    template <typename T> void shuffle(std::vector<T> & v) {
        for (size_t i = v.size(); i > 1; --i) {
            const size_t j = (size_t) uniform_u64(i);
            std::swap(v[i - 1], v[j]);
        }
    }

    // Weighted index draw; weights must be positive, need not be normalized.
    int weighted_index(const std::vector<double> & weights) {
        double total = 0.0;
        for (double w : weights) {
            total += w;
        }
        if (total <= 0.0) {
            throw InvalidInput("weighted_index: weights must sum to > 0");
        }
        const double r   = uniform() * total;
        double       cum = 0.0;
        for (size_t i = 0; i < weights.size(); ++i) {
            cum += weights[i];
            if (r < cum) {
                return (int) i;
            }
        }
        return (int) weights.size() - 1;
    }

  private:
    static uint64_t splitmix64(uint64_t & x) {
        uint64_t z = (x += 0x9e3779b97f4a7c15ull);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    static uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

    uint64_t s_[4]{};
    double   gauss_next_  = 0.0;
    bool     gauss_valid_ = false;
};

} // namespace anymodal
