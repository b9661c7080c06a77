#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <vector>

namespace fedpac {

namespace detail {

inline uint64_t splitmix64(uint64_t& state) {
    uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

}  // namespace detail

/// Seeded deterministic generator (mt19937_64 stream with hand-rolled
/// distributions so streams are identical across standard libraries).
class Rng {
public:
    explicit Rng(uint64_t seed) : seed_(seed), eng_(seed) {}

    uint64_t seed() const { return seed_; }

    /// Child stream keyed by up to three labels; independent of draws made
    /// on the parent. Same (seed, labels) always yields the same stream.
    Rng derive(uint64_t a, uint64_t b = 0, uint64_t c = 0) const {
        uint64_t s = seed_;
        s ^= detail::splitmix64(a);
        uint64_t t = s + 0x632BE59BD9B4E019ULL + b;
        s ^= detail::splitmix64(t);
        uint64_t u = s + 0x9E3779B97F4A7C15ULL + c;
        s ^= detail::splitmix64(u);
        return Rng(s);
    }

    uint64_t next_u64() { return eng_(); }

    /// Uniform in [0, 1) with 53-bit resolution.
    double uniform01() { return double(eng_() >> 11) * 0x1.0p-53; }

    /// Uniform in [lo, hi).
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    /// Uniform integer in [0, n) via Lemire's multiply-shift reduction.
    uint64_t uniform_int(uint64_t n) {
        if (n == 0) throw std::invalid_argument("uniform_int: n == 0");
        unsigned __int128 m = (unsigned __int128)eng_() * n;
        uint64_t lo = (uint64_t)m;
        if (lo < n) {
            uint64_t threshold = (0 - n) % n;
            while (lo < threshold) {
                m = (unsigned __int128)eng_() * n;
                lo = (uint64_t)m;
            }
        }
        return (uint64_t)(m >> 64);
    }

    /// Standard normal via Box-Muller (two uniforms per draw, no cache).
    double normal() {
        double u1 = uniform01();
        while (u1 <= 0.0) u1 = uniform01();
        const double u2 = uniform01();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    }

    /// +1 or -1 with equal probability.
    double rademacher() { return (eng_() & 1ULL) ? 1.0 : -1.0; }

    /// Gamma(alpha, 1) via Marsaglia-Tsang, with the boost for alpha < 1.
    double gamma(double alpha) {
        if (alpha <= 0.0) throw std::invalid_argument("gamma: alpha <= 0");
        if (alpha < 1.0) {
            const double g = gamma(alpha + 1.0);
            double u = uniform01();
            while (u <= 0.0) u = uniform01();
            return g * std::pow(u, 1.0 / alpha);
        }
        const double d = alpha - 1.0 / 3.0;
        const double c = 1.0 / std::sqrt(9.0 * d);
        for (;;) {
            double x = normal();
            double v = 1.0 + c * x;
            if (v <= 0.0) continue;
            v = v * v * v;
            const double u = uniform01();
            if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
            if (u > 0.0 && std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
        }
    }

    /// Symmetric Dirichlet draw of length n with concentration alpha.
    std::vector<double> dirichlet(double alpha, int n) {
        std::vector<double> p(n);
        double sum = 0.0;
        for (int i = 0; i < n; ++i) {
            p[i] = gamma(alpha);
            sum += p[i];
        }
        if (sum <= 0.0) {
            // all draws underflowed; fall back to uniform proportions
            for (int i = 0; i < n; ++i) p[i] = 1.0 / n;
            return p;
        }
        for (int i = 0; i < n; ++i) p[i] /= sum;
        return p;
    }

    /// Sample index from a discrete distribution given by nonnegative weights
    /// summing to ~1.
    int categorical(const std::vector<double>& p) {
        const double u = uniform01();
        double acc = 0.0;
        for (size_t i = 0; i < p.size(); ++i) {
            acc += p[i];
            if (u < acc) return int(i);
        }
        return int(p.size()) - 1;
    }

private:
    uint64_t seed_;
    std::mt19937_64 eng_;
};

}  // namespace fedpac
