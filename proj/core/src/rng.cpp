#include "cstat/rng.hpp"

#include "cstat/common.hpp"

#include <cmath>

namespace cstat {

namespace {

inline std::uint64_t rotl(std::uint64_t x, int k) {
    return (x << k) | (x >> (64 - k));
}

} // namespace

std::uint64_t splitmix64_next(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

std::uint64_t derive_stream(std::uint64_t key, std::uint64_t index) {
    std::uint64_t s = key;
    std::uint64_t a = splitmix64_next(s);
    s = a ^ (index + 0x9e3779b97f4a7c15ULL);
    std::uint64_t b = splitmix64_next(s);
    return b;
}

Rng::Rng(std::uint64_t seed) {
    std::uint64_t state = seed;
    for (auto& w : s_) w = splitmix64_next(state);
    // xoshiro256++ state must not be all zero.
    if ((s_[0] | s_[1] | s_[2] | s_[3]) == 0) s_[0] = 1;
}

std::uint64_t Rng::next_u64() {
    std::uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
    std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
}

double Rng::next_double() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

std::uint64_t Rng::next_below(std::uint64_t bound) {
    if (bound == 0) throw validation_error("E_DOMAIN", "next_below: bound must be positive");
    std::uint64_t threshold = (0 - bound) % bound;
    for (;;) {
        std::uint64_t r = next_u64();
        if (r >= threshold) return r % bound;
    }
}

long long Rng::poisson(double rate) {
    if (!(rate >= 0.0) || !std::isfinite(rate)) {
        throw validation_error("E_DOMAIN", "poisson: rate must be finite and non-negative");
    }
    if (rate == 0.0) return 0;
    return rate < 30.0 ? poisson_inversion(rate) : poisson_ptrs(rate);
}

long long Rng::poisson_inversion(double rate) {
    double u = next_double();
    double p = std::exp(-rate);
    double cdf = p;
    long long k = 0;
    while (u > cdf) {
        ++k;
        p *= rate / static_cast<double>(k);
        cdf += p;
        // p underflowing means the cdf has saturated; u beyond it is a
        // rounding artifact of probability below 1e-16.
        if (p <= 0.0 || k > 2000) break;
    }
    return k;
}

// Transformed rejection with squeeze (Hormann's PTRS), exact for rate >= 10.
long long Rng::poisson_ptrs(double rate) {
    const double mu = rate;
    const double b = 0.931 + 2.53 * std::sqrt(mu);
    const double a = -0.059 + 0.02483 * b;
    const double inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
    const double v_r = 0.9277 - 3.6224 / (b - 2.0);
    const double log_mu = std::log(mu);
    for (;;) {
        double u = next_double() - 0.5;
        double v = next_double();
        double us = 0.5 - std::abs(u);
        double k = std::floor((2.0 * a / us + b) * u + mu + 0.43);
        if (us >= 0.07 && v <= v_r) return static_cast<long long>(k);
        if (k < 0.0 || (us < 0.013 && v > us)) continue;
        if (std::log(v * inv_alpha / (a / (us * us) + b)) <=
            k * log_mu - mu - std::lgamma(k + 1.0)) {
            return static_cast<long long>(k);
        }
    }
}

} // namespace cstat
