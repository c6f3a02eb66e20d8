// Independent reference implementations used to cross-check the library.
// Everything here is deliberately coded on a different path from the
// library: long double arithmetic, different series, different truncation
// rules, single-pass accumulation. Do not include library internals.
#pragma once

#include "cstat/model.hpp"

#include <Eigen/Core>

#include <cmath>
#include <cstddef>

namespace oracle {

// Per-bin Cash contribution c(k, s) = 2 (s - k + k log(k/s)), with
// 0 log 0 := 0. Near k = s the subtraction cancels, so for
// |r| < 1/4 with r = (k - s)/s we use
//
//   c = 2 s [ (1+r) log(1+r) - r ] = 2 s  sum_{j>=2} (-1)^j r^j / (j (j-1))
//
// in long double. The switch point and the series differ from the library
// (which expands in (N - s)/(N + s)).
inline long double c_per_bin(long double k, long double s) {
    if (k == 0.0L) return 2.0L * s;
    const long double r = (k - s) / s;
    if (std::fabs(static_cast<double>(r)) < 0.25) {
        long double sum = 0.0L;
        long double r_pow = r; // r^(j-1)
        for (int j = 2; j <= 200; ++j) {
            r_pow *= r;
            long double term = r_pow / (static_cast<long double>(j) * (j - 1));
            if (j % 2 != 0) term = -term;
            sum += term;
            if (std::fabs(static_cast<double>(term)) <
                1e-25 * (std::fabs(static_cast<double>(sum)) + 1e-300)) {
                break;
            }
        }
        return 2.0L * s * sum;
    }
    return 2.0L * (s - k + k * logl(k / s));
}

// Exact moments of C = c(N, s) and D = N - s under N ~ Poisson(s), by
// single-pass summation of the probability series in long double. The sum
// runs over a fixed window far past any mass: k <= s + 60 sqrt(s+1) + 200,
// where the Poisson tail is below e^-1800. Centering in N uses the exact
// mean s, so no second pass is needed; C moments are centered at the end.
struct Cumulants {
    long double k1, k2, k3, k11, k12, k21, k03;
};

inline Cumulants cumulants(long double s) {
    const long long k_max =
        static_cast<long long>(s + 60.0L * sqrtl(s + 1.0L) + 200.0L);
    long double f = expl(-s);
    long double S_C = 0, S_CC = 0, S_CCC = 0;
    long double S_D = 0, S_DD = 0, S_DDD = 0;
    long double S_CD = 0, S_CDD = 0, S_CCD = 0;
    for (long long k = 0; k <= k_max; ++k) {
        if (k > 0) f *= s / static_cast<long double>(k);
        const long double C = c_per_bin(static_cast<long double>(k), s);
        const long double D = static_cast<long double>(k) - s;
        const long double fC = f * C;
        S_C += fC;
        S_CC += fC * C;
        S_CCC += fC * C * C;
        S_D += f * D;
        S_DD += f * D * D;
        S_DDD += f * D * D * D;
        S_CD += fC * D;
        S_CDD += fC * D * D;
        S_CCD += fC * C * D;
    }
    Cumulants out;
    out.k1 = S_C;
    out.k2 = S_CC - S_C * S_C;
    out.k3 = S_CCC - 3.0L * S_C * S_CC + 2.0L * S_C * S_C * S_C;
    out.k11 = S_CD - S_C * S_D;
    out.k12 = S_CDD - S_C * S_DD;
    out.k21 = S_CCD - 2.0L * S_C * S_CD + S_C * S_C * S_D;
    out.k03 = S_DDD;
    return out;
}

// Central finite-difference Jacobian of a model's expected counts,
// step 1e-6 (1 + |theta_k|) per coordinate.
inline Eigen::MatrixXd fd_jacobian(const cstat::SpectralModel& model,
                                   const Eigen::VectorXd& theta) {
    const auto n = static_cast<Eigen::Index>(model.n_bins());
    const auto d = static_cast<Eigen::Index>(model.n_params());
    Eigen::MatrixXd X(n, d);
    for (Eigen::Index k = 0; k < d; ++k) {
        const double h = 1e-6 * (1.0 + std::abs(theta[k]));
        Eigen::VectorXd lo = theta, hi = theta;
        lo[k] -= h;
        hi[k] += h;
        X.col(k) = (model.expected_counts(hi) - model.expected_counts(lo)) / (2.0 * h);
    }
    return X;
}

// Mixed absolute/relative error: |a - b| over max(1, |a|, |b|).
inline double rel_err(double a, double b) {
    return std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)});
}

// Pure relative error with b as reference.
inline double rel_err_to(double a, long double b) {
    const double bd = static_cast<double>(b);
    return std::abs(a - bd) / std::abs(bd);
}

} // namespace oracle
