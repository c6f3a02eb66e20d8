#include "cstat/cash.hpp"

#include "cstat/common.hpp"
#include "cstat/stats.hpp"

#include <cmath>

namespace cstat {

double c_per_bin(double n_obs, double s) {
    if (!std::isfinite(n_obs) || n_obs < 0.0) {
        throw validation_error("E_DOMAIN", "c_per_bin: N must be finite and non-negative");
    }
    if (!std::isfinite(s) || s <= 0.0) {
        throw validation_error("E_DOMAIN", "c_per_bin: s must be finite and positive");
    }
    if (n_obs == 0.0) return 2.0 * s;

    const double diff = n_obs - s;
    // Near N = s the direct formula loses all significant digits, so the
    // deviance is summed as a series in v = (N - s)/(N + s):
    //   s - N + N log(N/s) = diff * v + 2N * sum_{j>=1} v^(2j+1) / (2j+1).
    if (std::abs(diff) <= (n_obs + s) / 3.0) {
        const double v = diff / (n_obs + s);
        const double v2 = v * v;
        double term = v * v2; // v^3
        double sum = term / 3.0;
        for (int j = 2; j < 60; ++j) {
            term *= v2;
            double prev = sum;
            sum += term / (2.0 * j + 1.0);
            if (sum == prev) break;
        }
        return 2.0 * (diff * v + 2.0 * n_obs * sum);
    }
    return 2.0 * (s - n_obs + n_obs * std::log(n_obs / s));
}

double c_total(const Eigen::VectorXd& counts, const Eigen::VectorXd& s) {
    if (counts.size() != s.size()) {
        throw validation_error("E_SHAPE", "c_total: counts and s must have equal length");
    }
    KahanSum total;
    for (Eigen::Index i = 0; i < counts.size(); ++i) {
        total.add(c_per_bin(counts[i], s[i]));
    }
    return total.value();
}

Eigen::VectorXd c_gradient(const Eigen::VectorXd& counts,
                           const Eigen::VectorXd& s,
                           const Eigen::MatrixXd& X) {
    if (counts.size() != s.size() || X.rows() != s.size()) {
        throw validation_error("E_SHAPE", "c_gradient: inconsistent dimensions");
    }
    Eigen::VectorXd w(s.size());
    for (Eigen::Index i = 0; i < s.size(); ++i) {
        if (!(s[i] > 0.0)) {
            throw validation_error("E_DOMAIN", "c_gradient: s must be positive");
        }
        w[i] = 2.0 * (1.0 - counts[i] / s[i]);
    }
    return X.transpose() * w;
}

} // namespace cstat
