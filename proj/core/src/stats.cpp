#include "cstat/stats.hpp"

#include "cstat/common.hpp"

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/normal.hpp>

#include <algorithm>
#include <cmath>

namespace cstat {

double normal_cdf(double z) {
    return 0.5 * std::erfc(-z / std::sqrt(2.0));
}

double normal_sf(double z) {
    return 0.5 * std::erfc(z / std::sqrt(2.0));
}

double normal_quantile(double p) {
    if (!(p > 0.0 && p < 1.0)) {
        throw validation_error("E_DOMAIN", "normal_quantile: p must lie in (0, 1)");
    }
    boost::math::normal_distribution<double> dist;
    return boost::math::quantile(dist, p);
}

double chi2_cdf(double x, double dof) {
    if (!(dof > 0.0)) throw validation_error("E_DOMAIN", "chi2_cdf: dof must be positive");
    if (x <= 0.0) return 0.0;
    boost::math::chi_squared_distribution<double> dist(dof);
    return boost::math::cdf(dist, x);
}

double chi2_sf(double x, double dof) {
    if (!(dof > 0.0)) throw validation_error("E_DOMAIN", "chi2_sf: dof must be positive");
    if (x <= 0.0) return 1.0;
    boost::math::chi_squared_distribution<double> dist(dof);
    return boost::math::cdf(boost::math::complement(dist, x));
}

double chi2_quantile(double p, double dof) {
    if (!(p > 0.0 && p < 1.0)) {
        throw validation_error("E_DOMAIN", "chi2_quantile: p must lie in (0, 1)");
    }
    if (!(dof > 0.0)) throw validation_error("E_DOMAIN", "chi2_quantile: dof must be positive");
    boost::math::chi_squared_distribution<double> dist(dof);
    return boost::math::quantile(dist, p);
}

double ks_uniform_statistic(std::vector<double> sample) {
    if (sample.empty()) {
        throw validation_error("E_DOMAIN", "ks_uniform_statistic: empty sample");
    }
    std::sort(sample.begin(), sample.end());
    const double n = static_cast<double>(sample.size());
    double d = 0.0;
    for (std::size_t i = 0; i < sample.size(); ++i) {
        double u = std::min(std::max(sample[i], 0.0), 1.0);
        double hi = (static_cast<double>(i) + 1.0) / n - u;
        double lo = u - static_cast<double>(i) / n;
        d = std::max(d, std::max(hi, lo));
    }
    return d;
}

double ks_pvalue(double d, std::size_t n) {
    if (d <= 0.0) return 1.0;
    if (d >= 1.0) return 0.0;
    // Kolmogorov's limiting series with Stephens' finite-n adjustment.
    double sn = std::sqrt(static_cast<double>(n));
    double lambda = d * (sn + 0.12 + 0.11 / sn);
    double sum = 0.0;
    for (int k = 1; k <= 100; ++k) {
        double term = std::exp(-2.0 * k * k * lambda * lambda);
        sum += (k % 2 == 1) ? term : -term;
        if (term < 1e-18) break;
    }
    double p = 2.0 * sum;
    return std::min(1.0, std::max(0.0, p));
}

double ks_two_sample_statistic(std::vector<double> a, std::vector<double> b) {
    if (a.empty() || b.empty()) {
        throw validation_error("E_DOMAIN", "ks_two_sample_statistic: empty sample");
    }
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    const double na = static_cast<double>(a.size());
    const double nb = static_cast<double>(b.size());
    std::size_t i = 0, j = 0;
    double d = 0.0;
    while (i < a.size() && j < b.size()) {
        double x = std::min(a[i], b[j]);
        while (i < a.size() && a[i] <= x) ++i;
        while (j < b.size() && b[j] <= x) ++j;
        d = std::max(d, std::abs(static_cast<double>(i) / na -
                                 static_cast<double>(j) / nb));
    }
    return d;
}

double empirical_quantile(std::vector<double> sample, double p) {
    if (sample.empty()) {
        throw validation_error("E_DOMAIN", "empirical_quantile: empty sample");
    }
    if (!(p >= 0.0 && p <= 1.0)) {
        throw validation_error("E_DOMAIN", "empirical_quantile: p must lie in [0, 1]");
    }
    std::sort(sample.begin(), sample.end());
    double rank = std::ceil(p * static_cast<double>(sample.size()));
    auto idx = static_cast<std::size_t>(std::max(1.0, rank)) - 1;
    idx = std::min(idx, sample.size() - 1);
    return sample[idx];
}

} // namespace cstat
