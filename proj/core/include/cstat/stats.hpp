#pragma once

#include <cstddef>
#include <vector>

namespace cstat {

// Compensated (Kahan) accumulator for long sums with wide dynamic range.
class KahanSum {
public:
    void add(double x) {
        double y = x - c_;
        double t = s_ + y;
        c_ = (t - s_) - y;
        s_ = t;
    }
    double value() const { return s_; }

private:
    double s_ = 0.0;
    double c_ = 0.0;
};

double normal_cdf(double z);
double normal_sf(double z); // upper tail
double normal_quantile(double p);

double chi2_cdf(double x, double dof);
double chi2_sf(double x, double dof); // upper tail
double chi2_quantile(double p, double dof);

// One-sample Kolmogorov-Smirnov statistic of a sample against Uniform(0,1).
double ks_uniform_statistic(std::vector<double> sample);

// Asymptotic p-value P(D_n > d) from the Kolmogorov series.
double ks_pvalue(double d, std::size_t n);

// Two-sample Kolmogorov-Smirnov distance between empirical CDFs.
double ks_two_sample_statistic(std::vector<double> a, std::vector<double> b);

// Order-statistic empirical quantile: value at rank ceil(p * n) (1-based),
// clamped to the sample range. Sorts a copy.
double empirical_quantile(std::vector<double> sample, double p);

} // namespace cstat
