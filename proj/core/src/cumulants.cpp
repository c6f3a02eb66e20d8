#include "cstat/cumulants.hpp"

#include "cstat/cash.hpp"
#include "cstat/common.hpp"
#include "cstat/stats.hpp"

#include <cmath>
#include <vector>

namespace cstat {

namespace {

// Poisson pmf stepper. The multiplicative recurrence f(k) = f(k-1) * s / k
// is exact enough below s = 500 and avoids exp/lgamma per term; above that
// exp(-s) underflows long before the bulk, so the pmf is formed in log
// space instead.
class PmfStepper {
public:
    explicit PmfStepper(double s)
        : s_(s), log_s_(std::log(s)), recurrence_(s <= 500.0) {}

    double at_zero() const { return recurrence_ ? std::exp(-s_) : log_pmf(0); }

    double next(double f_prev, long long k_next) const {
        if (recurrence_) return f_prev * s_ / static_cast<double>(k_next);
        return log_pmf(k_next);
    }

private:
    double log_pmf(long long k) const {
        double kd = static_cast<double>(k);
        return std::exp(kd * log_s_ - s_ - std::lgamma(kd + 1.0));
    }

    double s_;
    double log_s_;
    bool recurrence_;
};

} // namespace

CumulantSet cumulants_direct(double s, double tau) {
    if (!std::isfinite(s) || s <= 0.0) {
        throw validation_error("E_DOMAIN", "cumulants: rate must be finite and positive");
    }
    if (!(tau > 0.0 && tau < 1.0)) {
        throw validation_error("E_DOMAIN", "cumulants: tau must lie in (0, 1)");
    }

    PmfStepper pmf(s);

    // Pass 1: accumulate E[C] and keep the terms. The series stops at the
    // first K >= s where the next term's share of the running E[C] sum
    // drops below tau, so the cut never lands before the mean.
    std::vector<double> f_terms, c_terms;
    std::size_t expect = static_cast<std::size_t>(s + 14.0 * std::sqrt(s) + 32.0);
    f_terms.reserve(expect);
    c_terms.reserve(expect);

    KahanSum sum_cf;
    long long k = 0;
    double fk = pmf.at_zero();
    const long long hard_cap = 20000000;
    for (;;) {
        double ck = c_per_bin(static_cast<double>(k), s);
        f_terms.push_back(fk);
        c_terms.push_back(ck);
        sum_cf.add(ck * fk);
        if (static_cast<double>(k) >= s) {
            double fn = pmf.next(fk, k + 1);
            double cn = c_per_bin(static_cast<double>(k + 1), s);
            if (cn * fn <= tau * sum_cf.value()) break;
            fk = fn;
            ++k;
            continue;
        }
        fk = pmf.next(fk, k + 1);
        ++k;
        if (k > hard_cap) {
            throw computation_error("E_NONCONVERGENT_SUM",
                                    "cumulants: series did not reach the cutoff");
        }
    }

    // Pass 2: central and mixed moments around k1 and s.
    CumulantSet out;
    out.k1 = sum_cf.value();
    KahanSum k2, k3, k11, k12, k21, k03;
    for (std::size_t t = 0; t < f_terms.size(); ++t) {
        const double f = f_terms[t];
        const double dc = c_terms[t] - out.k1;
        const double dn = static_cast<double>(t) - s;
        k2.add(f * dc * dc);
        k3.add(f * dc * dc * dc);
        k11.add(f * dc * dn);
        k12.add(f * dc * dn * dn);
        k21.add(f * dc * dc * dn);
        k03.add(f * dn * dn * dn);
    }
    out.k2 = k2.value();
    out.k3 = k3.value();
    out.k11 = k11.value();
    out.k12 = k12.value();
    out.k21 = k21.value();
    out.k03 = k03.value();
    return out;
}

} // namespace cstat
