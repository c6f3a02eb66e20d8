#include "cstat/gof.hpp"

#include "cstat/cash.hpp"
#include "cstat/common.hpp"
#include "cstat/rng.hpp"
#include "cstat/stats.hpp"
#include "cstat/threads.hpp"

#include <Eigen/Cholesky>

#include <algorithm>
#include <cmath>
#include <optional>

namespace cstat {

namespace {

Eigen::VectorXd solve_spd(const Eigen::MatrixXd& A, const Eigen::VectorXd& rhs,
                          const char* what) {
    Eigen::LLT<Eigen::MatrixXd> llt(A);
    if (llt.info() != Eigen::Success) {
        throw computation_error("E_SINGULAR",
                                std::string(what) + ": information matrix is not positive "
                                                    "definite");
    }
    return llt.solve(rhs);
}

double z_pvalue(double c_min, const MomentPair& m, const char* what, double* z_out) {
    if (!(m.var > 0.0)) {
        throw computation_error("E_DEGENERATE_REFERENCE",
                                std::string(what) + ": reference variance is not positive");
    }
    double z = (c_min - m.mean) / std::sqrt(m.var);
    if (z_out) *z_out = z;
    return normal_sf(z);
}

} // namespace

std::string method_name(GofMethod m) {
    switch (m) {
        case GofMethod::lr_chi2: return "lr-chi2";
        case GofMethod::naive_z_boot: return "naive-z-boot";
        case GofMethod::naive_z_highorder: return "naive-z-highorder";
        case GofMethod::corrected_z_first: return "corrected-z-first";
        case GofMethod::corrected_z_high: return "corrected-z-high";
        case GofMethod::parametric_bootstrap: return "bootstrap";
        case GofMethod::double_bootstrap: return "double-bootstrap";
    }
    return "unknown";
}

GofMethod parse_method(const std::string& name) {
    if (name == "lr-chi2" || name == "lr") return GofMethod::lr_chi2;
    if (name == "naive-z-boot") return GofMethod::naive_z_boot;
    if (name == "naive-z-highorder" || name == "naive-z") return GofMethod::naive_z_highorder;
    if (name == "corrected-z-first") return GofMethod::corrected_z_first;
    if (name == "corrected-z-high" || name == "corrected-z") return GofMethod::corrected_z_high;
    if (name == "bootstrap" || name == "parametric-bootstrap") {
        return GofMethod::parametric_bootstrap;
    }
    if (name == "double-bootstrap") return GofMethod::double_bootstrap;
    throw validation_error("E_METHOD", "unknown goodness-of-fit method: " + name);
}

// ---- moment machinery --------------------------------------------------------

MomentPair unconditional_moments(const Eigen::VectorXd& s_hat,
                                 std::size_t d,
                                 const CumulantProvider& cum) {
    KahanSum mean, var;
    for (Eigen::Index i = 0; i < s_hat.size(); ++i) {
        CumulantSet k = cum.at(s_hat[i]);
        mean.add(k.k1);
        var.add(k.k2);
    }
    return {mean.value() - static_cast<double>(d), var.value()};
}

double quadratic_form(const Eigen::VectorXd& s_hat,
                      const Eigen::MatrixXd& X,
                      const CumulantProvider& cum) {
    if (X.rows() != s_hat.size()) {
        throw validation_error("E_SHAPE", "quadratic form: X rows must match s length");
    }
    if (X.cols() == 0) return 0.0;
    Eigen::VectorXd u(s_hat.size());
    Eigen::MatrixXd Xw = X;
    for (Eigen::Index i = 0; i < s_hat.size(); ++i) {
        if (!(s_hat[i] > 0.0)) {
            throw validation_error("E_DOMAIN", "quadratic form: expected counts must be positive");
        }
        u[i] = cum.at(s_hat[i]).k11 / s_hat[i];
        Xw.row(i) /= s_hat[i];
    }
    Eigen::MatrixXd I_n = X.transpose() * Xw;
    Eigen::VectorXd b = X.transpose() * u;
    Eigen::VectorXd y = solve_spd(I_n, b, "quadratic form");
    return b.dot(y);
}

MomentPair conditional_moments(const Eigen::VectorXd& s_hat,
                               const Eigen::MatrixXd& X,
                               const CumulantProvider& cum) {
    const Eigen::Index n = s_hat.size();
    const Eigen::Index d = X.cols();
    if (X.rows() != n) {
        throw validation_error("E_SHAPE", "conditional moments: X rows must match s length");
    }

    KahanSum sum_k1, sum_k2;
    Eigen::VectorXd u(n), k12v(n), k03v(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        if (!(s_hat[i] > 0.0)) {
            throw validation_error("E_DOMAIN",
                                   "conditional moments: expected counts must be positive");
        }
        CumulantSet k = cum.at(s_hat[i]);
        sum_k1.add(k.k1);
        sum_k2.add(k.k2);
        u[i] = k.k11 / s_hat[i];
        k12v[i] = k.k12;
        k03v[i] = k.k03;
    }
    if (d == 0) return {sum_k1.value(), sum_k2.value()};

    Eigen::MatrixXd Xw = X;
    for (Eigen::Index i = 0; i < n; ++i) Xw.row(i) /= s_hat[i];
    Eigen::MatrixXd I_n = X.transpose() * Xw; // X^T V^-1 X

    Eigen::LLT<Eigen::MatrixXd> llt(I_n);
    if (llt.info() != Eigen::Success) {
        throw computation_error("E_SINGULAR",
                                "conditional moments: information matrix is not positive "
                                "definite");
    }
    Eigen::VectorXd b = X.transpose() * u;
    Eigen::VectorXd y = llt.solve(b);
    double Q = b.dot(y);

    // Sigma_ii = k12_i / V_i^2 - (sum_j u_j Q_ji) * k03_i / V_i^3 with
    // Q = X I_n^-1 X^T; the weighted column sums are t = X y.
    Eigen::VectorXd t = X * y;
    Eigen::VectorXd sigma(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        double V = s_hat[i];
        sigma[i] = k12v[i] / (V * V) - t[i] * k03v[i] / (V * V * V);
    }
    // The correction contracts matched parameter indices: trace(I_n^-1 M) =
    // trace(Sigma Q). Summing all entries of I_n^-1 M instead would tie the
    // value to the parameter basis, and a reparameterized model would get a
    // different reference mean for the same fitted rates.
    Eigen::MatrixXd M = X.transpose() * sigma.asDiagonal() * X;
    double mean_corr = 0.5 * llt.solve(M).trace();

    return {sum_k1.value() - mean_corr, sum_k2.value() - Q};
}

MomentPair conditional_moments_loglinear(const Eigen::VectorXd& s_hat,
                                         const Eigen::MatrixXd& design,
                                         const CumulantProvider& cum) {
    const Eigen::Index n = s_hat.size();
    const Eigen::Index d = design.cols();
    if (design.rows() != n) {
        throw validation_error("E_SHAPE",
                               "conditional moments: design rows must match s length");
    }

    KahanSum sum_k1, sum_k2;
    Eigen::VectorXd k11v(n), k12v(n), k03v(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        if (!(s_hat[i] > 0.0)) {
            throw validation_error("E_DOMAIN",
                                   "conditional moments: expected counts must be positive");
        }
        CumulantSet k = cum.at(s_hat[i]);
        sum_k1.add(k.k1);
        sum_k2.add(k.k2);
        k11v[i] = k.k11;
        k12v[i] = k.k12;
        k03v[i] = k.k03;
    }
    if (d == 0) return {sum_k1.value(), sum_k2.value()};

    // In the log-linear parameterization the information is X^T V X for the
    // design X, the covariance vector needs no V scaling, and Sigma loses
    // its V powers; the general path above must agree when handed the model
    // Jacobian V X.
    Eigen::MatrixXd Xv = s_hat.asDiagonal() * design;
    Eigen::MatrixXd I_L = design.transpose() * Xv;

    Eigen::LLT<Eigen::MatrixXd> llt(I_L);
    if (llt.info() != Eigen::Success) {
        throw computation_error("E_SINGULAR",
                                "conditional moments: information matrix is not positive "
                                "definite");
    }
    Eigen::VectorXd b = design.transpose() * k11v;
    Eigen::VectorXd y = llt.solve(b);
    double Q = b.dot(y);

    Eigen::VectorXd t = design * y;
    Eigen::VectorXd sigma(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        sigma[i] = k12v[i] - t[i] * k03v[i];
    }
    Eigen::MatrixXd M = design.transpose() * sigma.asDiagonal() * design;
    double mean_corr = 0.5 * llt.solve(M).trace();

    return {sum_k1.value() - mean_corr, sum_k2.value() - Q};
}

// ---- analytic tests ----------------------------------------------------------

double lr_chi2_pvalue(double c_min, std::size_t n, std::size_t d) {
    if (n <= d) {
        throw validation_error("E_DOMAIN", "lr test: need more bins than parameters");
    }
    return chi2_sf(c_min, static_cast<double>(n - d));
}

GofResult lr_chi2_test(double c_min, std::size_t n, std::size_t d) {
    GofResult r;
    r.method = GofMethod::lr_chi2;
    r.statistic = c_min;
    r.p_value = lr_chi2_pvalue(c_min, n, d);
    return r;
}

GofResult naive_z_highorder_test(double c_min,
                                 const Eigen::VectorXd& s_hat,
                                 std::size_t d,
                                 const CumulantProvider& cum,
                                 bool subtract_d) {
    MomentPair m = unconditional_moments(s_hat, subtract_d ? d : 0, cum);
    GofResult r;
    r.method = GofMethod::naive_z_highorder;
    r.statistic = c_min;
    r.subtract_d = subtract_d;
    double z = 0;
    r.p_value = z_pvalue(c_min, m, "naive Z", &z);
    r.z = z;
    r.ref_mean = m.mean;
    r.ref_var = m.var;
    return r;
}

GofResult corrected_z_first_test(double c_min,
                                 const Eigen::VectorXd& s_hat,
                                 const Eigen::MatrixXd& X,
                                 const CumulantProvider& cum) {
    MomentPair base = unconditional_moments(s_hat, 0, cum);
    double Q = quadratic_form(s_hat, X, cum);
    MomentPair m{base.mean, base.var - Q};
    GofResult r;
    r.method = GofMethod::corrected_z_first;
    r.statistic = c_min;
    double z = 0;
    r.p_value = z_pvalue(c_min, m, "corrected Z (first order)", &z);
    r.z = z;
    r.ref_mean = m.mean;
    r.ref_var = m.var;
    r.q_form = Q;
    return r;
}

GofResult corrected_z_high_test(double c_min,
                                const Eigen::VectorXd& s_hat,
                                const Eigen::MatrixXd& X,
                                const CumulantProvider& cum) {
    MomentPair m = conditional_moments(s_hat, X, cum);
    GofResult r;
    r.method = GofMethod::corrected_z_high;
    r.statistic = c_min;
    double z = 0;
    r.p_value = z_pvalue(c_min, m, "corrected Z (high order)", &z);
    r.z = z;
    r.ref_mean = m.mean;
    r.ref_var = m.var;
    return r;
}

// ---- bootstrap tests ---------------------------------------------------------

BootstrapSample bootstrap_null_sample(const SpectralModel& model,
                                      const Eigen::VectorXd& theta_hat,
                                      const BootstrapOptions& options) {
    if (options.B < 1) {
        throw validation_error("E_DOMAIN", "bootstrap: B must be at least 1");
    }
    model.check_parameters(theta_hat);

    FitOptions fit = options.fit;
    fit.multistart = false;
    fit.throw_on_failure = true;

    const auto B = static_cast<std::size_t>(options.B);
    std::vector<std::optional<double>> slots(B);
    parallel_for(B, options.n_threads, [&](std::size_t m) {
        std::uint64_t seed_m = derive_stream(options.seed, m);
        BinnedDataset sim = simulate_counts(model, theta_hat, derive_stream(seed_m, 0));
        try {
            FitResult fr = fit_mle(sim, model, theta_hat, fit);
            slots[m] = fr.c_min;
        } catch (const computation_error&) {
            slots[m] = std::nullopt;
        }
    });

    BootstrapSample out;
    out.c_values.reserve(B);
    for (const auto& s : slots) {
        if (s) {
            out.c_values.push_back(*s);
        } else {
            ++out.n_failed;
        }
    }
    if (static_cast<double>(out.n_failed) >
        options.max_failure_frac * static_cast<double>(B)) {
        throw computation_error("E_BOOTSTRAP_FAILURES",
                                "bootstrap: " + std::to_string(out.n_failed) + " of " +
                                    std::to_string(B) + " replicate refits failed");
    }
    return out;
}

GofResult parametric_bootstrap_from_sample(double c_min,
                                           const BootstrapSample& sample,
                                           int B_requested,
                                           bool smooth) {
    if (sample.c_values.empty()) {
        throw computation_error("E_DEGENERATE_REFERENCE",
                                "bootstrap: no successful replicates");
    }
    std::size_t tail = 0;
    for (double c : sample.c_values) {
        if (c >= c_min) ++tail;
    }
    const auto used = static_cast<double>(sample.c_values.size());
    GofResult r;
    r.method = GofMethod::parametric_bootstrap;
    r.statistic = c_min;
    r.p_value = smooth ? (1.0 + static_cast<double>(tail)) / (used + 1.0)
                       : static_cast<double>(tail) / used;
    r.B = B_requested;
    r.n_failed = sample.n_failed;
    r.smoothed = smooth;
    return r;
}

GofResult parametric_bootstrap_test(double c_min,
                                    const SpectralModel& model,
                                    const Eigen::VectorXd& theta_hat,
                                    const BootstrapOptions& options,
                                    bool smooth) {
    BootstrapSample sample = bootstrap_null_sample(model, theta_hat, options);
    return parametric_bootstrap_from_sample(c_min, sample, options.B, smooth);
}

GofResult naive_z_boot_from_sample(double c_min,
                                   const BootstrapSample& sample,
                                   int B_requested) {
    if (sample.c_values.size() < 2) {
        throw computation_error("E_DEGENERATE_REFERENCE",
                                "bootstrap Z: need at least 2 successful replicates");
    }
    KahanSum sum;
    for (double c : sample.c_values) sum.add(c);
    const auto nB = static_cast<double>(sample.c_values.size());
    double mean = sum.value() / nB;
    KahanSum ss;
    for (double c : sample.c_values) ss.add((c - mean) * (c - mean));
    double var = ss.value() / (nB - 1.0);

    GofResult r;
    r.method = GofMethod::naive_z_boot;
    r.statistic = c_min;
    double z = 0;
    r.p_value = z_pvalue(c_min, {mean, var}, "bootstrap Z", &z);
    r.z = z;
    r.ref_mean = mean;
    r.ref_var = var;
    r.B = B_requested;
    r.n_failed = sample.n_failed;
    return r;
}

GofResult naive_z_boot_test(double c_min,
                            const SpectralModel& model,
                            const Eigen::VectorXd& theta_hat,
                            const BootstrapOptions& options) {
    BootstrapSample sample = bootstrap_null_sample(model, theta_hat, options);
    return naive_z_boot_from_sample(c_min, sample, options.B);
}

GofResult double_bootstrap_test(double c_min,
                                const SpectralModel& model,
                                const Eigen::VectorXd& theta_hat,
                                int B1, int B2,
                                std::uint64_t seed,
                                const FitOptions& fit_options,
                                int n_threads,
                                double max_failure_frac) {
    if (B1 < 1 || B2 < 1) {
        throw validation_error("E_DOMAIN", "double bootstrap: B1 and B2 must be at least 1");
    }
    model.check_parameters(theta_hat);

    FitOptions fit = fit_options;
    fit.multistart = false;
    fit.throw_on_failure = true;

    struct OuterSlot {
        bool ok = false;
        double c = 0;
        double p_inner = 0;
        std::size_t inner_failed = 0;
    };
    const auto B1u = static_cast<std::size_t>(B1);
    const auto B2u = static_cast<std::size_t>(B2);
    std::vector<OuterSlot> slots(B1u);

    parallel_for(B1u, n_threads, [&](std::size_t m) {
        std::uint64_t seed_m = derive_stream(seed, m);
        BinnedDataset sim = simulate_counts(model, theta_hat, derive_stream(seed_m, 0));
        FitResult outer;
        try {
            outer = fit_mle(sim, model, theta_hat, fit);
        } catch (const computation_error&) {
            return;
        }
        std::size_t tail = 0, inner_ok = 0, inner_failed = 0;
        for (std::size_t j = 0; j < B2u; ++j) {
            BinnedDataset inner_sim =
                simulate_counts(model, outer.theta_hat, derive_stream(seed_m, 1 + j));
            try {
                FitResult inner = fit_mle(inner_sim, model, outer.theta_hat, fit);
                ++inner_ok;
                if (inner.c_min >= outer.c_min) ++tail;
            } catch (const computation_error&) {
                ++inner_failed;
            }
        }
        slots[m].inner_failed = inner_failed;
        if (inner_ok == 0) return;
        slots[m].ok = true;
        slots[m].c = outer.c_min;
        slots[m].p_inner = static_cast<double>(tail) / static_cast<double>(inner_ok);
    });

    std::size_t outer_failed = 0, inner_failed_total = 0, outer_tail = 0, used = 0;
    for (const auto& s : slots) {
        inner_failed_total += s.inner_failed;
        if (!s.ok) {
            ++outer_failed;
            continue;
        }
        ++used;
        if (s.c >= c_min) ++outer_tail;
    }
    if (used == 0) {
        throw computation_error("E_DEGENERATE_REFERENCE",
                                "double bootstrap: no successful outer replicates");
    }
    if (static_cast<double>(outer_failed) > max_failure_frac * static_cast<double>(B1u) ||
        static_cast<double>(inner_failed_total) >
            max_failure_frac * static_cast<double>(B1u * B2u)) {
        throw computation_error("E_BOOTSTRAP_FAILURES",
                                "double bootstrap: too many replicate refits failed (" +
                                    std::to_string(outer_failed) + " outer, " +
                                    std::to_string(inner_failed_total) + " inner)");
    }

    double p_hat = static_cast<double>(outer_tail) / static_cast<double>(used);
    std::size_t adj = 0;
    for (const auto& s : slots) {
        if (s.ok && s.p_inner <= p_hat) ++adj;
    }
    GofResult r;
    r.method = GofMethod::double_bootstrap;
    r.statistic = c_min;
    r.p_value = static_cast<double>(adj) / static_cast<double>(used);
    r.B1 = B1;
    r.B2 = B2;
    r.n_failed = outer_failed;
    return r;
}

} // namespace cstat
