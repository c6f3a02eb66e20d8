#pragma once

#include "cstat/cumulants.hpp"
#include "cstat/fit.hpp"
#include "cstat/model.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace cstat {

// Goodness-of-fit tests for a fitted model. All p-values are one-sided
// upper-tail probabilities of the observed statistic under the reference
// distribution.
enum class GofMethod {
    lr_chi2,              // chi-square with n - d degrees of freedom
    naive_z_boot,         // Z against bootstrap sample mean and variance
    naive_z_highorder,    // Z against unconditional moments
    corrected_z_first,    // Z with first-order variance correction
    corrected_z_high,     // Z against conditional moments (recommended)
    parametric_bootstrap, // empirical tail of refitted replicates
    double_bootstrap,     // bootstrap-calibrated bootstrap p-value
};

std::string method_name(GofMethod m);
GofMethod parse_method(const std::string& name); // throws validation_error

struct MomentPair {
    double mean = 0;
    double var = 0;
};

struct GofResult {
    GofMethod method = GofMethod::lr_chi2;
    double statistic = 0; // observed C at theta_hat
    double p_value = 0;
    std::optional<double> z;
    std::optional<double> ref_mean;
    std::optional<double> ref_var;
    std::optional<double> q_form;
    int B = 0, B1 = 0, B2 = 0;
    std::size_t n_failed = 0;
    bool smoothed = false;
    bool subtract_d = true;
};

// ---- moment machinery -----------------------------------------------------

// Unconditional reference moments of C(theta_hat):
//   mean = sum_i k1(s_i) - d,   var = sum_i k2(s_i).
MomentPair unconditional_moments(const Eigen::VectorXd& s_hat,
                                 std::size_t d,
                                 const CumulantProvider& cum);

// Quadratic form absorbed by estimation,
//   Q = u^T X (X^T V^-1 X)^-1 X^T u,   u_i = k11(s_i) / s_i,
// with V = diag(s_hat). Nonnegative by construction; throws
// computation_error when X^T V^-1 X is not positive definite.
double quadratic_form(const Eigen::VectorXd& s_hat,
                      const Eigen::MatrixXd& X,
                      const CumulantProvider& cum);

// Conditional reference moments of C(theta_hat) given the fit, for a
// general differentiable model. X is the n x d Jacobian at theta_hat.
MomentPair conditional_moments(const Eigen::VectorXd& s_hat,
                               const Eigen::MatrixXd& X,
                               const CumulantProvider& cum);

// Same moments specialized to a log-linear model, written directly in the
// design matrix (n x d) of the linear predictor. Algebraically equal to
// conditional_moments with X = V * design; kept as an independent
// computation path and cross-checked in the tests.
MomentPair conditional_moments_loglinear(const Eigen::VectorXd& s_hat,
                                         const Eigen::MatrixXd& design,
                                         const CumulantProvider& cum);

// ---- analytic tests --------------------------------------------------------

double lr_chi2_pvalue(double c_min, std::size_t n, std::size_t d);
GofResult lr_chi2_test(double c_min, std::size_t n, std::size_t d);

// Z against the unconditional moments. subtract_d controls whether the
// reference mean is sum k1 - d (default) or sum k1.
GofResult naive_z_highorder_test(double c_min,
                                 const Eigen::VectorXd& s_hat,
                                 std::size_t d,
                                 const CumulantProvider& cum,
                                 bool subtract_d = true);

// Z with mean sum k1 and variance sum k2 - Q.
GofResult corrected_z_first_test(double c_min,
                                 const Eigen::VectorXd& s_hat,
                                 const Eigen::MatrixXd& X,
                                 const CumulantProvider& cum);

// Z against the conditional moments (the recommended correction).
GofResult corrected_z_high_test(double c_min,
                                const Eigen::VectorXd& s_hat,
                                const Eigen::MatrixXd& X,
                                const CumulantProvider& cum);

// ---- bootstrap tests -------------------------------------------------------

struct BootstrapOptions {
    int B = 300;
    std::uint64_t seed = 0;
    int n_threads = 1;
    FitOptions fit; // multistart is disabled for replicate refits
    // Abort with computation_error when more than this fraction of
    // replicates fails to refit.
    double max_failure_frac = 0.05;
};

// Simulates B datasets at theta_hat, refits each (started at theta_hat),
// and returns the replicate statistics C(theta_hat_m) in replicate order.
// Failed refits are dropped and counted.
struct BootstrapSample {
    std::vector<double> c_values;
    std::size_t n_failed = 0;
};
BootstrapSample bootstrap_null_sample(const SpectralModel& model,
                                      const Eigen::VectorXd& theta_hat,
                                      const BootstrapOptions& options);

// Empirical upper-tail p-value p = (1/B) sum 1{C_m >= c_min}; with smooth,
// (1 + sum) / (B + 1).
GofResult parametric_bootstrap_test(double c_min,
                                    const SpectralModel& model,
                                    const Eigen::VectorXd& theta_hat,
                                    const BootstrapOptions& options,
                                    bool smooth = false);

// Same test computed from an existing replicate sample.
GofResult parametric_bootstrap_from_sample(double c_min,
                                           const BootstrapSample& sample,
                                           int B_requested,
                                           bool smooth = false);

// Z against the bootstrap sample mean and variance (B - 1 divisor).
GofResult naive_z_boot_test(double c_min,
                            const SpectralModel& model,
                            const Eigen::VectorXd& theta_hat,
                            const BootstrapOptions& options);
GofResult naive_z_boot_from_sample(double c_min,
                                   const BootstrapSample& sample,
                                   int B_requested);

// Double bootstrap: outer level as the parametric bootstrap; each outer
// replicate m gets an inner bootstrap at theta_hat_m giving p_m, and the
// adjusted p-value is the fraction of p_m at or below the outer p.
GofResult double_bootstrap_test(double c_min,
                                const SpectralModel& model,
                                const Eigen::VectorXd& theta_hat,
                                int B1, int B2,
                                std::uint64_t seed,
                                const FitOptions& fit_options,
                                int n_threads,
                                double max_failure_frac = 0.05);

} // namespace cstat
