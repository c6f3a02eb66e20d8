#pragma once

#include <Eigen/Core>

namespace cstat {

// Per-bin Cash statistic contribution,
//
//   c(N, s) = 2 * (s - N + N * log(N / s)),   with N log N := 0 at N = 0,
//
// which is twice the Poisson deviance of one bin. The direct formula
// cancels catastrophically when N is close to s, so that regime is summed
// as a series in (N - s)/(N + s); the result is accurate to full double
// precision for all N >= 0, s > 0. Negative N, or s <= 0, or non-finite
// inputs throw validation_error.
double c_per_bin(double n_obs, double s);

// Total Cash statistic: compensated sum of c(N_i, s_i).
double c_total(const Eigen::VectorXd& counts, const Eigen::VectorXd& s);

// Gradient of the total statistic with respect to the model parameters,
// given the Jacobian X (n x d, row i = grad of s_i):
//
//   dC/dtheta = X^T w,   w_i = 2 * (1 - N_i / s_i).
Eigen::VectorXd c_gradient(const Eigen::VectorXd& counts,
                           const Eigen::VectorXd& s,
                           const Eigen::MatrixXd& X);

} // namespace cstat
