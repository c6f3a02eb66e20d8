#pragma once

#include "cstat/common.hpp"
#include "cstat/dataset.hpp"
#include "cstat/model.hpp"

#include <Eigen/Core>

#include <optional>
#include <string>
#include <vector>

namespace cstat {

struct FitOptions {
    // Convergence when the projected gradient of C in the original
    // coordinates satisfies ||g||_inf < tol_grad * (1 + |C|).
    double tol_grad = 1e-8;
    int max_iter = 500;
    // Also try the default start scaled by 2 and by 0.5 elementwise
    // (clamped into bounds) and keep the best minimum.
    bool multistart = true;
    // Throw fit_failure instead of returning converged = false.
    bool throw_on_failure = true;
};

struct FitResult {
    Eigen::VectorXd theta_hat;
    std::vector<std::string> param_names;
    double c_min = 0;
    Eigen::MatrixXd fisher; // X^T V^-1 X at theta_hat, V = diag(s_hat)
    bool converged = false;
    int n_iter = 0;
    double grad_norm = 0;   // projected infinity norm at theta_hat
    bool at_boundary = false;
    std::size_t clamped_bins = 0;
};

// Non-convergence; carries the best iterate found so callers can inspect
// or count it.
class fit_failure : public computation_error {
public:
    fit_failure(const std::string& what, FitResult best)
        : computation_error("E_FIT_NONCONVERGED", what), best_(std::move(best)) {}
    const FitResult& best() const { return best_; }

private:
    FitResult best_;
};

// Minimizes the Cash statistic by BFGS on box-transformed parameters
// (log scale where the model marks a parameter positive). A fit pinned at
// a parameter bound can still converge: the criterion uses the projected
// gradient, and at_boundary is set on the result.
FitResult fit_mle(const BinnedDataset& data,
                  const SpectralModel& model,
                  std::optional<Eigen::VectorXd> init = std::nullopt,
                  const FitOptions& options = {});

// Fisher information X^T V^-1 X with a conditioning check: throws
// computation_error (E_FISHER_SINGULAR) when the matrix is not positive
// definite or its condition number exceeds 1e12, which usually means the
// model should be reparameterized.
Eigen::MatrixXd fisher_information(const Eigen::MatrixXd& X,
                                   const Eigen::VectorXd& s);

} // namespace cstat
