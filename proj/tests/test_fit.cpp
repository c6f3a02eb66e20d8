#include "cstat/fit.hpp"

#include "cstat/cash.hpp"
#include "cstat/common.hpp"
#include "cstat/model.hpp"

#include <gtest/gtest.h>

#include <Eigen/Dense>

#include <cmath>
#include <memory>

using namespace cstat;

namespace {

Eigen::VectorXd counts_vector(const BinnedDataset& d) {
    Eigen::VectorXd v(static_cast<Eigen::Index>(d.n_bins()));
    for (std::size_t i = 0; i < d.n_bins(); ++i) {
        v[static_cast<Eigen::Index>(i)] = static_cast<double>(d.counts[i]);
    }
    return v;
}

} // namespace

TEST(Fit, ConstantModelHasClosedFormSolution) {
    ConstantModel m(40);
    Eigen::VectorXd theta(1);
    theta << 12.5;
    BinnedDataset d = simulate_counts(m, theta, 5);
    FitResult r = fit_mle(d, m);
    double mean = static_cast<double>(d.total_counts()) / 40.0;
    EXPECT_TRUE(r.converged);
    EXPECT_NEAR(r.theta_hat[0], mean, 1e-7 * mean);
    EXPECT_NEAR(r.c_min, c_total(counts_vector(d), m.expected_counts(r.theta_hat)),
                1e-10 * std::max(1.0, r.c_min));
    EXPECT_EQ(r.param_names, (std::vector<std::string>{"theta"}));
    EXPECT_FALSE(r.at_boundary);
    EXPECT_EQ(r.clamped_bins, 0u);
}

TEST(Fit, PowerLawRecoversTruthOnLargeCounts) {
    PowerLawModel m(100);
    Eigen::VectorXd truth(2);
    truth << 300.0, 2.5;
    BinnedDataset d = simulate_counts(m, truth, 21);
    FitResult r = fit_mle(d, m);
    EXPECT_TRUE(r.converged);
    // Large counts: the MLE should sit within a few percent of the truth.
    EXPECT_NEAR(r.theta_hat[0], truth[0], 0.1 * truth[0]);
    EXPECT_NEAR(r.theta_hat[1], truth[1], 0.25);
    EXPECT_LT(r.grad_norm, 1e-8 * (1.0 + std::fabs(r.c_min)));

    // The reported minimum beats the truth and any nearby perturbation.
    Eigen::VectorXd c = counts_vector(d);
    double at_truth = c_total(c, m.expected_counts(truth));
    EXPECT_LE(r.c_min, at_truth + 1e-9);
    for (double dk : {-0.02, 0.02}) {
        Eigen::VectorXd probe = r.theta_hat;
        probe[0] *= (1.0 + dk);
        EXPECT_LE(r.c_min, c_total(c, m.expected_counts(probe)) + 1e-9);
        probe = r.theta_hat;
        probe[1] += dk;
        EXPECT_LE(r.c_min, c_total(c, m.expected_counts(probe)) + 1e-9);
    }
}

TEST(Fit, ExplicitInitIsHonored) {
    PowerLawModel m(60);
    Eigen::VectorXd truth(2);
    truth << 50.0, 1.0;
    BinnedDataset d = simulate_counts(m, truth, 31);
    Eigen::VectorXd init(2);
    init << 40.0, 0.5;
    FitResult a = fit_mle(d, m, init);
    FitResult b = fit_mle(d, m);
    EXPECT_TRUE(a.converged);
    EXPECT_TRUE(b.converged);
    EXPECT_NEAR(a.theta_hat[0], b.theta_hat[0], 1e-5 * b.theta_hat[0]);
    EXPECT_NEAR(a.theta_hat[1], b.theta_hat[1], 1e-5);
    EXPECT_NEAR(a.c_min, b.c_min, 1e-8 * std::max(1.0, std::fabs(b.c_min)));
}

TEST(Fit, AllZeroCountsPinToLowerBoundary) {
    ConstantModel m(25);
    BinnedDataset d;
    d.counts.assign(25, 0);
    d.edges.resize(26);
    for (int j = 0; j <= 25; ++j) d.edges[j] = j;
    FitResult r = fit_mle(d, m);
    EXPECT_TRUE(r.at_boundary);
    // The optimum sits on the lower bound (up to round-trip through the
    // log-scale transform).
    EXPECT_NEAR(r.theta_hat[0], m.parameters()[0].lower,
                1e-12 * m.parameters()[0].lower);
}

TEST(Fit, NonConvergenceThrowsOrReturnsBest) {
    PowerLawModel m(50);
    Eigen::VectorXd truth(2);
    truth << 80.0, 2.0;
    BinnedDataset d = simulate_counts(m, truth, 77);
    FitOptions strict;
    strict.max_iter = 1;
    strict.multistart = false;
    Eigen::VectorXd far_init(2);
    far_init << 1e-4, -10.0;
    try {
        fit_mle(d, m, far_init, strict);
        FAIL() << "expected fit_failure";
    } catch (const fit_failure& e) {
        EXPECT_EQ(e.code(), "E_FIT_NONCONVERGED");
        EXPECT_FALSE(e.best().converged);
        EXPECT_EQ(e.best().n_iter, 1);
    }
    strict.throw_on_failure = false;
    FitResult r = fit_mle(d, m, far_init, strict);
    EXPECT_FALSE(r.converged);
    EXPECT_TRUE(std::isfinite(r.c_min));
}

TEST(Fit, ZeroFreeParametersIsImmediate) {
    auto inner = std::make_shared<PowerLawModel>(30);
    Eigen::VectorXd frozen(2);
    frozen << 20.0, 1.5;
    FixedParamsModel m(inner, {true, true}, frozen);
    BinnedDataset d = simulate_counts(*inner, frozen, 13);
    FitResult r = fit_mle(d, m);
    EXPECT_TRUE(r.converged);
    EXPECT_EQ(r.theta_hat.size(), 0);
    EXPECT_EQ(r.n_iter, 0);
    Eigen::VectorXd c = counts_vector(d);
    EXPECT_DOUBLE_EQ(r.c_min, c_total(c, inner->expected_counts(frozen)));
}

TEST(Fit, DatasetShapeMismatchIsRejected) {
    ConstantModel m(10);
    BinnedDataset d;
    d.counts.assign(8, 1);
    d.edges.resize(9);
    for (int j = 0; j <= 8; ++j) d.edges[j] = j;
    EXPECT_THROW(fit_mle(d, m), validation_error);
}

TEST(Fit, FisherInformationMatchesDefinition) {
    PowerLawModel m(20);
    Eigen::VectorXd theta(2);
    theta << 10.0, 1.2;
    BinnedDataset d = simulate_counts(m, theta, 3);
    FitResult r = fit_mle(d, m);
    Eigen::VectorXd s = m.expected_counts(r.theta_hat);
    Eigen::MatrixXd X = m.gradient(r.theta_hat);
    Eigen::MatrixXd want = X.transpose() * s.cwiseInverse().asDiagonal() * X;
    EXPECT_LT((r.fisher - want).norm(), 1e-10 * want.norm());

    Eigen::MatrixXd I = fisher_information(X, s);
    EXPECT_LT((I - want).norm(), 1e-12 * want.norm());
    // Duplicate columns make the information singular.
    Eigen::MatrixXd Xs(20, 2);
    Xs.col(0) = X.col(0);
    Xs.col(1) = X.col(0);
    EXPECT_THROW(fisher_information(Xs, s), computation_error);
    EXPECT_THROW(fisher_information(X, Eigen::VectorXd::Zero(20)), validation_error);
}
