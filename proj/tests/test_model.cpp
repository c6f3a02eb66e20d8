#include "cstat/model.hpp"

#include "cstat/common.hpp"
#include "cstat/response.hpp"
#include "cstat/rng.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

#include <Eigen/Dense>

#include <cmath>
#include <memory>

using namespace cstat;

namespace {

void expect_jacobian_matches_fd(const SpectralModel& model,
                                const Eigen::VectorXd& theta,
                                double tol = 1e-6) {
    Eigen::MatrixXd got = model.gradient(theta);
    Eigen::MatrixXd want = oracle::fd_jacobian(model, theta);
    for (Eigen::Index i = 0; i < got.rows(); ++i) {
        for (Eigen::Index k = 0; k < got.cols(); ++k) {
            double denom = std::max(1.0, std::fabs(want(i, k)));
            EXPECT_LT(std::fabs(got(i, k) - want(i, k)) / denom, tol)
                << "bin " << i << " param " << k;
        }
    }
}

} // namespace

TEST(ConstantModelTest, CountsGradientAndInit) {
    ConstantModel m(4);
    EXPECT_EQ(m.n_bins(), 4u);
    EXPECT_EQ(m.n_params(), 1u);
    EXPECT_EQ(m.parameters()[0].name, "theta");

    Eigen::VectorXd theta(1);
    theta << 3.25;
    Eigen::VectorXd s = m.expected_counts(theta);
    for (int i = 0; i < 4; ++i) EXPECT_DOUBLE_EQ(s[i], 3.25);
    expect_jacobian_matches_fd(m, theta);

    BinnedDataset d;
    d.counts = {2, 4, 6, 8};
    d.edges = {0, 1, 2, 3, 4};
    EXPECT_DOUBLE_EQ(m.default_init(d)[0], 5.0);
}

TEST(PowerLawModelTest, UniformGridEnergies) {
    PowerLawModel m(4);
    Eigen::VectorXd theta(2);
    theta << 2.0, 3.0;
    Eigen::VectorXd s = m.expected_counts(theta);
    // E_i = 1 + i/n are the upper bin edges on (1, 2].
    EXPECT_DOUBLE_EQ(s[0], 2.0 * std::pow(1.25, -3.0));
    EXPECT_DOUBLE_EQ(s[3], 2.0 * std::pow(2.0, -3.0));
    expect_jacobian_matches_fd(m, theta);

    auto edges = m.grid_edges();
    ASSERT_EQ(edges.size(), 5u);
    EXPECT_DOUBLE_EQ(edges.front(), 1.0);
    EXPECT_DOUBLE_EQ(edges.back(), 2.0);
}

TEST(PowerLawModelTest, ExplicitEnergiesAndValidation) {
    Eigen::VectorXd energies(3);
    energies << 0.5, 1.0, 4.0;
    PowerLawModel m(energies, {0.25, 0.75, 2.0, 6.0});
    Eigen::VectorXd theta(2);
    theta << 1.0, 2.0;
    Eigen::VectorXd s = m.expected_counts(theta);
    EXPECT_DOUBLE_EQ(s[0], 4.0);
    EXPECT_DOUBLE_EQ(s[2], 1.0 / 16.0);
    expect_jacobian_matches_fd(m, theta);

    Eigen::VectorXd bad(2);
    bad << 0.0, 1.0;
    EXPECT_THROW(PowerLawModel(bad, {}), validation_error);
}

TEST(PowerLawModelTest, DefaultInitRecoversCleanSlope) {
    PowerLawModel m(50);
    Eigen::VectorXd truth(2);
    truth << 500.0, 2.0;
    Eigen::VectorXd s = m.expected_counts(truth);
    BinnedDataset d;
    d.edges = m.grid_edges();
    d.counts.resize(50);
    for (int i = 0; i < 50; ++i) d.counts[i] = std::llround(s[i]);
    Eigen::VectorXd init = m.default_init(d);
    EXPECT_NEAR(init[1], 2.0, 0.2);
    EXPECT_NEAR(std::log(init[0]), std::log(500.0), 0.2);
}

TEST(PowerLawLineModelTest, LineReplacesContinuum) {
    PowerLawLineModel m(10, 3, 5);
    Eigen::VectorXd theta(3);
    theta << 2.0, 1.0, 7.0;
    Eigen::VectorXd s = m.expected_counts(theta);
    // Line occupies bins i with m1 < i <= m2 (1-based): bins 4 and 5.
    EXPECT_DOUBLE_EQ(s[2], 2.0 / 1.3);
    EXPECT_DOUBLE_EQ(s[3], 7.0);
    EXPECT_DOUBLE_EQ(s[4], 7.0);
    EXPECT_DOUBLE_EQ(s[5], 2.0 / 1.6);
    expect_jacobian_matches_fd(m, theta);

    EXPECT_THROW(PowerLawLineModel(10, 5, 5), validation_error);
    EXPECT_THROW(PowerLawLineModel(10, 3, 11), validation_error);
}

TEST(LogLinearModelTest, CountsGradientAndClamping) {
    Eigen::MatrixXd design(3, 2);
    design << 1.0, 0.5,
              1.0, -0.5,
              0.0, 1.0;
    LogLinearModel m(design);
    EXPECT_EQ(m.parameters()[0].name, "theta1");
    EXPECT_EQ(m.parameters()[1].name, "theta2");

    Eigen::VectorXd theta(2);
    theta << 1.0, 2.0;
    Eigen::VectorXd s = m.expected_counts(theta);
    EXPECT_NEAR(s[0], std::exp(2.0), 1e-12);
    EXPECT_NEAR(s[2], std::exp(2.0), 1e-12);
    expect_jacobian_matches_fd(m, theta, 2e-6);

    // Strongly negative linear predictor drops below the floor and clamps.
    Eigen::VectorXd low(2);
    low << -40.0, 0.0;
    ClampReport rep;
    Eigen::VectorXd sc = m.expected_counts(low, &rep);
    EXPECT_DOUBLE_EQ(sc[0], SpectralModel::eps_floor);
    EXPECT_EQ(rep.clamped(), 2u);
    // Clamped rows are zeroed in the combined evaluation.
    ModelEvaluation ev = evaluate_model(m, low);
    EXPECT_EQ(ev.clamped, 2u);
    EXPECT_DOUBLE_EQ(ev.X.row(0).norm(), 0.0);
    EXPECT_DOUBLE_EQ(ev.X.row(1).norm(), 0.0);
    EXPECT_GT(ev.X.row(2).norm(), 0.0);
}

TEST(ModelTest, ParameterBoxIsEnforced) {
    PowerLawModel m(5);
    Eigen::VectorXd bad(2);
    bad << -1.0, 3.0; // K below its lower bound
    EXPECT_THROW(m.expected_counts(bad), validation_error);
    Eigen::VectorXd wrong_size(3);
    wrong_size.setOnes();
    EXPECT_THROW(m.expected_counts(wrong_size), validation_error);
    Eigen::VectorXd nan_theta(2);
    nan_theta << std::nan(""), 3.0;
    EXPECT_THROW(m.expected_counts(nan_theta), validation_error);
}

TEST(FoldedModelTest, IdentityFoldMatchesDirectComposition) {
    const std::size_t n = 12;
    auto resp = make_case_response(ResponseCase::identity, n);
    auto continuum = std::make_shared<PowerLawModel>(
        resp.midpoints(), std::vector<double>(resp.model_edges.data(),
                                              resp.model_edges.data() + n + 1));
    Eigen::VectorXd bg = Eigen::VectorXd::Constant(n, 0.1);
    FoldedModel folded(continuum, resp, bg, 2.0);

    Eigen::VectorXd theta(2);
    theta << 30.0, 3.0;
    Eigen::VectorXd got = folded.expected_counts(theta);
    Eigen::VectorXd g = continuum->expected_counts(theta);
    Eigen::VectorXd w = resp.widths();
    for (std::size_t i = 0; i < n; ++i) {
        auto ii = static_cast<Eigen::Index>(i);
        // Identity response: fold reduces to exposure * (area*g*width + bg),
        // and must reproduce it exactly, not just approximately.
        EXPECT_EQ(got[ii], 2.0 * (resp.area[ii] * g[ii] * w[ii] + 0.1));
    }
    expect_jacobian_matches_fd(folded, theta);
}

TEST(FoldedModelTest, TridiagonalFoldAndShapeChecks) {
    const std::size_t n = 8;
    auto resp = make_case_response(ResponseCase::tridiagonal, n);
    auto continuum = std::make_shared<PowerLawModel>(
        resp.midpoints(), std::vector<double>());
    FoldedModel folded(continuum, resp, Eigen::VectorXd(), 1.0);
    Eigen::VectorXd theta(2);
    theta << 50.0, 2.0;
    Eigen::VectorXd s = folded.expected_counts(theta);
    EXPECT_EQ(s.size(), static_cast<Eigen::Index>(n));
    // Folding conserves total signal for row-stochastic responses.
    Eigen::VectorXd g = continuum->expected_counts(theta);
    Eigen::VectorXd w = resp.widths();
    EXPECT_NEAR(s.sum(), (g.array() * w.array()).sum(), 1e-10);
    expect_jacobian_matches_fd(folded, theta);

    auto small = make_case_response(ResponseCase::identity, 4);
    EXPECT_THROW(FoldedModel(continuum, small, Eigen::VectorXd(), 1.0),
                 validation_error);
    Eigen::VectorXd bad_bg = Eigen::VectorXd::Constant(n, -1.0);
    EXPECT_THROW(FoldedModel(continuum, resp, bad_bg, 1.0), validation_error);
    EXPECT_THROW(FoldedModel(continuum, resp, Eigen::VectorXd(), 0.0),
                 validation_error);
}

TEST(FixedParamsModelTest, FreezeAndExpand) {
    auto inner = std::make_shared<PowerLawModel>(6);
    FixedParamsModel m(inner, {false, true}, (Eigen::VectorXd(2) << 0.0, 2.5).finished());
    EXPECT_EQ(m.n_params(), 1u);
    EXPECT_EQ(m.parameters()[0].name, "K");

    Eigen::VectorXd free_theta(1);
    free_theta << 4.0;
    Eigen::VectorXd full = m.expand(free_theta);
    ASSERT_EQ(full.size(), 2);
    EXPECT_DOUBLE_EQ(full[0], 4.0);
    EXPECT_DOUBLE_EQ(full[1], 2.5);

    Eigen::VectorXd s = m.expected_counts(free_theta);
    Eigen::VectorXd want = inner->expected_counts(full);
    for (int i = 0; i < 6; ++i) EXPECT_DOUBLE_EQ(s[i], want[i]);
    expect_jacobian_matches_fd(m, free_theta);

    EXPECT_THROW(FixedParamsModel(inner, {true}, Eigen::VectorXd::Ones(1)),
                 validation_error);
    // Frozen value outside the inner parameter box.
    EXPECT_THROW(FixedParamsModel(inner, {true, false},
                                  (Eigen::VectorXd(2) << -5.0, 0.0).finished()),
                 validation_error);
}

TEST(SimulateTest, DeterministicAndPlausible) {
    ConstantModel m(200);
    Eigen::VectorXd theta(1);
    theta << 50.0;
    BinnedDataset a = simulate_counts(m, theta, 7);
    BinnedDataset b = simulate_counts(m, theta, 7);
    BinnedDataset c = simulate_counts(m, theta, 8);
    EXPECT_EQ(a.counts, b.counts);
    EXPECT_NE(a.counts, c.counts);
    EXPECT_EQ(a.n_bins(), 200u);
    EXPECT_EQ(a.edges.size(), 201u);
    double mean = static_cast<double>(a.total_counts()) / 200.0;
    EXPECT_NEAR(mean, 50.0, 5.0 * std::sqrt(50.0 / 200.0));
}
