#include "cstat/calibrate.hpp"

#include "cstat/common.hpp"
#include "cstat/model.hpp"
#include "cstat/stats.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <sstream>

using namespace cstat;

namespace {

ExperimentGrid tiny_grid() {
    ExperimentGrid g;
    g.family = TruthFamily::constant;
    g.K_values = {5.0};
    g.n_values = {12};
    g.alphas = {0.1, 0.3};
    g.M = 40;
    g.B = 16;
    g.seed = 7;
    g.n_threads = 1;
    return g;
}

const CellResult* find_cell(const CalibrationReport& rep, const std::string& algo,
                            double alpha) {
    for (const auto& c : rep.cells) {
        if (c.algorithm == algo && std::fabs(c.alpha - alpha) < 1e-12) return &c;
    }
    return nullptr;
}

} // namespace

TEST(Calibrate, CellCoverageAndInvariants) {
    std::vector<GofMethod> methods{GofMethod::lr_chi2, GofMethod::naive_z_highorder,
                                   GofMethod::parametric_bootstrap};
    CumulantProvider cum;
    CalibrationReport rep = calibration_run(tiny_grid(), methods, cum);

    // One row per method x alpha x (n, K) cell.
    EXPECT_EQ(rep.cells.size(), 3u * 2u);
    for (const auto& c : rep.cells) {
        EXPECT_EQ(c.n, 12u);
        EXPECT_DOUBLE_EQ(c.K, 5.0);
        EXPECT_EQ(c.metric, "type1");
        EXPECT_LE(c.m_used, 40u);
        EXPECT_GE(c.value, 0.0);
        EXPECT_LE(c.value, 1.0);
        double want_se = std::sqrt(c.value * (1.0 - c.value) /
                                   static_cast<double>(c.m_used));
        EXPECT_NEAR(c.se, want_se, 1e-15);
    }

    // Every requested combination appears exactly once.
    for (GofMethod m : methods) {
        for (double a : {0.1, 0.3}) {
            std::size_t hits = 0;
            for (const auto& c : rep.cells) {
                if (c.algorithm == method_name(m) && std::fabs(c.alpha - a) < 1e-12) ++hits;
            }
            EXPECT_EQ(hits, 1u) << method_name(m) << " alpha " << a;
        }
    }
}

TEST(Calibrate, LrCriticalValueIsDeterministic) {
    std::vector<GofMethod> methods{GofMethod::lr_chi2};
    CumulantProvider cum;
    CalibrationReport rep = calibration_run(tiny_grid(), methods, cum);
    const CellResult* c = find_cell(rep, "lr-chi2", 0.1);
    ASSERT_NE(c, nullptr);
    // Constant model: d = 1, so the chi-square critical value is fixed
    // across replicates and its spread collapses.
    EXPECT_NEAR(c->q_alpha, chi2_quantile(0.9, 11.0), 1e-12);
    EXPECT_DOUBLE_EQ(c->q_se, 0.0);
}

TEST(Calibrate, CommonRandomNumbersAcrossMethodSubsets) {
    CumulantProvider cum;
    CalibrationReport all = calibration_run(
        tiny_grid(),
        {GofMethod::lr_chi2, GofMethod::naive_z_highorder, GofMethod::parametric_bootstrap},
        cum);
    CalibrationReport lr_only = calibration_run(tiny_grid(), {GofMethod::lr_chi2}, cum);

    const CellResult* a = find_cell(all, "lr-chi2", 0.1);
    const CellResult* b = find_cell(lr_only, "lr-chi2", 0.1);
    ASSERT_NE(a, nullptr);
    ASSERT_NE(b, nullptr);
    // Replicate datasets are keyed by (cell, replicate), not by the method
    // list, so the same replicates drive both runs.
    EXPECT_DOUBLE_EQ(a->value, b->value);
    EXPECT_DOUBLE_EQ(a->q_alpha, b->q_alpha);
    EXPECT_EQ(a->m_used, b->m_used);
}

TEST(Calibrate, ThreadCountDoesNotChangeResults) {
    std::vector<GofMethod> methods{GofMethod::naive_z_highorder,
                                   GofMethod::parametric_bootstrap};
    CumulantProvider cum;
    ExperimentGrid g1 = tiny_grid();
    ExperimentGrid g3 = tiny_grid();
    g3.n_threads = 3;
    CalibrationReport r1 = calibration_run(g1, methods, cum);
    CalibrationReport r3 = calibration_run(g3, methods, cum);
    ASSERT_EQ(r1.cells.size(), r3.cells.size());
    for (std::size_t i = 0; i < r1.cells.size(); ++i) {
        EXPECT_EQ(r1.cells[i].algorithm, r3.cells[i].algorithm);
        EXPECT_DOUBLE_EQ(r1.cells[i].value, r3.cells[i].value);
        EXPECT_DOUBLE_EQ(r1.cells[i].se, r3.cells[i].se);
        EXPECT_DOUBLE_EQ(r1.cells[i].q_alpha, r3.cells[i].q_alpha);
        EXPECT_EQ(r1.cells[i].m_used, r3.cells[i].m_used);
        EXPECT_EQ(r1.cells[i].n_failed, r3.cells[i].n_failed);
    }
}

TEST(Calibrate, PowerMetricForLineFamilies) {
    ExperimentGrid g;
    g.family = TruthFamily::powerlaw_emission;
    g.K_values = {2.0};
    g.n_values = {20};
    g.alphas = {0.1};
    g.M = 20;
    g.seed = 99;
    CumulantProvider cum;
    CalibrationReport rep = calibration_run(g, {GofMethod::lr_chi2}, cum);
    ASSERT_EQ(rep.cells.size(), 1u);
    EXPECT_EQ(rep.cells[0].metric, "power");
}

TEST(Calibrate, GridValidation) {
    CumulantProvider cum;
    ExperimentGrid empty = tiny_grid();
    empty.K_values.clear();
    EXPECT_THROW(calibration_run(empty, {GofMethod::lr_chi2}, cum), validation_error);

    ExperimentGrid bad_alpha = tiny_grid();
    bad_alpha.alphas = {0.0};
    EXPECT_THROW(calibration_run(bad_alpha, {GofMethod::lr_chi2}, cum), validation_error);

    ExperimentGrid no_m = tiny_grid();
    no_m.M = 0;
    EXPECT_THROW(calibration_run(no_m, {GofMethod::lr_chi2}, cum), validation_error);

    EXPECT_THROW(calibration_run(tiny_grid(), {}, cum), validation_error);
}

TEST(Calibrate, CsvHasMetricAndCriticalRows) {
    CumulantProvider cum;
    CalibrationReport rep =
        calibration_run(tiny_grid(), {GofMethod::lr_chi2, GofMethod::naive_z_highorder}, cum);
    std::string csv = calibration_to_csv(rep);
    EXPECT_EQ(csv.rfind("algorithm,n,K,alpha,metric,value,se\n", 0), 0u);
    std::size_t lines = 0;
    for (char ch : csv) lines += (ch == '\n');
    // Header plus a metric row and a critical-value row per cell.
    EXPECT_EQ(lines, 1u + 2u * rep.cells.size());
    EXPECT_NE(csv.find("q_alpha"), std::string::npos);
    EXPECT_NE(csv.find("type1"), std::string::npos);
}

TEST(Calibrate, NullSampleDeterministicAndSized) {
    ConstantModel m(10);
    Eigen::VectorXd theta(1);
    theta << 4.0;
    FitOptions fo;
    std::size_t failed = 0;
    std::vector<double> a = null_sample(m, theta, 25, 5, fo, 1, &failed);
    std::vector<double> b = null_sample(m, theta, 25, 5, fo, 3);
    EXPECT_EQ(a, b);
    EXPECT_EQ(a.size() + failed, 25u);
    for (double c : a) EXPECT_GE(c, 0.0);
    std::vector<double> c = null_sample(m, theta, 25, 6, fo, 1);
    EXPECT_NE(a, c);
}

TEST(Calibrate, ResponseStudySmoke) {
    FitOptions fo;
    ResponseStudyResult r =
        response_case_study(ResponseCase::tridiagonal, 12, 5.0, 3.0, 30, 77, fo, 1);
    EXPECT_EQ(r.c_case.size() + r.failed_case, 30u);
    EXPECT_EQ(r.c_identity.size() + r.failed_identity, 30u);
    EXPECT_GE(r.ks, 0.0);
    EXPECT_LE(r.ks, 1.0);
}

TEST(Calibrate, RuntimeComparisonSmoke) {
    CumulantProvider cum;
    auto rows = runtime_comparison({10}, 5.0, 2.0, 4, 1, 21, cum);
    ASSERT_EQ(rows.size(), 1u);
    EXPECT_EQ(rows[0].n, 10u);
    EXPECT_GT(rows[0].bootstrap_seconds, 0.0);
    EXPECT_GT(rows[0].corrected_seconds, 0.0);
}

TEST(Calibrate, PresetsAreKnown) {
    for (const auto& name : preset_names()) {
        ExperimentGrid g = preset_grid(name);
        EXPECT_FALSE(g.K_values.empty()) << name;
        EXPECT_FALSE(g.n_values.empty()) << name;
        EXPECT_FALSE(preset_methods(name).empty()) << name;
    }
    ExperimentGrid fig2 = preset_grid("fig2-desk");
    EXPECT_EQ(fig2.family, TruthFamily::powerlaw);
    EXPECT_EQ(fig2.n_values, (std::vector<std::size_t>{100}));
    EXPECT_EQ(fig2.K_values, (std::vector<double>{0.1, 0.25}));
    EXPECT_EQ(fig2.M, 2000u);
    EXPECT_THROW(preset_grid("fig9-desk"), validation_error);
    EXPECT_THROW(preset_methods("fig9-desk"), validation_error);
}
