#include "cstat/response.hpp"

#include "cstat/common.hpp"

#include <gtest/gtest.h>

#include <Eigen/Dense>

using namespace cstat;

TEST(Response, IdentityCase) {
    auto r = make_case_response(ResponseCase::identity, 5);
    EXPECT_EQ(r.n_model_bins(), 5u);
    EXPECT_EQ(r.n_channels(), 5u);
    EXPECT_TRUE(r.rmf.isIdentity(0.0));
    EXPECT_NO_THROW(r.validate(true));
    EXPECT_DOUBLE_EQ(r.model_edges[0], 1.0);
    EXPECT_DOUBLE_EQ(r.model_edges[5], 2.0);
    EXPECT_DOUBLE_EQ(r.midpoints()[0], 1.1);
    EXPECT_NEAR(r.widths()[2], 0.2, 1e-15);
}

TEST(Response, TridiagonalRowsSumToOne) {
    auto r = make_case_response(ResponseCase::tridiagonal, 6);
    EXPECT_NO_THROW(r.validate(true));
    for (Eigen::Index j = 0; j < 6; ++j) {
        EXPECT_NEAR(r.rmf.row(j).sum(), 1.0, 1e-15);
    }
    EXPECT_DOUBLE_EQ(r.rmf(0, 0), 0.9);
    EXPECT_DOUBLE_EQ(r.rmf(2, 2), 0.8);
    EXPECT_DOUBLE_EQ(r.rmf(2, 1), 0.1);
    EXPECT_DOUBLE_EQ(r.rmf(2, 3), 0.1);
    EXPECT_DOUBLE_EQ(r.rmf(2, 4), 0.0);
}

TEST(Response, DispersedMixesEverywhere) {
    const std::size_t n = 8;
    auto r = make_case_response(ResponseCase::dispersed, n);
    EXPECT_NO_THROW(r.validate(true));
    for (Eigen::Index j = 0; j < 8; ++j) {
        EXPECT_NEAR(r.rmf.row(j).sum(), 1.0, 1e-15);
        for (Eigen::Index i = 0; i < 8; ++i) {
            double want = (i == j) ? 0.5 + 1.0 / 16.0 : 1.0 / 16.0;
            EXPECT_DOUBLE_EQ(r.rmf(j, i), want);
        }
    }
}

TEST(Response, AllOnesFailsStrictValidationOnly) {
    auto r = make_case_response(ResponseCase::all_ones, 4);
    EXPECT_THROW(r.validate(true), validation_error);
    EXPECT_NO_THROW(r.validate(false));
}

TEST(Response, ValidateCatchesBadShapes) {
    auto r = make_case_response(ResponseCase::identity, 3);
    auto bad_area = r;
    bad_area.area.resize(2);
    EXPECT_THROW(bad_area.validate(false), validation_error);

    auto bad_edges = r;
    bad_edges.model_edges[1] = bad_edges.model_edges[2];
    EXPECT_THROW(bad_edges.validate(false), validation_error);

    auto neg = r;
    neg.rmf(0, 1) = -0.1;
    EXPECT_THROW(neg.validate(false), validation_error);

    EXPECT_THROW(make_case_response(ResponseCase::identity, 1), validation_error);
}
