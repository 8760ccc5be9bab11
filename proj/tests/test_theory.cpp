#include "ufm/check_suite.hpp"
#include "ufm/theory.hpp"

#include "test_util.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace ufm;

TEST(NuclearNorm, HandCases) {
    EXPECT_EQ(nuclear_norm(Matrix::Zero(3, 4)), 0.0);
    Matrix D = Matrix::Zero(2, 2);
    D(0, 0) = 3.0;
    D(1, 1) = -4.0;
    EXPECT_NEAR(nuclear_norm(D), 7.0, 1e-14);
    Matrix bad = Matrix::Zero(2, 2);
    bad(0, 0) = std::nan("");
    EXPECT_THROW(nuclear_norm(bad), std::invalid_argument);
}

TEST(NuclearNorm, MatchesDivideAndConquerSVD) {
    std::mt19937_64 rng(41);
    for (int trial = 0; trial < 20; ++trial) {
        const Matrix Z = testutil::gaussian(2 + trial % 5, 1 + trial % 6, rng);
        Eigen::BDCSVD<Matrix> svd(Z);
        EXPECT_NEAR(nuclear_norm(Z), svd.singularValues().sum(), 1e-12);
    }
}

TEST(BalancedFactorization, AttainsNuclearNorm) {
    std::mt19937_64 rng(42);
    for (int trial = 0; trial < 30; ++trial) {
        const Matrix Z = testutil::gaussian(3 + trial % 4, 2 + trial % 5, rng);
        const double alpha = 0.05 + 0.4 * trial;
        const auto f = balanced_factorization(Z, alpha);
        EXPECT_LT((f.W.transpose() * f.H - Z).norm(), 1e-12 * std::max(1.0, Z.norm()));
        EXPECT_NEAR(factorization_gap(f.W, f.H, alpha), 0.0, 1e-10);
    }
    EXPECT_THROW(balanced_factorization(Matrix::Ones(2, 2), 0.0), std::invalid_argument);
}

TEST(FactorizationGap, NeverNegative) {
    std::mt19937_64 rng(43);
    for (int trial = 0; trial < 1000; ++trial) {
        const int r = 1 + trial % 6;
        const Matrix W = testutil::gaussian(r, 2 + trial % 4, rng);
        const Matrix H = testutil::gaussian(r, 1 + trial % 5, rng);
        EXPECT_GE(factorization_gap(W, H, 0.1 + 0.01 * trial), -1e-10);
    }
}

TEST(YoungSlack, NonnegativeWithEqualityOnDiagonal) {
    EXPECT_EQ(young_slack(3.0, 3.0), 0.0);
    EXPECT_EQ(young_slack(-2.0, 2.0), 0.0);
    EXPECT_GT(young_slack(1.0, 2.0), 0.0);
}

TEST(SelfDuality, HoldsAtMinimizers) {
    for (const auto &cfg : testutil::closed_form_grid()) {
        const ModelState s = global_minimizer(cfg);
        const Matrix means = s.H(Eigen::all, Eigen::seqN(0, cfg.K, cfg.n));
        EXPECT_LT(duality_gap(s.W, means, cfg), 1e-12);
    }
}

TEST(CheckSuite, PassesUnperturbed) {
    const auto results = run_theory_checks();
    ASSERT_GE(results.size(), 8u);
    for (const auto &r : results)
        EXPECT_TRUE(r.passed) << r.name << ": " << r.detail;
}

TEST(CheckSuite, PerturbationIsDetected) {
    CheckOptions opts;
    opts.perturbation = 1e-3;
    const auto results = run_theory_checks(opts);
    int failed = 0;
    for (const auto &r : results)
        failed += r.passed ? 0 : 1;
    EXPECT_GE(failed, 4);
    for (const auto &r : results)
        if (r.name == "closed_form_stationarity" || r.name == "self_duality") {
            EXPECT_FALSE(r.passed) << r.name;
        }
}
