#include "ufm/closed_form.hpp"

#include "test_util.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

using namespace ufm;

namespace {

// Scalar condition satisfied by the logit scale in the interior regime.
double scale_equation(const ProblemConfig &cfg, double a) {
    const double K = cfg.K;
    return K / (K - 1.0 + std::exp(a * K)) - cfg.delta -
           std::sqrt(K * cfg.N()) * cfg.lambda_z();
}

// Risk restricted to the balanced simplex family, as a function of a. Built
// from the per-sample logits directly rather than from the closed form.
double restricted_risk(const ProblemConfig &cfg, double a) {
    const int K = cfg.K;
    Vector z = Vector::Constant(K, -a);
    z[0] = a * (K - 1);
    Vector y = Vector::Constant(K, cfg.delta / K);
    y[0] += 1.0 - cfg.delta;
    const double ce = log_sum_exp(z) - y.dot(z);
    return ce + std::sqrt(static_cast<double>(cfg.n)) * cfg.lambda_z() * K * (K - 1) * a;
}

} // namespace

TEST(LogitScale, MatchesBisectionAcrossGrid) {
    for (const auto &cfg : testutil::closed_form_grid()) {
        const double a = logit_scale(cfg);
        if (!cfg.interior()) {
            EXPECT_EQ(a, 0.0);
            continue;
        }
        const double root =
            testutil::bisect([&](double x) { return scale_equation(cfg, x); }, 0.0, 50.0);
        EXPECT_NEAR(a, root, 1e-10) << "K=" << cfg.K << " n=" << cfg.n << " delta=" << cfg.delta;
    }
}

TEST(LogitScale, MinimizesRestrictedRisk) {
    for (const auto &cfg : testutil::closed_form_grid()) {
        if (!cfg.interior())
            continue;
        const double h = 1e-6;
        const auto slope = [&](double x) {
            return restricted_risk(cfg, x + h) - restricted_risk(cfg, x - h);
        };
        const double root = testutil::bisect(slope, 1e-9, 50.0, 80);
        EXPECT_NEAR(logit_scale(cfg), root, 1e-6);
    }
}

TEST(LogitScale, VanishesExactlyAtAndBeyondThreshold) {
    ProblemConfig cfg{4, 2, 6, 0.0, 0.1, 0.1, 0.1};
    // sqrt(K N) lambda_Z = sqrt(32) * 0.1 < 1: interior.
    EXPECT_GT(logit_scale(cfg), 0.0);
    cfg.delta = 1.0 - std::sqrt(32.0) * 0.1;
    EXPECT_GE(cfg.regime_threshold(), 1.0 - 1e-15);
    cfg.delta = 0.5;
    EXPECT_EQ(logit_scale(cfg), 0.0);
    EXPECT_FALSE(cfg.interior());
    cfg = {4, 2, 6, 0.0, 0.5, 0.5, 0.5};
    EXPECT_EQ(logit_scale(cfg), 0.0);
}

TEST(ClassProbabilities, FormADistribution) {
    for (const auto &cfg : testutil::closed_form_grid()) {
        const auto p = class_probabilities(cfg);
        EXPECT_NEAR(p.p_t + (cfg.K - 1) * p.p_n, 1.0, 1e-14);
        EXPECT_GE(p.p_t, p.p_n);
        if (cfg.interior()) {
            EXPECT_NEAR(cfg.K * p.p_t, cfg.K - (cfg.K - 1) * cfg.regime_threshold(), 1e-10);
        }
    }
}

TEST(PartialOrthogonal, OrthonormalAndDeterministic) {
    const Matrix P = partial_orthogonal(12, 10, 7);
    EXPECT_TRUE((P.transpose() * P).isApprox(Matrix::Identity(10, 10), 1e-13));
    EXPECT_EQ(P, partial_orthogonal(12, 10, 7));
    EXPECT_NE(P, partial_orthogonal(12, 10, 8));
    EXPECT_EQ(partial_orthogonal(5, 3), Matrix::Identity(5, 3));
    EXPECT_THROW(partial_orthogonal(2, 3), std::invalid_argument);
}

TEST(GlobalMinimizer, StationaryAcrossGrid) {
    for (const auto &cfg : testutil::closed_form_grid()) {
        const ModelState s = global_minimizer(cfg);
        EXPECT_LT(ufm_gradient(s, cfg).norm(), 1e-8)
            << "K=" << cfg.K << " n=" << cfg.n << " delta=" << cfg.delta;
    }
}

TEST(GlobalMinimizer, BeatsRandomPerturbations) {
    std::mt19937_64 rng(17);
    for (const auto &cfg : testutil::closed_form_grid()) {
        const ModelState s = global_minimizer(cfg);
        const double best = ufm_loss(s, cfg);
        for (int t = 0; t < 20; ++t) {
            ModelState q = s;
            q.W += testutil::gaussian(cfg.d, cfg.K, rng, 1e-2);
            q.H += testutil::gaussian(cfg.d, cfg.N(), rng, 1e-2);
            q.b += testutil::gaussian(cfg.K, 1, rng, 1e-2);
            EXPECT_GT(ufm_loss(q, cfg), best);
        }
    }
}

TEST(GlobalMinimizer, ProducesMeanLogitMatrix) {
    for (const auto &cfg : testutil::closed_form_grid()) {
        const ModelState s = global_minimizer(cfg, partial_orthogonal(cfg.d, cfg.K, 3));
        const Matrix Z = s.logits();
        const Matrix expected = mean_logit_matrix(cfg);
        for (int k = 0; k < cfg.K; ++k)
            for (int i = 0; i < cfg.n; ++i)
                EXPECT_LT((Z.col(k * cfg.n + i) - expected.col(k)).norm(), 1e-12);
    }
}

TEST(GlobalMinimizer, InvariantUnderEmbeddingRotation) {
    for (const auto &cfg : testutil::closed_form_grid()) {
        const double base = ufm_loss(global_minimizer(cfg), cfg);
        for (std::uint64_t seed : {1u, 2u, 3u}) {
            const ModelState s = global_minimizer(cfg, partial_orthogonal(cfg.d, cfg.K, seed));
            EXPECT_NEAR(ufm_loss(s, cfg), base, 1e-12);
            EXPECT_LT(ufm_gradient(s, cfg).norm(), 1e-8);
        }
    }
}

TEST(GlobalMinimizer, BoundaryRegimeIsZero) {
    const ProblemConfig cfg{3, 2, 4, 0.9, 0.05, 0.05, 0.05};
    ASSERT_FALSE(cfg.interior());
    const ModelState s = global_minimizer(cfg);
    EXPECT_EQ(s.W.norm(), 0.0);
    EXPECT_EQ(s.H.norm(), 0.0);
    EXPECT_NEAR(optimal_loss(cfg), std::log(3.0), 1e-15);
    EXPECT_LT(ufm_gradient(s, cfg).norm(), 1e-15);
}

TEST(GlobalMinimizer, BalancedScales) {
    const ProblemConfig cfg{5, 3, 7, 0.1, 2e-3, 8e-3, 5e-3};
    const auto sc = minimizer_scales(cfg);
    EXPECT_NEAR(sc.w * sc.h * cfg.K, logit_scale(cfg), 1e-14);
    EXPECT_NEAR(sc.w, std::sqrt(cfg.n * cfg.lambda_h / cfg.lambda_w) * sc.h, 1e-14);
}

TEST(ProblemConfig, Validation) {
    EXPECT_THROW((ProblemConfig{1, 2, 4}.validate()), ConfigError);
    EXPECT_THROW((ProblemConfig{3, 0, 4}.validate()), ConfigError);
    EXPECT_THROW((ProblemConfig{3, 2, 2}.validate()), ConfigError);
    EXPECT_THROW((ProblemConfig{3, 2, 4, 1.0}.validate()), ConfigError);
    EXPECT_THROW((ProblemConfig{3, 2, 4, 0.1, 0.0}.validate()), ConfigError);
    EXPECT_NO_THROW((ProblemConfig{3, 2, 3, 0.0}.validate()));
}
