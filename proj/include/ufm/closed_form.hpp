#pragma once

#include "ufm/loss.hpp"
#include "ufm/problem.hpp"

#include <Eigen/QR>

#include <cmath>
#include <cstdint>
#include <optional>
#include <random>

namespace ufm {

/// Logit scale a of the global minimizer, whose mean logit matrix is
/// a (K I - J). Zero once sqrt(KN) lambda_Z + delta >= 1; otherwise
/// (1/K) log(K / (sqrt(KN) lambda_Z + delta) - K + 1).
inline double logit_scale(const ProblemConfig &cfg) {
    const double s = cfg.regime_threshold();
    if (s >= 1.0)
        return 0.0;
    const double K = cfg.K;
    return std::log(K / s - K + 1.0) / K;
}

struct ClassProbabilities {
    double p_t = 0.0; // predicted probability of the target class
    double p_n = 0.0; // predicted probability of each non-target class
};

inline ClassProbabilities class_probabilities(const ProblemConfig &cfg) {
    const double K = cfg.K;
    const double e = std::exp(logit_scale(cfg) * K);
    return {e / (K - 1.0 + e), 1.0 / (K - 1.0 + e)};
}

/// Centering projector I - J/K.
inline Matrix centering(int K) {
    return Matrix::Identity(K, K) - Matrix::Constant(K, K, 1.0 / K);
}

/// d x K matrix with orthonormal columns. Without a seed, the first K columns
/// of the identity; with a seed, the Q factor of a seeded Gaussian matrix.
inline Matrix partial_orthogonal(int d, int K,
                                 std::optional<std::uint64_t> seed = std::nullopt) {
    if (K < 1 || d < K)
        throw std::invalid_argument("partial_orthogonal: need d >= K >= 1");
    if (!seed)
        return Matrix::Identity(d, K);
    std::mt19937_64 rng(*seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    Matrix G(d, K);
    for (Eigen::Index j = 0; j < G.cols(); ++j)
        for (Eigen::Index i = 0; i < G.rows(); ++i)
            G(i, j) = normal(rng);
    Eigen::HouseholderQR<Matrix> qr(G);
    Matrix Q = qr.householderQ() * Matrix::Identity(d, K);
    // Fix column signs so that R has a positive diagonal.
    const Matrix &R = qr.matrixQR();
    for (int j = 0; j < K; ++j)
        if (R(j, j) < 0.0)
            Q.col(j) *= -1.0;
    return Q;
}

/// Mean logit matrix a (K I - J): diagonal a (K - 1), off-diagonal -a.
inline Matrix mean_logit_matrix(const ProblemConfig &cfg) {
    const int K = cfg.K;
    return logit_scale(cfg) * (K * Matrix::Identity(K, K) - Matrix::Ones(K, K));
}

struct SimplexETFFactors {
    Matrix P;
    double a_delta = 0.0;
    double p_t = 0.0;
    double p_n = 0.0;
};

inline SimplexETFFactors simplex_etf_factors(const ProblemConfig &cfg, Matrix P) {
    const auto probs = class_probabilities(cfg);
    return {std::move(P), logit_scale(cfg), probs.p_t, probs.p_n};
}

/// Multipliers c_W, c_H with W = c_W P (K I - J) and class means
/// Hbar = c_H P (K I - J) at the global minimizer. They satisfy
/// c_W c_H K = a (so W^T Hbar = a (K I - J)) and c_W = sqrt(n lambda_H / lambda_W) c_H.
struct MinimizerScales {
    double w = 0.0;
    double h = 0.0;
};

inline MinimizerScales minimizer_scales(const ProblemConfig &cfg) {
    const double a = logit_scale(cfg);
    const double ratio = cfg.n * cfg.lambda_h / cfg.lambda_w;
    const double base = std::sqrt(a / cfg.K);
    return {std::pow(ratio, 0.25) * base, std::pow(ratio, -0.25) * base};
}

/// Global minimizer of the regularized risk for a given partial orthogonal P.
/// Features of class k are n identical copies of the k-th class mean; b = 0.
inline ModelState global_minimizer(const ProblemConfig &cfg, const Matrix &P) {
    cfg.validate();
    if (P.rows() != cfg.d || P.cols() != cfg.K)
        throw std::invalid_argument("global_minimizer: P must be d x K");
    const int K = cfg.K;
    const Matrix etf = P * (K * Matrix::Identity(K, K) - Matrix::Ones(K, K));
    const auto scale = minimizer_scales(cfg);

    ModelState s;
    s.W = scale.w * etf;
    const Matrix class_means = scale.h * etf;
    s.H.resize(cfg.d, cfg.N());
    for (int k = 0; k < K; ++k)
        for (int i = 0; i < cfg.n; ++i)
            s.H.col(static_cast<Eigen::Index>(k) * cfg.n + i) = class_means.col(k);
    s.b = Vector::Zero(K);
    return s;
}

inline ModelState global_minimizer(const ProblemConfig &cfg) {
    return global_minimizer(cfg, partial_orthogonal(cfg.d, cfg.K));
}

/// Minimal value of the regularized risk.
inline double optimal_loss(const ProblemConfig &cfg) {
    return ufm_loss(global_minimizer(cfg), cfg);
}

} // namespace ufm
