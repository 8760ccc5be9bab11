#pragma once

#include "ufm/problem.hpp"

#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace ufm {

/// Sum of singular values.
inline double nuclear_norm(const Matrix &Z) {
    if (!Z.allFinite())
        throw std::invalid_argument("nuclear_norm: non-finite entry");
    if (Z.size() == 0)
        return 0.0;
    Eigen::JacobiSVD<Matrix> svd(Z);
    return svd.singularValues().sum();
}

struct Factorization {
    Matrix W; // r x K
    Matrix H; // r x N
};

/// W = alpha^{1/4} Sigma^{1/2} U^T and H = alpha^{-1/4} Sigma^{1/2} V^T from the
/// thin SVD Z = U Sigma V^T, so that W^T H = Z and
/// (|W|^2 + alpha |H|^2) / (2 sqrt(alpha)) equals the nuclear norm of Z.
inline Factorization balanced_factorization(const Matrix &Z, double alpha) {
    if (!(alpha > 0.0))
        throw std::invalid_argument("balanced_factorization: alpha must be positive");
    Eigen::JacobiSVD<Matrix> svd(Z, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const Vector root = svd.singularValues().cwiseSqrt();
    const double q = std::pow(alpha, 0.25);
    Factorization f;
    f.W = q * root.asDiagonal() * svd.matrixU().transpose();
    f.H = (1.0 / q) * root.asDiagonal() * svd.matrixV().transpose();
    return f;
}

/// (|W|^2 + alpha |H|^2) / (2 sqrt(alpha)) - |W^T H|_*; never negative up to
/// rounding.
inline double factorization_gap(const Matrix &W, const Matrix &H, double alpha) {
    if (W.rows() != H.rows())
        throw std::invalid_argument("factorization_gap: W and H need the same row count");
    if (!(alpha > 0.0))
        throw std::invalid_argument("factorization_gap: alpha must be positive");
    return (W.squaredNorm() + alpha * H.squaredNorm()) / (2.0 * std::sqrt(alpha)) -
           nuclear_norm(W.transpose() * H);
}

/// |W - sqrt(n lambda_H / lambda_W) Hbar|_F; zero when classifier and class
/// means are aligned at the balanced scale.
inline double duality_gap(const Matrix &W, const Matrix &class_means,
                          const ProblemConfig &cfg) {
    if (W.rows() != class_means.rows() || W.cols() != class_means.cols())
        throw std::invalid_argument("duality_gap: W and Hbar must have equal shape");
    const double c = std::sqrt(cfg.n * cfg.lambda_h / cfg.lambda_w);
    return (W - c * class_means).norm();
}

/// a^2/2 + b^2/2 - |a b|.
inline double young_slack(double a, double b) {
    return 0.5 * a * a + 0.5 * b * b - std::abs(a * b);
}

/// Largest distance of a logit column from its class mean, over all classes.
inline double logit_spread(const ModelState &state, const ProblemConfig &cfg) {
    const Matrix Z = state.logits();
    double spread = 0.0;
    for (int k = 0; k < cfg.K; ++k) {
        const auto block = Z.middleCols(static_cast<Eigen::Index>(k) * cfg.n, cfg.n);
        const Vector mean = block.rowwise().mean();
        for (int i = 0; i < cfg.n; ++i)
            spread = std::max(spread, (block.col(i) - mean).norm());
    }
    return spread;
}

} // namespace ufm
