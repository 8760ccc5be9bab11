#pragma once

#include "ufm/problem.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace ufm {

/// Cross-entropy value substituted when a positive target meets a zero
/// probability.
inline constexpr double kSaturatedLoss = 1e30;

/// Column-wise softmax with per-column max subtraction.
inline Matrix softmax_cols(const Matrix &Z) {
    if (!Z.allFinite())
        throw std::invalid_argument("softmax_cols: non-finite logit");
    Matrix P(Z.rows(), Z.cols());
    for (Eigen::Index j = 0; j < Z.cols(); ++j) {
        const double shift = Z.col(j).maxCoeff();
        P.col(j) = (Z.col(j).array() - shift).exp().matrix();
        P.col(j) /= P.col(j).sum();
    }
    return P;
}

/// log-sum-exp of one column, shifted by its maximum.
inline double log_sum_exp(const Eigen::Ref<const Vector> &z) {
    const double shift = z.maxCoeff();
    return shift + std::log((z.array() - shift).exp().sum());
}

/// Balanced one-hot label matrix Y (K x nK), class-major columns.
inline Matrix one_hot_labels(int K, int n) {
    Matrix Y = Matrix::Zero(K, static_cast<Eigen::Index>(K) * n);
    for (int k = 0; k < K; ++k)
        Y.block(k, static_cast<Eigen::Index>(k) * n, 1, n).setOnes();
    return Y;
}

namespace detail {
/// (1 - delta) Y + delta / K; accepts delta = 1 (uniform targets).
inline Matrix mix_with_uniform(const Matrix &Y, double delta) {
    const double K = static_cast<double>(Y.rows());
    return ((1.0 - delta) * Y.array() + delta / K).matrix();
}
} // namespace detail

inline Matrix smooth_labels(const Matrix &Y, double delta) {
    if (!(delta >= 0.0 && delta < 1.0))
        throw std::invalid_argument("smooth_labels: delta must lie in [0, 1)");
    return detail::mix_with_uniform(Y, delta);
}

struct LabelEncoding {
    Matrix Y;
    Matrix Y_delta;
};

inline LabelEncoding label_encoding(const ProblemConfig &cfg) {
    Matrix Y = one_hot_labels(cfg.K, cfg.n);
    Matrix Yd = smooth_labels(Y, cfg.delta);
    return {std::move(Y), std::move(Yd)};
}

/// Cross-entropy of a probability vector against a target distribution.
struct CrossEntropy {
    double value = 0.0;
    bool saturated = false; // a positive target hit a zero probability
};

inline CrossEntropy cross_entropy(const Eigen::Ref<const Vector> &p,
                                  const Eigen::Ref<const Vector> &target) {
    CrossEntropy ce;
    for (Eigen::Index i = 0; i < p.size(); ++i) {
        if (target[i] == 0.0)
            continue;
        if (p[i] <= 0.0) {
            ce.saturated = true;
            ce.value = kSaturatedLoss;
            return ce;
        }
        ce.value -= target[i] * std::log(p[i]);
    }
    return ce;
}

/// Regularized risk with explicit targets (each column a distribution):
/// (1/N) sum_j CE(z_j, t_j) + lambda_W/2 |W|^2 + lambda_H/2 |H|^2 + lambda_b/2 |b|^2.
inline double ufm_loss(const ModelState &state, const ProblemConfig &cfg,
                       const Matrix &targets) {
    state.check_shape(cfg);
    if (targets.rows() != cfg.K || targets.cols() != cfg.N())
        throw std::invalid_argument("ufm_loss: target matrix has the wrong shape");
    const Matrix Z = state.logits();
    double ce = 0.0;
    for (Eigen::Index j = 0; j < Z.cols(); ++j)
        ce += log_sum_exp(Z.col(j)) * targets.col(j).sum() -
              targets.col(j).dot(Z.col(j));
    return ce / cfg.N() + 0.5 * cfg.lambda_w * state.W.squaredNorm() +
           0.5 * cfg.lambda_h * state.H.squaredNorm() +
           0.5 * cfg.lambda_b * state.b.squaredNorm();
}

inline double ufm_loss(const ModelState &state, const ProblemConfig &cfg) {
    return ufm_loss(state, cfg, label_encoding(cfg).Y_delta);
}

struct Gradient {
    Matrix W;
    Matrix H;
    Vector b;

    double norm() const {
        return std::sqrt(W.squaredNorm() + H.squaredNorm() + b.squaredNorm());
    }
};

/// Exact gradient of ufm_loss. With G = (softmax(Z) - Y^delta) / N:
/// dW = H G^T + lambda_W W, dH = W G + lambda_H H, db = G 1 + lambda_b b.
inline Gradient ufm_gradient(const ModelState &state, const ProblemConfig &cfg,
                             const Matrix &targets) {
    state.check_shape(cfg);
    if (targets.rows() != cfg.K || targets.cols() != cfg.N())
        throw std::invalid_argument(
            "ufm_gradient: target matrix has the wrong shape");
    const Matrix G = (softmax_cols(state.logits()) - targets) / cfg.N();
    Gradient g;
    g.W = state.H * G.transpose() + cfg.lambda_w * state.W;
    g.H = state.W * G + cfg.lambda_h * state.H;
    g.b = G.rowwise().sum() + cfg.lambda_b * state.b;
    return g;
}

inline Gradient ufm_gradient(const ModelState &state, const ProblemConfig &cfg) {
    return ufm_gradient(state, cfg, label_encoding(cfg).Y_delta);
}

struct EqualizationGap {
    double gap = 0.0;
    bool saturated = false;
};

/// Label-smoothing loss of p minus the loss of p' that keeps p[target] and
/// spreads the remaining mass evenly over the non-target classes. Jensen's
/// inequality makes this nonnegative, with equality iff the non-target
/// entries of p already agree.
inline EqualizationGap ls_equalization_gap(const Eigen::Ref<const Vector> &p,
                                           int target, double delta) {
    const Eigen::Index K = p.size();
    if (K < 2 || target < 0 || target >= K)
        throw std::invalid_argument("ls_equalization_gap: bad target index");
    if (!(delta > 0.0 && delta < 1.0))
        throw std::invalid_argument("ls_equalization_gap: delta must lie in (0, 1)");
    if ((p.array() < 0.0).any() || std::abs(p.sum() - 1.0) > 1e-9)
        throw std::invalid_argument("ls_equalization_gap: p is not a probability vector");

    Vector y = Vector::Constant(K, delta / static_cast<double>(K));
    y[target] += 1.0 - delta;
    Vector even = Vector::Constant(K, (1.0 - p[target]) / static_cast<double>(K - 1));
    even[target] = p[target];

    const CrossEntropy original = cross_entropy(p, y);
    const CrossEntropy equalized = cross_entropy(even, y);
    EqualizationGap out;
    out.saturated = original.saturated || equalized.saturated;
    if (equalized.saturated)
        out.gap = 0.0; // both sides infinite
    else
        out.gap = original.value - equalized.value;
    return out;
}

} // namespace ufm
