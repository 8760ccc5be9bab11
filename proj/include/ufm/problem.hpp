#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>
#include <string>

namespace ufm {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Thrown when a problem or optimizer configuration violates its invariants.
class ConfigError : public std::invalid_argument {
  public:
    using std::invalid_argument::invalid_argument;
};

/// Thrown when an iterative computation leaves the finite range.
class NumericalError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// One instance of the unconstrained feature model: K balanced classes with
/// n samples each, d-dimensional free features, smoothing delta and ridge
/// weights on the classifier, the features and the bias.
struct ProblemConfig {
    int K = 3;
    int n = 2;
    int d = 4;
    double delta = 0.0;
    double lambda_w = 5e-3;
    double lambda_h = 5e-3;
    double lambda_b = 5e-3;

    int N() const { return n * K; }
    double lambda_z() const { return std::sqrt(lambda_w * lambda_h); }

    /// sqrt(K N) lambda_Z + delta; the closed-form logit scale vanishes once
    /// this reaches 1.
    double regime_threshold() const {
        return std::sqrt(static_cast<double>(K) * N()) * lambda_z() + delta;
    }
    bool interior() const { return regime_threshold() < 1.0; }

    void validate() const {
        if (K < 2)
            throw ConfigError("K must be at least 2, got " + std::to_string(K));
        if (n < 1)
            throw ConfigError("n must be positive, got " + std::to_string(n));
        if (d < K)
            throw ConfigError("feature dimension d=" + std::to_string(d) +
                              " must be >= K=" + std::to_string(K));
        if (!(delta >= 0.0 && delta < 1.0))
            throw ConfigError("delta must lie in [0, 1), got " +
                              std::to_string(delta));
        if (!(lambda_w > 0.0) || !(lambda_h > 0.0) || !(lambda_b > 0.0) ||
            !std::isfinite(lambda_w) || !std::isfinite(lambda_h) ||
            !std::isfinite(lambda_b))
            throw ConfigError("regularization weights must be positive and finite");
    }
};

/// Optimization variables. Feature column (k n + i) holds sample i of class k
/// (class-major, zero-based).
struct ModelState {
    Matrix W; // d x K
    Matrix H; // d x N
    Vector b; // K

    static ModelState zeros(const ProblemConfig &cfg) {
        return {Matrix::Zero(cfg.d, cfg.K), Matrix::Zero(cfg.d, cfg.N()),
                Vector::Zero(cfg.K)};
    }

    bool all_finite() const {
        return W.allFinite() && H.allFinite() && b.allFinite();
    }

    /// Logits Z = W^T H + b 1^T.
    Matrix logits() const {
        Matrix Z = W.transpose() * H;
        Z.colwise() += b;
        return Z;
    }

    void check_shape(const ProblemConfig &cfg) const {
        if (W.rows() != cfg.d || W.cols() != cfg.K || H.rows() != cfg.d ||
            H.cols() != cfg.N() || b.size() != cfg.K)
            throw std::invalid_argument(
                "model state dimensions do not match the problem configuration");
    }
};

/// Class index of feature column j under the class-major layout.
inline int class_of_column(int j, int n) { return j / n; }

} // namespace ufm
