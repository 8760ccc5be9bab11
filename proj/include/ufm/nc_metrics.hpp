#pragma once

#include "ufm/problem.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace ufm {

/// Feature columns with a class index (zero-based) per column. Labels may be
/// ground truth or predictions; the metrics do not care which.
struct FeatureSet {
    Matrix H;
    std::vector<int> labels;
    int K = 0;

    static FeatureSet balanced(const Matrix &H, int K, int n) {
        FeatureSet fs{H, std::vector<int>(static_cast<std::size_t>(K) * n), K};
        for (std::size_t j = 0; j < fs.labels.size(); ++j)
            fs.labels[j] = static_cast<int>(j) / n;
        return fs;
    }
};

struct ClassStatistics {
    Vector global_mean;  // h_G
    Matrix class_means;  // d x K, uncentered
    Matrix sigma_w;      // within-class covariance, normalized by the sample count
    Matrix sigma_b;      // between-class covariance, normalized by K
    std::vector<int> counts;

    /// Class means minus the global mean.
    Matrix centered_means() const {
        return class_means.colwise() - global_mean;
    }
};

inline ClassStatistics class_statistics(const FeatureSet &fs) {
    const Eigen::Index d = fs.H.rows();
    const Eigen::Index M = fs.H.cols();
    if (fs.K < 1)
        throw std::invalid_argument("class_statistics: K must be positive");
    if (static_cast<Eigen::Index>(fs.labels.size()) != M)
        throw std::invalid_argument("class_statistics: one label per feature column required");

    // Visit columns grouped by class and lexicographically within a class so
    // that the result does not depend on the input column order.
    std::vector<Eigen::Index> order(static_cast<std::size_t>(M));
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    for (Eigen::Index j = 0; j < M; ++j) {
        const int k = fs.labels[static_cast<std::size_t>(j)];
        if (k < 0 || k >= fs.K)
            throw std::invalid_argument("class_statistics: label out of range");
    }
    std::sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
        const int la = fs.labels[static_cast<std::size_t>(a)];
        const int lb = fs.labels[static_cast<std::size_t>(b)];
        if (la != lb)
            return la < lb;
        for (Eigen::Index r = 0; r < d; ++r)
            if (fs.H(r, a) != fs.H(r, b))
                return fs.H(r, a) < fs.H(r, b);
        return false;
    });

    ClassStatistics st;
    st.counts.assign(static_cast<std::size_t>(fs.K), 0);
    st.class_means = Matrix::Zero(d, fs.K);
    st.global_mean = Vector::Zero(d);
    for (const Eigen::Index j : order) {
        const int k = fs.labels[static_cast<std::size_t>(j)];
        st.class_means.col(k) += fs.H.col(j);
        st.global_mean += fs.H.col(j);
        ++st.counts[static_cast<std::size_t>(k)];
    }
    for (int k = 0; k < fs.K; ++k) {
        if (st.counts[static_cast<std::size_t>(k)] == 0)
            throw std::invalid_argument("class_statistics: class " + std::to_string(k) +
                                        " has no samples");
        st.class_means.col(k) /= st.counts[static_cast<std::size_t>(k)];
    }
    st.global_mean /= static_cast<double>(M);

    st.sigma_w = Matrix::Zero(d, d);
    for (const Eigen::Index j : order) {
        const Vector dev = fs.H.col(j) - st.class_means.col(fs.labels[static_cast<std::size_t>(j)]);
        st.sigma_w.noalias() += dev * dev.transpose();
    }
    st.sigma_w /= static_cast<double>(M);

    const Matrix centered = st.centered_means();
    st.sigma_b = centered * centered.transpose() / static_cast<double>(fs.K);
    return st;
}

/// Relative singular-value cutoff for pseudo-inverses.
inline constexpr double kPinvCutoff = 1e-10;

/// Pseudo-inverse of a symmetric matrix, dropping eigenvalues whose magnitude
/// is below kPinvCutoff times the largest one.
inline Matrix symmetric_pinv(const Matrix &S, double cutoff = kPinvCutoff) {
    Eigen::SelfAdjointEigenSolver<Matrix> eig(S);
    const Vector &vals = eig.eigenvalues();
    const double top = vals.cwiseAbs().maxCoeff();
    Vector inv = Vector::Zero(vals.size());
    if (top > 0.0)
        for (Eigen::Index i = 0; i < vals.size(); ++i)
            if (std::abs(vals[i]) > cutoff * top)
                inv[i] = 1.0 / vals[i];
    return eig.eigenvectors() * inv.asDiagonal() * eig.eigenvectors().transpose();
}

enum class MetricStatus {
    ok,
    degenerate,       // both covariances vanish; value reported as 0
    between_vanishes, // within-class spread without any class separation
};

struct NC1Result {
    double value = 0.0;
    MetricStatus status = MetricStatus::ok;
};

/// Value reported when the between-class covariance vanishes but the
/// within-class covariance does not.
inline constexpr double kNC1Unbounded = 1e30;

/// (1/K) trace(Sigma_W Sigma_B^+).
inline NC1Result nc1(const FeatureSet &fs) {
    const ClassStatistics st = class_statistics(fs);
    if (st.sigma_b.isZero(0.0)) {
        if (st.sigma_w.isZero(0.0))
            return {0.0, MetricStatus::degenerate};
        return {kNC1Unbounded, MetricStatus::between_vanishes};
    }
    const double tr = (st.sigma_w * symmetric_pinv(st.sigma_b)).trace();
    return {std::max(tr, 0.0) / fs.K, MetricStatus::ok};
}

/// Normalized simplex ETF (I - J/K) / sqrt(K - 1).
inline Matrix normalized_simplex_etf(int K) {
    return (Matrix::Identity(K, K) - Matrix::Constant(K, K, 1.0 / K)) /
           std::sqrt(static_cast<double>(K - 1));
}

/// Distance between W^T Hbar / |W^T Hbar| and the normalized simplex ETF.
inline double nc2(const Matrix &W, const FeatureSet &fs) {
    if (W.cols() != fs.K || W.rows() != fs.H.rows())
        throw std::invalid_argument("nc2: W must be d x K");
    const Matrix product = W.transpose() * class_statistics(fs).centered_means();
    const double norm = product.norm();
    if (!(norm > 0.0))
        throw std::domain_error("nc2: W^T Hbar is zero");
    return (product / norm - normalized_simplex_etf(fs.K)).norm();
}

/// Distance between W / |W| and Hbar / |Hbar|.
inline double nc3(const Matrix &W, const FeatureSet &fs) {
    if (W.cols() != fs.K || W.rows() != fs.H.rows())
        throw std::invalid_argument("nc3: W must be d x K");
    const Matrix centered = class_statistics(fs).centered_means();
    const double wn = W.norm();
    const double hn = centered.norm();
    if (!(wn > 0.0) || !(hn > 0.0))
        throw std::domain_error("nc3: W or Hbar is zero");
    return (W / wn - centered / hn).norm();
}

struct NormSummary {
    double classifier = 0.0; // mean column norm of W
    double class_mean = 0.0; // mean norm of the centered class means
};

inline NormSummary norm_summary(const Matrix &W, const FeatureSet &fs) {
    const Matrix centered = class_statistics(fs).centered_means();
    return {W.colwise().norm().mean(), centered.colwise().norm().mean()};
}

} // namespace ufm
