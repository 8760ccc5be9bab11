#pragma once

#include "ufm/closed_form.hpp"
#include "ufm/loss.hpp"
#include "ufm/problem.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace ufm {

enum class SpectrumSource { analytic, numeric };

inline const char *to_string(SpectrumSource s) {
    return s == SpectrumSource::analytic ? "analytic" : "numeric";
}

struct Eigenpair {
    double value = 0.0;
    int multiplicity = 0;
};

/// Distinct eigenvalues (ascending) with multiplicities and the condition
/// number restricted to the nonzero part of the spectrum.
struct SpectrumReport {
    std::vector<Eigenpair> eigenpairs;
    double condition_number = std::numeric_limits<double>::quiet_NaN();
    SpectrumSource source = SpectrumSource::analytic;
    bool degenerate = false;
    std::string note;
    double min_eigenvalue = 0.0; // raw smallest eigenvalue (numeric reports)

    int dimension() const {
        int total = 0;
        for (const auto &e : eigenpairs)
            total += e.multiplicity;
        return total;
    }
    double max_eigenvalue() const {
        return eigenpairs.empty() ? 0.0 : eigenpairs.back().value;
    }
};

inline constexpr double kZeroEigenCutoff = 1e-10;
inline constexpr double kClusterGap = 1e-8;

/// lambda_max / lambda_min over eigenvalues above zero_cutoff * lambda_max.
inline double condition_number(const SpectrumReport &report,
                               double zero_cutoff = kZeroEigenCutoff) {
    double top = 0.0;
    for (const auto &e : report.eigenpairs)
        top = std::max(top, e.value);
    if (!(top > 0.0))
        throw std::domain_error("condition_number: spectrum has no positive eigenvalue");
    double bottom = top;
    for (const auto &e : report.eigenpairs)
        if (e.value > zero_cutoff * top)
            bottom = std::min(bottom, e.value);
    return top / bottom;
}

/// Groups ascending eigenvalues; a new group starts when the step to the
/// previous value exceeds rel_gap * max|lambda|. Group value is the mean.
inline std::vector<Eigenpair> cluster_eigenvalues(std::vector<double> values,
                                                  double rel_gap = kClusterGap) {
    std::sort(values.begin(), values.end());
    std::vector<Eigenpair> out;
    if (values.empty())
        return out;
    double scale = 0.0;
    for (double v : values)
        scale = std::max(scale, std::abs(v));
    const double gap = rel_gap * scale;
    double sum = values.front();
    int count = 1;
    for (std::size_t i = 1; i < values.size(); ++i) {
        if (values[i] - values[i - 1] > gap) {
            out.push_back({sum / count, count});
            sum = 0.0;
            count = 0;
        }
        sum += values[i];
        ++count;
    }
    out.push_back({sum / count, count});
    return out;
}

namespace detail {

inline SpectrumReport finish_report(SpectrumReport r) {
    const double top = r.max_eigenvalue();
    if (top > 0.0) {
        r.condition_number = condition_number(r);
    } else {
        r.degenerate = true;
        if (!r.note.empty())
            r.note += "; ";
        r.note += "spectrum is identically zero";
    }
    return r;
}

/// Builds an analytic report, dropping empty multiplicities and merging
/// coincident values.
inline SpectrumReport analytic_report(const std::vector<Eigenpair> &pairs,
                                      std::string note = {}) {
    std::vector<Eigenpair> sorted;
    for (const auto &p : pairs)
        if (p.multiplicity > 0)
            sorted.push_back(p);
    std::sort(sorted.begin(), sorted.end(),
              [](const Eigenpair &a, const Eigenpair &b) { return a.value < b.value; });
    double top = 0.0;
    for (const auto &p : sorted)
        top = std::max(top, std::abs(p.value));

    SpectrumReport r;
    r.source = SpectrumSource::analytic;
    r.note = std::move(note);
    r.degenerate = !r.note.empty();
    for (const auto &p : sorted) {
        if (!r.eigenpairs.empty() &&
            p.value - r.eigenpairs.back().value <= kClusterGap * top)
            r.eigenpairs.back().multiplicity += p.multiplicity;
        else
            r.eigenpairs.push_back(p);
    }
    r.min_eigenvalue = r.eigenpairs.empty() ? 0.0 : r.eigenpairs.front().value;
    return finish_report(std::move(r));
}

} // namespace detail

/// diag(p) - p p^T, the Hessian of cross-entropy with respect to the logits.
inline Matrix probability_laplacian(const Eigen::Ref<const Vector> &p) {
    Matrix D = -p * p.transpose();
    D.diagonal() += p;
    return D;
}

/// Eigenvalues of the Laplacian at the optimal class probabilities:
/// {0 (x1), p_n (x K-2), K p_t p_n (x1)}.
inline SpectrumReport laplacian_spectrum(int K, double p_t, double p_n) {
    return detail::analytic_report({{0.0, 1}, {p_n, K - 2}, {K * p_t * p_n, 1}},
                                   K == 2 ? "K = 2: no p_n eigenvalue" : "");
}

/// s with W = s P (I - J/K) at the implemented minimizer.
inline double classifier_etf_scale(const ProblemConfig &cfg) {
    return cfg.K * minimizer_scales(cfg).w;
}

/// Factor c with Hessian_W = c D_P B D_P^T at the implemented minimizer
/// (keeps the 1/N loss normalization).
inline double classifier_hessian_scale(const ProblemConfig &cfg) {
    const double h = minimizer_scales(cfg).h;
    return static_cast<double>(cfg.K) * h * h;
}

/// Spectrum of one d x d per-sample block (1/N) W D_k W^T at the minimizer.
inline SpectrumReport analytic_feature_block_spectrum(const ProblemConfig &cfg) {
    cfg.validate();
    const auto pr = class_probabilities(cfg);
    const double s = classifier_etf_scale(cfg);
    const double c = s * s / cfg.N();
    const int K = cfg.K;
    return detail::analytic_report(
        {{0.0, 1 + cfg.d - K}, {c * pr.p_n, K - 2}, {c * K * pr.p_t * pr.p_n, 1}},
        K == 2 ? "K = 2: condition number degenerates to 1" : "");
}

/// Spectrum of the full (d N) x (d N) block-diagonal feature Hessian.
inline SpectrumReport analytic_feature_hessian_spectrum(const ProblemConfig &cfg) {
    SpectrumReport r = analytic_feature_block_spectrum(cfg);
    for (auto &e : r.eigenpairs)
        e.multiplicity *= cfg.N();
    return r;
}

/// Distinct eigenvalues of B = D_Pi S D_Pi (K^2 x K^2):
/// {0, p_n, (1 - p_t + p_n)(p_n + (K - 1) p_t) / K, K p_n p_t} with
/// multiplicities {2K - 1, K^2 - 3K + 1, K - 1, 1}. For K = 2 only
/// {0 (x3), K p_t p_n (x1)} remain.
inline SpectrumReport b_matrix_spectrum(int K, double p_t, double p_n) {
    if (K < 2)
        throw std::invalid_argument("b_matrix_spectrum: K must be at least 2");
    if (K == 2)
        return detail::analytic_report({{0.0, 3}, {2.0 * p_t * p_n, 1}},
                                       "K = 2: only one nonzero eigenvalue");
    const double middle = (1.0 - p_t + p_n) * (p_n + (K - 1) * p_t) / K;
    return detail::analytic_report({{0.0, 2 * K - 1},
                                    {p_n, K * K - 3 * K + 1},
                                    {middle, K - 1},
                                    {K * p_n * p_t, 1}});
}

/// Spectrum of the (K d) x (K d) classifier Hessian at the minimizer:
/// c times the B spectrum, padded with K (d - K) zeros from D_P.
inline SpectrumReport analytic_classifier_hessian_spectrum(const ProblemConfig &cfg) {
    cfg.validate();
    const auto pr = class_probabilities(cfg);
    const SpectrumReport b = b_matrix_spectrum(cfg.K, pr.p_t, pr.p_n);
    const double c = classifier_hessian_scale(cfg);
    std::vector<Eigenpair> pairs;
    for (const auto &e : b.eigenpairs)
        pairs.push_back({c * e.value, e.multiplicity});
    pairs.push_back({0.0, cfg.K * (cfg.d - cfg.K)});
    return detail::analytic_report(pairs, b.note);
}

struct HessianOptions {
    bool add_ridge = false; // adds lambda_W I or lambda_H I
};

/// Per-sample d x d blocks (1/N) W D_j W^T of the block-diagonal Hessian of
/// the unregularized loss in the features, in column order.
inline std::vector<Matrix> numeric_hessian_features(const ModelState &state,
                                                    const ProblemConfig &cfg,
                                                    HessianOptions opts = {}) {
    state.check_shape(cfg);
    const Matrix P = softmax_cols(state.logits());
    std::vector<Matrix> blocks;
    blocks.reserve(static_cast<std::size_t>(cfg.N()));
    for (Eigen::Index j = 0; j < P.cols(); ++j) {
        Matrix block = state.W * probability_laplacian(P.col(j)) *
                       state.W.transpose() / static_cast<double>(cfg.N());
        if (opts.add_ridge)
            block.diagonal().array() += cfg.lambda_h;
        blocks.push_back(std::move(block));
    }
    return blocks;
}

/// Hessian in vec(W) = [w_1; ...; w_K]: (1/N) sum_j kron(D_j, h_j h_j^T).
inline Matrix numeric_hessian_classifier(const ModelState &state,
                                         const ProblemConfig &cfg,
                                         HessianOptions opts = {}) {
    state.check_shape(cfg);
    const int K = cfg.K;
    const int d = cfg.d;
    const Matrix P = softmax_cols(state.logits());
    Matrix hess = Matrix::Zero(static_cast<Eigen::Index>(K) * d,
                               static_cast<Eigen::Index>(K) * d);
    for (Eigen::Index j = 0; j < P.cols(); ++j) {
        const Matrix D = probability_laplacian(P.col(j));
        const Matrix outer = state.H.col(j) * state.H.col(j).transpose();
        for (int r = 0; r < K; ++r)
            for (int c = 0; c < K; ++c)
                hess.block(r * d, c * d, d, d) += D(r, c) * outer;
    }
    hess /= static_cast<double>(cfg.N());
    if (opts.add_ridge)
        hess.diagonal().array() += cfg.lambda_w;
    return hess;
}

namespace detail {
inline SpectrumReport numeric_report(std::vector<double> values) {
    SpectrumReport r;
    r.source = SpectrumSource::numeric;
    r.min_eigenvalue = values.empty() ? 0.0 : *std::min_element(values.begin(), values.end());
    r.eigenpairs = cluster_eigenvalues(std::move(values));
    return finish_report(std::move(r));
}

inline void append_eigenvalues(const Matrix &S, std::vector<double> &out) {
    Eigen::SelfAdjointEigenSolver<Matrix> eig(S, Eigen::EigenvaluesOnly);
    for (Eigen::Index i = 0; i < eig.eigenvalues().size(); ++i)
        out.push_back(eig.eigenvalues()[i]);
}
} // namespace detail

/// Dense symmetric eigensolve followed by gap clustering.
inline SpectrumReport numeric_spectrum(const Matrix &symmetric) {
    std::vector<double> values;
    detail::append_eigenvalues(symmetric, values);
    return detail::numeric_report(std::move(values));
}

/// Spectrum of a block-diagonal matrix given by its blocks.
inline SpectrumReport numeric_spectrum(const std::vector<Matrix> &blocks) {
    std::vector<double> values;
    for (const auto &b : blocks)
        detail::append_eigenvalues(b, values);
    return detail::numeric_report(std::move(values));
}

struct SpectrumComparison {
    bool multiplicities_match = false;
    double max_relative_deviation = std::numeric_limits<double>::infinity();
};

/// Pairs distinct eigenvalues in ascending order. Nonzero reference values are
/// compared relatively; zero reference values against the largest eigenvalue.
inline SpectrumComparison compare_spectra(const SpectrumReport &reference,
                                          const SpectrumReport &measured) {
    SpectrumComparison cmp;
    if (reference.eigenpairs.size() != measured.eigenpairs.size())
        return cmp;
    const double top = std::max(std::abs(reference.max_eigenvalue()),
                                std::abs(measured.max_eigenvalue()));
    cmp.multiplicities_match = true;
    cmp.max_relative_deviation = 0.0;
    for (std::size_t i = 0; i < reference.eigenpairs.size(); ++i) {
        const auto &a = reference.eigenpairs[i];
        const auto &m = measured.eigenpairs[i];
        if (a.multiplicity != m.multiplicity)
            cmp.multiplicities_match = false;
        double dev = 0.0;
        if (std::abs(a.value) > kZeroEigenCutoff * top)
            dev = std::abs(a.value - m.value) / std::abs(a.value);
        else if (top > 0.0)
            dev = std::abs(m.value) / top;
        cmp.max_relative_deviation = std::max(cmp.max_relative_deviation, dev);
    }
    return cmp;
}

} // namespace ufm
