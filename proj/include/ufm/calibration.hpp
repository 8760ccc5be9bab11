#pragma once

#include "ufm/loss.hpp"
#include "ufm/problem.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <stdexcept>
#include <vector>

namespace ufm {

/// Logits (K x M, one column per sample) with zero-based labels.
struct LogitDataset {
    Matrix logits;
    std::vector<int> labels;

    Eigen::Index size() const { return logits.cols(); }
    Eigen::Index classes() const { return logits.rows(); }

    void validate() const {
        if (logits.cols() < 1)
            throw std::invalid_argument("logit dataset is empty");
        if (static_cast<Eigen::Index>(labels.size()) != logits.cols())
            throw std::invalid_argument("logit dataset needs one label per sample");
        for (int y : labels)
            if (y < 0 || y >= logits.rows())
                throw std::invalid_argument("logit dataset label out of range");
        if (!logits.allFinite())
            throw std::invalid_argument("logit dataset contains non-finite values");
    }
};

struct ReliabilityBin {
    double lower = 0.0;
    double upper = 0.0;
    double mean_confidence = 0.0;
    double accuracy = 0.0;
    long count = 0;
};

struct CalibrationReport {
    double ece = 0.0;
    double ece_before = 0.0; // before temperature scaling
    std::vector<ReliabilityBin> bins;
    std::optional<double> temperature;
    double nll_before = 0.0;
    double nll_after = 0.0;
    double mean_entropy = 0.0;
    double accuracy = 0.0;
};

/// Top-class confidence and correctness of one sample.
struct Prediction {
    double confidence = 0.0;
    bool correct = false;
};

inline std::vector<Prediction> predictions(const LogitDataset &ds, double temperature = 1.0) {
    ds.validate();
    const Matrix P = softmax_cols(ds.logits / temperature);
    std::vector<Prediction> out(static_cast<std::size_t>(ds.size()));
    for (Eigen::Index j = 0; j < P.cols(); ++j) {
        Eigen::Index arg = 0;
        const double conf = P.col(j).maxCoeff(&arg);
        out[static_cast<std::size_t>(j)] = {conf, arg == ds.labels[static_cast<std::size_t>(j)]};
    }
    return out;
}

/// Equal-width bins [i/B, (i+1)/B) on [0, 1]; the last bin is closed.
inline std::vector<ReliabilityBin> reliability_bins(const std::vector<Prediction> &preds,
                                                    int bins = 20) {
    if (bins < 1)
        throw std::invalid_argument("reliability_bins: need at least one bin");
    if (preds.empty())
        throw std::invalid_argument("reliability_bins: empty dataset");
    std::vector<ReliabilityBin> out(static_cast<std::size_t>(bins));
    std::vector<double> conf_sum(out.size(), 0.0), correct(out.size(), 0.0);
    for (int i = 0; i < bins; ++i) {
        out[static_cast<std::size_t>(i)].lower = static_cast<double>(i) / bins;
        out[static_cast<std::size_t>(i)].upper = static_cast<double>(i + 1) / bins;
    }
    for (const auto &p : preds) {
        const int idx = std::clamp(static_cast<int>(std::floor(p.confidence * bins)), 0, bins - 1);
        const auto u = static_cast<std::size_t>(idx);
        ++out[u].count;
        conf_sum[u] += p.confidence;
        correct[u] += p.correct ? 1.0 : 0.0;
    }
    for (std::size_t i = 0; i < out.size(); ++i)
        if (out[i].count > 0) {
            out[i].mean_confidence = conf_sum[i] / out[i].count;
            out[i].accuracy = correct[i] / out[i].count;
        }
    return out;
}

inline std::vector<ReliabilityBin> reliability_bins(const LogitDataset &ds, int bins = 20) {
    return reliability_bins(predictions(ds), bins);
}

/// sum_b (count_b / M) |accuracy_b - confidence_b|.
inline double ece_from_bins(const std::vector<ReliabilityBin> &bins) {
    long total = 0;
    for (const auto &b : bins)
        total += b.count;
    if (total == 0)
        throw std::invalid_argument("ece_from_bins: no samples");
    double ece = 0.0;
    for (const auto &b : bins)
        ece += static_cast<double>(b.count) / total * std::abs(b.accuracy - b.mean_confidence);
    return ece;
}

/// Mean negative log-likelihood of softmax(logits / T).
inline double mean_nll(const LogitDataset &ds, double temperature = 1.0) {
    double nll = 0.0;
    for (Eigen::Index j = 0; j < ds.size(); ++j) {
        const Vector z = ds.logits.col(j) / temperature;
        nll += log_sum_exp(z) - z[ds.labels[static_cast<std::size_t>(j)]];
    }
    return nll / static_cast<double>(ds.size());
}

/// Mean Shannon entropy (nats) of the predicted distributions.
inline double prediction_entropy(const LogitDataset &ds) {
    ds.validate();
    double total = 0.0;
    for (Eigen::Index j = 0; j < ds.size(); ++j) {
        const Vector z = ds.logits.col(j);
        const double lse = log_sum_exp(z);
        const Vector logp = (z.array() - lse).matrix();
        total -= (logp.array().exp() * logp.array()).sum();
    }
    return std::max(0.0, total / static_cast<double>(ds.size()));
}

inline double accuracy(const std::vector<Prediction> &preds) {
    double hits = 0.0;
    for (const auto &p : preds)
        hits += p.correct ? 1.0 : 0.0;
    return hits / static_cast<double>(preds.size());
}

inline CalibrationReport ece(const LogitDataset &ds, int bins = 20) {
    const auto preds = predictions(ds);
    CalibrationReport r;
    r.bins = reliability_bins(preds, bins);
    r.ece = r.ece_before = ece_from_bins(r.bins);
    r.nll_before = r.nll_after = mean_nll(ds);
    r.mean_entropy = prediction_entropy(ds);
    r.accuracy = accuracy(preds);
    return r;
}

struct TemperatureFit {
    double temperature = 1.0;
    double nll_before = 0.0;
    double nll_after = 0.0;
    bool degenerate = false; // NLL does not depend on T
};

inline constexpr double kMinTemperature = 0.05;
inline constexpr double kMaxTemperature = 20.0;
inline constexpr double kLogTemperatureTol = 1e-4;

/// Golden-section search for the NLL-minimizing temperature over
/// log T in [log 0.05, log 20].
inline TemperatureFit fit_temperature(const LogitDataset &ds) {
    ds.validate();
    TemperatureFit fit;
    fit.nll_before = mean_nll(ds, 1.0);

    bool constant = true;
    for (Eigen::Index j = 0; j < ds.size() && constant; ++j)
        constant = ds.logits.col(j).maxCoeff() == ds.logits.col(j).minCoeff();
    if (constant) {
        fit.degenerate = true;
        fit.nll_after = fit.nll_before;
        return fit;
    }

    const auto f = [&](double log_t) { return mean_nll(ds, std::exp(log_t)); };
    const double ratio = (std::sqrt(5.0) - 1.0) / 2.0;
    double lo = std::log(kMinTemperature);
    double hi = std::log(kMaxTemperature);
    double x1 = hi - ratio * (hi - lo);
    double x2 = lo + ratio * (hi - lo);
    double f1 = f(x1);
    double f2 = f(x2);
    while (hi - lo > kLogTemperatureTol) {
        if (f1 <= f2) {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - ratio * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + ratio * (hi - lo);
            f2 = f(x2);
        }
    }
    const double t = std::exp(0.5 * (lo + hi));
    const double nll = mean_nll(ds, t);
    if (nll <= fit.nll_before) {
        fit.temperature = t;
        fit.nll_after = nll;
    } else {
        fit.nll_after = fit.nll_before;
    }
    return fit;
}

inline LogitDataset scaled(const LogitDataset &ds, double temperature) {
    return {ds.logits / temperature, ds.labels};
}

/// Calibration report on `eval`, optionally after fitting a temperature on
/// `fit_on`.
inline CalibrationReport calibrate(const LogitDataset &eval, int bins,
                                   const LogitDataset *fit_on) {
    CalibrationReport r = ece(eval, bins);
    if (fit_on) {
        const TemperatureFit fit = fit_temperature(*fit_on);
        r.temperature = fit.temperature;
        const LogitDataset adjusted = scaled(eval, fit.temperature);
        const auto preds = predictions(adjusted);
        r.bins = reliability_bins(preds, bins);
        r.ece = ece_from_bins(r.bins);
        r.nll_after = mean_nll(adjusted);
        r.mean_entropy = prediction_entropy(adjusted);
        r.accuracy = accuracy(preds);
    }
    return r;
}

} // namespace ufm
