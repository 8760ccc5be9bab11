#pragma once

#include "ufm/closed_form.hpp"
#include "ufm/loss.hpp"
#include "ufm/nc_metrics.hpp"
#include "ufm/problem.hpp"
#include "ufm/spectral.hpp"

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

namespace ufm {

/// Full-batch gradient descent with heavy-ball momentum.
struct OptimizerConfig {
    double learning_rate = 0.5;
    double momentum = 0.9;
    long max_iters = 50000;
    double loss_tol = 1e-10; // stop once loss - L* < loss_tol
    long record_every = 1;
    double init_scale = 1.0;
    std::uint64_t seed = 0;

    void validate() const {
        if (!(learning_rate > 0.0) || !std::isfinite(learning_rate))
            throw ConfigError("learning_rate must be positive");
        if (!(momentum >= 0.0 && momentum < 1.0))
            throw ConfigError("momentum must lie in [0, 1)");
        if (max_iters < 1)
            throw ConfigError("max_iters must be positive");
        if (!(loss_tol > 0.0))
            throw ConfigError("loss_tol must be positive");
        if (record_every < 1)
            throw ConfigError("record_every must be positive");
        if (!(init_scale >= 0.0) || !std::isfinite(init_scale))
            throw ConfigError("init_scale must be nonnegative");
    }
};

/// Loss above which a run is declared divergent.
inline constexpr double kDivergenceLoss = 1e6;

struct TrajectoryRow {
    long iter = 0;
    double loss = 0.0;
    double nc1 = 0.0;
    double nc2 = 0.0;
    double nc3 = 0.0;
    double w_norm = 0.0;      // mean classifier column norm
    double h_mean_norm = 0.0; // mean centered class-mean norm
    double grad_norm = 0.0;
    double loss_gap = 0.0;       // loss - L*
    double logit_deviation = 0.0; // |W^T Hbar - a (K I - J)|_F
};

struct Trajectory {
    std::vector<TrajectoryRow> rows;
    ModelState final_state;
    double optimal_loss = 0.0;
    bool converged = false;
    long iterations = 0; // updates performed
    double final_grad_norm = 0.0;
};

inline ModelState init_state(const ProblemConfig &cfg, const OptimizerConfig &opt) {
    std::mt19937_64 rng(opt.seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    const double scale = opt.init_scale / std::sqrt(static_cast<double>(cfg.d));
    ModelState s = ModelState::zeros(cfg);
    for (Eigen::Index j = 0; j < s.W.cols(); ++j)
        for (Eigen::Index i = 0; i < s.W.rows(); ++i)
            s.W(i, j) = scale * normal(rng);
    for (Eigen::Index j = 0; j < s.H.cols(); ++j)
        for (Eigen::Index i = 0; i < s.H.rows(); ++i)
            s.H(i, j) = scale * normal(rng);
    return s;
}

namespace detail {

inline double metric_or_nan(double (*metric)(const Matrix &, const FeatureSet &),
                            const Matrix &W, const FeatureSet &fs) {
    try {
        return metric(W, fs);
    } catch (const std::domain_error &) {
        return std::numeric_limits<double>::quiet_NaN();
    }
}

inline TrajectoryRow make_row(long iter, double loss, double grad_norm,
                              const ModelState &s, const ProblemConfig &cfg,
                              double optimal, const Matrix &mean_logits) {
    TrajectoryRow row;
    row.iter = iter;
    row.loss = loss;
    row.grad_norm = grad_norm;
    row.loss_gap = loss - optimal;
    const FeatureSet fs = FeatureSet::balanced(s.H, cfg.K, cfg.n);
    const NC1Result c1 = nc1(fs);
    row.nc1 = c1.status == MetricStatus::between_vanishes
                  ? std::numeric_limits<double>::quiet_NaN()
                  : c1.value;
    row.nc2 = metric_or_nan(&nc2, s.W, fs);
    row.nc3 = metric_or_nan(&nc3, s.W, fs);
    const NormSummary norms = norm_summary(s.W, fs);
    row.w_norm = norms.classifier;
    row.h_mean_norm = norms.class_mean;
    const ClassStatistics st = class_statistics(fs);
    row.logit_deviation =
        (s.W.transpose() * st.centered_means() - mean_logits).norm();
    return row;
}

} // namespace detail

/// Runs descent from a given state. Stops once loss - L* < loss_tol or after
/// max_iters updates. Rows are recorded every record_every iterations and at
/// the final iterate.
inline Trajectory run(const ProblemConfig &cfg, const OptimizerConfig &opt,
                      ModelState state) {
    cfg.validate();
    opt.validate();
    state.check_shape(cfg);
    const Matrix targets = label_encoding(cfg).Y_delta;
    const Matrix mean_logits = mean_logit_matrix(cfg);

    Trajectory traj;
    traj.optimal_loss = optimal_loss(cfg);

    ModelState velocity = ModelState::zeros(cfg);
    for (long iter = 0;; ++iter) {
        const double loss = ufm_loss(state, cfg, targets);
        if (!std::isfinite(loss) || loss > kDivergenceLoss) {
            std::ostringstream msg;
            msg << "descent diverged at iteration " << iter << " (loss " << loss
                << "); reduce learning_rate";
            throw NumericalError(msg.str());
        }
        const Gradient g = ufm_gradient(state, cfg, targets);
        const double gap = loss - traj.optimal_loss;
        const bool done = gap < opt.loss_tol;
        const bool last = done || iter == opt.max_iters;
        if (iter % opt.record_every == 0 || last)
            traj.rows.push_back(detail::make_row(iter, loss, g.norm(), state, cfg,
                                                 traj.optimal_loss, mean_logits));
        if (last) {
            traj.converged = done;
            traj.iterations = iter;
            traj.final_grad_norm = g.norm();
            break;
        }
        velocity.W = opt.momentum * velocity.W - opt.learning_rate * g.W;
        velocity.H = opt.momentum * velocity.H - opt.learning_rate * g.H;
        velocity.b = opt.momentum * velocity.b - opt.learning_rate * g.b;
        state.W += velocity.W;
        state.H += velocity.H;
        state.b += velocity.b;
    }
    traj.final_state = std::move(state);
    return traj;
}

inline Trajectory run(const ProblemConfig &cfg, const OptimizerConfig &opt) {
    return run(cfg, opt, init_state(cfg, opt));
}

/// First recorded iteration with loss - L* < eps.
inline std::optional<long> iterations_to_epsilon(const Trajectory &traj,
                                                 double optimal, double eps) {
    if (traj.rows.empty())
        throw std::invalid_argument("iterations_to_epsilon: empty trajectory");
    for (const auto &row : traj.rows)
        if (row.loss - optimal < eps)
            return row.iter;
    return std::nullopt;
}

struct SweepRow {
    double delta = 0.0;
    double a_delta = 0.0;
    double w_norm = 0.0;      // |W*|_F of the closed-form minimizer
    double h_bar_norm = 0.0;  // |Hbar*|_F of the closed-form minimizer
    double kappa_h = std::numeric_limits<double>::quiet_NaN();
    double kappa_w = std::numeric_limits<double>::quiet_NaN();
    std::optional<long> iters_to_eps;
    double nc1 = 0.0;
    double nc2 = 0.0;
    double nc3 = 0.0;
    bool boundary = false; // a_delta = 0 regime; condition numbers undefined
};

struct SweepOptions {
    /// Target gap for iters_to_eps, relative to the gap at the initial state.
    double eps_relative = 1e-4;
};

/// One row per delta: closed-form scale and norms, analytic condition numbers
/// of both partial Hessians, and the outcome of a descent run.
inline std::vector<SweepRow> delta_sweep(const ProblemConfig &base,
                                         const std::vector<double> &deltas,
                                         const OptimizerConfig &opt,
                                         SweepOptions sweep = {}) {
    std::vector<SweepRow> rows;
    for (const double delta : deltas) {
        ProblemConfig cfg = base;
        cfg.delta = delta;
        cfg.validate();

        SweepRow row;
        row.delta = delta;
        row.a_delta = logit_scale(cfg);
        const ModelState star = global_minimizer(cfg);
        row.w_norm = star.W.norm();
        row.h_bar_norm = minimizer_scales(cfg).h *
                         (cfg.K * Matrix::Identity(cfg.K, cfg.K) -
                          Matrix::Ones(cfg.K, cfg.K))
                             .norm();
        row.boundary = !cfg.interior();
        if (!row.boundary) {
            row.kappa_h = analytic_feature_hessian_spectrum(cfg).condition_number;
            row.kappa_w = analytic_classifier_hessian_spectrum(cfg).condition_number;
        }

        const ModelState start = init_state(cfg, opt);
        const Trajectory traj = run(cfg, opt, start);
        const double initial_gap = traj.rows.front().loss_gap;
        row.iters_to_eps = iterations_to_epsilon(traj, traj.optimal_loss,
                                                 sweep.eps_relative * initial_gap);
        const TrajectoryRow &last = traj.rows.back();
        row.nc1 = last.nc1;
        row.nc2 = last.nc2;
        row.nc3 = last.nc3;
        rows.push_back(row);
    }
    return rows;
}

} // namespace ufm
