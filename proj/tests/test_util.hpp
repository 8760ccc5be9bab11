#pragma once

#include "ufm/loss.hpp"
#include "ufm/problem.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>

namespace testutil {

using ufm::Matrix;
using ufm::ModelState;
using ufm::ProblemConfig;

inline Matrix gaussian(Eigen::Index rows, Eigen::Index cols, std::mt19937_64 &rng,
                       double scale = 1.0) {
    std::normal_distribution<double> normal(0.0, scale);
    Matrix M(rows, cols);
    for (Eigen::Index j = 0; j < cols; ++j)
        for (Eigen::Index i = 0; i < rows; ++i)
            M(i, j) = normal(rng);
    return M;
}

inline ProblemConfig random_config(std::mt19937_64 &rng) {
    std::uniform_int_distribution<int> kdist(2, 5), ndist(1, 3), extra(0, 3);
    std::uniform_real_distribution<double> delta(0.0, 0.5), lam(1e-3, 1e-1);
    ProblemConfig cfg;
    cfg.K = kdist(rng);
    cfg.n = ndist(rng);
    cfg.d = cfg.K + extra(rng);
    cfg.delta = delta(rng);
    cfg.lambda_w = lam(rng);
    cfg.lambda_h = lam(rng);
    cfg.lambda_b = lam(rng);
    return cfg;
}

inline ModelState random_state(const ProblemConfig &cfg, std::mt19937_64 &rng) {
    ModelState s;
    s.W = gaussian(cfg.d, cfg.K, rng);
    s.H = gaussian(cfg.d, cfg.N(), rng);
    s.b = gaussian(cfg.K, 1, rng);
    return s;
}

/// Largest relative error between the analytic gradient and a central
/// difference over every coordinate.
inline double gradient_fd_error(const ModelState &s, const ProblemConfig &cfg) {
    const auto g = ufm::ufm_gradient(s, cfg);
    const double h = 1e-5;
    double worst = 0.0;
    const auto probe = [&](Matrix ModelState::*field, const Matrix &analytic) {
        for (Eigen::Index i = 0; i < analytic.size(); ++i) {
            ModelState plus = s, minus = s;
            (plus.*field).data()[i] += h;
            (minus.*field).data()[i] -= h;
            const double fd = (ufm::ufm_loss(plus, cfg) - ufm::ufm_loss(minus, cfg)) / (2 * h);
            const double a = analytic.data()[i];
            worst = std::max(worst, std::abs(fd - a) / std::max(1.0, std::abs(a)));
        }
    };
    probe(&ModelState::W, g.W);
    probe(&ModelState::H, g.H);
    for (Eigen::Index i = 0; i < g.b.size(); ++i) {
        ModelState plus = s, minus = s;
        plus.b[i] += h;
        minus.b[i] -= h;
        const double fd = (ufm::ufm_loss(plus, cfg) - ufm::ufm_loss(minus, cfg)) / (2 * h);
        worst = std::max(worst, std::abs(fd - g.b[i]) / std::max(1.0, std::abs(g.b[i])));
    }
    return worst;
}

/// Root of a monotone function on [lo, hi] by bisection.
inline double bisect(const std::function<double(double)> &f, double lo, double hi,
                     int iters = 200) {
    double flo = f(lo);
    for (int i = 0; i < iters; ++i) {
        const double mid = 0.5 * (lo + hi);
        const double fm = f(mid);
        if ((fm > 0) == (flo > 0)) {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    return 0.5 * (lo + hi);
}

/// The grid of configurations used for closed-form properties.
inline std::vector<ProblemConfig> closed_form_grid() {
    std::vector<ProblemConfig> out;
    for (int K : {2, 3, 4, 10})
        for (int n : {1, 2, 5})
            for (int extra : {0, 3})
                for (double delta : {0.0, 0.05, 0.1, 0.3})
                    for (double lam : {1e-3, 5e-3})
                        out.push_back({K, n, K + extra, delta, lam, lam, lam});
    return out;
}

} // namespace testutil
