#pragma once

#include "ufm/closed_form.hpp"
#include "ufm/descent.hpp"
#include "ufm/loss.hpp"
#include "ufm/theory.hpp"

#include <cmath>
#include <cstdint>
#include <random>
#include <sstream>
#include <string>
#include <vector>

namespace ufm {

struct CheckResult {
    std::string name;
    bool passed = false;
    std::string detail;
};

struct CheckOptions {
    /// Added (times a fixed random direction) to every optimum the suite
    /// inspects. Nonzero values must make the suite fail.
    double perturbation = 0.0;
    std::uint64_t seed = 2024;
};

namespace detail {

inline Matrix random_matrix(Eigen::Index rows, Eigen::Index cols, std::mt19937_64 &rng) {
    std::normal_distribution<double> normal(0.0, 1.0);
    Matrix M(rows, cols);
    for (Eigen::Index j = 0; j < cols; ++j)
        for (Eigen::Index i = 0; i < rows; ++i)
            M(i, j) = normal(rng);
    return M;
}

inline std::string sci(double v) {
    std::ostringstream os;
    os.precision(3);
    os << std::scientific << v;
    return os.str();
}

inline void perturb(ModelState &s, double eps, std::mt19937_64 &rng) {
    if (eps == 0.0)
        return;
    s.W += eps * random_matrix(s.W.rows(), s.W.cols(), rng);
    s.H += eps * random_matrix(s.H.rows(), s.H.cols(), rng);
}

} // namespace detail

/// Configurations the suite uses for optimum-level checks.
inline std::vector<ProblemConfig> check_configs() {
    std::vector<ProblemConfig> out;
    for (int K : {2, 3, 4, 10})
        for (double delta : {0.0, 0.1, 0.3})
            out.push_back({K, 2, K + 2, delta, 5e-3, 5e-3, 5e-3});
    return out;
}

/// Numerical witnesses for the variational and optimality identities.
inline std::vector<CheckResult> run_theory_checks(const CheckOptions &opts = {}) {
    std::vector<CheckResult> results;
    std::mt19937_64 rng(opts.seed);

    { // |ab| <= a^2/2 + b^2/2, equality iff |a| = |b|
        std::uniform_real_distribution<double> u(-10.0, 10.0);
        double worst = 0.0;
        double worst_equal = 0.0;
        bool strict_ok = true;
        for (int i = 0; i < 10000; ++i) {
            const double a = u(rng);
            const double b = u(rng);
            worst = std::min(worst, young_slack(a, b));
            if (std::abs(std::abs(a) - std::abs(b)) > 1e-3 && !(young_slack(a, b) > 0.0))
                strict_ok = false;
            const double sign = (i % 2 == 0) ? 1.0 : -1.0;
            worst_equal = std::max(worst_equal, std::abs(young_slack(a, sign * a)));
        }
        const bool ok = worst >= -1e-12 && worst_equal < 1e-12 && strict_ok;
        results.push_back({"young_inequality", ok,
                           "min slack " + detail::sci(worst) + ", equality slack " +
                               detail::sci(worst_equal)});
    }

    { // balanced factorization attains the nuclear norm
        double worst_gap = 0.0;
        double worst_recon = 0.0;
        for (int trial = 0; trial < 20; ++trial) {
            const Eigen::Index K = 2 + trial % 5;
            const Eigen::Index N = 1 + trial % 7;
            const double alpha = 0.1 + 0.5 * trial;
            const Matrix Z = detail::random_matrix(K, N, rng);
            Factorization f = balanced_factorization(Z, alpha);
            f.W.array() += opts.perturbation;
            worst_gap = std::max(worst_gap, std::abs(factorization_gap(f.W, f.H, alpha)));
            worst_recon = std::max(worst_recon, (f.W.transpose() * f.H - Z).norm() / Z.norm());
        }
        results.push_back({"nuclear_norm_identity", worst_gap < 1e-10 && worst_recon < 1e-10,
                           "max |gap| " + detail::sci(worst_gap) + ", max reconstruction " +
                               detail::sci(worst_recon)});
    }

    { // every factorization sits above the nuclear norm
        double worst = 0.0;
        for (int trial = 0; trial < 1000; ++trial) {
            const Eigen::Index r = 1 + trial % 6;
            const Eigen::Index K = 2 + trial % 4;
            const Eigen::Index N = 1 + trial % 5;
            const double alpha = std::exp(-2.0 + 4.0 * (trial % 17) / 16.0);
            const Matrix W = detail::random_matrix(r, K, rng);
            const Matrix H = detail::random_matrix(r, N, rng);
            worst = std::min(worst, factorization_gap(W, H, alpha));
        }
        results.push_back({"variational_lower_bound", worst >= -1e-10,
                           "min gap over 1000 factorizations " + detail::sci(worst)});
    }

    // Optimum-level checks over a config grid.
    double worst_duality = 0.0, worst_grad = 0.0, worst_cond = 0.0, worst_scale = 0.0;
    for (const auto &cfg : check_configs()) {
        ModelState s = global_minimizer(cfg, partial_orthogonal(cfg.d, cfg.K, opts.seed));
        detail::perturb(s, opts.perturbation, rng);

        const Matrix means = s.H(Eigen::all, Eigen::seqN(0, cfg.K, cfg.n));
        worst_duality = std::max(worst_duality, duality_gap(s.W, means, cfg));
        worst_grad = std::max(worst_grad, ufm_gradient(s, cfg).norm());

        // First-order condition in the logits: (Y^delta - P)/N = lambda_Z U V^T
        // on the rank K-1 range of Z, and the bias condition with b = 0.
        const Matrix Z = s.logits();
        const Matrix residual =
            (label_encoding(cfg).Y_delta - softmax_cols(Z)) / static_cast<double>(cfg.N());
        const double a = logit_scale(cfg);
        double cond = (residual.rowwise().sum() - cfg.lambda_b * s.b).norm();
        if (a > 0.0) {
            Eigen::JacobiSVD<Matrix> svd(Z, Eigen::ComputeThinU | Eigen::ComputeThinV);
            const auto r = cfg.K - 1;
            const Matrix polar = svd.matrixU().leftCols(r) * svd.matrixV().leftCols(r).transpose();
            cond = std::max(cond, (residual - cfg.lambda_z() * polar).norm());
        }
        worst_cond = std::max(worst_cond, cond);

        // Scalar optimality equation behind the logit scale.
        if (a > 0.0) {
            const double K = cfg.K;
            const double lhs = K / (K - 1.0 + std::exp(a * K)) - cfg.delta;
            const double rhs = std::sqrt(K * cfg.N()) * cfg.lambda_z();
            worst_scale = std::max(worst_scale, std::abs(lhs - rhs));
        }
    }
    results.push_back({"self_duality", worst_duality < 1e-10,
                       "max |W - sqrt(n lambda_H/lambda_W) Hbar| " + detail::sci(worst_duality)});
    results.push_back({"closed_form_stationarity", worst_grad < 1e-8,
                       "max gradient norm " + detail::sci(worst_grad)});
    results.push_back({"optimality_conditions", worst_cond < 1e-10,
                       "max residual " + detail::sci(worst_cond)});
    results.push_back({"logit_scale_equation", worst_scale < 1e-12,
                       "max residual " + detail::sci(worst_scale)});

    { // within-class logits collapse along a descent run
        const ProblemConfig cfg{3, 2, 4, 0.1, 5e-3, 5e-3, 5e-3};
        OptimizerConfig opt;
        opt.learning_rate = 0.5;
        opt.momentum = 0.9;
        opt.max_iters = 50000;
        opt.loss_tol = 1e-12;
        opt.record_every = 1000;
        opt.seed = opts.seed;
        Trajectory traj = run(cfg, opt);
        detail::perturb(traj.final_state, opts.perturbation, rng);
        const double spread = logit_spread(traj.final_state, cfg);
        results.push_back({"logit_collapse", spread < 1e-3,
                           "max within-class logit spread " + detail::sci(spread) + " after " +
                               std::to_string(traj.iterations) + " iterations"});
    }
    return results;
}

} // namespace ufm
