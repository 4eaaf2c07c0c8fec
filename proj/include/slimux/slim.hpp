/*  Copyright 2026 the slimux authors

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.  */

#pragma once

#include <optional>

#include <Eigen/Dense>

#include "slimux/common.hpp"
#include "slimux/preprocess.hpp"

namespace slimux {

// ---------------------------------------------------------------------------
// SLIM: sparse MAP abundance estimation by cyclic reweighted minimization of
//   g_q(a) = 1/2 ||y - V a||^2 + sum_i (a_i^q - 1)/q,   q in (0, 1],
// with the iterate
//   a <- P V^T (V P V^T + I)^{-1} y,   P = diag(a_i^{2-q}),
// negative entries clipped to zero after every step.
// ---------------------------------------------------------------------------

struct SlimConfig {
    double q = 1.0;                  ///< sparsity exponent, in (0, 1]
    double delta = 1e-4;             ///< relative-change convergence threshold
    int max_iter = 500;
    std::vector<double> q_grid = {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0};
    double support_epsilon = 1e-3;   ///< entries below eps * max(alpha) count as zero

    void validate() const {
        if (!(q > 0.0 && q <= 1.0)) throw std::invalid_argument(msg("q must lie in (0, 1], got ", q));
        if (!(delta > 0.0)) throw std::invalid_argument("delta must be positive");
        if (max_iter < 1) throw std::invalid_argument("max_iter must be at least 1");
        if (!(support_epsilon >= 0.0)) throw std::invalid_argument("support_epsilon must be non-negative");
    }
};

struct SlimState {
    Eigen::VectorXd alpha;        ///< current iterate, >= 0 elementwise
    Eigen::VectorXd weights;      ///< alpha_i^{2-q}
    int iteration = 0;
    double objective = 0.0;
    bool clipped_last = false;    ///< whether the last step hit the non-negativity clip
};

struct AbundanceEstimate {
    Eigen::VectorXd alpha;
    Eigen::VectorXd init_alpha;
    int iterations_used = 0;
    bool converged = false;
    double q_used = 1.0;
    double objective = 0.0;
    std::vector<Eigen::Index> support;  ///< indices above the support threshold
};

struct BicScore {
    double q = 0.0;
    double residual_norm_sq = 0.0;
    int h = 0;          ///< model order: nonzero count after thresholding
    double score = 0.0;
};

/// g_q(alpha). Zero entries contribute -1/q to the penalty.
inline double objective(const Eigen::VectorXd& alpha, const Eigen::VectorXd& y, const Eigen::MatrixXd& V,
                        double q) {
    const double fit = 0.5 * (y - V * alpha).squaredNorm();
    const double penalty = ((alpha.array().pow(q) - 1.0) / q).sum();
    return fit + penalty;
}

/// Maximum-likelihood per-column initializer on the whitened pair, with
/// negatives clipped: a_n = max(0, v_n.y / v_n.v_n).
inline Eigen::VectorXd ml_init(const Eigen::VectorXd& y, const Eigen::MatrixXd& V) {
    if (y.size() != V.rows()) throw std::invalid_argument("dimension mismatch between y and V");
    Eigen::VectorXd alpha(V.cols());
    for (Eigen::Index n = 0; n < V.cols(); ++n) {
        const double denom = V.col(n).squaredNorm();
        if (!(denom > 0.0)) throw std::runtime_error(msg("dictionary column ", n, " has zero norm"));
        alpha(n) = std::max(0.0, V.col(n).dot(y) / denom);
    }
    return alpha;
}

/// Initializer in unwhitened coordinates: a_n = (s_n^T M^{-1} z) / (s_n^T M^{-1} s_n),
/// clipped at zero. Identical to ml_init on the whitened pair.
inline Eigen::VectorXd init_estimate(const Eigen::VectorXd& z, const Eigen::MatrixXd& S,
                                     const NoiseModel& noise) {
    const WhitenedProblem wp = whiten(z, S, noise);
    return ml_init(wp.y, wp.V);
}

inline std::vector<Eigen::Index> support_of(const Eigen::VectorXd& alpha, double support_epsilon) {
    std::vector<Eigen::Index> support;
    if (alpha.size() == 0) return support;
    const double peak = alpha.maxCoeff();
    if (!(peak > 0.0)) return support;
    const double threshold = support_epsilon * peak;
    for (Eigen::Index i = 0; i < alpha.size(); ++i)
        if (alpha(i) >= threshold && alpha(i) > 0.0) support.push_back(i);
    return support;
}

/// One cyclic-minimization step. Solves the L x L SPD system
/// (V P V^T + I) u = y rather than the N x N normal equations, since the
/// sparse regime has N >> L.
inline SlimState slim_step(const SlimState& state, const Eigen::VectorXd& y, const Eigen::MatrixXd& V,
                           double q) {
    const Eigen::Index rows = V.rows();
    const Eigen::Index n_cols = V.cols();
    if (state.alpha.size() != n_cols || state.weights.size() != n_cols || y.size() != rows)
        throw std::invalid_argument("SLIM state dimensions do not match the problem");
    if (!state.weights.allFinite()) throw std::invalid_argument("SLIM weights must be finite");

    const Eigen::MatrixXd scaled = V * state.weights.cwiseSqrt().asDiagonal();
    Eigen::MatrixXd system = Eigen::MatrixXd::Identity(rows, rows);
    system.selfadjointView<Eigen::Lower>().rankUpdate(scaled);

    Eigen::LLT<Eigen::MatrixXd, Eigen::Lower> llt(system);
    if (llt.info() != Eigen::Success)
        throw std::runtime_error("SLIM step: Cholesky factorization of (V P V^T + I) failed");
    if (llt.rcond() < 1e-14)
        throw std::runtime_error(msg("SLIM step: (V P V^T + I) condition estimate exceeds 1e14 (rcond ",
                                     llt.rcond(), ")"));

    const Eigen::VectorXd u = llt.solve(y);
    Eigen::VectorXd next = state.weights.cwiseProduct(V.transpose() * u);
    bool clipped = false;
    for (Eigen::Index i = 0; i < next.size(); ++i) {
        if (next(i) < 0.0) {
            next(i) = 0.0;
            clipped = true;
        }
    }

    SlimState out;
    out.alpha = std::move(next);
    out.weights = out.alpha.array().pow(2.0 - q).matrix();
    out.iteration = state.iteration + 1;
    out.objective = objective(out.alpha, y, V, q);
    out.clipped_last = clipped;
    return out;
}

/// Relative-change stopping rule ||curr - prev|| / ||curr|| < delta; a zero
/// current iterate converges exactly when the previous one was zero too.
/// Underflow-safe norms: iterates collapsing toward zero must not read as
/// converged just because their squared entries underflow.
inline bool has_converged(const Eigen::VectorXd& prev, const Eigen::VectorXd& curr, double delta) {
    if (prev.size() != curr.size()) throw std::invalid_argument("iterate lengths differ");
    const double curr_norm = curr.stableNorm();
    if (curr_norm == 0.0) return prev.stableNorm() == 0.0;
    return (curr - prev).stableNorm() / curr_norm < delta;
}

/// Runs the cyclic updates from `init` (or the ML initializer) at the fixed
/// q in `config` until convergence or max_iter.
inline AbundanceEstimate solve_slim(const Eigen::VectorXd& y, const Eigen::MatrixXd& V,
                                    const SlimConfig& config,
                                    const std::optional<Eigen::VectorXd>& init = std::nullopt) {
    config.validate();
    if (y.size() != V.rows()) throw std::invalid_argument("dimension mismatch between y and V");

    Eigen::VectorXd start = init ? *init : ml_init(y, V);
    if (start.size() != V.cols()) throw std::invalid_argument("initializer length does not match dictionary");
    start = start.cwiseMax(0.0);

    SlimState state;
    state.alpha = start;
    state.weights = start.array().pow(2.0 - config.q).matrix();
    state.iteration = 0;
    state.objective = objective(start, y, V, config.q);

    bool converged = false;
    while (state.iteration < config.max_iter) {
        const Eigen::VectorXd prev = state.alpha;
        state = slim_step(state, y, V, config.q);
        if (has_converged(prev, state.alpha, config.delta)) {
            converged = true;
            break;
        }
    }

    AbundanceEstimate est;
    est.alpha = state.alpha;
    est.init_alpha = std::move(start);
    est.iterations_used = state.iteration;
    est.converged = converged;
    est.q_used = config.q;
    est.objective = state.objective;
    est.support = support_of(est.alpha, config.support_epsilon);
    return est;
}

/// Fit-plus-complexity score 2 ||y - V a||^2 + h ln(L), h = |support|.
inline BicScore compute_bic(const Eigen::VectorXd& y, const Eigen::MatrixXd& V,
                            const AbundanceEstimate& estimate) {
    BicScore s;
    s.q = estimate.q_used;
    s.residual_norm_sq = (y - V * estimate.alpha).squaredNorm();
    s.h = static_cast<int>(estimate.support.size());
    s.score = 2.0 * s.residual_norm_sq + static_cast<double>(s.h) * std::log(static_cast<double>(y.size()));
    return s;
}

/// Solves at every q in the grid and keeps the minimal BIC score; exact ties
/// resolve toward the smaller q (the sparser prior). Every solve is cold
/// started so grid points stay independent.
inline std::pair<AbundanceEstimate, std::vector<BicScore>> select_q(const Eigen::VectorXd& y,
                                                                    const Eigen::MatrixXd& V,
                                                                    const SlimConfig& config) {
    if (config.q_grid.empty()) throw std::invalid_argument("q_grid must not be empty");
    std::vector<double> grid = config.q_grid;
    std::sort(grid.begin(), grid.end());

    std::vector<BicScore> scores;
    scores.reserve(grid.size());
    AbundanceEstimate best;
    double best_score = std::numeric_limits<double>::infinity();
    bool have_best = false;
    for (const double q : grid) {
        SlimConfig cfg = config;
        cfg.q = q;
        AbundanceEstimate est = solve_slim(y, V, cfg);
        scores.push_back(compute_bic(y, V, est));
        if (!have_best || scores.back().score < best_score) {
            best = std::move(est);
            best_score = scores.back().score;
            have_best = true;
        }
    }
    return {std::move(best), std::move(scores)};
}

/// Relative stationarity residual of g_q restricted to a support:
/// || (V^T V a - V^T y + a^{q-1})_support || / || V^T y ||.
inline double stationarity_residual(const Eigen::VectorXd& alpha, const Eigen::VectorXd& y,
                                    const Eigen::MatrixXd& V, double q,
                                    const std::vector<Eigen::Index>& support) {
    const Eigen::VectorXd grad_fit = V.transpose() * (V * alpha - y);
    double num_sq = 0.0;
    for (const Eigen::Index i : support) {
        const double g = grad_fit(i) + std::pow(alpha(i), q - 1.0);
        num_sq += g * g;
    }
    const double denom = (V.transpose() * y).norm();
    const double num = std::sqrt(num_sq);
    return denom > 0.0 ? num / denom : num;
}

}  // namespace slimux
