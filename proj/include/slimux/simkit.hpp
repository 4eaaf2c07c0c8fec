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

#include "slimux/scene.hpp"
#include "slimux/slim.hpp"

namespace slimux {

// ---------------------------------------------------------------------------
// Synthetic single-pixel experiments: planted truths, seeded Gaussian noise
// at a target SNR, Monte-Carlo aggregation, and the benchmark metrics.
// ---------------------------------------------------------------------------

/// SNR definition used when turning a dB target into a noise variance.
/// NormOverVariance is SNR = ||S a||_2 / sigma^2 (the convention the
/// benchmark axes use); EnergyPerSample is the conventional
/// SNR = ||S a||_2^2 / (L sigma^2).
enum class SnrConvention { NormOverVariance, EnergyPerSample };

inline const char* to_string(SnrConvention c) {
    return c == SnrConvention::NormOverVariance ? "norm-over-variance" : "energy-per-sample";
}

inline SnrConvention snr_convention_from_string(const std::string& s) {
    if (s == "norm-over-variance" || s == "literal") return SnrConvention::NormOverVariance;
    if (s == "energy-per-sample" || s == "energy") return SnrConvention::EnergyPerSample;
    throw std::invalid_argument(msg("unknown SNR convention '", s, "'"));
}

struct SyntheticTruth {
    Eigen::VectorXd alpha_true;       ///< >= 0, at least one positive entry
    std::vector<ColumnLabel> labels;  ///< optional, one per entry when present
    std::uint64_t seed = 0;

    void validate() const {
        if (alpha_true.size() == 0) throw std::invalid_argument("truth vector is empty");
        if (alpha_true.minCoeff() < 0.0) throw std::invalid_argument("truth abundances must be non-negative");
        if (!(alpha_true.maxCoeff() > 0.0))
            throw std::invalid_argument("truth must have at least one positive entry");
        if (!labels.empty() && labels.size() != static_cast<std::size_t>(alpha_true.size()))
            throw std::invalid_argument("truth labels length does not match abundance vector");
    }
};

inline Eigen::VectorXd generate_clean(const Eigen::MatrixXd& S, const SyntheticTruth& truth) {
    // an all-zero truth is a valid degenerate input here; positivity is
    // enforced where a finite SNR needs it
    if (truth.alpha_true.size() == 0 || truth.alpha_true.minCoeff() < 0.0 || !truth.alpha_true.allFinite())
        throw std::invalid_argument("truth abundances must be finite and non-negative");
    if (S.cols() != truth.alpha_true.size())
        throw std::invalid_argument(msg("dictionary has ", S.cols(), " columns, truth has ",
                                        truth.alpha_true.size(), " entries"));
    return S * truth.alpha_true;
}

inline Eigen::VectorXd generate_clean(const LibraryMatrix& lib, const SyntheticTruth& truth) {
    return generate_clean(lib.columns, truth);
}

struct NoisyObservation {
    Eigen::VectorXd noisy;
    double sigma_sq = 0.0;
};

/// Noise variance implied by a dB target for a given clean signal.
inline double noise_variance_for_snr(const Eigen::VectorXd& clean, double snr_db, SnrConvention convention) {
    if (std::isinf(snr_db) && snr_db > 0.0) return 0.0;
    const double norm = clean.norm();
    if (!(norm > 0.0))
        throw std::invalid_argument("clean signal is all zero; finite SNR is undefined");
    const double snr_linear = std::pow(10.0, snr_db / 10.0);
    if (convention == SnrConvention::NormOverVariance) return norm / snr_linear;
    return norm * norm / (static_cast<double>(clean.size()) * snr_linear);
}

/// Adds i.i.d. zero-mean Gaussian noise at the requested SNR. A +inf target
/// is the no-noise sentinel. Deterministic under the seed.
inline NoisyObservation add_noise(const Eigen::VectorXd& clean, double snr_db, std::uint64_t seed,
                                  SnrConvention convention = SnrConvention::NormOverVariance) {
    NoisyObservation out;
    out.sigma_sq = noise_variance_for_snr(clean, snr_db, convention);
    if (out.sigma_sq == 0.0) {
        out.noisy = clean;
        return out;
    }
    const double sigma = std::sqrt(out.sigma_sq);
    GaussianSampler rng(seed);
    out.noisy = clean;
    for (Eigen::Index i = 0; i < out.noisy.size(); ++i) out.noisy(i) += sigma * rng.gaussian();
    return out;
}

/// Signal-to-reconstruction error 20 log10(||a|| / ||a - a_hat||) in dB
/// (a ratio of amplitudes); +inf when the reconstruction is exact.
inline double sre_db(const Eigen::VectorXd& alpha_true, const Eigen::VectorXd& alpha_hat) {
    if (alpha_true.size() != alpha_hat.size()) throw std::invalid_argument("abundance lengths differ");
    const double truth_norm = alpha_true.norm();
    if (!(truth_norm > 0.0)) throw std::invalid_argument("SRE undefined for an all-zero truth");
    const double err = (alpha_true - alpha_hat).norm();
    if (err == 0.0) return std::numeric_limits<double>::infinity();
    return 20.0 * std::log10(truth_norm / err);
}

inline double sre_linear(const Eigen::VectorXd& alpha_true, const Eigen::VectorXd& alpha_hat) {
    const double db = sre_db(alpha_true, alpha_hat);
    return std::isinf(db) ? db : std::pow(10.0, db / 20.0);
}

struct TrialResult {
    Eigen::VectorXd alpha_hat;
    double sre_db = 0.0;
    Eigen::VectorXd squared_errors;
};

struct McSummary {
    int trials = 0;
    Eigen::VectorXd rms_alpha;   ///< per-endmember sqrt(mean alpha_hat^2)
    double mean_sre_db = 0.0;
    double snr_db = 0.0;
    double sigma_sq = 0.0;
    SnrConvention convention = SnrConvention::NormOverVariance;
    bool bic_selection = true;
    std::uint64_t base_seed = 0;
};

/// Monte-Carlo benchmark at one SNR: fresh noise per trial (seed derived
/// from truth.seed and the trial index), whitened SLIM solve, aggregation.
/// Trial ordering never affects results, so callers may shard trials.
inline McSummary run_monte_carlo(const Eigen::MatrixXd& S, const SyntheticTruth& truth, double snr_db,
                                 int trials, const SlimConfig& config, bool select_q_by_bic = true,
                                 SnrConvention convention = SnrConvention::NormOverVariance,
                                 std::vector<TrialResult>* per_trial = nullptr) {
    if (trials < 1) throw std::invalid_argument("trials must be at least 1");
    const Eigen::VectorXd clean = generate_clean(S, truth);
    const double sigma_sq = noise_variance_for_snr(clean, snr_db, convention);

    McSummary summary;
    summary.trials = trials;
    summary.snr_db = snr_db;
    summary.sigma_sq = sigma_sq;
    summary.convention = convention;
    summary.bic_selection = select_q_by_bic;
    summary.base_seed = truth.seed;
    summary.rms_alpha = Eigen::VectorXd::Zero(S.cols());

    if (per_trial) {
        per_trial->clear();
        per_trial->reserve(static_cast<std::size_t>(trials));
    }

    Eigen::VectorXd sum_sq = Eigen::VectorXd::Zero(S.cols());
    double sre_sum = 0.0;
    int sre_finite = 0;
    bool sre_saw_inf = false;
    for (int t = 0; t < trials; ++t) {
        const NoisyObservation obs = add_noise(clean, snr_db, derive_seed(truth.seed, static_cast<std::uint64_t>(t)),
                                               convention);
        Eigen::VectorXd y;
        Eigen::MatrixXd V;
        if (sigma_sq > 0.0) {
            const double inv_sigma = 1.0 / std::sqrt(sigma_sq);
            y = obs.noisy * inv_sigma;
            V = S * inv_sigma;
        } else {
            y = obs.noisy;  // no-noise sentinel: solve unwhitened
            V = S;
        }
        const AbundanceEstimate est =
            select_q_by_bic ? select_q(y, V, config).first : solve_slim(y, V, config);

        sum_sq.array() += est.alpha.array().square();
        const double sre = sre_db(truth.alpha_true, est.alpha);
        if (std::isinf(sre)) {
            sre_saw_inf = true;
        } else {
            sre_sum += sre;
            ++sre_finite;
        }
        if (per_trial)
            per_trial->push_back(TrialResult{est.alpha, sre,
                                             (truth.alpha_true - est.alpha).array().square().matrix()});
    }

    summary.rms_alpha = (sum_sq / static_cast<double>(trials)).cwiseSqrt();
    summary.mean_sre_db = sre_finite > 0 ? sre_sum / static_cast<double>(sre_finite)
                                         : (sre_saw_inf ? std::numeric_limits<double>::infinity() : 0.0);
    return summary;
}

/// Root-mean-square map difference over the intersection of the validity
/// masks, expressed in Dobson Units.
struct MaskedDiff {
    double rmse_molec = 0.0;
    double bias_molec = 0.0;  ///< mean(a - b)
    std::size_t valid_pixels = 0;
};

inline MaskedDiff masked_diff(const ConcentrationMap& a, const ConcentrationMap& b) {
    if (a.rows != b.rows || a.cols != b.cols)
        throw std::invalid_argument(msg("map grids differ: ", a.rows, "x", a.cols, " vs ", b.rows, "x", b.cols));
    a.validate_shapes();
    b.validate_shapes();
    double sum_sq = 0.0, sum = 0.0;
    std::size_t count = 0;
    for (std::size_t i = 0; i < a.values.size(); ++i) {
        if (!a.valid[i] || !b.valid[i]) continue;
        const double d = a.values[i] - b.values[i];
        sum_sq += d * d;
        sum += d;
        ++count;
    }
    if (count == 0) throw std::runtime_error("no overlapping valid pixels between the two maps");
    return MaskedDiff{std::sqrt(sum_sq / static_cast<double>(count)), sum / static_cast<double>(count), count};
}

inline double rmse_du(const ConcentrationMap& a, const ConcentrationMap& b) {
    return masked_diff(a, b).rmse_molec / kMoleculesPerDobsonUnit;
}

// ---------------------------------------------------------------------------
// Monte-Carlo report file: config echo, per-SNR abundance RMS table, SRE
// table, seeds.
// ---------------------------------------------------------------------------

inline void write_mc_report(const std::string& path, const std::vector<McSummary>& summaries,
                            const SyntheticTruth& truth, const SlimConfig& config,
                            const std::vector<ColumnLabel>& labels) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error(msg("cannot open '", path, "' for writing"));
    out << "# monte-carlo benchmark report\n";
    out << "base_seed = " << truth.seed << "\n";
    if (!summaries.empty()) {
        out << "trials = " << summaries.front().trials << "\n";
        out << "snr_convention = " << to_string(summaries.front().convention) << "\n";
        out << "q_mode = " << (summaries.front().bic_selection ? "bic" : "fixed") << "\n";
    }
    out << "sre_db_convention = 20log10\n";
    if (!summaries.empty() && !summaries.front().bic_selection) out << "q = " << format_double(config.q) << "\n";
    out << "q_grid =";
    for (const double q : config.q_grid) out << " " << format_double(q);
    out << "\n";
    out << "delta = " << format_double(config.delta) << "\n";
    out << "max_iter = " << config.max_iter << "\n";
    out << "support_epsilon = " << format_double(config.support_epsilon) << "\n";
    out << "truth:\n";
    for (Eigen::Index i = 0; i < truth.alpha_true.size(); ++i) {
        if (truth.alpha_true(i) <= 0.0) continue;
        out << "  ";
        if (!truth.labels.empty())
            out << truth.labels[static_cast<std::size_t>(i)].species << " @ "
                << format_double(truth.labels[static_cast<std::size_t>(i)].temperature_k) << " K";
        else
            out << "endmember " << i;
        out << " = " << format_double(truth.alpha_true(i)) << "\n";
    }
    out << "\nmean_sre_db_by_snr:\n";
    for (const auto& s : summaries)
        out << "  snr_db " << format_double(s.snr_db) << " -> " << format_double(s.mean_sre_db) << "\n";
    for (const auto& s : summaries) {
        out << "\nsnr_db = " << format_double(s.snr_db) << "\n";
        out << "sigma_sq = " << format_double(s.sigma_sq) << "\n";
        out << "rms_alpha:\n";
        for (Eigen::Index i = 0; i < s.rms_alpha.size(); ++i) {
            out << "  ";
            if (!labels.empty())
                out << labels[static_cast<std::size_t>(i)].species << " @ "
                    << format_double(labels[static_cast<std::size_t>(i)].temperature_k) << " K";
            else
                out << "endmember " << i;
            out << " = " << format_double(s.rms_alpha(i)) << "\n";
        }
    }
    if (!out) throw std::runtime_error(msg("write failed for '", path, "'"));
}

}  // namespace slimux
