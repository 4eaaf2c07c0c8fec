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

#include <atomic>
#include <chrono>
#include <mutex>
#include <thread>

#include "slimux/simkit.hpp"

namespace slimux {

/// Runs fn(0..n-1) over a small worker pool. Results must be written into
/// pre-sized per-index slots so the outcome is identical for any worker
/// count; with workers <= 1 the loop runs inline.
template <typename Fn>
void parallel_for(std::size_t n, int workers, Fn&& fn) {
    if (workers <= 1 || n <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr first_error;
    std::mutex error_mutex;
    auto body = [&] {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= n) return;
            try {
                fn(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!first_error) first_error = std::current_exception();
                return;
            }
        }
    };
    std::vector<std::thread> pool;
    const int extra = std::min<int>(workers - 1, static_cast<int>(n) - 1);
    pool.reserve(static_cast<std::size_t>(extra));
    for (int w = 0; w < extra; ++w) pool.emplace_back(body);
    body();
    for (auto& t : pool) t.join();
    if (first_error) std::rethrow_exception(first_error);
}

// ---------------------------------------------------------------------------
// Per-scene retrieval
// ---------------------------------------------------------------------------

struct RetrieveConfig {
    SlimConfig slim;
    bool use_bic = true;       ///< false: solve at the fixed slim.q everywhere
    bool per_pixel_q = false;  ///< true: run the q grid on every pixel (slow path)
    std::optional<DetrendConfig> detrend_override;  ///< must equal the library's filter
    std::optional<double> noise_variance;           ///< fixed scaled-identity noise; default: per-pixel estimate
    int workers = 1;
};

enum class PixelStatus : std::uint8_t {
    Masked = 0,        ///< invalid at load; no retrieval attempted
    Ok = 1,
    NotConverged = 2,  ///< hit max_iter; last iterate reported
    Failed = 3,        ///< per-pixel error; message recorded, values zero
};

struct RetrievalReport {
    int rows = 0;
    int cols = 0;
    std::vector<ColumnLabel> labels;        ///< N endmembers
    std::vector<double> abundances;         ///< rows*cols*N, pixel-major, molecules/cm^2
    std::vector<PixelStatus> status;        ///< rows*cols
    std::vector<std::uint16_t> iterations;  ///< rows*cols
    std::vector<double> q_used;             ///< rows*cols (nan for masked/failed)
    std::vector<std::string> errors;        ///< rows*cols, empty when clean
    std::vector<std::uint8_t> valid;        ///< load-time mask
    double global_q = 1.0;
    bool per_pixel_q = false;
    double seconds = 0.0;
    nlohmann::json metadata;

    std::size_t pixel_count() const { return static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols); }
    std::size_t retrieved_count() const {
        std::size_t n = 0;
        for (const auto s : status)
            if (s != PixelStatus::Masked) ++n;
        return n;
    }
    double abundance(std::size_t pix, std::size_t endmember) const {
        return abundances[pix * labels.size() + endmember];
    }
};

namespace detail {

struct PixelOutcome {
    Eigen::VectorXd alpha;  ///< physical abundances
    PixelStatus status = PixelStatus::Ok;
    int iterations = 0;
    double q = std::numeric_limits<double>::quiet_NaN();
    std::string error;
};

/// Full single-pixel chain: optical depth, detrend, whiten, normalize the
/// whitened columns, solve, undo the normalization so abundances come out in
/// the library's physical units.
inline PixelOutcome retrieve_pixel(const Eigen::VectorXd& radiance, const Eigen::VectorXd& irradiance,
                                   double sza_deg, const LibraryMatrix& lib, const RetrieveConfig& cfg,
                                   std::optional<double> fixed_q) {
    PixelOutcome out;
    try {
        const Eigen::VectorXd z = compute_optical_depth(radiance, irradiance, sza_deg).values;
        const Eigen::VectorXd zt = lib.detrend.enabled
                                       ? detrend(z, lib.detrend.window, lib.detrend.order).detrended
                                       : z;
        const NoiseModel noise = cfg.noise_variance ? NoiseModel::scaled_identity(*cfg.noise_variance)
                                                    : estimate_noise(zt, lib.columns);
        const WhitenedProblem wp = whiten(zt, lib.columns, noise);

        Eigen::VectorXd norms = wp.V.colwise().norm();
        for (Eigen::Index j = 0; j < norms.size(); ++j)
            if (!(norms(j) > 0.0)) throw std::runtime_error(msg("whitened column ", j, " has zero norm"));
        const Eigen::MatrixXd Vn = wp.V * norms.cwiseInverse().asDiagonal();

        AbundanceEstimate est;
        if (fixed_q) {
            SlimConfig sc = cfg.slim;
            sc.q = *fixed_q;
            est = solve_slim(wp.y, Vn, sc);
        } else {
            est = select_q(wp.y, Vn, cfg.slim).first;
        }
        out.alpha = est.alpha.cwiseQuotient(norms);
        out.status = est.converged ? PixelStatus::Ok : PixelStatus::NotConverged;
        out.iterations = est.iterations_used;
        out.q = est.q_used;
    } catch (const std::exception& e) {
        out.alpha = Eigen::VectorXd::Zero(lib.endmember_count());
        out.status = PixelStatus::Failed;
        out.error = e.what();
    }
    return out;
}

}  // namespace detail

/// Retrieves abundances for every valid pixel of a scene. Per-pixel failures
/// are recorded, never fatal. The default q policy picks one global q by BIC
/// on the highest-signal pixel; per_pixel_q runs the grid everywhere.
inline RetrievalReport retrieve_map(const SceneCube& scene, const LibraryMatrix& lib,
                                    const RetrieveConfig& cfg) {
    const auto t_start = std::chrono::steady_clock::now();
    scene.validate_shapes();
    cfg.slim.validate();
    if (!grids_match(scene.grid, lib.grid))
        throw std::invalid_argument(msg("library grid (", lib.grid.count(), " bands, ",
                                        format_double(lib.grid.values.front()), "-",
                                        format_double(lib.grid.values.back()),
                                        " nm) does not match scene grid (", scene.grid.count(),
                                        " bands); clip the scene to the library band first"));
    if (cfg.detrend_override && *cfg.detrend_override != lib.detrend)
        throw std::invalid_argument(
            "detrend configuration mismatch: pixel filter must equal the filter the library was built with");

    const std::size_t n_pix = scene.pixel_count();
    const auto n_end = static_cast<std::size_t>(lib.endmember_count());
    const Eigen::Map<const Eigen::VectorXd> irradiance(scene.irradiance.data(), scene.band_count());

    RetrievalReport report;
    report.rows = scene.rows;
    report.cols = scene.cols;
    report.labels = lib.labels;
    report.abundances.assign(n_pix * n_end, 0.0);
    report.status.assign(n_pix, PixelStatus::Masked);
    report.iterations.assign(n_pix, 0);
    report.q_used.assign(n_pix, std::numeric_limits<double>::quiet_NaN());
    report.errors.assign(n_pix, std::string());
    report.valid.assign(scene.valid.begin(), scene.valid.end());
    report.per_pixel_q = cfg.per_pixel_q;

    // q policy: fixed everywhere, per-pixel grid, or one global BIC pick on
    // the strongest detrended pixel.
    std::optional<double> fixed_q;
    if (!cfg.use_bic) {
        fixed_q = cfg.slim.q;
        report.global_q = cfg.slim.q;
    } else if (!cfg.per_pixel_q) {
        double best_norm = -1.0;
        std::size_t best_pix = n_pix;
        for (std::size_t pix = 0; pix < n_pix; ++pix) {
            if (!scene.valid[pix]) continue;
            try {
                const Eigen::VectorXd z =
                    compute_optical_depth(scene.pixel_radiance(pix), irradiance, scene.solar_zenith_deg[pix])
                        .values;
                const Eigen::VectorXd zt =
                    lib.detrend.enabled ? detrend(z, lib.detrend.window, lib.detrend.order).detrended : z;
                const double norm = zt.norm();
                if (norm > best_norm) {
                    best_norm = norm;
                    best_pix = pix;
                }
            } catch (const std::exception&) {
                continue;  // pixel will fail identically in the main pass
            }
        }
        if (best_pix < n_pix) {
            const detail::PixelOutcome probe =
                detail::retrieve_pixel(scene.pixel_radiance(best_pix), irradiance,
                                       scene.solar_zenith_deg[best_pix], lib, cfg, std::nullopt);
            fixed_q = std::isnan(probe.q) ? cfg.slim.q : probe.q;
        } else {
            fixed_q = cfg.slim.q;  // no usable pixel; value is moot
        }
        report.global_q = *fixed_q;
    } else {
        report.global_q = std::numeric_limits<double>::quiet_NaN();
    }

    parallel_for(n_pix, cfg.workers, [&](std::size_t pix) {
        if (!scene.valid[pix]) return;
        const detail::PixelOutcome outcome =
            detail::retrieve_pixel(scene.pixel_radiance(pix), irradiance, scene.solar_zenith_deg[pix], lib,
                                   cfg, fixed_q);
        for (std::size_t j = 0; j < n_end; ++j)
            report.abundances[pix * n_end + j] = outcome.alpha(static_cast<Eigen::Index>(j));
        report.status[pix] = outcome.status;
        report.iterations[pix] = static_cast<std::uint16_t>(std::min(outcome.iterations, 65535));
        report.q_used[pix] = outcome.q;
        if (!outcome.error.empty()) report.errors[pix] = outcome.error;
    });

    report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();

    auto& meta = report.metadata;
    meta["solver"]["q_mode"] = !cfg.use_bic ? "fixed" : (cfg.per_pixel_q ? "per-pixel-bic" : "global-bic");
    if (!cfg.per_pixel_q) meta["solver"]["q"] = report.global_q;
    meta["solver"]["q_grid"] = cfg.slim.q_grid;
    meta["solver"]["delta"] = cfg.slim.delta;
    meta["solver"]["max_iter"] = cfg.slim.max_iter;
    meta["solver"]["support_epsilon"] = cfg.slim.support_epsilon;
    meta["solver"]["bic"] = "2*||y - V a||^2 + h*ln(L)";
    meta["solver"]["column_scaling"] = "unit-norm-whitened-columns";
    meta["detrend"] = detail::detrend_to_json(lib.detrend);
    meta["noise"] = cfg.noise_variance
                        ? nlohmann::json{{"model", "scaled-identity"}, {"source", "configured"},
                                         {"variance", *cfg.noise_variance}}
                        : nlohmann::json{{"model", "scaled-identity"},
                                         {"source", "median-squared-residual-pilot-ols"}};
    meta["library_hash"] = lib.source_hash;
    meta["band_nm"] = {lib.grid.values.front(), lib.grid.values.back()};
    meta["conventions"]["optical_depth"] = "-ln(pi*radiance/(cos(sza)*irradiance))";
    meta["conventions"]["units"] = "molecules_per_cm2";
    meta["column_output"] = "solver direct output (no air-mass-factor conversion)";
    return report;
}

/// Per-species column map: abundances of all endmembers whose label matches
/// the species are summed, so temperature variants of one gas add up to the
/// total column.
inline ConcentrationMap species_totals(const RetrievalReport& report, const std::string& species) {
    const auto n_end = report.labels.size();
    bool known = false;
    for (const auto& l : report.labels)
        if (l.species == species) known = true;
    if (!known) throw std::invalid_argument(msg("unknown species '", species, "' (not in library labels)"));

    ConcentrationMap map;
    map.rows = report.rows;
    map.cols = report.cols;
    map.species = species;
    map.values.assign(report.pixel_count(), 0.0);
    map.valid.assign(report.valid.begin(), report.valid.end());
    map.metadata = report.metadata;
    map.metadata["species"] = species;
    for (std::size_t pix = 0; pix < report.pixel_count(); ++pix) {
        if (!report.valid[pix]) continue;
        double total = 0.0;
        for (std::size_t j = 0; j < n_end; ++j)
            if (report.labels[j].species == species) total += report.abundances[pix * n_end + j];
        map.values[pix] = total;
    }
    return map;
}

inline std::vector<std::string> species_in(const RetrievalReport& report) {
    std::vector<std::string> names;
    for (const auto& l : report.labels)
        if (std::find(names.begin(), names.end(), l.species) == names.end()) names.push_back(l.species);
    return names;
}

struct MapComparison {
    double rmse_molec = 0.0;
    double rmse_du = 0.0;
    double bias_molec = 0.0;
    double bias_du = 0.0;
    std::size_t valid_pixels = 0;
};

inline MapComparison compare_maps(const ConcentrationMap& candidate, const ConcentrationMap& reference) {
    const MaskedDiff diff = masked_diff(candidate, reference);
    MapComparison cmp;
    cmp.rmse_molec = diff.rmse_molec;
    cmp.rmse_du = diff.rmse_molec / kMoleculesPerDobsonUnit;
    cmp.bias_molec = diff.bias_molec;
    cmp.bias_du = diff.bias_molec / kMoleculesPerDobsonUnit;
    cmp.valid_pixels = diff.valid_pixels;
    return cmp;
}

}  // namespace slimux
