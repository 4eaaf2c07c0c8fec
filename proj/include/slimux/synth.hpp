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

#include "slimux/simkit.hpp"

namespace slimux {

// ---------------------------------------------------------------------------
// Deterministic synthetic stand-ins for measured inputs: a 29-endmember UV
// cross-section atlas, the 10-band single-pixel benchmark configuration, and
// a gridded scene with a planted gas plume. Real archive granules are not
// redistributable with the repo, so simulations and tests run on these.
// ---------------------------------------------------------------------------

struct SynthAtlasOptions {
    double wl_start_nm = 258.0;
    double wl_stop_nm = 342.0;
    double wl_step_nm = 0.05;
    double scale = 1e-19;  ///< cm^2/molecule magnitude of the generated cross sections
    std::uint64_t seed = 20210222;
};

namespace detail {

struct AtlasEntry {
    const char* species;
    double temperature_k;
    int variant;  ///< 0 = source "a", 1 = source "b"
};

/// Species/temperature roster of the synthetic atlas (29 endmembers).
inline const std::vector<AtlasEntry>& atlas_entries() {
    static const std::vector<AtlasEntry> entries = {
        {"H2O2", 298.0, 0},
        {"H2S", 294.8, 0},  {"H2S", 423.2, 0},  {"H2S", 573.2, 0},
        {"N2O", 294.0, 0},  {"N2O", 298.0, 0},  {"N2O", 1428.0, 0},
        {"NO2", 220.0, 0},  {"NO2", 223.0, 0},  {"NO2", 233.0, 0},  {"NO2", 265.0, 0},
        {"NO2", 293.0, 0},  {"NO2", 298.0, 0},  {"NO2", 300.0, 0},
        {"O2", 203.0, 0},   {"O2", 243.0, 0},   {"O2", 293.0, 0},
        {"O3", 228.0, 0},   {"O3", 243.0, 0},   {"O3", 273.0, 0},   {"O3", 293.0, 0},
        {"O3", 298.0, 0},   {"O3", 300.0, 0},   {"O3", 720.0, 0},
        {"SO2", 203.0, 0},  {"SO2", 293.0, 0},  {"SO2", 296.0, 0},  {"SO2", 298.0, 0},
        {"SO2", 298.0, 1},
    };
    return entries;
}

inline double uniform_in(GaussianSampler& rng, double lo, double hi) {
    return lo + (hi - lo) * rng.uniform();
}

}  // namespace detail

namespace detail {
/// Stable species index within the atlas roster (combs must differ per gas).
inline int species_rank(const std::string& species) {
    static const char* names[] = {"H2O2", "H2S", "N2O", "NO2", "O2", "O3", "SO2"};
    for (int i = 0; i < 7; ++i)
        if (species == names[i]) return i;
    return 7 + static_cast<int>(fnv1a64(species.data(), species.size()) % 13);
}
}  // namespace detail

/// One synthetic cross section: a broad positive envelope plus a
/// quasi-periodic progression of narrow lines. Each species has its own comb
/// spacing and phase (the synthetic analogue of distinct vibrational band
/// systems), so different gases stay spectrally separable in any sub-band;
/// temperature rescales, shifts, and broadens the lines of one species, and
/// every record adds its own small jitter.
inline CrossSectionRecord synthetic_cross_section(const std::string& species, double temperature_k,
                                                  int variant, const SynthAtlasOptions& opt = {}) {
    const std::uint64_t species_hash = fnv1a64(species.data(), species.size());
    GaussianSampler species_rng(derive_seed(opt.seed, species_hash));
    GaussianSampler record_rng(derive_seed(opt.seed ^ species_hash,
                                           static_cast<std::uint64_t>(temperature_k * 10.0) +
                                               1000003ull * static_cast<std::uint64_t>(variant)));

    const int rank = detail::species_rank(species);
    const double comb_spacing = 3.1 + 0.47 * rank + 0.15 * species_rng.uniform();
    const double comb_phase = opt.wl_start_nm + comb_spacing * species_rng.uniform();
    const double species_strength = species == "O3" ? 1.8 : 1.0;  // O3 dominates this UV band

    struct Line {
        double center, width, amplitude, temp_amp, temp_shift;
    };
    std::vector<Line> lines;
    for (double c = comb_phase; c <= opt.wl_stop_nm; c += comb_spacing) {
        Line ln;
        ln.center = c;
        ln.width = detail::uniform_in(species_rng, 0.85, 1.35);
        ln.amplitude = species_strength * detail::uniform_in(species_rng, 0.3, 1.0);
        ln.temp_amp = 2.0 * species_rng.uniform() - 1.0;
        ln.temp_shift = 2.0 * species_rng.uniform() - 1.0;
        lines.push_back(ln);
    }
    const double env_center = detail::uniform_in(species_rng, 270.0, 330.0);
    const double env_width = detail::uniform_in(species_rng, 28.0, 60.0);
    const double env_floor = detail::uniform_in(species_rng, 0.1, 0.3);
    const double env_amp = detail::uniform_in(species_rng, 0.5, 1.5);

    const double tau = std::clamp(std::log(temperature_k / 294.0) / std::log(3.0), -1.0, 1.0);
    const double env_factor = 1.0 + 0.1 * tau + 0.03 * (2.0 * record_rng.uniform() - 1.0);

    struct Mod {
        double amp, shift, width;
    };
    std::vector<Mod> mods(lines.size());
    for (std::size_t k = 0; k < lines.size(); ++k) {
        const Line& ln = lines[k];
        Mod& m = mods[k];
        m.amp = (1.0 + 0.3 * tau * ln.temp_amp) * (1.0 + 0.1 * (2.0 * record_rng.uniform() - 1.0));
        m.shift = 0.35 * tau * ln.temp_shift + 0.1 * (2.0 * record_rng.uniform() - 1.0);
        m.width = 1.0 + 0.15 * tau + 0.06 * (2.0 * record_rng.uniform() - 1.0);
        m.amp = std::max(0.05, m.amp);
        m.width = std::max(0.5, m.width);
    }

    CrossSectionRecord rec;
    rec.species = species;
    rec.temperature_k = temperature_k;
    rec.source_id = msg("synthetic-atlas-", variant == 0 ? "a" : "b");
    for (double w = opt.wl_start_nm; w <= opt.wl_stop_nm + 1e-9; w += opt.wl_step_nm) {
        double v = env_floor + env_amp * std::exp(-std::pow((w - env_center) / env_width, 2));
        v *= env_factor;
        for (std::size_t k = 0; k < lines.size(); ++k) {
            const Line& ln = lines[k];
            const Mod& m = mods[k];
            const double d = (w - ln.center - m.shift) / (ln.width * m.width);
            v += ln.amplitude * m.amp * std::exp(-0.5 * d * d);
        }
        rec.native_wavelengths.push_back(w);
        rec.values.push_back(opt.scale * v);
    }
    return rec;
}

/// The full 29-record synthetic atlas.
inline std::vector<CrossSectionRecord> synthetic_atlas(const SynthAtlasOptions& opt = {}) {
    std::vector<CrossSectionRecord> records;
    records.reserve(detail::atlas_entries().size());
    for (const auto& e : detail::atlas_entries())
        records.push_back(synthetic_cross_section(e.species, e.temperature_k, e.variant, opt));
    return records;
}

/// Writes the atlas as two-column text files plus a library manifest under
/// `dir` (which must exist). Returns the manifest path.
inline std::string write_atlas_with_manifest(const std::vector<CrossSectionRecord>& records,
                                             const std::string& dir, const WavelengthGrid& grid,
                                             const DetrendConfig& detrend_cfg) {
    LibraryManifest manifest;
    manifest.grid = grid;
    manifest.detrend = detrend_cfg;
    for (std::size_t i = 0; i < records.size(); ++i) {
        const auto& rec = records[i];
        const std::string name = msg("xs_", rec.species, "_", format_double(rec.temperature_k), "K_", i, ".txt");
        write_cross_section(rec, join_path(dir, name));
        manifest.entries.push_back({rec.species, rec.temperature_k, name, rec.source_id});
    }
    const std::string manifest_path = join_path(dir, "library_manifest.json");
    write_library_manifest(manifest, manifest_path);
    return manifest_path;
}

/// Truth vector aligned with a library, from (species, temperature, value)
/// components; everything else is zero.
inline SyntheticTruth make_truth(const LibraryMatrix& lib,
                                 const std::vector<std::tuple<std::string, double, double>>& components,
                                 std::uint64_t seed) {
    SyntheticTruth truth;
    truth.alpha_true = Eigen::VectorXd::Zero(lib.endmember_count());
    truth.labels = lib.labels;
    truth.seed = seed;
    for (const auto& [species, temp, value] : components)
        truth.alpha_true(lib.find_column(species, temp)) = value;
    truth.validate();
    return truth;
}

// ---------------------------------------------------------------------------
// Single-pixel benchmark configuration: 10 bands in 270-315 nm, 29 detrended
// unit-norm endmembers, truth 0.25 / 0.35 / 0.15 on H2S @ 294.8 K,
// O2 @ 293 K, SO2 @ 293 K. Abundances are dimensionless fractions here;
// physical units only apply in the scene pipeline.
//
// The simulated observable is already the detrended model, so the benchmark
// library is assembled with filtering disabled and the columns stay
// non-negative, the regime where non-negative sparse recovery is
// identifiable. Each endmember gets a distinct pair of strong "home" bands
// (two records never share more than one), the synthetic analogue of gases
// with distinct band systems; random line placement instead would make
// several of the 29 columns near-collinear in 10 bands and per-endmember
// recovery impossible at any SNR.
// ---------------------------------------------------------------------------

struct BenchmarkSetup {
    LibraryMatrix library;  ///< 10 x 29, unit-norm columns
    SyntheticTruth truth;
};

inline WavelengthGrid benchmark_bands() {
    std::vector<double> bands(10);
    for (int i = 0; i < 10; ++i) bands[static_cast<std::size_t>(i)] = 272.0 + i * (313.0 - 272.0) / 9.0;
    return WavelengthGrid::from_values(std::move(bands));
}

/// Benchmark atlas: 29 smooth records over the native UV range. Record k
/// carries strong absorption lines on the k-th pair of band positions plus a
/// weak floor on every band and a small smooth envelope.
inline std::vector<CrossSectionRecord> benchmark_atlas(std::uint64_t seed = 20210222u) {
    const WavelengthGrid bands = benchmark_bands();
    const int n_bands = static_cast<int>(bands.count());

    std::vector<std::pair<int, int>> home_pairs;
    for (int i = 0; i < n_bands && home_pairs.size() < detail::atlas_entries().size(); ++i)
        for (int j = i + 1; j < n_bands && home_pairs.size() < detail::atlas_entries().size(); ++j)
            home_pairs.emplace_back(i, j);

    const auto& entries = detail::atlas_entries();
    std::vector<CrossSectionRecord> records;
    records.reserve(entries.size());
    for (std::size_t idx = 0; idx < entries.size(); ++idx) {
        const auto& e = entries[idx];
        const auto [home_a, home_b] = home_pairs[idx];

        const std::uint64_t species_hash = fnv1a64(e.species, std::strlen(e.species));
        GaussianSampler rng(derive_seed(seed ^ species_hash,
                                        static_cast<std::uint64_t>(e.temperature_k * 10.0) +
                                            1000003ull * static_cast<std::uint64_t>(e.variant)));
        Eigen::VectorXd amps(n_bands);
        for (int b = 0; b < n_bands; ++b) amps(b) = detail::uniform_in(rng, 0.02, 0.10);
        amps(home_a) = detail::uniform_in(rng, 0.85, 1.15);
        amps(home_b) = detail::uniform_in(rng, 0.85, 1.15);
        const double line_width = detail::uniform_in(rng, 1.0, 1.3);

        CrossSectionRecord rec;
        rec.species = e.species;
        rec.temperature_k = e.temperature_k;
        rec.source_id = msg("synthetic-benchmark-", e.variant == 0 ? "a" : "b");
        for (double w = 258.0; w <= 342.0 + 1e-9; w += 0.05) {
            const double x = (w - 292.5) / 50.0;
            double v = 0.06 + 0.02 * x + 0.03 * x * x;
            for (int b = 0; b < n_bands; ++b) {
                const double d = (w - bands.values[static_cast<std::size_t>(b)]) / line_width;
                v += amps(b) * std::exp(-0.5 * d * d);
            }
            rec.native_wavelengths.push_back(w);
            rec.values.push_back(v);
        }
        records.push_back(std::move(rec));
    }
    return records;
}

inline BenchmarkSetup make_benchmark_setup(std::uint64_t seed = 1u) {
    BenchmarkSetup setup;
    setup.library =
        assemble_library(benchmark_atlas(), benchmark_bands(), DetrendConfig{false, 0, 0}).normalized();
    setup.truth = make_truth(setup.library,
                             {{"H2S", 294.8, 0.25}, {"O2", 293.0, 0.35}, {"SO2", 293.0, 0.15}}, seed);
    return setup;
}

// ---------------------------------------------------------------------------
// Plume scene: forward model through the optical-depth relation
//   radiance = cos(sza)/pi * irradiance * exp(-(S_full alpha + P)),
// with a smooth per-pixel background polynomial P, an optional uniform ozone
// column, a localized plume of the target species with an eastward tail, and
// Gaussian radiance noise at the requested SNR.
// ---------------------------------------------------------------------------

struct PlumeSceneOptions {
    int rows = 47;  ///< scanlines
    int cols = 41;  ///< ground pixels
    int bands = 497;
    double wl_start_nm = 267.0;
    double wl_stop_nm = 332.0;
    std::string plume_species = "SO2";
    double plume_temperature_k = 293.0;
    double plume_peak_molec_cm2 = 8.0e17;     ///< ~30 DU at the plume core
    double plume_sigma_row = 1.8;             ///< core sharpness, pixels
    double plume_sigma_col_west = 1.8;
    double plume_sigma_col_east = 8.0;        ///< long tail toward increasing longitude
    double o3_background_molec_cm2 = 8.0e18;  ///< uniform interferer; 0 disables
    double snr_db = 60.0;
    SnrConvention snr_convention = SnrConvention::EnergyPerSample;
    std::uint64_t seed = 7041963;
    SynthAtlasOptions atlas;  ///< physical-scale cross sections
};

struct PlumeScene {
    SceneCube scene;
    ConcentrationMap truth_map;                ///< planted plume-species column
    std::vector<CrossSectionRecord> records;   ///< atlas the scene was generated from
    std::size_t peak_pixel = 0;                ///< index of the planted maximum
};

inline PlumeScene make_plume_scene(const PlumeSceneOptions& opt = {}) {
    if (opt.rows < 2 || opt.cols < 2 || opt.bands < 4) throw std::invalid_argument("scene too small");
    PlumeScene out;
    out.records = synthetic_atlas(opt.atlas);

    std::vector<double> grid_values(static_cast<std::size_t>(opt.bands));
    for (int i = 0; i < opt.bands; ++i)
        grid_values[static_cast<std::size_t>(i)] =
            opt.wl_start_nm + i * (opt.wl_stop_nm - opt.wl_start_nm) / (opt.bands - 1);
    const WavelengthGrid grid = WavelengthGrid::from_values(std::move(grid_values));

    const LibraryMatrix raw = assemble_library(out.records, grid, DetrendConfig{false, 0, 0});
    const Eigen::Index plume_col = raw.find_column(opt.plume_species, opt.plume_temperature_k);
    const Eigen::Index o3_col = opt.o3_background_molec_cm2 > 0.0 ? raw.find_column("O3", 273.0) : -1;

    SceneCube& scene = out.scene;
    scene.rows = opt.rows;
    scene.cols = opt.cols;
    scene.grid = grid;
    const std::size_t n_pix = scene.pixel_count();
    const auto bands = static_cast<std::size_t>(opt.bands);
    scene.radiance.assign(n_pix * bands, 0.0);
    scene.irradiance.resize(bands);
    scene.solar_zenith_deg.resize(n_pix);
    scene.latitude.resize(n_pix);
    scene.longitude.resize(n_pix);
    scene.valid.assign(n_pix, 1);

    Eigen::VectorXd irradiance(opt.bands);
    for (int b = 0; b < opt.bands; ++b) {
        const double w = grid.values[static_cast<std::size_t>(b)];
        irradiance(b) = 1.1 + 0.15 * std::sin(2.0 * 3.14159265358979323846 * (w - 267.0) / 30.0) +
                        0.001 * (w - 300.0);
        scene.irradiance[static_cast<std::size_t>(b)] = irradiance(b);
    }

    // plume shape: sharp core, long tail toward increasing longitude (east)
    const int r0 = opt.rows / 2;
    const int c0 = opt.cols / 3;
    out.truth_map.rows = opt.rows;
    out.truth_map.cols = opt.cols;
    out.truth_map.species = opt.plume_species;
    out.truth_map.values.assign(n_pix, 0.0);
    out.truth_map.valid.assign(n_pix, 1);
    out.truth_map.metadata["planted"] = true;
    out.truth_map.metadata["peak_molec_cm2"] = opt.plume_peak_molec_cm2;
    out.peak_pixel = scene.pixel_index(r0, c0);

    Eigen::VectorXd depth(opt.bands);
    for (int r = 0; r < opt.rows; ++r) {
        for (int c = 0; c < opt.cols; ++c) {
            const std::size_t pix = scene.pixel_index(r, c);
            const double fr = static_cast<double>(r) / (opt.rows - 1);
            const double fc = static_cast<double>(c) / (opt.cols - 1);
            scene.solar_zenith_deg[pix] = 32.0 + 8.0 * fr + 3.0 * fc;
            scene.latitude[pix] = 36.5 + 0.05 * (opt.rows - 1 - r);
            scene.longitude[pix] = 14.0 + 0.05 * c;

            const double dr = static_cast<double>(r - r0);
            const double dc = static_cast<double>(c - c0);
            const double sigma_c = dc >= 0.0 ? opt.plume_sigma_col_east : opt.plume_sigma_col_west;
            const double sigma_r = opt.plume_sigma_row;
            const double plume = opt.plume_peak_molec_cm2 *
                                 std::exp(-0.5 * (dr * dr / (sigma_r * sigma_r) + dc * dc / (sigma_c * sigma_c)));
            out.truth_map.values[pix] = plume;

            depth = raw.columns.col(plume_col) * plume;
            if (o3_col >= 0) depth += raw.columns.col(o3_col) * opt.o3_background_molec_cm2;
            for (int b = 0; b < opt.bands; ++b) {
                const double x = (grid.values[static_cast<std::size_t>(b)] - 300.0) / 35.0;
                depth(b) += (2.0 + 0.4 * fr + 0.3 * fc) + (-0.3 + 0.2 * fc) * x + 0.15 * x * x;
            }

            const double mu = std::cos(scene.solar_zenith_deg[pix] * 3.14159265358979323846 / 180.0);
            const Eigen::VectorXd clean = (mu / 3.14159265358979323846) *
                                          irradiance.cwiseProduct((-depth).array().exp().matrix());
            const NoisyObservation obs =
                add_noise(clean, opt.snr_db, derive_seed(opt.seed, pix), opt.snr_convention);
            std::copy(obs.noisy.data(), obs.noisy.data() + opt.bands, scene.radiance.begin() + pix * bands);
        }
    }
    return out;
}

}  // namespace slimux
