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

#include <algorithm>
#include <set>
#include <tuple>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "slimux/common.hpp"
#include "slimux/savgol.hpp"

namespace slimux {

// ---------------------------------------------------------------------------
// Wavelength grid
// ---------------------------------------------------------------------------

struct WavelengthGrid {
    std::vector<double> values;  ///< nm, strictly increasing, positive

    Eigen::Index count() const { return static_cast<Eigen::Index>(values.size()); }

    void validate() const {
        if (values.size() < 2) throw std::invalid_argument("wavelength grid needs at least 2 samples");
        for (std::size_t i = 0; i < values.size(); ++i) {
            if (!std::isfinite(values[i]) || values[i] <= 0.0)
                throw std::invalid_argument(msg("wavelength grid value ", values[i], " at index ", i,
                                                " is not finite and positive"));
            if (i > 0 && values[i] <= values[i - 1])
                throw std::invalid_argument(msg("wavelength grid not strictly increasing at index ", i));
        }
    }

    static WavelengthGrid from_values(std::vector<double> v) {
        WavelengthGrid g{std::move(v)};
        g.validate();
        return g;
    }

    static WavelengthGrid from_range(double start, double stop, double step) {
        if (step <= 0.0) throw std::invalid_argument("grid step must be positive");
        std::vector<double> v;
        for (double w = start; w <= stop + 1e-9 * step; w += step) v.push_back(w);
        return from_values(std::move(v));
    }

    friend bool operator==(const WavelengthGrid& a, const WavelengthGrid& b) { return a.values == b.values; }
};

/// Grid equality up to floating-point noise (used when grids come from
/// different files rather than the same computation).
inline bool grids_match(const WavelengthGrid& a, const WavelengthGrid& b, double tol = 1e-9) {
    if (a.values.size() != b.values.size()) return false;
    for (std::size_t i = 0; i < a.values.size(); ++i)
        if (std::abs(a.values[i] - b.values[i]) > tol * std::max(1.0, std::abs(a.values[i]))) return false;
    return true;
}

// ---------------------------------------------------------------------------
// Cross-section records
// ---------------------------------------------------------------------------

struct CrossSectionRecord {
    std::string species;                      ///< e.g. "SO2"
    double temperature_k = 0.0;
    std::vector<double> native_wavelengths;   ///< nm, strictly increasing
    std::vector<double> values;               ///< cm^2/molecule, >= 0
    std::string source_id;
};

/// Parses a two-column text file ('#' comments, whitespace- or
/// comma-separated). Rows are sorted by wavelength if needed; values are kept
/// bit-exact as parsed.
inline CrossSectionRecord load_cross_section(const std::string& path, const std::string& species,
                                             double temperature_k, const std::string& source_id = "") {
    std::ifstream in(path);
    if (!in) throw std::runtime_error(msg("cannot open cross-section file '", path, "'"));

    std::vector<std::pair<double, double>> rows;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        std::size_t first = line.find_first_not_of(" \t");
        if (first == std::string::npos) continue;           // blank
        if (line[first] == '#') continue;                   // comment

        std::string cleaned = line;
        std::replace(cleaned.begin(), cleaned.end(), ',', ' ');
        std::istringstream ss(cleaned);
        std::string tok_w, tok_v, extra;
        ss >> tok_w >> tok_v;
        double w = 0.0, v = 0.0;
        const bool two_tokens = !tok_v.empty() && !(ss >> extra);
        if (!two_tokens || !parse_double(tok_w, w) || !parse_double(tok_v, v) || !std::isfinite(w) ||
            !std::isfinite(v)) {
            throw std::runtime_error(msg("malformed line ", lineno, " in '", path, "': \"", line, "\""));
        }
        if (v < 0.0)
            throw std::runtime_error(msg("negative cross-section value at line ", lineno, " in '", path, "'"));
        rows.emplace_back(w, v);
    }
    if (rows.empty()) throw std::runtime_error(msg("empty data in cross-section file '", path, "'"));

    std::stable_sort(rows.begin(), rows.end(),
                     [](const auto& a, const auto& b) { return a.first < b.first; });
    for (std::size_t i = 1; i < rows.size(); ++i) {
        if (rows[i].first == rows[i - 1].first)
            throw std::runtime_error(msg("duplicate wavelength ", format_double(rows[i].first), " nm in '",
                                         path, "'"));
    }

    CrossSectionRecord rec;
    rec.species = species;
    rec.temperature_k = temperature_k;
    rec.source_id = source_id.empty() ? path : source_id;
    rec.native_wavelengths.reserve(rows.size());
    rec.values.reserve(rows.size());
    for (const auto& [w, v] : rows) {
        rec.native_wavelengths.push_back(w);
        rec.values.push_back(v);
    }
    return rec;
}

/// Writes the two-column text format with shortest round-trip numbers, so
/// load_cross_section reproduces the record bit-exact.
inline void write_cross_section(const CrossSectionRecord& rec, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error(msg("cannot open '", path, "' for writing"));
    out << "# species = " << rec.species << "\n";
    out << "# temperature_k = " << format_double(rec.temperature_k) << "\n";
    out << "# source_id = " << rec.source_id << "\n";
    out << "# columns: wavelength_nm cross_section_cm2_per_molecule\n";
    for (std::size_t i = 0; i < rec.native_wavelengths.size(); ++i)
        out << format_double(rec.native_wavelengths[i]) << " " << format_double(rec.values[i]) << "\n";
    if (!out) throw std::runtime_error(msg("write failed for '", path, "'"));
}

/// Piecewise-linear resampling onto `grid`. No extrapolation: the grid must
/// lie inside the record's native coverage.
inline Eigen::VectorXd resample_to_grid(const CrossSectionRecord& rec, const WavelengthGrid& grid) {
    if (rec.native_wavelengths.size() != rec.values.size() || rec.native_wavelengths.empty())
        throw std::invalid_argument("cross-section record is empty or inconsistent");
    grid.validate();
    const auto& w = rec.native_wavelengths;
    Eigen::VectorXd out(grid.count());
    for (Eigen::Index i = 0; i < grid.count(); ++i) {
        const double lambda = grid.values[static_cast<std::size_t>(i)];
        if (lambda < w.front() || lambda > w.back()) {
            throw std::runtime_error(msg("grid wavelength ", format_double(lambda),
                                         " nm outside coverage [", format_double(w.front()), ", ",
                                         format_double(w.back()), "] nm of ", rec.species, " @ ",
                                         format_double(rec.temperature_k), " K"));
        }
        const auto it = std::lower_bound(w.begin(), w.end(), lambda);
        const auto k = static_cast<std::size_t>(it - w.begin());
        if (k < w.size() && w[k] == lambda) {
            out(i) = rec.values[k];  // exact grid hit stays bit-exact
        } else {
            const double t = (lambda - w[k - 1]) / (w[k] - w[k - 1]);
            out(i) = (1.0 - t) * rec.values[k - 1] + t * rec.values[k];
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Library matrix
// ---------------------------------------------------------------------------

struct ColumnLabel {
    std::string species;
    double temperature_k = 0.0;
    std::string source_id;

    friend bool operator==(const ColumnLabel& a, const ColumnLabel& b) {
        return a.species == b.species && a.temperature_k == b.temperature_k && a.source_id == b.source_id;
    }
};

struct LibraryMatrix {
    WavelengthGrid grid;
    Eigen::MatrixXd columns;          ///< L x N endmember matrix
    std::vector<ColumnLabel> labels;  ///< one per column
    DetrendConfig detrend;            ///< filter the columns were built with
    std::string source_hash;          ///< hash of the manifest this was built from, if any

    Eigen::Index band_count() const { return columns.rows(); }
    Eigen::Index endmember_count() const { return columns.cols(); }

    Eigen::VectorXd column_norms() const { return columns.colwise().norm(); }

    /// Copy with unit-l2-norm columns (dimensionless endmembers).
    LibraryMatrix normalized() const {
        LibraryMatrix out = *this;
        for (Eigen::Index j = 0; j < columns.cols(); ++j) {
            const double n = columns.col(j).norm();
            if (n <= 0.0)
                throw std::runtime_error(msg("cannot normalize zero-norm library column ", j));
            out.columns.col(j) /= n;
        }
        return out;
    }

    Eigen::Index find_column(const std::string& species, double temperature_k) const {
        for (std::size_t j = 0; j < labels.size(); ++j)
            if (labels[j].species == species && labels[j].temperature_k == temperature_k)
                return static_cast<Eigen::Index>(j);
        throw std::runtime_error(msg("no library column for ", species, " @ ", format_double(temperature_k), " K"));
    }
};

/// Resamples every record onto `grid` and applies the detrend filter, in
/// input order. The filter must match the one used on pixel spectra.
inline LibraryMatrix assemble_library(const std::vector<CrossSectionRecord>& records,
                                      const WavelengthGrid& grid, const DetrendConfig& cfg) {
    grid.validate();
    if (records.empty()) throw std::invalid_argument("library needs at least one record");
    if (cfg.enabled && cfg.window > grid.count())
        throw std::invalid_argument(msg("detrend window ", cfg.window, " exceeds grid length ", grid.count(),
                                        "; a window larger than the grid is only permitted with detrending disabled"));

    std::set<std::tuple<std::string, double, std::string>> seen;
    LibraryMatrix lib;
    lib.grid = grid;
    lib.detrend = cfg;
    lib.columns.resize(grid.count(), static_cast<Eigen::Index>(records.size()));
    lib.labels.reserve(records.size());

    for (std::size_t j = 0; j < records.size(); ++j) {
        const auto& rec = records[j];
        if (!seen.insert({rec.species, rec.temperature_k, rec.source_id}).second)
            throw std::runtime_error(msg("duplicate library entry ", rec.species, " @ ",
                                         format_double(rec.temperature_k), " K (source '", rec.source_id, "')"));
        const Eigen::VectorXd sampled = resample_to_grid(rec, grid);
        const Eigen::VectorXd column = cfg.enabled ? detrend(sampled, cfg.window, cfg.order).detrended : sampled;
        if ((column.array() == 0.0).all())
            throw std::runtime_error(msg("library column for ", rec.species, " @ ",
                                         format_double(rec.temperature_k), " K is identically zero"));
        lib.columns.col(static_cast<Eigen::Index>(j)) = column;
        lib.labels.push_back({rec.species, rec.temperature_k, rec.source_id});
    }
    return lib;
}

// ---------------------------------------------------------------------------
// Library manifest (build input) and archive (build output)
// ---------------------------------------------------------------------------

struct LibraryManifestEntry {
    std::string species;
    double temperature_k = 0.0;
    std::string path;       ///< cross-section file, relative to the manifest
    std::string source_id;  ///< defaults to the path when empty
};

struct LibraryManifest {
    WavelengthGrid grid;
    DetrendConfig detrend;
    std::vector<LibraryManifestEntry> entries;
};

namespace detail {
inline WavelengthGrid grid_from_json(const nlohmann::json& j) {
    if (j.contains("values")) return WavelengthGrid::from_values(j.at("values").get<std::vector<double>>());
    if (j.contains("start"))
        return WavelengthGrid::from_range(j.at("start").get<double>(), j.at("stop").get<double>(),
                                          j.at("step").get<double>());
    throw std::runtime_error("grid specification needs either 'values' or 'start'/'stop'/'step'");
}

inline DetrendConfig detrend_from_json(const nlohmann::json& j) {
    DetrendConfig cfg;
    cfg.enabled = j.at("enabled").get<bool>();
    if (cfg.enabled) {
        cfg.window = j.at("window").get<int>();
        cfg.order = j.at("order").get<int>();
    }
    return cfg;
}

inline nlohmann::json detrend_to_json(const DetrendConfig& cfg) {
    nlohmann::json j;
    j["enabled"] = cfg.enabled;
    j["window"] = cfg.window;
    j["order"] = cfg.order;
    return j;
}
}  // namespace detail

inline LibraryManifest load_library_manifest(const std::string& path) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(read_text_file(path));
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error(msg("library manifest '", path, "': ", e.what()));
    }
    try {
        LibraryManifest m;
        m.grid = detail::grid_from_json(j.at("grid"));
        m.detrend = detail::detrend_from_json(j.at("detrend"));
        for (const auto& r : j.at("records")) {
            LibraryManifestEntry e;
            e.species = r.at("species").get<std::string>();
            e.temperature_k = r.at("temperature_k").get<double>();
            e.path = r.at("path").get<std::string>();
            e.source_id = r.value("source_id", e.path);
            m.entries.push_back(std::move(e));
        }
        if (m.entries.empty()) throw std::runtime_error("manifest lists no records");
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error(msg("library manifest '", path, "': ", e.what()));
    }
}

inline void write_library_manifest(const LibraryManifest& m, const std::string& path) {
    nlohmann::json j;
    j["grid"]["values"] = m.grid.values;
    j["detrend"] = detail::detrend_to_json(m.detrend);
    auto& records = j["records"];
    records = nlohmann::json::array();
    for (const auto& e : m.entries) {
        nlohmann::json r;
        r["species"] = e.species;
        r["temperature_k"] = e.temperature_k;
        r["path"] = e.path;
        r["source_id"] = e.source_id;
        records.push_back(std::move(r));
    }
    std::ofstream out(path);
    if (!out) throw std::runtime_error(msg("cannot open '", path, "' for writing"));
    out << j.dump(2) << "\n";
}

/// Loads every record named by a manifest and assembles the library. Record
/// paths are resolved relative to the manifest location.
inline LibraryMatrix build_library(const std::string& manifest_path) {
    const LibraryManifest m = load_library_manifest(manifest_path);
    const std::string base = dir_of(manifest_path);
    std::vector<CrossSectionRecord> records;
    records.reserve(m.entries.size());
    for (const auto& e : m.entries)
        records.push_back(load_cross_section(join_path(base, e.path), e.species, e.temperature_k, e.source_id));
    LibraryMatrix lib = assemble_library(records, m.grid, m.detrend);
    lib.source_hash = hash_of_file(manifest_path);
    return lib;
}

inline void write_library_archive(const LibraryMatrix& lib, const std::string& path) {
    nlohmann::json j;
    j["format"] = "slimux-library-v1";
    j["grid"] = lib.grid.values;
    j["detrend"] = detail::detrend_to_json(lib.detrend);
    j["source_hash"] = lib.source_hash;
    auto& labels = j["labels"];
    labels = nlohmann::json::array();
    for (const auto& l : lib.labels)
        labels.push_back({{"species", l.species}, {"temperature_k", l.temperature_k}, {"source_id", l.source_id}});
    auto& cols = j["columns"];
    cols = nlohmann::json::array();
    for (Eigen::Index c = 0; c < lib.columns.cols(); ++c) {
        std::vector<double> column(static_cast<std::size_t>(lib.columns.rows()));
        Eigen::VectorXd::Map(column.data(), lib.columns.rows()) = lib.columns.col(c);
        cols.push_back(column);
    }
    std::ofstream out(path);
    if (!out) throw std::runtime_error(msg("cannot open '", path, "' for writing"));
    out << j.dump() << "\n";
}

inline LibraryMatrix load_library_archive(const std::string& path) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(read_text_file(path));
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error(msg("library archive '", path, "': ", e.what()));
    }
    try {
        if (j.at("format").get<std::string>() != "slimux-library-v1")
            throw std::runtime_error("unrecognized library archive format");
        LibraryMatrix lib;
        lib.grid = WavelengthGrid::from_values(j.at("grid").get<std::vector<double>>());
        lib.detrend = detail::detrend_from_json(j.at("detrend"));
        lib.source_hash = j.value("source_hash", std::string());
        for (const auto& l : j.at("labels"))
            lib.labels.push_back({l.at("species").get<std::string>(), l.at("temperature_k").get<double>(),
                                  l.at("source_id").get<std::string>()});
        const auto& cols = j.at("columns");
        if (cols.empty()) throw std::runtime_error("library archive has no columns");
        lib.columns.resize(lib.grid.count(), static_cast<Eigen::Index>(cols.size()));
        for (std::size_t c = 0; c < cols.size(); ++c) {
            const auto column = cols[c].get<std::vector<double>>();
            if (column.size() != static_cast<std::size_t>(lib.grid.count()))
                throw std::runtime_error(msg("column ", c, " length does not match grid"));
            lib.columns.col(static_cast<Eigen::Index>(c)) =
                Eigen::VectorXd::Map(column.data(), static_cast<Eigen::Index>(column.size()));
        }
        if (lib.labels.size() != static_cast<std::size_t>(lib.columns.cols()))
            throw std::runtime_error("label count does not match column count");
        return lib;
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error(msg("library archive '", path, "': ", e.what()));
    }
}

}  // namespace slimux
