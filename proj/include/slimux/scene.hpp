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

#include <nlohmann/json.hpp>

#include "slimux/common.hpp"
#include "slimux/speclib.hpp"

namespace slimux {

// ---------------------------------------------------------------------------
// Scene cube: gridded radiance plus per-scene irradiance and per-pixel
// geometry. Stored on disk as a JSON manifest next to flat little-endian
// float64 arrays (radiance is row-major rows x cols x bands, band fastest).
// ---------------------------------------------------------------------------

struct SceneCube {
    int rows = 0;
    int cols = 0;
    WavelengthGrid grid;
    std::vector<double> radiance;          ///< rows*cols*L, band fastest
    std::vector<double> irradiance;        ///< L
    std::vector<double> solar_zenith_deg;  ///< rows*cols
    std::vector<double> latitude;          ///< rows*cols
    std::vector<double> longitude;         ///< rows*cols
    std::vector<std::uint8_t> valid;       ///< rows*cols, 1 = usable pixel

    Eigen::Index band_count() const { return grid.count(); }
    std::size_t pixel_count() const { return static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols); }
    std::size_t pixel_index(int r, int c) const {
        return static_cast<std::size_t>(r) * static_cast<std::size_t>(cols) + static_cast<std::size_t>(c);
    }

    Eigen::Map<const Eigen::VectorXd> pixel_radiance(std::size_t pix) const {
        return Eigen::Map<const Eigen::VectorXd>(radiance.data() + pix * static_cast<std::size_t>(band_count()),
                                                 band_count());
    }

    void validate_shapes() const {
        grid.validate();
        const std::size_t n = pixel_count();
        const auto bands = static_cast<std::size_t>(band_count());
        if (rows <= 0 || cols <= 0) throw std::runtime_error("scene dimensions must be positive");
        if (radiance.size() != n * bands) throw std::runtime_error("radiance array shape mismatch");
        if (irradiance.size() != bands) throw std::runtime_error("irradiance array shape mismatch");
        if (solar_zenith_deg.size() != n) throw std::runtime_error("solar_zenith array shape mismatch");
        if (latitude.size() != n || longitude.size() != n)
            throw std::runtime_error("latitude/longitude array shape mismatch");
        if (valid.size() != n) throw std::runtime_error("mask array shape mismatch");
    }
};

namespace detail {
inline std::string array_path(const nlohmann::json& arrays, const char* field, const std::string& base) {
    if (!arrays.contains(field))
        throw std::runtime_error(msg("scene manifest: missing array entry '", field, "'"));
    return join_path(base, arrays.at(field).get<std::string>());
}
}  // namespace detail

/// Loads a scene and applies the load-time quality mask: pixels with any
/// non-positive radiance sample or a solar zenith outside [0, 90) are marked
/// invalid rather than rejected. Non-positive irradiance is a hard error.
inline SceneCube load_scene(const std::string& manifest_path) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(read_text_file(manifest_path));
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error(msg("scene manifest '", manifest_path, "': ", e.what()));
    }

    SceneCube scene;
    try {
        if (j.at("format").get<std::string>() != "slimux-scene-v1")
            throw std::runtime_error("unrecognized scene manifest format");
        scene.rows = j.at("rows").get<int>();
        scene.cols = j.at("cols").get<int>();
        scene.grid = detail::grid_from_json(j.at("grid"));
        if (j.contains("bands") && j.at("bands").get<Eigen::Index>() != scene.grid.count())
            throw std::runtime_error(msg("field 'bands' (", j.at("bands").get<int>(),
                                         ") does not match grid length (", scene.grid.count(), ")"));
        if (scene.rows <= 0 || scene.cols <= 0)
            throw std::runtime_error("fields 'rows'/'cols' must be positive");

        const std::string base = dir_of(manifest_path);
        const auto& arrays = j.at("arrays");
        const std::size_t n = scene.pixel_count();
        const auto bands = static_cast<std::size_t>(scene.band_count());
        scene.radiance = read_f64(detail::array_path(arrays, "radiance", base), n * bands, "radiance");
        scene.irradiance = read_f64(detail::array_path(arrays, "irradiance", base), bands, "irradiance");
        scene.solar_zenith_deg =
            read_f64(detail::array_path(arrays, "solar_zenith", base), n, "solar_zenith");
        scene.latitude = read_f64(detail::array_path(arrays, "latitude", base), n, "latitude");
        scene.longitude = read_f64(detail::array_path(arrays, "longitude", base), n, "longitude");
        const std::vector<double> mask = read_f64(detail::array_path(arrays, "mask", base), n, "mask");
        scene.valid.resize(n);
        for (std::size_t i = 0; i < n; ++i) scene.valid[i] = mask[i] > 0.5 ? 1 : 0;
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error(msg("scene manifest '", manifest_path, "': ", e.what()));
    }

    for (std::size_t b = 0; b < scene.irradiance.size(); ++b)
        if (!(scene.irradiance[b] > 0.0))
            throw std::runtime_error(msg("irradiance must be positive (band ", b, ")"));

    const auto bands = static_cast<std::size_t>(scene.band_count());
    for (std::size_t pix = 0; pix < scene.pixel_count(); ++pix) {
        if (!scene.valid[pix]) continue;
        const double sza = scene.solar_zenith_deg[pix];
        if (!(sza >= 0.0 && sza < 90.0)) {
            scene.valid[pix] = 0;
            continue;
        }
        const double* rad = scene.radiance.data() + pix * bands;
        for (std::size_t b = 0; b < bands; ++b) {
            if (!(rad[b] > 0.0)) {
                scene.valid[pix] = 0;
                break;
            }
        }
    }
    return scene;
}

/// Writes the manifest plus the six raw arrays next to it.
inline void write_scene(const SceneCube& scene, const std::string& manifest_path,
                        const std::string& stem = "scene") {
    scene.validate_shapes();
    const std::string base = dir_of(manifest_path);

    nlohmann::json j;
    j["format"] = "slimux-scene-v1";
    j["rows"] = scene.rows;
    j["cols"] = scene.cols;
    j["bands"] = scene.grid.count();
    j["grid"]["values"] = scene.grid.values;
    j["band_range_nm"] = {scene.grid.values.front(), scene.grid.values.back()};
    auto& arrays = j["arrays"];
    arrays["radiance"] = stem + "_radiance.f64";
    arrays["irradiance"] = stem + "_irradiance.f64";
    arrays["solar_zenith"] = stem + "_solar_zenith.f64";
    arrays["latitude"] = stem + "_latitude.f64";
    arrays["longitude"] = stem + "_longitude.f64";
    arrays["mask"] = stem + "_mask.f64";

    write_f64(join_path(base, arrays["radiance"].get<std::string>()), scene.radiance);
    write_f64(join_path(base, arrays["irradiance"].get<std::string>()), scene.irradiance);
    write_f64(join_path(base, arrays["solar_zenith"].get<std::string>()), scene.solar_zenith_deg);
    write_f64(join_path(base, arrays["latitude"].get<std::string>()), scene.latitude);
    write_f64(join_path(base, arrays["longitude"].get<std::string>()), scene.longitude);
    std::vector<double> mask(scene.valid.size());
    for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = scene.valid[i] ? 1.0 : 0.0;
    write_f64(join_path(base, arrays["mask"].get<std::string>()), mask);

    std::ofstream out(manifest_path);
    if (!out) throw std::runtime_error(msg("cannot open '", manifest_path, "' for writing"));
    out << j.dump(2) << "\n";
}

/// Restricts the spectral axis to [lo_nm, hi_nm]; all non-spectral fields are
/// carried over untouched.
inline SceneCube clip_band(const SceneCube& scene, double lo_nm, double hi_nm) {
    if (!(lo_nm < hi_nm)) throw std::invalid_argument("band clip needs lo < hi");
    scene.validate_shapes();

    std::vector<std::size_t> keep;
    for (std::size_t b = 0; b < scene.grid.values.size(); ++b)
        if (scene.grid.values[b] >= lo_nm && scene.grid.values[b] <= hi_nm) keep.push_back(b);
    if (keep.size() < 2)
        throw std::runtime_error(msg("empty band: clip [", lo_nm, ", ", hi_nm, "] nm keeps ", keep.size(),
                                     " of ", scene.grid.values.size(), " samples (need at least 2)"));
    if (keep.size() == scene.grid.values.size()) return scene;

    SceneCube out = scene;
    std::vector<double> grid_values(keep.size());
    out.irradiance.resize(keep.size());
    for (std::size_t i = 0; i < keep.size(); ++i) {
        grid_values[i] = scene.grid.values[keep[i]];
        out.irradiance[i] = scene.irradiance[keep[i]];
    }
    out.grid = WavelengthGrid::from_values(std::move(grid_values));

    const auto bands = static_cast<std::size_t>(scene.band_count());
    out.radiance.assign(scene.pixel_count() * keep.size(), 0.0);
    for (std::size_t pix = 0; pix < scene.pixel_count(); ++pix) {
        const double* src = scene.radiance.data() + pix * bands;
        double* dst = out.radiance.data() + pix * keep.size();
        for (std::size_t i = 0; i < keep.size(); ++i) dst[i] = src[keep[i]];
    }
    return out;
}

// ---------------------------------------------------------------------------
// Concentration map: per-pixel column density of one species.
// ---------------------------------------------------------------------------

struct ConcentrationMap {
    int rows = 0;
    int cols = 0;
    std::string species;
    std::vector<double> values;       ///< molecules/cm^2, rows*cols
    std::vector<std::uint8_t> valid;  ///< rows*cols
    nlohmann::json metadata;          ///< solver config, library hash, conventions, ...

    std::size_t pixel_count() const { return static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols); }

    void validate_shapes() const {
        if (rows <= 0 || cols <= 0) throw std::runtime_error("map dimensions must be positive");
        if (values.size() != pixel_count() || valid.size() != pixel_count())
            throw std::runtime_error("map array shape mismatch");
    }
};

/// Writes manifest + values/mask arrays; optionally a human-readable CSV
/// (one row per scanline, invalid pixels as nan).
inline void write_map(const ConcentrationMap& map, const std::string& manifest_path, bool also_csv = false) {
    map.validate_shapes();
    const std::string base = dir_of(manifest_path);
    std::string stem = manifest_path;
    const auto slash = stem.find_last_of("/\\");
    if (slash != std::string::npos) stem = stem.substr(slash + 1);
    const auto dot = stem.find_last_of('.');
    if (dot != std::string::npos) stem = stem.substr(0, dot);

    nlohmann::json j;
    j["format"] = "slimux-map-v1";
    j["rows"] = map.rows;
    j["cols"] = map.cols;
    j["species"] = map.species;
    j["values"] = stem + "_values.f64";
    j["mask"] = stem + "_mask.f64";
    j["units"] = "molecules_per_cm2";
    j["metadata"] = map.metadata;

    write_f64(join_path(base, j["values"].get<std::string>()), map.values);
    std::vector<double> mask(map.valid.size());
    for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = map.valid[i] ? 1.0 : 0.0;
    write_f64(join_path(base, j["mask"].get<std::string>()), mask);

    std::ofstream out(manifest_path);
    if (!out) throw std::runtime_error(msg("cannot open '", manifest_path, "' for writing"));
    out << j.dump(2) << "\n";

    if (also_csv) {
        const std::string csv_path = join_path(base, stem + ".csv");
        std::ofstream csv(csv_path);
        if (!csv) throw std::runtime_error(msg("cannot open '", csv_path, "' for writing"));
        for (int r = 0; r < map.rows; ++r) {
            for (int c = 0; c < map.cols; ++c) {
                const std::size_t i = static_cast<std::size_t>(r) * map.cols + c;
                if (c) csv << ",";
                csv << (map.valid[i] ? format_double(map.values[i]) : std::string("nan"));
            }
            csv << "\n";
        }
    }
}

inline ConcentrationMap load_map(const std::string& manifest_path) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(read_text_file(manifest_path));
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error(msg("map manifest '", manifest_path, "': ", e.what()));
    }
    try {
        if (j.at("format").get<std::string>() != "slimux-map-v1")
            throw std::runtime_error("unrecognized map manifest format");
        ConcentrationMap map;
        map.rows = j.at("rows").get<int>();
        map.cols = j.at("cols").get<int>();
        map.species = j.at("species").get<std::string>();
        map.metadata = j.value("metadata", nlohmann::json::object());
        const std::string base = dir_of(manifest_path);
        map.values = read_f64(join_path(base, j.at("values").get<std::string>()), map.pixel_count(), "values");
        const std::vector<double> mask =
            read_f64(join_path(base, j.at("mask").get<std::string>()), map.pixel_count(), "mask");
        map.valid.resize(mask.size());
        for (std::size_t i = 0; i < mask.size(); ++i) map.valid[i] = mask[i] > 0.5 ? 1 : 0;
        map.validate_shapes();
        return map;
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error(msg("map manifest '", manifest_path, "': ", e.what()));
    }
}

}  // namespace slimux
