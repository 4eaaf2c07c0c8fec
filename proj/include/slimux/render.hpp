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

#include "slimux/scene.hpp"

namespace slimux {

/// Renders a concentration map as a binary PGM (P5) image. Gray value 0 is
/// reserved for no-data pixels; valid pixels map linearly onto 1..255 over
/// the color scale. A sidecar text file records the scale bounds.
inline void render_heatmap(const ConcentrationMap& map, const std::string& path,
                           std::optional<std::pair<double, double>> color_scale = std::nullopt) {
    map.validate_shapes();

    double lo = 0.0, hi = 0.0;
    if (color_scale) {
        lo = color_scale->first;
        hi = color_scale->second;
        if (!(lo <= hi)) throw std::invalid_argument("color scale needs min <= max");
    } else {
        bool any = false;
        for (std::size_t i = 0; i < map.values.size(); ++i) {
            if (!map.valid[i]) continue;
            if (!any) {
                lo = hi = map.values[i];
                any = true;
            } else {
                lo = std::min(lo, map.values[i]);
                hi = std::max(hi, map.values[i]);
            }
        }
        if (!any) lo = hi = 0.0;
    }

    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error(msg("cannot open '", path, "' for writing"));
    out << "P5\n" << map.cols << " " << map.rows << "\n255\n";
    const double span = hi - lo;
    for (std::size_t i = 0; i < map.values.size(); ++i) {
        unsigned char gray = 0;
        if (map.valid[i]) {
            double t = span > 0.0 ? (map.values[i] - lo) / span : 0.5;
            t = std::clamp(t, 0.0, 1.0);
            gray = static_cast<unsigned char>(1 + std::lround(t * 254.0));
        }
        out.write(reinterpret_cast<const char*>(&gray), 1);
    }
    if (!out) throw std::runtime_error(msg("write failed for '", path, "'"));

    const std::string sidecar = path + ".scale.txt";
    std::ofstream sc(sidecar);
    if (!sc) throw std::runtime_error(msg("cannot open '", sidecar, "' for writing"));
    sc << "species = " << map.species << "\n";
    sc << "scale_min = " << format_double(lo) << "\n";
    sc << "scale_max = " << format_double(hi) << "\n";
    sc << "units = molecules_per_cm2\n";
    sc << "note = gray 0 is no-data; valid pixels map linearly onto 1..255\n";
    if (span <= 0.0) sc << "degenerate = true\n";
}

}  // namespace slimux
