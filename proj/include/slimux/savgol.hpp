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

#include <Eigen/Dense>

#include "slimux/common.hpp"

namespace slimux {

/// Savitzky-Golay detrending configuration. The same configuration must be
/// applied to library endmembers and to pixel spectra so both live in the
/// same filtered space.
struct DetrendConfig {
    bool enabled = true;
    int window = 35;
    int order = 3;

    friend bool operator==(const DetrendConfig& a, const DetrendConfig& b) {
        if (a.enabled != b.enabled) return false;
        if (!a.enabled) return true;  // window/order irrelevant when disabled
        return a.window == b.window && a.order == b.order;
    }
    friend bool operator!=(const DetrendConfig& a, const DetrendConfig& b) { return !(a == b); }
};

/// Default filter for a given band count: (35, 3) for full-resolution
/// spectra, (5, 2) for short band subsets.
inline DetrendConfig default_detrend_config(int band_count) {
    if (band_count >= 35) return DetrendConfig{true, 35, 3};
    if (band_count >= 5) return DetrendConfig{true, 5, 2};
    throw std::invalid_argument(msg("no default detrend configuration for ", band_count,
                                    " bands; configure the filter explicitly"));
}

struct DetrendResult {
    Eigen::VectorXd smooth;     ///< slowly varying component
    Eigen::VectorXd detrended;  ///< fast residual, smooth + detrended == input
};

namespace detail {
inline void validate_sg_params(int window, int order) {
    if (window < 3 || window % 2 == 0)
        throw std::invalid_argument(msg("Savitzky-Golay window must be an odd integer >= 3, got ", window));
    if (order < 0 || order >= window)
        throw std::invalid_argument(msg("Savitzky-Golay order must satisfy 0 <= order < window, got order=",
                                        order, " window=", window));
}
}  // namespace detail

/// Convolution weights that evaluate the least-squares polynomial fit of a
/// window at offset `eval_offset` from the window center (0 = the classic
/// smoothing weights). Offsets are rescaled to [-1, 1] before forming the
/// normal equations to keep them well conditioned at large windows.
inline Eigen::VectorXd sg_weights(int window, int order, int eval_offset) {
    detail::validate_sg_params(window, order);
    const int half = (window - 1) / 2;
    if (eval_offset < -half || eval_offset > half)
        throw std::invalid_argument(msg("evaluation offset ", eval_offset, " outside window of half-width ", half));

    const double scale = half > 0 ? static_cast<double>(half) : 1.0;
    Eigen::MatrixXd design(window, order + 1);
    for (int i = 0; i < window; ++i) {
        const double x = static_cast<double>(i - half) / scale;
        design(i, 0) = 1.0;
        for (int j = 1; j <= order; ++j) design(i, j) = design(i, j - 1) * x;
    }
    Eigen::VectorXd powers(order + 1);
    const double t = static_cast<double>(eval_offset) / scale;
    powers(0) = 1.0;
    for (int j = 1; j <= order; ++j) powers(j) = powers(j - 1) * t;

    const Eigen::MatrixXd normal = design.transpose() * design;
    const Eigen::VectorXd c = normal.ldlt().solve(powers);
    return design * c;
}

/// Center-point smoothing weights (length `window`).
inline Eigen::VectorXd sg_coefficients(int window, int order) { return sg_weights(window, order, 0); }

/// Least-squares polynomial smoothing. Interior points use the center
/// weights; boundary points evaluate the edge-window fit at their own offset
/// so the output always has the input length.
inline Eigen::VectorXd sg_smooth(const Eigen::VectorXd& signal, int window, int order) {
    detail::validate_sg_params(window, order);
    const auto n = signal.size();
    if (window > n)
        throw std::invalid_argument(msg("Savitzky-Golay window ", window, " exceeds signal length ", n));

    const int half = (window - 1) / 2;
    Eigen::VectorXd out(n);
    const Eigen::VectorXd center = sg_weights(window, order, 0);
    for (Eigen::Index i = half; i < n - half; ++i)
        out(i) = center.dot(signal.segment(i - half, window));
    for (int i = 0; i < half; ++i)
        out(i) = sg_weights(window, order, i - half).dot(signal.head(window));
    for (int i = 0; i < half; ++i) {
        const Eigen::Index pos = n - half + i;
        out(pos) = sg_weights(window, order, i + 1).dot(signal.tail(window));
    }
    return out;
}

/// Splits a signal into the slowly varying fit and the fast residual.
inline DetrendResult detrend(const Eigen::VectorXd& signal, int window, int order) {
    DetrendResult result;
    result.smooth = sg_smooth(signal, window, order);
    result.detrended = signal - result.smooth;
    return result;
}

inline DetrendResult detrend(const Eigen::VectorXd& signal, const DetrendConfig& cfg) {
    if (!cfg.enabled) return DetrendResult{Eigen::VectorXd::Zero(signal.size()), signal};
    return detrend(signal, cfg.window, cfg.order);
}

}  // namespace slimux
