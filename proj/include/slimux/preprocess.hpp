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
#include <Eigen/Eigenvalues>

#include "slimux/common.hpp"
#include "slimux/savgol.hpp"

namespace slimux {

struct PixelSpectrum {
    Eigen::VectorXd values;  ///< per-wavelength observable
    int row = -1;
    int col = -1;
};

enum class NoiseForm { ScaledIdentity, Diagonal, Full };

/// Gaussian noise covariance in one of three shapes. Full covariances are
/// eigendecomposed once at construction; non-positive-definite input is
/// rejected there.
class NoiseModel {
public:
    static NoiseModel scaled_identity(double variance) {
        if (!(variance > 0.0) || !std::isfinite(variance))
            throw std::invalid_argument(msg("noise variance must be positive and finite, got ", variance));
        NoiseModel m;
        m.form_ = NoiseForm::ScaledIdentity;
        m.variance_ = variance;
        return m;
    }

    static NoiseModel diagonal(Eigen::VectorXd variances) {
        if (variances.size() == 0 || !(variances.minCoeff() > 0.0) || !variances.allFinite())
            throw std::invalid_argument("diagonal noise model needs strictly positive finite variances");
        NoiseModel m;
        m.form_ = NoiseForm::Diagonal;
        m.diag_ = std::move(variances);
        return m;
    }

    static NoiseModel full(const Eigen::MatrixXd& covariance) {
        if (covariance.rows() != covariance.cols())
            throw std::invalid_argument("full noise covariance must be square");
        const double scale = covariance.cwiseAbs().maxCoeff();
        if ((covariance - covariance.transpose()).cwiseAbs().maxCoeff() > 1e-12 * std::max(scale, 1.0))
            throw std::invalid_argument("full noise covariance must be symmetric");
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(covariance);
        if (eig.info() != Eigen::Success)
            throw std::runtime_error("eigendecomposition of the noise covariance failed");
        if (!(eig.eigenvalues().minCoeff() > 0.0))
            throw std::invalid_argument(msg("noise covariance is not positive definite (min eigenvalue ",
                                            eig.eigenvalues().minCoeff(), ")"));
        NoiseModel m;
        m.form_ = NoiseForm::Full;
        m.full_ = covariance;
        const Eigen::VectorXd inv_sqrt_vals = eig.eigenvalues().cwiseSqrt().cwiseInverse();
        m.inv_sqrt_ = eig.eigenvectors() * inv_sqrt_vals.asDiagonal() * eig.eigenvectors().transpose();
        m.inv_ = eig.eigenvectors() * eig.eigenvalues().cwiseInverse().asDiagonal() * eig.eigenvectors().transpose();
        return m;
    }

    NoiseForm form() const { return form_; }
    double variance() const { return variance_; }
    const Eigen::VectorXd& diagonal_variances() const { return diag_; }
    const Eigen::MatrixXd& covariance() const { return full_; }

    void check_dimension(Eigen::Index n) const {
        if (form_ == NoiseForm::Diagonal && diag_.size() != n)
            throw std::invalid_argument(msg("diagonal noise has ", diag_.size(), " entries, data has ", n));
        if (form_ == NoiseForm::Full && full_.rows() != n)
            throw std::invalid_argument(msg("full noise covariance is ", full_.rows(), "x", full_.cols(),
                                            ", data has ", n));
    }

    /// M^{-1/2} x (symmetric inverse square root for the full form).
    Eigen::VectorXd apply_inv_sqrt(const Eigen::VectorXd& x) const {
        check_dimension(x.size());
        switch (form_) {
            case NoiseForm::ScaledIdentity: return x / std::sqrt(variance_);
            case NoiseForm::Diagonal: return x.cwiseQuotient(diag_.cwiseSqrt());
            case NoiseForm::Full: return inv_sqrt_ * x;
        }
        throw std::logic_error("unreachable");
    }

    Eigen::MatrixXd apply_inv_sqrt(const Eigen::MatrixXd& x) const {
        check_dimension(x.rows());
        switch (form_) {
            case NoiseForm::ScaledIdentity: return x / std::sqrt(variance_);
            case NoiseForm::Diagonal: return diag_.cwiseSqrt().cwiseInverse().asDiagonal() * x;
            case NoiseForm::Full: return inv_sqrt_ * x;
        }
        throw std::logic_error("unreachable");
    }

    /// M^{-1} x.
    Eigen::VectorXd apply_inverse(const Eigen::VectorXd& x) const {
        check_dimension(x.size());
        switch (form_) {
            case NoiseForm::ScaledIdentity: return x / variance_;
            case NoiseForm::Diagonal: return x.cwiseQuotient(diag_);
            case NoiseForm::Full: return inv_ * x;
        }
        throw std::logic_error("unreachable");
    }

private:
    NoiseModel() = default;
    NoiseForm form_ = NoiseForm::ScaledIdentity;
    double variance_ = 1.0;
    Eigen::VectorXd diag_;
    Eigen::MatrixXd full_;
    Eigen::MatrixXd inv_sqrt_;
    Eigen::MatrixXd inv_;
};

struct WhitenedProblem {
    Eigen::VectorXd y;  ///< M^{-1/2} z
    Eigen::MatrixXd V;  ///< M^{-1/2} S
    NoiseModel noise;
};

inline WhitenedProblem whiten(const Eigen::VectorXd& z, const Eigen::MatrixXd& S, const NoiseModel& noise) {
    if (z.size() != S.rows())
        throw std::invalid_argument(msg("observation length ", z.size(), " does not match dictionary rows ",
                                        S.rows()));
    noise.check_dimension(z.size());
    return WhitenedProblem{noise.apply_inv_sqrt(z), noise.apply_inv_sqrt(S), noise};
}

/// Sun-normalized optical depth: z = -ln(pi * radiance / (cos(sza) * irradiance)).
inline PixelSpectrum compute_optical_depth(const Eigen::VectorXd& radiance, const Eigen::VectorXd& irradiance,
                                           double solar_zenith_deg) {
    if (radiance.size() != irradiance.size())
        throw std::invalid_argument("radiance and irradiance lengths differ");
    if (!(solar_zenith_deg >= 0.0 && solar_zenith_deg < 90.0))
        throw std::domain_error(msg("solar zenith angle ", solar_zenith_deg, " deg outside [0, 90)"));
    for (Eigen::Index i = 0; i < radiance.size(); ++i) {
        if (!(radiance(i) > 0.0))
            throw std::domain_error(msg("non-positive radiance at band ", i));
        if (!(irradiance(i) > 0.0))
            throw std::domain_error(msg("non-positive irradiance at band ", i));
    }
    const double mu = std::cos(solar_zenith_deg * 3.14159265358979323846 / 180.0);
    PixelSpectrum out;
    out.values = ((mu / 3.14159265358979323846) * irradiance.cwiseQuotient(radiance)).array().log();
    return out;
}

/// Default noise recipe: scaled identity, variance = median squared residual
/// of an OLS fit of the three largest-norm dictionary columns.
inline NoiseModel estimate_noise(const Eigen::VectorXd& detrended, const Eigen::MatrixXd& S) {
    if (detrended.size() != S.rows())
        throw std::invalid_argument("signal length does not match dictionary rows");
    const Eigen::Index n_pilot = std::min<Eigen::Index>(3, S.cols());
    std::vector<Eigen::Index> order(static_cast<std::size_t>(S.cols()));
    for (std::size_t j = 0; j < order.size(); ++j) order[j] = static_cast<Eigen::Index>(j);
    const Eigen::VectorXd norms = S.colwise().norm();
    std::stable_sort(order.begin(), order.end(),
                     [&](Eigen::Index a, Eigen::Index b) { return norms(a) > norms(b); });

    Eigen::MatrixXd pilot(S.rows(), n_pilot);
    for (Eigen::Index j = 0; j < n_pilot; ++j) pilot.col(j) = S.col(order[static_cast<std::size_t>(j)]);
    const Eigen::VectorXd beta = pilot.colPivHouseholderQr().solve(detrended);
    Eigen::VectorXd residual = detrended - pilot * beta;

    std::vector<double> sq(static_cast<std::size_t>(residual.size()));
    for (Eigen::Index i = 0; i < residual.size(); ++i) sq[static_cast<std::size_t>(i)] = residual(i) * residual(i);
    std::sort(sq.begin(), sq.end());
    const std::size_t n = sq.size();
    const double median = (n % 2 == 1) ? sq[n / 2] : 0.5 * (sq[n / 2 - 1] + sq[n / 2]);
    // floor at the float64 precision of the observable so a residual made of
    // rounding dust is not whitened up to a unit-variance signal
    const double floor_sigma = 1e-13 * std::max(1.0, detrended.cwiseAbs().maxCoeff());
    return NoiseModel::scaled_identity(std::max(median, floor_sigma * floor_sigma));
}

}  // namespace slimux
