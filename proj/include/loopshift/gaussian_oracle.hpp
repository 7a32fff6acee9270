#pragma once

#include "loopshift/denoiser.hpp"
#include "loopshift/errors.hpp"
#include "loopshift/schedule.hpp"
#include "loopshift/types.hpp"

#include <unsupported/Eigen/FFT>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <limits>
#include <numbers>
#include <span>
#include <utility>
#include <vector>

namespace loopshift {

// Gaussian data prior over a cycle of M frames. Channels are independent and
// share one circulant temporal covariance given by its first row.
class GaussianPrior {
public:
    GaussianPrior(Matrix mean, std::vector<double> kernel_row)
        : mean_(std::move(mean)), kernel_(std::move(kernel_row)) {
        const std::size_t M = kernel_.size();
        if (M == 0 || static_cast<std::size_t>(mean_.rows()) != M || mean_.cols() < 1) {
            throw ConfigError("gaussian prior: mean must be M x D with M = kernel length");
        }
        for (std::size_t i = 1; i < M; ++i) {
            if (kernel_[i] != kernel_[M - i]) {
                throw ConfigError("gaussian prior: kernel row is not circulant-symmetric");
            }
        }
        eigenvalues_.resize(M);
        for (std::size_t k = 0; k < M; ++k) {
            double acc = 0.0;
            for (std::size_t tau = 0; tau < M; ++tau) {
                acc += kernel_[tau] * std::cos(2.0 * std::numbers::pi * static_cast<double>(k * tau % M) /
                                               static_cast<double>(M));
            }
            if (!(acc > 0.0)) {
                throw ConfigError("gaussian prior: covariance is not positive definite");
            }
            eigenvalues_[k] = acc;
        }
    }

    std::size_t cycle_length() const { return kernel_.size(); }
    std::size_t channels() const { return static_cast<std::size_t>(mean_.cols()); }
    const Matrix& mean() const { return mean_; }
    const std::vector<double>& kernel() const { return kernel_; }
    // Spectrum of the circulant covariance, indexed by DFT frequency.
    const std::vector<double>& eigenvalues() const { return eigenvalues_; }

    double covariance(long a, long b) const {
        const long M = static_cast<long>(kernel_.size());
        const long lag = ((a - b) % M + M) % M;
        return kernel_[static_cast<std::size_t>(lag)];
    }

    Matrix covariance_matrix() const {
        const long M = static_cast<long>(kernel_.size());
        Matrix cov(M, M);
        for (long a = 0; a < M; ++a) {
            for (long b = 0; b < M; ++b) {
                cov(a, b) = covariance(a, b);
            }
        }
        return cov;
    }

private:
    Matrix mean_;
    std::vector<double> kernel_;
    std::vector<double> eigenvalues_;
};

// Zero-mean prior with periodic kernel k(tau) = variance * exp(-2 sin^2(pi tau / M) / ell^2).
inline GaussianPrior make_periodic_prior(std::size_t M, std::size_t channels, double length_scale,
                                         double variance = 1.0) {
    if (M < 1 || channels < 1) {
        throw ConfigError("periodic prior: need M >= 1 and channels >= 1");
    }
    if (!(length_scale > 0.0) || !(variance > 0.0)) {
        throw ConfigError("periodic prior: length scale and variance must be positive");
    }
    std::vector<double> row(M);
    for (std::size_t tau = 0; tau < M; ++tau) {
        // Use the symmetric lag so row[tau] == row[M - tau] holds bit-exactly.
        const std::size_t lag = std::min(tau, M - tau);
        const double s = std::sin(std::numbers::pi * static_cast<double>(lag) / static_cast<double>(M));
        row[tau] = variance * std::exp(-2.0 * s * s / (length_scale * length_scale));
    }
    return GaussianPrior(Matrix::Zero(static_cast<long>(M), static_cast<long>(channels)), std::move(row));
}

// Closed-form E[eps | z_t] for a full cycle under the prior, computed in the
// Fourier basis that diagonalizes the circulant covariance.
inline Matrix analytic_eps(const Matrix& z_t, int t, const NoiseSchedule& sched, const GaussianPrior& prior) {
    const std::size_t M = prior.cycle_length();
    if (static_cast<std::size_t>(z_t.rows()) != M || static_cast<std::size_t>(z_t.cols()) != prior.channels()) {
        throw ConfigError("analytic_eps: latent shape must match the prior (M x D)");
    }
    if (t < 1) {
        throw ConfigError("analytic_eps: t must be >= 1");
    }
    const double ab = sched.alpha_bar(t);
    const double root_ab = std::sqrt(ab);
    const std::vector<double>& lambda = prior.eigenvalues();

    Eigen::FFT<double> fft;
    Matrix eps(z_t.rows(), z_t.cols());
    std::vector<double> residual(M);
    std::vector<std::complex<double>> spectrum;
    std::vector<double> filtered;
    for (long c = 0; c < z_t.cols(); ++c) {
        for (std::size_t i = 0; i < M; ++i) {
            residual[i] = z_t(static_cast<long>(i), c) - root_ab * prior.mean()(static_cast<long>(i), c);
        }
        fft.fwd(spectrum, residual);
        for (std::size_t k = 0; k < M; ++k) {
            const double denom = ab * lambda[k] + (1.0 - ab);
            if (!(denom > 0.0)) {
                throw NumericError("analytic_eps: singular posterior solve");
            }
            spectrum[k] *= root_ab * lambda[k] / denom;
        }
        fft.inv(filtered, spectrum);
        for (std::size_t i = 0; i < M; ++i) {
            const long r = static_cast<long>(i);
            const double posterior_mean = prior.mean()(r, c) + filtered[i];
            eps(r, c) = (z_t(r, c) - root_ab * posterior_mean) / std::sqrt(1.0 - ab);
        }
    }
    return eps;
}

// Exact denoiser for a Gaussian prior. A window is embedded in the prior's
// cycle at the positions it is given; the prediction uses the marginal prior on
// those positions, solved densely.
class GaussianOracleDenoiser final : public Denoiser {
public:
    GaussianOracleDenoiser(GaussianPrior prior, NoiseSchedule sched)
        : prior_(std::move(prior)), sched_(std::move(sched)) {}

    Matrix predict_eps(const Matrix& window, int t, std::span<const int> positions, const RopeConfig& /*rope*/,
                       ConditionId /*condition*/) const override {
        const long f = window.rows();
        if (static_cast<std::size_t>(window.cols()) != prior_.channels()) {
            throw ConfigError("oracle: window channel count does not match the prior");
        }
        if (positions.size() != static_cast<std::size_t>(f) || f == 0) {
            throw ConfigError("oracle: need one position per window row");
        }
        if (t < 1) {
            throw ConfigError("oracle: t must be >= 1");
        }
        const double ab = sched_.alpha_bar(t);
        const double root_ab = std::sqrt(ab);
        const long M = static_cast<long>(prior_.cycle_length());

        Matrix cov(f, f);
        Matrix mean(f, window.cols());
        for (long a = 0; a < f; ++a) {
            const long pa = positions[static_cast<std::size_t>(a)];
            for (long b = 0; b < f; ++b) {
                cov(a, b) = prior_.covariance(pa, positions[static_cast<std::size_t>(b)]);
            }
            mean.row(a) = prior_.mean().row(((pa % M) + M) % M);
        }
        const Matrix system = ab * cov + (1.0 - ab) * Matrix::Identity(f, f);
        const Eigen::LLT<Matrix> llt(system);
        if (llt.info() != Eigen::Success) {
            throw NumericError("oracle: posterior system is not positive definite");
        }
        const Matrix residual = window - root_ab * mean;
        const Matrix posterior_mean = mean + root_ab * cov * llt.solve(residual);
        return (window - root_ab * posterior_mean) / std::sqrt(1.0 - ab);
    }

    // Full-cycle prediction through the spectral route.
    Matrix predict_cycle(const Matrix& cycle, int t) const { return analytic_eps(cycle, t, sched_, prior_); }

    std::size_t latent_dim() const override { return prior_.channels(); }
    std::size_t max_context() const override { return std::numeric_limits<std::size_t>::max(); }

    const GaussianPrior& prior() const { return prior_; }
    const NoiseSchedule& schedule() const { return sched_; }

private:
    GaussianPrior prior_;
    NoiseSchedule sched_;
};

} // namespace loopshift
