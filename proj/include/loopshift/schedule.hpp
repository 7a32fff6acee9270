#pragma once

#include "loopshift/errors.hpp"
#include "loopshift/types.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

namespace loopshift {

// Discrete diffusion constants indexed by t = 1..T. alpha_bar(0) is defined as 1
// so that the final DDIM step onto t_prev = 0 is well defined.
class NoiseSchedule {
public:
    explicit NoiseSchedule(std::vector<double> betas) : betas_(std::move(betas)) {
        if (betas_.size() < 2) {
            throw ConfigError("noise schedule needs at least 2 steps");
        }
        alphas_.reserve(betas_.size());
        alpha_bars_.reserve(betas_.size());
        double running = 1.0;
        for (double beta : betas_) {
            if (!(beta > 0.0 && beta < 1.0)) {
                throw ConfigError("beta outside (0,1): " + std::to_string(beta));
            }
            alphas_.push_back(1.0 - beta);
            running *= 1.0 - beta;
            alpha_bars_.push_back(running);
        }
    }

    int steps() const { return static_cast<int>(betas_.size()); }

    double beta(int t) const { return betas_.at(index(t)); }
    double alpha(int t) const { return alphas_.at(index(t)); }

    double alpha_bar(int t) const {
        if (t == 0) {
            return 1.0;
        }
        return alpha_bars_.at(index(t));
    }

    const std::vector<double>& betas() const { return betas_; }
    const std::vector<double>& alphas() const { return alphas_; }
    const std::vector<double>& alpha_bars() const { return alpha_bars_; }

private:
    std::size_t index(int t) const {
        if (t < 1 || t > steps()) {
            throw ConfigError("timestep out of range: " + std::to_string(t));
        }
        return static_cast<std::size_t>(t - 1);
    }

    std::vector<double> betas_;
    std::vector<double> alphas_;
    std::vector<double> alpha_bars_;
};

inline NoiseSchedule make_linear_schedule(int T, double beta_start, double beta_end) {
    if (T < 2) {
        throw ConfigError("schedule length T must be >= 2");
    }
    if (!(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0)) {
        throw ConfigError("need 0 < beta_start <= beta_end < 1");
    }
    std::vector<double> betas(static_cast<std::size_t>(T));
    for (int i = 0; i < T; ++i) {
        betas[static_cast<std::size_t>(i)] =
            beta_start + (beta_end - beta_start) * static_cast<double>(i) / static_cast<double>(T - 1);
    }
    return NoiseSchedule(std::move(betas));
}

inline NoiseSchedule make_default_schedule() { return make_linear_schedule(1000, 1e-4, 0.02); }

struct TimestepPair {
    int t = 0;
    int t_prev = 0;
};

using TimestepPlan = std::vector<TimestepPair>;

// Evenly strided descending plan: T, T - T/steps, ..., ending with t_prev = 0.
inline TimestepPlan make_timestep_plan(int T, int steps) {
    if (steps < 1 || steps > T) {
        throw ConfigError("plan length must be in [1, T]");
    }
    TimestepPlan plan;
    plan.reserve(static_cast<std::size_t>(steps));
    for (int k = 0; k < steps; ++k) {
        const int t = T - static_cast<int>((static_cast<long long>(k) * T) / steps);
        const int t_prev =
            (k + 1 < steps) ? T - static_cast<int>((static_cast<long long>(k + 1) * T) / steps) : 0;
        plan.push_back({t, t_prev});
    }
    return plan;
}

// z_t = sqrt(abar_t) x0 + sqrt(1 - abar_t) eps
inline Matrix add_noise(const Matrix& x0, const Matrix& eps, int t, const NoiseSchedule& sched) {
    if (x0.rows() != eps.rows() || x0.cols() != eps.cols()) {
        throw ConfigError("add_noise: shape mismatch");
    }
    const double ab = sched.alpha_bar(t);
    return std::sqrt(ab) * x0 + std::sqrt(1.0 - ab) * eps;
}

namespace detail {

inline void check_ddim_args(const Matrix& z_t, const Matrix& eps_hat, int t, int t_prev) {
    if (z_t.rows() != eps_hat.rows() || z_t.cols() != eps_hat.cols()) {
        throw ConfigError("ddim_step: latent and eps shapes differ");
    }
    if (!(t > t_prev && t_prev >= 0)) {
        throw ConfigError("ddim_step: need t > t_prev >= 0");
    }
}

} // namespace detail

// Deterministic (eta = 0) DDIM update from t to t_prev.
inline Matrix ddim_step(const Matrix& z_t, const Matrix& eps_hat, int t, int t_prev,
                        const NoiseSchedule& sched) {
    detail::check_ddim_args(z_t, eps_hat, t, t_prev);
    const double ab_t = sched.alpha_bar(t);
    const double ab_prev = sched.alpha_bar(t_prev);
    const Matrix x0_hat = (z_t - std::sqrt(1.0 - ab_t) * eps_hat) / std::sqrt(ab_t);
    return std::sqrt(ab_prev) * x0_hat + std::sqrt(1.0 - ab_prev) * eps_hat;
}

// Generalized DDIM update with stochasticity eta; `noise` supplies the fresh
// standard-normal draw. eta = 0 reduces to the deterministic update.
inline Matrix ddim_step(const Matrix& z_t, const Matrix& eps_hat, int t, int t_prev,
                        const NoiseSchedule& sched, double eta, const Matrix& noise) {
    detail::check_ddim_args(z_t, eps_hat, t, t_prev);
    if (eta < 0.0) {
        throw ConfigError("ddim_step: eta must be >= 0");
    }
    if (noise.rows() != z_t.rows() || noise.cols() != z_t.cols()) {
        throw ConfigError("ddim_step: noise shape mismatch");
    }
    const double ab_t = sched.alpha_bar(t);
    const double ab_prev = sched.alpha_bar(t_prev);
    const double sigma =
        eta * std::sqrt((1.0 - ab_prev) / (1.0 - ab_t)) * std::sqrt(1.0 - ab_t / ab_prev);
    const Matrix x0_hat = (z_t - std::sqrt(1.0 - ab_t) * eps_hat) / std::sqrt(ab_t);
    const double dir = std::sqrt(std::max(0.0, 1.0 - ab_prev - sigma * sigma));
    return std::sqrt(ab_prev) * x0_hat + dir * eps_hat + sigma * noise;
}

} // namespace loopshift
