#pragma once

#include "loopshift/errors.hpp"
#include "loopshift/types.hpp"

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace loopshift {

// Ring buffer of N frame-latents plus the noise index each latent sits at.
// Every denoising step must leave all latents at the same noise index.
class LatentCycle {
public:
    LatentCycle(Matrix latents, int noise_index)
        : latents_(std::move(latents)), noise_(static_cast<std::size_t>(latents_.rows()), noise_index) {
        if (latents_.rows() < 1 || latents_.cols() < 1) {
            throw ConfigError("latent cycle: need at least one latent of positive dimension");
        }
    }

    std::size_t size() const { return static_cast<std::size_t>(latents_.rows()); }
    std::size_t dim() const { return static_cast<std::size_t>(latents_.cols()); }
    const Matrix& latents() const { return latents_; }
    const std::vector<int>& noise_levels() const { return noise_; }

    bool uniform_noise_level() const {
        return std::all_of(noise_.begin(), noise_.end(), [&](int n) { return n == noise_.front(); });
    }
    int noise_level() const {
        if (!uniform_noise_level()) {
            throw std::logic_error("latent cycle: noise levels diverged across latents");
        }
        return noise_.front();
    }

    bool all_finite() const { return latents_.allFinite(); }

    // Copies of latents (j + i) mod N for i = 0..f-1.
    Matrix extract_window(std::size_t j, std::size_t f) const {
        check_window(j, f);
        const std::size_t N = size();
        Matrix window(static_cast<long>(f), latents_.cols());
        for (std::size_t i = 0; i < f; ++i) {
            window.row(static_cast<long>(i)) = latents_.row(static_cast<long>((j + i) % N));
        }
        return window;
    }

    // Writes window row i to latent (j + i) mod N and records its noise index.
    void scatter_window(std::size_t j, const Matrix& window, int noise_index) {
        const std::size_t f = static_cast<std::size_t>(window.rows());
        check_window(j, f);
        if (window.cols() != latents_.cols()) {
            throw ConfigError("scatter_window: latent dimension mismatch");
        }
        const std::size_t N = size();
        for (std::size_t i = 0; i < f; ++i) {
            const std::size_t k = (j + i) % N;
            latents_.row(static_cast<long>(k)) = window.row(static_cast<long>(i));
            noise_[k] = noise_index;
        }
    }

private:
    void check_window(std::size_t j, std::size_t f) const {
        if (f == 0 || f > size()) {
            throw ConfigError("window length " + std::to_string(f) + " must be in [1, N=" + std::to_string(size()) + "]");
        }
        if (j >= size()) {
            throw ConfigError("window start out of range");
        }
    }

    Matrix latents_;
    std::vector<int> noise_;
};

// i.i.d. standard normal N x dim buffer at noise index `noise_index`.
inline LatentCycle init_cycle(std::size_t N, std::size_t dim, std::uint64_t seed, int noise_index = 0) {
    if (N < 1 || dim < 1) {
        throw ConfigError("init_cycle: need N >= 1 and dim >= 1");
    }
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    Matrix z(static_cast<long>(N), static_cast<long>(dim));
    for (long i = 0; i < z.size(); ++i) {
        z.data()[i] = normal(rng);
    }
    return LatentCycle(std::move(z), noise_index);
}

// j = (step_index * s) mod N
inline std::size_t window_start(std::size_t step_index, std::size_t skip, std::size_t N) {
    if (N < 1) {
        throw ConfigError("window_start: N must be >= 1");
    }
    return static_cast<std::size_t>((static_cast<unsigned long long>(step_index % N) * (skip % N)) % N);
}

// Starts j, j+f, ..., j+(n-1)f (mod N) of the n windows that partition the cycle.
inline std::vector<std::size_t> tile_window_starts(std::size_t j, std::size_t f, std::size_t N) {
    if (f == 0 || N % f != 0) {
        throw ConfigError("tile_window_starts: N=" + std::to_string(N) + " is not a multiple of f=" + std::to_string(f));
    }
    if (j >= N) {
        throw ConfigError("tile_window_starts: start out of range");
    }
    std::vector<std::size_t> starts;
    for (std::size_t k = 0; k < N / f; ++k) {
        starts.push_back((j + k * f) % N);
    }
    return starts;
}

// Non-cyclic tiling over [0, N) for long generation: the lattice j + m f is
// clamped into [0, N - f], so the first window starts at 0, the last ends at
// N - 1 and neighbours may overlap. Returned in increasing order.
inline std::vector<std::size_t> clamped_window_starts(std::size_t j, std::size_t f, std::size_t N) {
    if (f == 0 || f > N) {
        throw ConfigError("clamped_window_starts: need 1 <= f <= N");
    }
    const std::size_t last = N - f;
    if (j > last) {
        throw ConfigError("clamped_window_starts: start beyond N - f");
    }
    std::vector<std::size_t> starts;
    if (j % f != 0) {
        starts.push_back(0);
    }
    for (std::size_t s = j % f; s < N; s += f) {
        const std::size_t clamped = std::min(s, last);
        if (starts.empty() || starts.back() != clamped) {
            starts.push_back(clamped);
        }
        if (clamped == last) {
            break;
        }
    }
    if (starts.back() != last) {
        starts.push_back(last);
    }
    return starts;
}

} // namespace loopshift
