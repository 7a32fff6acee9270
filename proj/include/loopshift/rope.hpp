#pragma once

#include "loopshift/errors.hpp"
#include "loopshift/types.hpp"

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace loopshift {

// fixed: window positions stay 0..f-1 while latents rotate underneath.
// shifted: positions follow the latents around the cycle, with NTK-scaled base.
enum class RopeMode { fixed, shifted };

inline const char* to_string(RopeMode mode) { return mode == RopeMode::fixed ? "fixed" : "shifted"; }

inline RopeMode parse_rope_mode(const std::string& text) {
    if (text == "fixed") {
        return RopeMode::fixed;
    }
    if (text == "shifted") {
        return RopeMode::shifted;
    }
    throw ConfigError("unknown rope mode '" + text + "' (expected fixed|shifted)");
}

struct RopeConfig {
    int head_dim = 32;
    double base = 10000.0;
    // Multiple by which the context grows; 1 means the trained length.
    double scale = 1.0;
    RopeMode mode = RopeMode::fixed;

    void validate() const {
        if (head_dim < 2 || head_dim % 2 != 0) {
            throw ConfigError("rope head dimension must be even and >= 2");
        }
        if (!(base > 1.0)) {
            throw ConfigError("rope base must be > 1");
        }
        if (!(scale >= 1.0)) {
            throw ConfigError("rope scale must be >= 1");
        }
    }
};

// theta_i = b^(-2i/d), i = 0..d/2-1
inline std::vector<double> rope_thetas(int d, double b) {
    if (d < 2 || d % 2 != 0) {
        throw ConfigError("rope_thetas: dimension must be even and >= 2");
    }
    if (!(b > 1.0)) {
        throw ConfigError("rope_thetas: base must be > 1");
    }
    std::vector<double> thetas(static_cast<std::size_t>(d / 2));
    for (int i = 0; i < d / 2; ++i) {
        thetas[static_cast<std::size_t>(i)] = std::pow(b, -2.0 * i / static_cast<double>(d));
    }
    return thetas;
}

// NTK-aware base rescaling: b' = b * k^(d/(d-2)).
inline double ntk_scaled_base(double b, double k, int d) {
    if (d <= 2) {
        throw ConfigError("ntk_scaled_base: dimension must be > 2");
    }
    if (!(k >= 1.0)) {
        throw ConfigError("ntk_scaled_base: scale must be >= 1");
    }
    return b * std::pow(k, static_cast<double>(d) / static_cast<double>(d - 2));
}

inline double effective_base(const RopeConfig& cfg) {
    cfg.validate();
    if (cfg.scale == 1.0) {
        return cfg.base;
    }
    return ntk_scaled_base(cfg.base, cfg.scale, cfg.head_dim);
}

// Per-position cos/sin table for a list of positions; shared by queries and keys.
template <typename Scalar>
class RopeTable {
public:
    RopeTable(std::span<const int> positions, const RopeConfig& cfg)
        : half_(cfg.head_dim / 2), cos_(positions.size(), static_cast<std::size_t>(half_)),
          sin_(positions.size(), static_cast<std::size_t>(half_)) {
        const std::vector<double> thetas = rope_thetas(cfg.head_dim, effective_base(cfg));
        for (std::size_t p = 0; p < positions.size(); ++p) {
            for (int i = 0; i < half_; ++i) {
                const double angle = static_cast<double>(positions[p]) * thetas[static_cast<std::size_t>(i)];
                cos_(p, i) = static_cast<Scalar>(std::cos(angle));
                sin_(p, i) = static_cast<Scalar>(std::sin(angle));
            }
        }
    }

    int head_dim() const { return 2 * half_; }

    // Rotate pairs (x[2i], x[2i+1]) by angle position * theta_i. `inverse`
    // applies the transpose rotation, which is what the backward pass needs.
    void rotate(Scalar* x, std::size_t position_index, bool inverse = false) const {
        for (int i = 0; i < half_; ++i) {
            const Scalar c = cos_(position_index, i);
            const Scalar s = inverse ? -sin_(position_index, i) : sin_(position_index, i);
            const Scalar x0 = x[2 * i];
            const Scalar x1 = x[2 * i + 1];
            x[2 * i] = x0 * c - x1 * s;
            x[2 * i + 1] = x0 * s + x1 * c;
        }
    }

private:
    int half_;
    Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> cos_;
    Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> sin_;
};

inline std::vector<double> apply_rope(std::span<const double> x, int position, const RopeConfig& cfg) {
    if (x.size() != static_cast<std::size_t>(cfg.head_dim)) {
        throw ConfigError("apply_rope: vector length does not match head dimension");
    }
    const int positions[1] = {position};
    const RopeTable<double> table(positions, cfg);
    std::vector<double> out(x.begin(), x.end());
    table.rotate(out.data(), 0);
    return out;
}

// <RoPE(q, m), RoPE(k, n)>; depends on m - n only.
inline double attention_weight(std::span<const double> q, std::span<const double> k, int m, int n,
                               const RopeConfig& cfg) {
    if (q.size() != k.size()) {
        throw ConfigError("attention_weight: q and k lengths differ");
    }
    const std::vector<double> qr = apply_rope(q, m, cfg);
    const std::vector<double> kr = apply_rope(k, n, cfg);
    double acc = 0.0;
    for (std::size_t i = 0; i < qr.size(); ++i) {
        acc += qr[i] * kr[i];
    }
    return acc;
}

// Position indices handed to the denoiser for one window, together with the
// rope configuration (scale) those positions are meant to be used with.
struct WindowPositions {
    std::vector<int> positions;
    RopeConfig rope;
};

// Window of f latents starting at cycle index j in a cycle of N.
inline WindowPositions positions_for_window(std::size_t j, std::size_t f, std::size_t N, const RopeConfig& cfg) {
    cfg.validate();
    if (f == 0 || f > N) {
        throw ConfigError("positions_for_window: need 1 <= f <= N");
    }
    if (j >= N) {
        throw ConfigError("positions_for_window: start index out of range");
    }
    WindowPositions out;
    out.rope = cfg;
    out.positions.resize(f);
    if (cfg.mode == RopeMode::fixed) {
        out.rope.scale = 1.0;
        for (std::size_t i = 0; i < f; ++i) {
            out.positions[i] = static_cast<int>(i);
        }
    } else {
        out.rope.scale = static_cast<double>(N) / static_cast<double>(f);
        for (std::size_t i = 0; i < f; ++i) {
            out.positions[i] = static_cast<int>((j + i) % N);
        }
    }
    return out;
}

// Non-cyclic variant for long generation: shifted positions are absolute,
// never wrapped.
inline WindowPositions positions_for_span(std::size_t start, std::size_t f, std::size_t N, const RopeConfig& cfg) {
    cfg.validate();
    if (f == 0 || f > N || start + f > N) {
        throw ConfigError("positions_for_span: window exceeds sequence");
    }
    WindowPositions out;
    out.rope = cfg;
    out.positions.resize(f);
    if (cfg.mode == RopeMode::fixed) {
        out.rope.scale = 1.0;
        for (std::size_t i = 0; i < f; ++i) {
            out.positions[i] = static_cast<int>(i);
        }
    } else {
        out.rope.scale = static_cast<double>(N) / static_cast<double>(f);
        for (std::size_t i = 0; i < f; ++i) {
            out.positions[i] = static_cast<int>(start + i);
        }
    }
    return out;
}

} // namespace loopshift
