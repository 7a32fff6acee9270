#pragma once

#include "loopshift/errors.hpp"
#include "loopshift/types.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdio>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

namespace loopshift {

// open: F-1 adjacent terms. cyclic: adds the (F-1 -> 0) wrap term so a loop's
// seam counts as one more step.
enum class Boundary { open, cyclic };

namespace metrics_detail {

inline double frame_mse(const Matrix& frames, long a, long b) {
    return (frames.row(a) - frames.row(b)).squaredNorm() / static_cast<double>(frames.cols());
}

inline void require_frames(const Matrix& frames, long minimum, const char* what) {
    if (frames.rows() < minimum) {
        throw ConfigError(std::string(what) + ": need at least " + std::to_string(minimum) + " frames");
    }
    if (frames.cols() < 1) {
        throw ConfigError(std::string(what) + ": frames have no channels");
    }
}

} // namespace metrics_detail

inline double median(std::vector<double> values) {
    if (values.empty()) {
        throw ConfigError("median of empty set");
    }
    const std::size_t mid = values.size() / 2;
    std::nth_element(values.begin(), values.begin() + static_cast<long>(mid), values.end());
    const double upper = values[mid];
    if (values.size() % 2 == 1) {
        return upper;
    }
    const double lower = *std::max_element(values.begin(), values.begin() + static_cast<long>(mid));
    return 0.5 * (lower + upper);
}

// Entry i is MSE(frame i, frame i+1); in cyclic mode the last entry is MSE(frame F-1, frame 0).
inline std::vector<double> adjacent_mse_profile(const Matrix& frames, Boundary boundary) {
    metrics_detail::require_frames(frames, 2, "adjacent_mse_profile");
    const long F = frames.rows();
    std::vector<double> profile;
    profile.reserve(static_cast<std::size_t>(F));
    for (long i = 0; i + 1 < F; ++i) {
        profile.push_back(metrics_detail::frame_mse(frames, i, i + 1));
    }
    if (boundary == Boundary::cyclic) {
        profile.push_back(metrics_detail::frame_mse(frames, F - 1, 0));
    }
    return profile;
}

inline double first_last_mse(const Matrix& frames) {
    metrics_detail::require_frames(frames, 2, "first_last_mse");
    return metrics_detail::frame_mse(frames, 0, frames.rows() - 1);
}

struct SeamGap {
    double ratio = 0.0;
    // Set when the median adjacent step is zero; ratio is then +inf.
    bool degenerate = false;
};

// MSE(frame F-1, frame 0) over the median of the open adjacent profile.
inline SeamGap seam_gap(const Matrix& frames) {
    metrics_detail::require_frames(frames, 3, "seam_gap_ratio");
    const double typical = median(adjacent_mse_profile(frames, Boundary::open));
    const double seam = metrics_detail::frame_mse(frames, frames.rows() - 1, 0);
    if (!(typical > 0.0)) {
        return {std::numeric_limits<double>::infinity(), true};
    }
    return {seam / typical, false};
}

inline double seam_gap_ratio(const Matrix& frames) { return seam_gap(frames).ratio; }

// Mean adjacent-frame MSE.
inline double dynamic_proxy(const Matrix& frames, Boundary boundary) {
    const std::vector<double> profile = adjacent_mse_profile(frames, boundary);
    double sum = 0.0;
    for (double v : profile) {
        sum += v;
    }
    return sum / static_cast<double>(profile.size());
}

// Mean squared second temporal difference (lower is smoother).
inline double smoothness_proxy(const Matrix& frames, Boundary boundary) {
    metrics_detail::require_frames(frames, 3, "smoothness_proxy");
    const long F = frames.rows();
    const double dim = static_cast<double>(frames.cols());
    double sum = 0.0;
    long terms = 0;
    const long begin = boundary == Boundary::cyclic ? 0 : 1;
    const long end = boundary == Boundary::cyclic ? F : F - 1;
    for (long i = begin; i < end; ++i) {
        const long prev = (i - 1 + F) % F;
        const long next = (i + 1) % F;
        sum += (frames.row(next) - 2.0 * frames.row(i) + frames.row(prev)).squaredNorm() / dim;
        ++terms;
    }
    return sum / static_cast<double>(terms);
}

// Index k of the largest jump into frame k, where jump 0 is the wrap step
// (F-1 -> 0) and jump k >= 1 is (k-1 -> k). Ties resolve to the lowest index.
inline std::size_t largest_jump_frame(const Matrix& frames) {
    const std::vector<double> profile = adjacent_mse_profile(frames, Boundary::cyclic);
    std::size_t best = 0;
    double best_value = profile.back();
    for (std::size_t k = 1; k < profile.size(); ++k) {
        if (profile[k - 1] > best_value) {
            best_value = profile[k - 1];
            best = k;
        }
    }
    return best;
}

struct LoopReport {
    std::size_t frame_count = 0;
    double first_last_mse = 0.0;
    double seam_gap_ratio = 0.0;
    bool seam_degenerate = false;
    std::vector<double> adjacent_mse_profile;
    double smoothness_proxy = 0.0;
    double dynamic_proxy = 0.0;
};

inline LoopReport make_loop_report(const Matrix& frames, Boundary boundary) {
    metrics_detail::require_frames(frames, 3, "loop report");
    LoopReport r;
    r.frame_count = static_cast<std::size_t>(frames.rows());
    r.first_last_mse = first_last_mse(frames);
    const SeamGap gap = seam_gap(frames);
    r.seam_gap_ratio = gap.ratio;
    r.seam_degenerate = gap.degenerate;
    r.adjacent_mse_profile = adjacent_mse_profile(frames, boundary);
    r.smoothness_proxy = smoothness_proxy(frames, boundary);
    r.dynamic_proxy = dynamic_proxy(frames, boundary);
    return r;
}

// Decimal text that round-trips the double exactly.
inline std::string format_real(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

// Fixed key set, one `name=value` per line, in this order.
inline std::string to_key_value(const LoopReport& r) {
    std::ostringstream out;
    out << "frame_count=" << r.frame_count << '\n';
    out << "first_last_mse=" << format_real(r.first_last_mse) << '\n';
    out << "seam_gap_ratio=" << format_real(r.seam_gap_ratio) << '\n';
    out << "seam_degenerate=" << (r.seam_degenerate ? 1 : 0) << '\n';
    out << "smoothness_proxy=" << format_real(r.smoothness_proxy) << '\n';
    out << "dynamic_proxy=" << format_real(r.dynamic_proxy) << '\n';
    out << "adjacent_mse_profile=";
    for (std::size_t i = 0; i < r.adjacent_mse_profile.size(); ++i) {
        out << (i ? "," : "") << format_real(r.adjacent_mse_profile[i]);
    }
    out << '\n';
    return out.str();
}

// One-sided sign test: P(X >= wins) for X ~ Binomial(trials, 1/2).
inline double sign_test_p_value(std::size_t wins, std::size_t trials) {
    if (wins > trials) {
        throw ConfigError("sign test: wins exceed trials");
    }
    if (trials == 0) {
        return 1.0;
    }
    const double n = static_cast<double>(trials);
    double p = 0.0;
    for (std::size_t k = wins; k <= trials; ++k) {
        const double kk = static_cast<double>(k);
        p += std::exp(std::lgamma(n + 1.0) - std::lgamma(kk + 1.0) - std::lgamma(n - kk + 1.0) - n * std::log(2.0));
    }
    return std::min(1.0, p);
}

} // namespace loopshift
