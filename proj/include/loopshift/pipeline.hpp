#pragma once

#include "loopshift/codec.hpp"
#include "loopshift/cycle.hpp"
#include "loopshift/denoiser.hpp"
#include "loopshift/errors.hpp"
#include "loopshift/rope.hpp"
#include "loopshift/schedule.hpp"
#include "loopshift/types.hpp"

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace loopshift {

enum class GenerationMode { loop, long_video };
enum class DecodeMode { direct, frame_invariant };

inline const char* to_string(GenerationMode mode) { return mode == GenerationMode::loop ? "loop" : "long"; }
inline const char* to_string(DecodeMode mode) {
    return mode == DecodeMode::direct ? "direct" : "frame-invariant";
}

inline GenerationMode parse_generation_mode(const std::string& text) {
    if (text == "loop") {
        return GenerationMode::loop;
    }
    if (text == "long") {
        return GenerationMode::long_video;
    }
    throw ConfigError("unknown mode '" + text + "' (expected loop|long)");
}

inline DecodeMode parse_decode_mode(const std::string& text) {
    if (text == "direct") {
        return DecodeMode::direct;
    }
    if (text == "frame-invariant") {
        return DecodeMode::frame_invariant;
    }
    throw ConfigError("unknown decode mode '" + text + "' (expected direct|frame-invariant)");
}

struct GenerationConfig {
    std::size_t N = 16;
    std::size_t f = 8;
    std::size_t skip = 6;
    int plan_steps = 50;
    RopeMode rope_mode = RopeMode::fixed;
    double rope_base = 10000.0;
    ConditionId condition;
    std::uint64_t seed = 0;
    GenerationMode mode = GenerationMode::loop;
    // Unset: frame-invariant for loops, direct for long videos.
    std::optional<DecodeMode> decode;
    // Added to every loop-mode window start. Rotating the initial noise by m
    // together with offset m rotates the whole run.
    std::size_t window_offset = 0;

    DecodeMode effective_decode() const {
        if (decode) {
            return *decode;
        }
        return mode == GenerationMode::loop ? DecodeMode::frame_invariant : DecodeMode::direct;
    }

    void validate(const Denoiser& denoiser) const {
        if (f < 1 || N < 1) {
            throw ConfigError("generation: need N >= 1 and f >= 1");
        }
        if (f > denoiser.max_context()) {
            throw ConfigError("generation: window f=" + std::to_string(f) + " exceeds the denoiser context " +
                              std::to_string(denoiser.max_context()));
        }
        if (mode == GenerationMode::loop && N % f != 0) {
            throw ConfigError("generation: loop mode needs N to be a multiple of f");
        }
        if (mode == GenerationMode::long_video && N < f) {
            throw ConfigError("generation: long mode needs N >= f");
        }
        if (plan_steps < 1) {
            throw ConfigError("generation: plan needs at least one step");
        }
    }
};

struct GenerationResult {
    Matrix latents;
    VideoFrames frames;
};

// Window starts used at one timestep, for inspection in tests.
struct StepTrace {
    std::size_t step_index = 0;
    int t = 0;
    int t_prev = 0;
    std::vector<std::size_t> starts;
};

using StepObserver = std::function<void(const StepTrace&)>;

namespace pipeline_detail {

inline RopeConfig base_rope(const GenerationConfig& cfg, const Denoiser& denoiser) {
    RopeConfig rope;
    rope.head_dim = denoiser.head_dim();
    rope.base = cfg.rope_base;
    rope.mode = cfg.rope_mode;
    rope.validate();
    return rope;
}

inline Matrix denoise_window(const Denoiser& denoiser, const Matrix& window, const TimestepPair& step,
                             const WindowPositions& wp, ConditionId condition, const NoiseSchedule& sched) {
    const Matrix eps = denoiser.predict_eps(window, step.t, wp.positions, wp.rope, condition);
    if (eps.rows() != window.rows() || eps.cols() != window.cols()) {
        throw std::logic_error("denoiser returned a prediction of the wrong shape");
    }
    return ddim_step(window, eps, step.t, step.t_prev, sched);
}

inline void check_after_step(const LatentCycle& cycle, std::size_t step_index, const TimestepPair& step) {
    if (!cycle.uniform_noise_level() || cycle.noise_level() != step.t_prev) {
        throw std::logic_error("latents left at mixed noise levels after step " + std::to_string(step_index));
    }
    if (!cycle.all_finite()) {
        throw NumericError("non-finite latents after step " + std::to_string(step_index) + " (t=" +
                           std::to_string(step.t) + " -> " + std::to_string(step.t_prev) + ")");
    }
}

inline void check_cycle(const LatentCycle& cycle, const GenerationConfig& cfg, const Denoiser& denoiser,
                        const TimestepPlan& plan) {
    if (cycle.size() != cfg.N || cycle.dim() != denoiser.latent_dim()) {
        throw ConfigError("generation: initial latents must be N x latent_dim");
    }
    if (!cycle.uniform_noise_level() || cycle.noise_level() != plan.front().t) {
        throw ConfigError("generation: initial latents must sit at the first plan timestep");
    }
}

} // namespace pipeline_detail

// Latent-shift denoising of a cycle. At step k the window lattice starts at
// j = (k s + offset) mod N; all N/f windows are denoised from the same
// snapshot so every latent advances exactly one noise level per step.
inline LatentCycle run_looping(const GenerationConfig& cfg, const NoiseSchedule& sched, const Denoiser& denoiser,
                               LatentCycle cycle, const StepObserver& observer = {}) {
    cfg.validate(denoiser);
    if (cfg.mode != GenerationMode::loop) {
        throw ConfigError("run_looping: config is not in loop mode");
    }
    const TimestepPlan plan = make_timestep_plan(sched.steps(), cfg.plan_steps);
    pipeline_detail::check_cycle(cycle, cfg, denoiser, plan);
    const RopeConfig rope = pipeline_detail::base_rope(cfg, denoiser);

    for (std::size_t k = 0; k < plan.size(); ++k) {
        const std::size_t j = (window_start(k, cfg.skip, cfg.N) + cfg.window_offset) % cfg.N;
        StepTrace trace{k, plan[k].t, plan[k].t_prev, tile_window_starts(j, cfg.f, cfg.N)};
        const LatentCycle snapshot = cycle;
        for (std::size_t start : trace.starts) {
            const WindowPositions wp = positions_for_window(start, cfg.f, cfg.N, rope);
            const Matrix window = snapshot.extract_window(start, cfg.f);
            cycle.scatter_window(start,
                                 pipeline_detail::denoise_window(denoiser, window, plan[k], wp, cfg.condition, sched),
                                 plan[k].t_prev);
        }
        pipeline_detail::check_after_step(cycle, k, plan[k]);
        if (observer) {
            observer(trace);
        }
    }
    return cycle;
}

// Non-cyclic displacement for sequences longer than the context: starts are
// j = (k s) mod (N - f + 1), tiled and clamped into [0, N - f]. Overlapping
// windows are scattered in increasing start order, so the later one wins.
inline LatentCycle run_long(const GenerationConfig& cfg, const NoiseSchedule& sched, const Denoiser& denoiser,
                            LatentCycle latents, const StepObserver& observer = {}) {
    cfg.validate(denoiser);
    if (cfg.mode != GenerationMode::long_video) {
        throw ConfigError("run_long: config is not in long mode");
    }
    const TimestepPlan plan = make_timestep_plan(sched.steps(), cfg.plan_steps);
    pipeline_detail::check_cycle(latents, cfg, denoiser, plan);
    const RopeConfig rope = pipeline_detail::base_rope(cfg, denoiser);
    const std::size_t positions = cfg.N - cfg.f + 1;

    for (std::size_t k = 0; k < plan.size(); ++k) {
        const std::size_t j = window_start(k, cfg.skip, positions);
        StepTrace trace{k, plan[k].t, plan[k].t_prev, clamped_window_starts(j, cfg.f, cfg.N)};
        const LatentCycle snapshot = latents;
        for (std::size_t start : trace.starts) {
            const WindowPositions wp = positions_for_span(start, cfg.f, cfg.N, rope);
            const Matrix window = snapshot.extract_window(start, cfg.f);
            latents.scatter_window(start,
                                   pipeline_detail::denoise_window(denoiser, window, plan[k], wp, cfg.condition, sched),
                                   plan[k].t_prev);
        }
        pipeline_detail::check_after_step(latents, k, plan[k]);
        if (observer) {
            observer(trace);
        }
    }
    return latents;
}

inline VideoFrames decode(const TemporalCodec& codec, const Matrix& latents, DecodeMode mode) {
    return mode == DecodeMode::frame_invariant ? codec.decode_frame_invariant(latents) : codec.decode_direct(latents);
}

inline LatentCycle initial_noise(const GenerationConfig& cfg, const NoiseSchedule& sched, const Denoiser& denoiser) {
    const TimestepPlan plan = make_timestep_plan(sched.steps(), cfg.plan_steps);
    return init_cycle(cfg.N, denoiser.latent_dim(), cfg.seed, plan.front().t);
}

inline GenerationResult generate_looping(const GenerationConfig& cfg, const NoiseSchedule& sched,
                                         const Denoiser& denoiser, const TemporalCodec& codec) {
    cfg.validate(denoiser);
    const LatentCycle final_cycle = run_looping(cfg, sched, denoiser, initial_noise(cfg, sched, denoiser));
    return {final_cycle.latents(), decode(codec, final_cycle.latents(), cfg.effective_decode())};
}

inline GenerationResult generate_long(const GenerationConfig& cfg, const NoiseSchedule& sched,
                                      const Denoiser& denoiser, const TemporalCodec& codec) {
    cfg.validate(denoiser);
    const LatentCycle final_latents = run_long(cfg, sched, denoiser, initial_noise(cfg, sched, denoiser));
    return {final_latents.latents(), decode(codec, final_latents.latents(), cfg.effective_decode())};
}

inline GenerationResult generate(const GenerationConfig& cfg, const NoiseSchedule& sched, const Denoiser& denoiser,
                                 const TemporalCodec& codec) {
    return cfg.mode == GenerationMode::loop ? generate_looping(cfg, sched, denoiser, codec)
                                            : generate_long(cfg, sched, denoiser, codec);
}

// Reference sampler: one fixed window at positions 0..f-1, no shifting.
inline Matrix sample_plain_ddim(const Matrix& z_T, const NoiseSchedule& sched, const TimestepPlan& plan,
                                const Denoiser& denoiser, ConditionId condition, const RopeConfig& rope) {
    Matrix z = z_T;
    std::vector<int> positions(static_cast<std::size_t>(z.rows()));
    for (std::size_t i = 0; i < positions.size(); ++i) {
        positions[i] = static_cast<int>(i);
    }
    RopeConfig unscaled = rope;
    unscaled.scale = 1.0;
    for (const TimestepPair& step : plan) {
        const Matrix eps = denoiser.predict_eps(z, step.t, positions, unscaled, condition);
        z = ddim_step(z, eps, step.t, step.t_prev, sched);
    }
    return z;
}

} // namespace loopshift
