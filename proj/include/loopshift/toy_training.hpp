#pragma once

#include "loopshift/errors.hpp"
#include "loopshift/periodic_dataset.hpp"
#include "loopshift/rope.hpp"
#include "loopshift/schedule.hpp"
#include "loopshift/toy_transformer.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace loopshift {

struct TrainConfig {
    ToyArchitecture arch;
    std::size_t dataset_cycle = 16;
    std::uint64_t dataset_seed = 7;
    std::uint64_t seed = 0;
    long steps = 20000;
    int batch = 64;
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_epsilon = 1e-8;
    double rope_base = 10000.0;

    void validate() const {
        arch.validate();
        if (steps < 1) {
            throw ConfigError("training needs steps >= 1");
        }
        if (batch < 1) {
            throw ConfigError("training batch must be >= 1");
        }
        if (!(learning_rate > 0.0)) {
            throw ConfigError("learning rate must be positive");
        }
        if (dataset_cycle < static_cast<std::size_t>(arch.max_context)) {
            throw ConfigError("dataset cycle must be at least the model context");
        }
    }
};

// Adam optimizer state, shaped like the parameters.
template <typename Scalar>
struct AdamState {
    ToyTransformerParams<Scalar> first;
    ToyTransformerParams<Scalar> second;
    long step = 0;

    static AdamState zeros(const ToyArchitecture& arch) {
        return {ToyTransformerParams<Scalar>::zeros(arch), ToyTransformerParams<Scalar>::zeros(arch), 0};
    }
};

template <typename Scalar>
void adam_update(ToyTransformerParams<Scalar>& params, const ToyTransformerParams<Scalar>& grads,
                 AdamState<Scalar>& state, const TrainConfig& cfg) {
    ++state.step;
    const double correction1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
    const double correction2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
    const Scalar b1 = static_cast<Scalar>(cfg.beta1);
    const Scalar b2 = static_cast<Scalar>(cfg.beta2);
    const Scalar lr = static_cast<Scalar>(cfg.learning_rate);
    const Scalar eps = static_cast<Scalar>(cfg.adam_epsilon);
    const Scalar c1 = static_cast<Scalar>(correction1);
    const Scalar c2 = static_cast<Scalar>(std::sqrt(correction2));
    auto p = params.tensors();
    auto g = grads.tensors();
    auto m = state.first.tensors();
    auto v = state.second.tensors();
    for (std::size_t i = 0; i < p.size(); ++i) {
        m[i].second->array() = b1 * m[i].second->array() + (Scalar(1) - b1) * g[i].second->array();
        v[i].second->array() = b2 * v[i].second->array() + (Scalar(1) - b2) * g[i].second->array().square();
        p[i].second->array() -= lr * (m[i].second->array() / c1) / (v[i].second->array().sqrt() / c2 + eps);
    }
}

// Everything needed to continue training bit-identically.
struct TrainState {
    ToyTransformerParams<float> params;
    AdamState<float> adam;
    long step = 0;
};

struct TrainResult {
    TrainState state;
    // (global step, loss) for the steps run in this call.
    std::vector<std::pair<long, double>> losses;
};

struct TrainingBatch {
    MatrixT<float> noisy;
    MatrixT<float> noise;
    std::vector<int> timesteps;
    std::vector<ConditionId> conditions;
};

// Batch for a given global step. Seeding from (seed, step) makes the stream
// independent of where a run was resumed.
inline TrainingBatch make_training_batch(const PeriodicDataset& data, const NoiseSchedule& sched, const TrainConfig& cfg,
                                         long step) {
    std::seed_seq seq{static_cast<std::uint32_t>(cfg.seed), static_cast<std::uint32_t>(cfg.seed >> 32),
                      static_cast<std::uint32_t>(step), static_cast<std::uint32_t>(static_cast<std::uint64_t>(step) >> 32)};
    std::mt19937_64 rng(seq);
    std::uniform_int_distribution<std::uint32_t> pick_class(0, static_cast<std::uint32_t>(data.classes() - 1));
    std::uniform_real_distribution<double> pick_phase(0.0, 1.0);
    std::uniform_int_distribution<std::size_t> pick_start(0, data.cycle_length() - 1);
    std::uniform_int_distribution<int> pick_t(1, sched.steps());
    std::normal_distribution<double> normal(0.0, 1.0);

    const std::size_t f = static_cast<std::size_t>(cfg.arch.max_context);
    const long D = static_cast<long>(data.dim());
    TrainingBatch batch;
    batch.noisy.resize(static_cast<long>(cfg.batch * f), D);
    batch.noise.resize(static_cast<long>(cfg.batch * f), D);
    for (int b = 0; b < cfg.batch; ++b) {
        const ConditionId c{pick_class(rng)};
        const double phase = pick_phase(rng);
        const std::size_t start = pick_start(rng);
        const int t = pick_t(rng);
        const Matrix x0 = data.frames(c, phase, start, f);
        Matrix eps(x0.rows(), x0.cols());
        for (long i = 0; i < eps.size(); ++i) {
            eps.data()[i] = normal(rng);
        }
        const Matrix z = add_noise(x0, eps, t, sched);
        batch.noisy.middleRows(static_cast<long>(b * f), static_cast<long>(f)) = z.cast<float>();
        batch.noise.middleRows(static_cast<long>(b * f), static_cast<long>(f)) = eps.cast<float>();
        batch.timesteps.push_back(t);
        batch.conditions.push_back(c);
    }
    return batch;
}

inline std::vector<int> trained_positions(const ToyArchitecture& arch) {
    std::vector<int> positions(static_cast<std::size_t>(arch.max_context));
    std::iota(positions.begin(), positions.end(), 0);
    return positions;
}

inline RopeConfig trained_rope(const ToyArchitecture& arch, double base) {
    RopeConfig rope;
    rope.head_dim = arch.head_dim;
    rope.base = base;
    return rope;
}

inline TrainState fresh_train_state(const TrainConfig& cfg) {
    return {init_toy_params<float>(cfg.arch, cfg.seed), AdamState<float>::zeros(cfg.arch), 0};
}

// Minimizes ||eps - eps_theta(z_t; c, t)||^2 on windows of the periodic dataset.
// Runs cfg.steps further steps starting from `resume` (or a fresh init).
inline TrainResult train_toy(const TrainConfig& cfg, const PeriodicDataset& data, const NoiseSchedule& sched,
                             std::optional<TrainState> resume = std::nullopt,
                             const std::function<void(long, double)>& on_step = {}) {
    cfg.validate();
    if (data.dim() != static_cast<std::size_t>(cfg.arch.latent_dim) ||
        data.classes() != static_cast<std::size_t>(cfg.arch.classes)) {
        throw ConfigError("training: dataset shape does not match the architecture");
    }
    TrainResult result;
    result.state = resume ? std::move(*resume) : fresh_train_state(cfg);
    if (!(result.state.params.arch == cfg.arch)) {
        throw ConfigError("training: resumed checkpoint has a different architecture");
    }
    const std::vector<int> positions = trained_positions(cfg.arch);
    const RopeConfig rope = trained_rope(cfg.arch, cfg.rope_base);

    ToyForwardCache<float> cache;
    ToyTransformerParams<float> grads = ToyTransformerParams<float>::zeros(cfg.arch);
    const long end = result.state.step + cfg.steps;
    result.losses.reserve(static_cast<std::size_t>(cfg.steps));
    for (long step = result.state.step; step < end; ++step) {
        const TrainingBatch batch = make_training_batch(data, sched, cfg, step);
        const MatrixT<float> prediction = toy_forward_batch<float>(result.state.params, batch.noisy, batch.timesteps,
                                                                   batch.conditions, positions, rope, &cache);
        MatrixT<float> d_prediction;
        const double loss = mse_loss(prediction, batch.noise, &d_prediction);
        if (!std::isfinite(loss)) {
            throw NumericError("training diverged: non-finite loss at step " + std::to_string(step));
        }
        for (auto& [name, tensor] : grads.tensors()) {
            tensor->setZero();
        }
        toy_backward<float>(result.state.params, cache, positions, rope, d_prediction, grads);
        adam_update(result.state.params, grads, result.state.adam, cfg);
        if (!result.state.params.all_finite()) {
            throw NumericError("training diverged: non-finite parameters after step " + std::to_string(step));
        }
        result.state.step = step + 1;
        result.losses.emplace_back(step, loss);
        if (on_step) {
            on_step(step, loss);
        }
    }
    return result;
}

// Mean of the last window of losses over the mean of the first window, with
// window = clamp(n/10, 1, 100).
inline double smoothed_loss_ratio(const std::vector<std::pair<long, double>>& losses) {
    if (losses.empty()) {
        throw ConfigError("smoothed_loss_ratio: empty loss curve");
    }
    const std::size_t n = losses.size();
    const std::size_t w = std::clamp<std::size_t>(n / 10, 1, 100);
    double head = 0.0;
    double tail = 0.0;
    for (std::size_t i = 0; i < w; ++i) {
        head += losses[i].second;
        tail += losses[n - w + i].second;
    }
    return tail / head;
}

} // namespace loopshift
