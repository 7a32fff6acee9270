#pragma once

#include "loopshift/denoiser.hpp"
#include "loopshift/errors.hpp"
#include "loopshift/rope.hpp"
#include "loopshift/types.hpp"

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace loopshift {

struct ToyArchitecture {
    int layers = 2;
    int width = 64;
    int heads = 2;
    int head_dim = 32;
    int latent_dim = 8;
    int classes = 4;
    int max_context = 8;
    int mlp_hidden = 128;

    void validate() const {
        if (layers < 1 || width < 2 || heads < 1 || latent_dim < 1 || classes < 1 || max_context < 1 ||
            mlp_hidden < 1) {
            throw ConfigError("toy architecture: all sizes must be positive");
        }
        if (head_dim < 2 || head_dim % 2 != 0) {
            throw ConfigError("toy architecture: head dimension must be even (rotary pairs)");
        }
        if (heads * head_dim != width) {
            throw ConfigError("toy architecture: width must equal heads * head_dim");
        }
        if (width % 2 != 0) {
            throw ConfigError("toy architecture: width must be even (sinusoidal time embedding)");
        }
    }

    bool operator==(const ToyArchitecture&) const = default;
};

template <typename Scalar>
struct ToyLayer {
    MatrixT<Scalar> ln1_gain, ln1_bias;
    MatrixT<Scalar> qkv_weight, qkv_bias;
    MatrixT<Scalar> proj_weight, proj_bias;
    MatrixT<Scalar> ln2_gain, ln2_bias;
    MatrixT<Scalar> mlp_in_weight, mlp_in_bias;
    MatrixT<Scalar> mlp_out_weight, mlp_out_bias;
};

// Weights use the row-vector convention y = x W + b; biases and layer-norm
// parameters are 1 x n matrices so every tensor has the same type.
template <typename Scalar>
struct ToyTransformerParams {
    ToyArchitecture arch;
    MatrixT<Scalar> input_weight, input_bias;
    MatrixT<Scalar> time_weight, time_bias;
    MatrixT<Scalar> condition_table;
    std::vector<ToyLayer<Scalar>> layers;
    MatrixT<Scalar> final_gain, final_bias;
    MatrixT<Scalar> output_weight, output_bias;

    static ToyTransformerParams zeros(const ToyArchitecture& arch) {
        arch.validate();
        ToyTransformerParams p;
        p.arch = arch;
        const long W = arch.width;
        const long D = arch.latent_dim;
        const long H = arch.mlp_hidden;
        p.input_weight = MatrixT<Scalar>::Zero(D, W);
        p.input_bias = MatrixT<Scalar>::Zero(1, W);
        p.time_weight = MatrixT<Scalar>::Zero(W, W);
        p.time_bias = MatrixT<Scalar>::Zero(1, W);
        p.condition_table = MatrixT<Scalar>::Zero(arch.classes, W);
        p.layers.resize(static_cast<std::size_t>(arch.layers));
        for (ToyLayer<Scalar>& layer : p.layers) {
            layer.ln1_gain = MatrixT<Scalar>::Zero(1, W);
            layer.ln1_bias = MatrixT<Scalar>::Zero(1, W);
            layer.qkv_weight = MatrixT<Scalar>::Zero(W, 3 * W);
            layer.qkv_bias = MatrixT<Scalar>::Zero(1, 3 * W);
            layer.proj_weight = MatrixT<Scalar>::Zero(W, W);
            layer.proj_bias = MatrixT<Scalar>::Zero(1, W);
            layer.ln2_gain = MatrixT<Scalar>::Zero(1, W);
            layer.ln2_bias = MatrixT<Scalar>::Zero(1, W);
            layer.mlp_in_weight = MatrixT<Scalar>::Zero(W, H);
            layer.mlp_in_bias = MatrixT<Scalar>::Zero(1, H);
            layer.mlp_out_weight = MatrixT<Scalar>::Zero(H, W);
            layer.mlp_out_bias = MatrixT<Scalar>::Zero(1, W);
        }
        p.final_gain = MatrixT<Scalar>::Zero(1, W);
        p.final_bias = MatrixT<Scalar>::Zero(1, W);
        p.output_weight = MatrixT<Scalar>::Zero(W, D);
        p.output_bias = MatrixT<Scalar>::Zero(1, D);
        return p;
    }

    // Stable (name, tensor) listing; the order is the checkpoint order.
    std::vector<std::pair<std::string, MatrixT<Scalar>*>> tensors() { return collect<MatrixT<Scalar>>(*this); }
    std::vector<std::pair<std::string, const MatrixT<Scalar>*>> tensors() const {
        return collect<const MatrixT<Scalar>>(*this);
    }

    std::size_t parameter_count() const {
        std::size_t n = 0;
        for (const auto& [name, tensor] : tensors()) {
            n += static_cast<std::size_t>(tensor->size());
        }
        return n;
    }

    template <typename Other>
    ToyTransformerParams<Other> cast() const {
        ToyTransformerParams<Other> out = ToyTransformerParams<Other>::zeros(arch);
        auto src = tensors();
        auto dst = out.tensors();
        for (std::size_t i = 0; i < src.size(); ++i) {
            *dst[i].second = src[i].second->template cast<Other>();
        }
        return out;
    }

    bool all_finite() const {
        for (const auto& [name, tensor] : tensors()) {
            if (!tensor->allFinite()) {
                return false;
            }
        }
        return true;
    }

private:
    template <typename T, typename Self>
    static std::vector<std::pair<std::string, T*>> collect(Self& self) {
        std::vector<std::pair<std::string, T*>> out;
        out.emplace_back("input_weight", &self.input_weight);
        out.emplace_back("input_bias", &self.input_bias);
        out.emplace_back("time_weight", &self.time_weight);
        out.emplace_back("time_bias", &self.time_bias);
        out.emplace_back("condition_table", &self.condition_table);
        for (std::size_t l = 0; l < self.layers.size(); ++l) {
            auto& layer = self.layers[l];
            const std::string prefix = "layers." + std::to_string(l) + ".";
            out.emplace_back(prefix + "ln1_gain", &layer.ln1_gain);
            out.emplace_back(prefix + "ln1_bias", &layer.ln1_bias);
            out.emplace_back(prefix + "qkv_weight", &layer.qkv_weight);
            out.emplace_back(prefix + "qkv_bias", &layer.qkv_bias);
            out.emplace_back(prefix + "proj_weight", &layer.proj_weight);
            out.emplace_back(prefix + "proj_bias", &layer.proj_bias);
            out.emplace_back(prefix + "ln2_gain", &layer.ln2_gain);
            out.emplace_back(prefix + "ln2_bias", &layer.ln2_bias);
            out.emplace_back(prefix + "mlp_in_weight", &layer.mlp_in_weight);
            out.emplace_back(prefix + "mlp_in_bias", &layer.mlp_in_bias);
            out.emplace_back(prefix + "mlp_out_weight", &layer.mlp_out_weight);
            out.emplace_back(prefix + "mlp_out_bias", &layer.mlp_out_bias);
        }
        out.emplace_back("final_gain", &self.final_gain);
        out.emplace_back("final_bias", &self.final_bias);
        out.emplace_back("output_weight", &self.output_weight);
        out.emplace_back("output_bias", &self.output_bias);
        return out;
    }
};

// Gaussian init with std 1/sqrt(fan_in), zero biases, unit layer-norm gains.
template <typename Scalar>
ToyTransformerParams<Scalar> init_toy_params(const ToyArchitecture& arch, std::uint64_t seed) {
    ToyTransformerParams<Scalar> p = ToyTransformerParams<Scalar>::zeros(arch);
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    auto fill = [&](MatrixT<Scalar>& m, double stddev) {
        for (long i = 0; i < m.size(); ++i) {
            m.data()[i] = static_cast<Scalar>(stddev * normal(rng));
        }
    };
    auto fan_in = [](const MatrixT<Scalar>& w) { return 1.0 / std::sqrt(static_cast<double>(w.rows())); };
    fill(p.input_weight, fan_in(p.input_weight));
    fill(p.time_weight, fan_in(p.time_weight));
    fill(p.condition_table, 1.0);
    for (ToyLayer<Scalar>& layer : p.layers) {
        layer.ln1_gain.setOnes();
        layer.ln2_gain.setOnes();
        fill(layer.qkv_weight, fan_in(layer.qkv_weight));
        fill(layer.proj_weight, fan_in(layer.proj_weight));
        fill(layer.mlp_in_weight, fan_in(layer.mlp_in_weight));
        fill(layer.mlp_out_weight, fan_in(layer.mlp_out_weight));
    }
    p.final_gain.setOnes();
    fill(p.output_weight, fan_in(p.output_weight));
    return p;
}

// Sinusoidal embedding of a diffusion timestep: [sin(t w_i), cos(t w_i)] with
// w_i = 10000^(-i / (width/2)).
template <typename Scalar>
MatrixT<Scalar> timestep_embedding(std::span<const int> timesteps, int width) {
    const int half = width / 2;
    MatrixT<Scalar> out(static_cast<long>(timesteps.size()), width);
    for (std::size_t b = 0; b < timesteps.size(); ++b) {
        for (int i = 0; i < half; ++i) {
            const double freq = std::exp(-std::log(10000.0) * static_cast<double>(i) / static_cast<double>(half));
            const double angle = static_cast<double>(timesteps[b]) * freq;
            out(static_cast<long>(b), i) = static_cast<Scalar>(std::sin(angle));
            out(static_cast<long>(b), half + i) = static_cast<Scalar>(std::cos(angle));
        }
    }
    return out;
}

namespace toy_detail {

constexpr double kLayerNormEps = 1e-5;

template <typename Scalar>
struct LayerNormCache {
    MatrixT<Scalar> normalized;
    Eigen::Matrix<Scalar, Eigen::Dynamic, 1> inv_std;
};

template <typename Scalar>
MatrixT<Scalar> layer_norm(const MatrixT<Scalar>& x, const MatrixT<Scalar>& gain, const MatrixT<Scalar>& bias,
                           LayerNormCache<Scalar>& cache) {
    const long rows = x.rows();
    const long cols = x.cols();
    cache.normalized.resize(rows, cols);
    cache.inv_std.resize(rows);
    MatrixT<Scalar> out(rows, cols);
    for (long r = 0; r < rows; ++r) {
        const Scalar mean = x.row(r).mean();
        const Scalar var = (x.row(r).array() - mean).square().mean();
        const Scalar inv_std = Scalar(1) / std::sqrt(var + static_cast<Scalar>(kLayerNormEps));
        cache.inv_std(r) = inv_std;
        cache.normalized.row(r) = (x.row(r).array() - mean) * inv_std;
        out.row(r) = cache.normalized.row(r).cwiseProduct(gain) + bias;
    }
    return out;
}

template <typename Scalar>
MatrixT<Scalar> layer_norm_backward(const MatrixT<Scalar>& d_out, const MatrixT<Scalar>& gain,
                                    const LayerNormCache<Scalar>& cache, MatrixT<Scalar>& d_gain,
                                    MatrixT<Scalar>& d_bias) {
    d_gain += d_out.cwiseProduct(cache.normalized).colwise().sum();
    d_bias += d_out.colwise().sum();
    const long rows = d_out.rows();
    const Scalar n = static_cast<Scalar>(d_out.cols());
    MatrixT<Scalar> d_x(rows, d_out.cols());
    for (long r = 0; r < rows; ++r) {
        const auto d_norm = d_out.row(r).cwiseProduct(gain);
        const Scalar mean_d = d_norm.sum() / n;
        const Scalar mean_dx = d_norm.cwiseProduct(cache.normalized.row(r)).sum() / n;
        d_x.row(r) = cache.inv_std(r) *
                     (d_norm.array() - mean_d - cache.normalized.row(r).array() * mean_dx).matrix();
    }
    return d_x;
}

template <typename Scalar>
Scalar gelu(Scalar u) {
    const Scalar c = static_cast<Scalar>(std::sqrt(2.0 / std::numbers::pi));
    return Scalar(0.5) * u * (Scalar(1) + std::tanh(c * (u + Scalar(0.044715) * u * u * u)));
}

template <typename Scalar>
Scalar gelu_grad(Scalar u) {
    const Scalar c = static_cast<Scalar>(std::sqrt(2.0 / std::numbers::pi));
    const Scalar th = std::tanh(c * (u + Scalar(0.044715) * u * u * u));
    return Scalar(0.5) * (Scalar(1) + th) +
           Scalar(0.5) * u * (Scalar(1) - th * th) * c * (Scalar(1) + Scalar(3 * 0.044715) * u * u);
}

template <typename Scalar>
struct LayerCache {
    MatrixT<Scalar> input;
    LayerNormCache<Scalar> ln1;
    MatrixT<Scalar> ln1_out;
    MatrixT<Scalar> q_rot, k_rot, v;
    std::vector<MatrixT<Scalar>> attention;  // one f x f matrix per (sample, head)
    MatrixT<Scalar> heads_out;
    LayerNormCache<Scalar> ln2;
    MatrixT<Scalar> ln2_out;
    MatrixT<Scalar> mlp_pre;
    MatrixT<Scalar> mlp_act;
};

} // namespace toy_detail

template <typename Scalar>
struct ToyForwardCache {
    std::size_t batch = 0;
    std::size_t context = 0;
    MatrixT<Scalar> input;
    MatrixT<Scalar> time_features;
    std::vector<std::uint32_t> conditions;
    std::vector<toy_detail::LayerCache<Scalar>> layers;
    toy_detail::LayerNormCache<Scalar> final_ln;
    MatrixT<Scalar> final_out;
};

// Batched forward pass. `input` stacks B windows of f rows each (B*f x D);
// all windows share the same rotary positions. Pass a cache to enable
// toy_backward.
template <typename Scalar>
MatrixT<Scalar> toy_forward_batch(const ToyTransformerParams<Scalar>& params, const MatrixT<Scalar>& input,
                                  std::span<const int> timesteps, std::span<const ConditionId> conditions,
                                  std::span<const int> positions, const RopeConfig& rope,
                                  ToyForwardCache<Scalar>* cache = nullptr) {
    const ToyArchitecture& arch = params.arch;
    const std::size_t f = positions.size();
    const std::size_t B = timesteps.size();
    if (f == 0 || static_cast<int>(f) > arch.max_context) {
        throw ConfigError("toy transformer: window length " + std::to_string(f) + " exceeds the maximum context " +
                          std::to_string(arch.max_context));
    }
    if (conditions.size() != B || static_cast<std::size_t>(input.rows()) != B * f) {
        throw ConfigError("toy transformer: batch layout mismatch");
    }
    if (input.cols() != arch.latent_dim) {
        throw ConfigError("toy transformer: latent dimension mismatch");
    }
    if (rope.head_dim != arch.head_dim) {
        throw ConfigError("toy transformer: rope head dimension does not match the model");
    }
    for (const ConditionId& c : conditions) {
        if (c.value >= static_cast<std::uint32_t>(arch.classes)) {
            throw ConfigError("toy transformer: unknown condition id " + std::to_string(c.value));
        }
    }

    const long W = arch.width;
    const long hd = arch.head_dim;
    const long rows = input.rows();
    const Scalar scale = Scalar(1) / std::sqrt(static_cast<Scalar>(hd));
    const RopeTable<Scalar> rope_table(positions, rope);

    MatrixT<Scalar> time_features = timestep_embedding<Scalar>(timesteps, arch.width);
    MatrixT<Scalar> per_sample = time_features * params.time_weight;
    for (std::size_t b = 0; b < B; ++b) {
        per_sample.row(static_cast<long>(b)) +=
            params.time_bias + params.condition_table.row(static_cast<long>(conditions[b].value));
    }
    MatrixT<Scalar> h = input * params.input_weight;
    for (long r = 0; r < rows; ++r) {
        h.row(r) += params.input_bias + per_sample.row(r / static_cast<long>(f));
    }

    if (cache != nullptr) {
        cache->batch = B;
        cache->context = f;
        cache->input = input;
        cache->time_features = time_features;
        cache->conditions.clear();
        for (const ConditionId& c : conditions) {
            cache->conditions.push_back(c.value);
        }
        cache->layers.assign(params.layers.size(), {});
    }

    for (std::size_t l = 0; l < params.layers.size(); ++l) {
        const ToyLayer<Scalar>& layer = params.layers[l];
        toy_detail::LayerCache<Scalar> local;
        toy_detail::LayerCache<Scalar>& lc = cache != nullptr ? cache->layers[l] : local;
        lc.input = h;
        lc.ln1_out = toy_detail::layer_norm(h, layer.ln1_gain, layer.ln1_bias, lc.ln1);
        MatrixT<Scalar> qkv = lc.ln1_out * layer.qkv_weight;
        qkv.rowwise() += layer.qkv_bias.row(0);
        lc.q_rot = qkv.leftCols(W);
        lc.k_rot = qkv.middleCols(W, W);
        lc.v = qkv.rightCols(W);
        for (long r = 0; r < rows; ++r) {
            const std::size_t p = static_cast<std::size_t>(r) % f;
            for (int head = 0; head < arch.heads; ++head) {
                rope_table.rotate(lc.q_rot.row(r).data() + head * hd, p);
                rope_table.rotate(lc.k_rot.row(r).data() + head * hd, p);
            }
        }
        lc.heads_out.resize(rows, W);
        lc.attention.assign(B * static_cast<std::size_t>(arch.heads), MatrixT<Scalar>());
        const long fl = static_cast<long>(f);
        for (std::size_t b = 0; b < B; ++b) {
            const long r0 = static_cast<long>(b) * fl;
            for (int head = 0; head < arch.heads; ++head) {
                const long c0 = head * hd;
                MatrixT<Scalar> scores = scale * lc.q_rot.block(r0, c0, fl, hd) * lc.k_rot.block(r0, c0, fl, hd).transpose();
                for (long i = 0; i < fl; ++i) {
                    const Scalar mx = scores.row(i).maxCoeff();
                    scores.row(i) = (scores.row(i).array() - mx).exp();
                    scores.row(i) /= scores.row(i).sum();
                }
                lc.heads_out.block(r0, c0, fl, hd) = scores * lc.v.block(r0, c0, fl, hd);
                lc.attention[b * static_cast<std::size_t>(arch.heads) + static_cast<std::size_t>(head)] =
                    std::move(scores);
            }
        }
        h += lc.heads_out * layer.proj_weight;
        h.rowwise() += layer.proj_bias.row(0);

        lc.ln2_out = toy_detail::layer_norm(h, layer.ln2_gain, layer.ln2_bias, lc.ln2);
        lc.mlp_pre = lc.ln2_out * layer.mlp_in_weight;
        lc.mlp_pre.rowwise() += layer.mlp_in_bias.row(0);
        lc.mlp_act = lc.mlp_pre.unaryExpr([](Scalar u) { return toy_detail::gelu(u); });
        h += lc.mlp_act * layer.mlp_out_weight;
        h.rowwise() += layer.mlp_out_bias.row(0);
    }

    toy_detail::LayerNormCache<Scalar> local_final;
    toy_detail::LayerNormCache<Scalar>& fc = cache != nullptr ? cache->final_ln : local_final;
    MatrixT<Scalar> final_out = toy_detail::layer_norm(h, params.final_gain, params.final_bias, fc);
    MatrixT<Scalar> out = final_out * params.output_weight;
    out.rowwise() += params.output_bias.row(0);
    if (cache != nullptr) {
        cache->final_out = std::move(final_out);
    }
    return out;
}

// Accumulates d(loss)/d(params) into `grads` given d(loss)/d(output).
template <typename Scalar>
void toy_backward(const ToyTransformerParams<Scalar>& params, const ToyForwardCache<Scalar>& cache,
                  std::span<const int> positions, const RopeConfig& rope, const MatrixT<Scalar>& d_output,
                  ToyTransformerParams<Scalar>& grads) {
    const ToyArchitecture& arch = params.arch;
    const long W = arch.width;
    const long hd = arch.head_dim;
    const std::size_t f = cache.context;
    const long fl = static_cast<long>(f);
    const std::size_t B = cache.batch;
    const Scalar scale = Scalar(1) / std::sqrt(static_cast<Scalar>(hd));
    const RopeTable<Scalar> rope_table(positions, rope);

    grads.output_weight += cache.final_out.transpose() * d_output;
    grads.output_bias += d_output.colwise().sum();
    MatrixT<Scalar> d_h = toy_detail::layer_norm_backward<Scalar>(
        d_output * params.output_weight.transpose(), params.final_gain, cache.final_ln, grads.final_gain,
        grads.final_bias);

    for (std::size_t li = params.layers.size(); li-- > 0;) {
        const ToyLayer<Scalar>& layer = params.layers[li];
        ToyLayer<Scalar>& g = grads.layers[li];
        const toy_detail::LayerCache<Scalar>& lc = cache.layers[li];

        // MLP branch
        g.mlp_out_weight += lc.mlp_act.transpose() * d_h;
        g.mlp_out_bias += d_h.colwise().sum();
        MatrixT<Scalar> d_pre = d_h * layer.mlp_out_weight.transpose();
        d_pre.array() *= lc.mlp_pre.unaryExpr([](Scalar u) { return toy_detail::gelu_grad(u); }).array();
        g.mlp_in_weight += lc.ln2_out.transpose() * d_pre;
        g.mlp_in_bias += d_pre.colwise().sum();
        d_h += toy_detail::layer_norm_backward<Scalar>(d_pre * layer.mlp_in_weight.transpose(), layer.ln2_gain,
                                                       lc.ln2, g.ln2_gain, g.ln2_bias);

        // Attention branch
        g.proj_weight += lc.heads_out.transpose() * d_h;
        g.proj_bias += d_h.colwise().sum();
        const MatrixT<Scalar> d_heads = d_h * layer.proj_weight.transpose();
        MatrixT<Scalar> d_qkv(d_h.rows(), 3 * W);
        for (std::size_t b = 0; b < B; ++b) {
            const long r0 = static_cast<long>(b) * fl;
            for (int head = 0; head < arch.heads; ++head) {
                const long c0 = head * hd;
                const MatrixT<Scalar>& attn =
                    lc.attention[b * static_cast<std::size_t>(arch.heads) + static_cast<std::size_t>(head)];
                const MatrixT<Scalar> d_o = d_heads.block(r0, c0, fl, hd);
                d_qkv.block(r0, 2 * W + c0, fl, hd) = attn.transpose() * d_o;
                MatrixT<Scalar> d_attn = d_o * lc.v.block(r0, c0, fl, hd).transpose();
                for (long i = 0; i < fl; ++i) {
                    const Scalar dot = d_attn.row(i).dot(attn.row(i));
                    d_attn.row(i) = attn.row(i).cwiseProduct((d_attn.row(i).array() - dot).matrix());
                }
                d_attn *= scale;
                d_qkv.block(r0, c0, fl, hd) = d_attn * lc.k_rot.block(r0, c0, fl, hd);
                d_qkv.block(r0, W + c0, fl, hd) = d_attn.transpose() * lc.q_rot.block(r0, c0, fl, hd);
            }
        }
        for (long r = 0; r < d_qkv.rows(); ++r) {
            const std::size_t p = static_cast<std::size_t>(r) % f;
            for (int head = 0; head < arch.heads; ++head) {
                rope_table.rotate(d_qkv.row(r).data() + head * hd, p, true);
                rope_table.rotate(d_qkv.row(r).data() + W + head * hd, p, true);
            }
        }
        g.qkv_weight += lc.ln1_out.transpose() * d_qkv;
        g.qkv_bias += d_qkv.colwise().sum();
        d_h += toy_detail::layer_norm_backward<Scalar>(d_qkv * layer.qkv_weight.transpose(), layer.ln1_gain, lc.ln1,
                                                       g.ln1_gain, g.ln1_bias);
    }

    grads.input_weight += cache.input.transpose() * d_h;
    grads.input_bias += d_h.colwise().sum();
    MatrixT<Scalar> d_sample = MatrixT<Scalar>::Zero(static_cast<long>(B), W);
    for (long r = 0; r < d_h.rows(); ++r) {
        d_sample.row(r / fl) += d_h.row(r);
    }
    grads.time_weight += cache.time_features.transpose() * d_sample;
    grads.time_bias += d_sample.colwise().sum();
    for (std::size_t b = 0; b < B; ++b) {
        grads.condition_table.row(cache.conditions[b]) += d_sample.row(static_cast<long>(b));
    }
}

// Mean squared error between prediction and target, plus its gradient.
template <typename Scalar>
double mse_loss(const MatrixT<Scalar>& prediction, const MatrixT<Scalar>& target, MatrixT<Scalar>* d_prediction) {
    const MatrixT<Scalar> diff = prediction - target;
    const double count = static_cast<double>(diff.size());
    if (d_prediction != nullptr) {
        *d_prediction = diff * static_cast<Scalar>(2.0 / count);
    }
    return diff.template cast<double>().squaredNorm() / count;
}

// Inference wrapper. Runs in double regardless of the training precision.
class ToyTransformerDenoiser final : public Denoiser {
public:
    explicit ToyTransformerDenoiser(ToyTransformerParams<double> params) : params_(std::move(params)) {
        params_.arch.validate();
    }

    Matrix predict_eps(const Matrix& window, int t, std::span<const int> positions, const RopeConfig& rope,
                       ConditionId condition) const override {
        if (positions.size() != static_cast<std::size_t>(window.rows())) {
            throw ConfigError("toy denoiser: need one position per window row");
        }
        const int timesteps[1] = {t};
        const ConditionId conditions[1] = {condition};
        return toy_forward_batch<double>(params_, window, timesteps, conditions, positions, rope);
    }

    std::size_t latent_dim() const override { return static_cast<std::size_t>(params_.arch.latent_dim); }
    std::size_t max_context() const override { return static_cast<std::size_t>(params_.arch.max_context); }
    int head_dim() const override { return params_.arch.head_dim; }

    const ToyTransformerParams<double>& params() const { return params_; }

private:
    ToyTransformerParams<double> params_;
};

} // namespace loopshift
