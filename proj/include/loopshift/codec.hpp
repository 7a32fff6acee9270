#pragma once

#include "loopshift/errors.hpp"
#include "loopshift/types.hpp"

#include <cstddef>
#include <cstdint>
#include <random>
#include <string>
#include <utility>

namespace loopshift {

// Decoded frame sequence; each row is one frame vector.
struct VideoFrames {
    Matrix frames;
    double fps = 8.0;

    std::size_t count() const { return static_cast<std::size_t>(frames.rows()); }
    std::size_t dim() const { return static_cast<std::size_t>(frames.cols()); }
};

struct CodecConfig {
    int rate = 4;
    std::size_t latent_dim = 8;
    std::size_t frame_dim = 64;
    // Tail latents copied in front of the cycle for frame-invariant decoding.
    std::size_t prepend = 3;
    std::uint64_t seed = 11;
};

// Toy temporal autoencoder with video-VAE style asymmetry: latent 0 decodes to
// a single frame, every later latent decodes (together with its predecessor)
// to `rate` frames. The per-latent maps are fixed linear maps; the decoder has
// orthonormal columns and the encoder is its transpose, so enc(dec(z)) = z.
class TemporalCodec {
public:
    explicit TemporalCodec(const CodecConfig& cfg) : rate_(cfg.rate), prepend_(cfg.prepend) {
        if (cfg.latent_dim < 1 || cfg.frame_dim < cfg.latent_dim) {
            throw ConfigError("codec: need 1 <= latent_dim <= frame_dim");
        }
        std::mt19937_64 rng(cfg.seed);
        std::normal_distribution<double> normal(0.0, 1.0);
        Matrix gaussian(static_cast<long>(cfg.frame_dim), static_cast<long>(cfg.latent_dim));
        for (long i = 0; i < gaussian.size(); ++i) {
            gaussian.data()[i] = normal(rng);
        }
        const Eigen::HouseholderQR<Matrix> qr(gaussian);
        decoder_ = qr.householderQ() * Matrix::Identity(gaussian.rows(), gaussian.cols());
        encoder_ = decoder_.transpose();
        validate();
    }

    // decoder: frame_dim x latent_dim, encoder: latent_dim x frame_dim.
    TemporalCodec(int rate, std::size_t prepend, Matrix decoder, Matrix encoder)
        : rate_(rate), prepend_(prepend), decoder_(std::move(decoder)), encoder_(std::move(encoder)) {
        if (encoder_.rows() != decoder_.cols() || encoder_.cols() != decoder_.rows()) {
            throw ConfigError("codec: encoder and decoder shapes are not transposed");
        }
        validate();
    }

    int rate() const { return rate_; }
    std::size_t prepend() const { return prepend_; }
    std::size_t latent_dim() const { return static_cast<std::size_t>(decoder_.cols()); }
    std::size_t frame_dim() const { return static_cast<std::size_t>(decoder_.rows()); }
    const Matrix& decoder() const { return decoder_; }
    const Matrix& encoder() const { return encoder_; }

    static std::size_t direct_frame_count(std::size_t latents, int rate) {
        return 1 + static_cast<std::size_t>(rate) * (latents - 1);
    }

    // 1 + r(f-1) frames: frame 0 = dec(z_0); latent i >= 1 contributes r frames
    // interpolating dec(z_{i-1}) -> dec(z_i) at fractions 1/r, ..., r/r.
    VideoFrames decode_direct(const Matrix& latents) const {
        if (latents.rows() < 1) {
            throw ConfigError("decode_direct: no latents");
        }
        check_latents(latents);
        const Matrix decoded = latents * decoder_.transpose();
        const long f = latents.rows();
        const long count = static_cast<long>(direct_frame_count(static_cast<std::size_t>(f), rate_));
        VideoFrames out;
        out.frames.resize(count, decoded.cols());
        out.frames.row(0) = decoded.row(0);
        long row = 1;
        for (long i = 1; i < f; ++i) {
            for (int q = 1; q <= rate_; ++q) {
                const double a = static_cast<double>(q) / static_cast<double>(rate_);
                out.frames.row(row++) = (1.0 - a) * decoded.row(i - 1) + a * decoded.row(i);
            }
        }
        return out;
    }

    // r*N frames for a latent cycle: the last `prepend` latents are copied in
    // front, the extended sequence is decoded directly, and the frames owed to
    // the copies (1 + r(p-1)) are dropped. Latent 0 then decodes with the wrap
    // neighbour as context like every other latent.
    VideoFrames decode_frame_invariant(const Matrix& cycle) const {
        const std::size_t N = static_cast<std::size_t>(cycle.rows());
        if (N < prepend_) {
            throw ConfigError("decode_frame_invariant: cycle of " + std::to_string(N) + " latents is shorter than prepend " +
                              std::to_string(prepend_));
        }
        check_latents(cycle);
        const long p = static_cast<long>(prepend_);
        Matrix extended(static_cast<long>(N) + p, cycle.cols());
        extended.topRows(p) = cycle.bottomRows(p);
        extended.bottomRows(static_cast<long>(N)) = cycle;
        VideoFrames full = decode_direct(extended);
        const long drop = 1 + static_cast<long>(rate_) * (p - 1);
        VideoFrames out;
        out.fps = full.fps;
        out.frames = full.frames.bottomRows(full.frames.rows() - drop);
        return out;
    }

    // Inverse of decode_direct at the stride positions: z_0 = enc(frame 0),
    // z_i = enc(frame r*i). Requires F = 1 + r(f-1).
    Matrix encode(const VideoFrames& video) const {
        const std::size_t F = video.count();
        if (F < 1 || (F - 1) % static_cast<std::size_t>(rate_) != 0) {
            throw ConfigError("encode: frame count " + std::to_string(F) + " is not of the form 1 + r(f-1)");
        }
        if (video.dim() != frame_dim()) {
            throw ConfigError("encode: frame dimension mismatch");
        }
        const long f = static_cast<long>(1 + (F - 1) / static_cast<std::size_t>(rate_));
        Matrix sampled(f, video.frames.cols());
        for (long i = 0; i < f; ++i) {
            sampled.row(i) = video.frames.row(i * rate_);
        }
        return sampled * encoder_.transpose();
    }

private:
    void validate() const {
        if (rate_ < 2) {
            throw ConfigError("codec: temporal rate must be >= 2");
        }
        if (prepend_ < 1) {
            throw ConfigError("codec: prepend count must be >= 1");
        }
        if (decoder_.cols() < 1 || decoder_.rows() < decoder_.cols()) {
            throw ConfigError("codec: decoder must be frame_dim x latent_dim with frame_dim >= latent_dim");
        }
    }

    void check_latents(const Matrix& latents) const {
        if (latents.cols() != decoder_.cols()) {
            throw ConfigError("codec: latent dimension mismatch");
        }
    }

    int rate_;
    std::size_t prepend_;
    Matrix decoder_;
    Matrix encoder_;
};

} // namespace loopshift
