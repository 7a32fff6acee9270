#pragma once

#include "loopshift/rope.hpp"
#include "loopshift/types.hpp"

#include <cstddef>
#include <span>

namespace loopshift {

// epsilon-prediction network interface: (noisy window, t, positions, condition) -> eps.
// Implementations must return the input shape and stay finite for finite input.
class Denoiser {
public:
    virtual ~Denoiser() = default;

    virtual Matrix predict_eps(const Matrix& window, int t, std::span<const int> positions,
                               const RopeConfig& rope, ConditionId condition) const = 0;

    virtual std::size_t latent_dim() const = 0;

    // Largest window the denoiser accepts.
    virtual std::size_t max_context() const = 0;

    // Head dimension used for rotary embeddings; models without attention
    // report the library default so NTK scaling stays well defined.
    virtual int head_dim() const { return RopeConfig{}.head_dim; }
};

} // namespace loopshift
