#pragma once

#include "avdit/numerics/nn.hpp"

namespace avdit {

inline constexpr std::size_t kTimestepFrequencies = 32;

/// Fixed sinusoidal features of a diffusion time t in [0, 1]: 32 geometric
/// frequencies with base 10000, laid out as [cos..., sin...].
Tensor timestep_features(double t);

/// Sinusoidal features followed by a learned two-layer map (SiLU between).
struct TimestepEmbedder {
    Linear fc1, fc2;

    TimestepEmbedder() = default;
    TimestepEmbedder(std::size_t width, Rng& rng);

    /// Returns [width]. Rejects t outside [0, 1].
    Tensor operator()(double t) const;
    std::size_t width() const { return fc2.out_features(); }
    void collect(ParamList& out, const std::string& prefix) const;
};

}  // namespace avdit
