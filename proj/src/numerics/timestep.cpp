#include "avdit/numerics/timestep.hpp"

#include <cmath>

namespace avdit {

Tensor timestep_features(double t) {
    if (!(t >= 0.0 && t <= 1.0)) throw Error("timestep " + std::to_string(t) + " outside [0, 1]");
    // Time is scaled to [0, 1000] so the fastest frequency completes many turns.
    const double scaled = 1000.0 * t;
    Tensor out({2 * kTimestepFrequencies});
    for (std::size_t i = 0; i < kTimestepFrequencies; ++i) {
        const double freq = std::exp(-std::log(10000.0) * static_cast<double>(i) / kTimestepFrequencies);
        out[i] = std::cos(scaled * freq);
        out[kTimestepFrequencies + i] = std::sin(scaled * freq);
    }
    return out;
}

TimestepEmbedder::TimestepEmbedder(std::size_t width, Rng& rng)
    : fc1(2 * kTimestepFrequencies, width, rng), fc2(width, width, rng) {}

Tensor TimestepEmbedder::operator()(double t) const {
    Tensor f = reshape(timestep_features(t), {1, 2 * kTimestepFrequencies});
    return reshape(fc2(silu(fc1(f))), {width()});
}

void TimestepEmbedder::collect(ParamList& out, const std::string& prefix) const {
    fc1.collect(out, prefix + ".fc1");
    fc2.collect(out, prefix + ".fc2");
}

}  // namespace avdit
