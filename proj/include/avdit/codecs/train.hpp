#pragma once

#include <vector>

#include "avdit/codecs/vae.hpp"

namespace avdit::codecs {

struct CodecTrainConfig {
    std::size_t steps = 2000;
    std::size_t batch = 8;
    double lr = 1e-3;
    double lr_final = 1e-4;  // linear decay over the run
    double kl_weight = 1e-4;
    std::uint64_t seed = 7;
};

struct CodecTrainReport {
    std::vector<double> loss;  // per step, before the update
    std::vector<double> recon;
};

/// Reconstruction MSE plus kl_weight * KL on reparameterized samples.
/// Throws if a step's loss exceeds 10x the first step's.
CodecTrainReport train_audio_vae(AudioVae& vae, const std::vector<Tensor>& clips, const CodecTrainConfig& cfg);
CodecTrainReport train_video_vae(VideoVae& vae, const std::vector<Tensor>& clips, const CodecTrainConfig& cfg);

/// Mean over clips of ||decode(encode(x)) - x|| / ||x||.
double audio_roundtrip_error(const AudioVae& vae, const std::vector<Tensor>& clips);
double video_roundtrip_error(const VideoVae& vae, const std::vector<Tensor>& clips);

}  // namespace avdit::codecs
