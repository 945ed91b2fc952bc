#pragma once

#include <json.hpp>

#include "avdit/numerics/nn.hpp"

namespace avdit::codecs {

struct Posterior {
    Tensor mean;
    Tensor logvar;
};

struct AudioVaeConfig {
    std::size_t in_channels = 32;   // 2F
    std::size_t hidden = 128;
    std::size_t latent = 128;       // C_a
    std::size_t kernel = 8;
    std::size_t stride = 4;         // 100 Hz frames -> 25 Hz tokens
};

/// Causal temporal autoencoder for feature frames. Token j sees frames
/// [stride*j + stride - kernel, stride*j + stride), zero-padded on the left.
class AudioVae {
public:
    AudioVae() = default;
    AudioVae(const AudioVaeConfig& cfg, Rng& rng);

    const AudioVaeConfig& config() const { return cfg_; }
    std::size_t token_count(std::size_t frames) const { return (frames + cfg_.stride - 1) / cfg_.stride; }

    Posterior encode_posterior(const Tensor& frames) const;  // [T, 2F] -> [ceil(T/4), C_a] x2
    Tensor encode(const Tensor& frames) const { return encode_posterior(frames).mean; }
    /// [T_tok, C_a] -> [frames, 2F]; `frames` defaults to stride * T_tok.
    Tensor decode(const Tensor& latent, std::size_t frames = 0) const;

    void collect(ParamList& out, const std::string& prefix) const;

private:
    AudioVaeConfig cfg_;
    Linear enc_conv_, enc_hidden_, enc_mean_, enc_logvar_;
    Linear dec_in_, dec_hidden_, dec_out_;
};

struct VideoVaeConfig {
    std::size_t f_t = 2;
    std::size_t f_s = 4;
    std::size_t channels = 3;
    std::size_t hidden = 128;
    std::size_t latent = 8;  // C_v
};

/// Causal spatiotemporal autoencoder. Latent frame 0 encodes pixel frame 0
/// alone; latent frame j >= 1 encodes pixel frames f_t*(j-1)+1 .. f_t*j.
class VideoVae {
public:
    VideoVae() = default;
    VideoVae(const VideoVaeConfig& cfg, Rng& rng);

    const VideoVaeConfig& config() const { return cfg_; }
    Shape latent_shape(const Shape& pixels) const;  // throws on indivisible dims
    std::size_t pixel_frames(std::size_t latent_frames) const { return latent_frames * cfg_.f_t - (cfg_.f_t - 1); }

    Posterior encode_posterior(const Tensor& frames) const;  // [T, H, W, 3] -> [T_lat, H/f_s, W/f_s, C_v]
    Tensor encode(const Tensor& frames) const { return encode_posterior(frames).mean; }
    Tensor decode(const Tensor& latent) const;  // -> [T_lat*f_t-(f_t-1), H, W, 3]

    void collect(ParamList& out, const std::string& prefix) const;

private:
    VideoVaeConfig cfg_;
    Linear enc_conv_, enc_hidden_, enc_mean_, enc_logvar_;
    Linear dec_in_, dec_hidden_, dec_out_;
};

/// Per-channel affine normalization of latents, fitted after codec training
/// so the diffusion model sees roughly unit-scale inputs.
struct LatentStats {
    std::vector<double> mean;
    std::vector<double> std;

    static LatentStats fit(const std::vector<Tensor>& latents);  // channels = last dim
    static LatentStats identity(std::size_t channels);
    Tensor normalize(const Tensor& latent) const;
    Tensor denormalize(const Tensor& latent) const;
};

void to_json(nlohmann::json& j, const LatentStats& s);
void from_json(const nlohmann::json& j, LatentStats& s);
void to_json(nlohmann::json& j, const AudioVaeConfig& c);
void from_json(const nlohmann::json& j, AudioVaeConfig& c);
void to_json(nlohmann::json& j, const VideoVaeConfig& c);
void from_json(const nlohmann::json& j, VideoVaeConfig& c);

/// Sum over elements of KL(N(mean, exp(logvar)) || N(0, 1)) divided by element count.
Tensor kl_to_standard(const Posterior& p);

}  // namespace avdit::codecs
