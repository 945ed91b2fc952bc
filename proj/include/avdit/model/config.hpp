#pragma once

#include <json.hpp>
#include <string>

#include "avdit/posenc/rope.hpp"
#include "avdit/textcond/connector.hpp"
#include "avdit/textcond/features.hpp"

namespace avdit::model {

struct StreamConfig {
    std::size_t d_model = 128;
    std::size_t heads = 4;
    std::size_t d_ffn = 512;
    std::size_t latent_channels = 8;
};

struct ModelConfig {
    StreamConfig video{128, 4, 512, 8};
    StreamConfig audio{64, 2, 256, 128};
    std::size_t depth = 4;
    std::size_t cross_dim = 64;    // d_x, shared AV cross-attention width
    std::size_t cross_heads = 2;
    text::EncoderConfig encoder;
    std::size_t text_cond_dim = 64;
    std::size_t connector_blocks = 2;
    std::size_t connector_heads = 2;
    std::size_t max_thinking = 8;
    double rope_base = 10000.0;
    double position_scale = 25.0;
    double video_frame_rate = 5.0;   // latent frames per second
    double audio_token_rate = 25.0;  // latent tokens per second
    bool av_cross = true;            // false: unimodal ablation, AV sub-layer removed
    std::uint64_t init_seed = 1234;

    /// depth 4, video 128/4 heads, audio 64/2 heads, d_ffn = 4 * d_model.
    static ModelConfig reference() { return ModelConfig{}; }
    /// Small variant used by gradient checks and fast tests.
    static ModelConfig tiny();

    /// Throws on inconsistent widths (heads, RoPE splits, stream asymmetry).
    void validate() const;
    posenc::RopeConfig rope_for(std::size_t head_dim) const;
};

void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);

/// 64-bit FNV-1a over the canonical JSON dump, as 16 hex digits.
std::string config_hash(const nlohmann::json& j);

}  // namespace avdit::model
