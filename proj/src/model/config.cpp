#include "avdit/model/config.hpp"

#include <cstdio>

namespace avdit::model {

ModelConfig ModelConfig::tiny() {
    ModelConfig c;
    c.video = {32, 2, 64, 4};
    c.audio = {16, 1, 32, 8};
    c.depth = 1;
    c.cross_dim = 16;
    c.cross_heads = 1;
    c.encoder = {8, 2, 6};
    c.text_cond_dim = 8;
    c.connector_blocks = 1;
    c.connector_heads = 1;
    c.max_thinking = 2;
    return c;
}

void ModelConfig::validate() const {
    auto check = [](bool ok, const std::string& what) {
        if (!ok) throw Error("model config: " + what);
    };
    check(depth >= 1, "depth must be >= 1");
    for (const auto* s : {&video, &audio}) {
        check(s->heads > 0 && s->d_model % s->heads == 0, "d_model must be divisible by heads");
        check((s->d_model / s->heads) % 2 == 0, "head dim must be even for RoPE");
        check(s->latent_channels > 0, "latent_channels must be positive");
    }
    check(video.d_model > audio.d_model, "video stream must be wider than audio stream");
    check(cross_heads > 0 && cross_dim % cross_heads == 0 && (cross_dim / cross_heads) % 2 == 0,
          "cross_dim must split into even-width heads");
    check(connector_heads > 0 && text_cond_dim % connector_heads == 0 && (text_cond_dim / connector_heads) % 2 == 0,
          "text_cond_dim must split into even-width heads");
    check(max_thinking <= encoder.max_tokens, "max_thinking exceeds T_max");
    check(video_frame_rate > 0.0 && audio_token_rate > 0.0, "rates must be positive");
    rope_for(video.d_model / video.heads).axis_dims();
}

posenc::RopeConfig ModelConfig::rope_for(std::size_t head_dim) const {
    posenc::RopeConfig r;
    r.head_dim = head_dim;
    r.base = rope_base;
    r.position_scale = position_scale;
    return r;
}

namespace {

nlohmann::json stream_json(const StreamConfig& s) {
    return {{"d_model", s.d_model}, {"heads", s.heads}, {"d_ffn", s.d_ffn}, {"latent_channels", s.latent_channels}};
}

StreamConfig stream_from(const nlohmann::json& j) {
    return {j.at("d_model").get<std::size_t>(), j.at("heads").get<std::size_t>(), j.at("d_ffn").get<std::size_t>(),
            j.at("latent_channels").get<std::size_t>()};
}

}  // namespace

void to_json(nlohmann::json& j, const ModelConfig& c) {
    j = {{"video", stream_json(c.video)},
         {"audio", stream_json(c.audio)},
         {"depth", c.depth},
         {"cross_dim", c.cross_dim},
         {"cross_heads", c.cross_heads},
         {"text_embed_dim", c.encoder.embed_dim},
         {"text_layers", c.encoder.layers},
         {"text_max_tokens", c.encoder.max_tokens},
         {"text_cond_dim", c.text_cond_dim},
         {"connector_blocks", c.connector_blocks},
         {"connector_heads", c.connector_heads},
         {"max_thinking", c.max_thinking},
         {"rope_base", c.rope_base},
         {"position_scale", c.position_scale},
         {"video_frame_rate", c.video_frame_rate},
         {"audio_token_rate", c.audio_token_rate},
         {"av_cross", c.av_cross},
         {"init_seed", c.init_seed}};
}

void from_json(const nlohmann::json& j, ModelConfig& c) {
    c.video = stream_from(j.at("video"));
    c.audio = stream_from(j.at("audio"));
    c.depth = j.at("depth");
    c.cross_dim = j.at("cross_dim");
    c.cross_heads = j.at("cross_heads");
    c.encoder.embed_dim = j.at("text_embed_dim");
    c.encoder.layers = j.at("text_layers");
    c.encoder.max_tokens = j.at("text_max_tokens");
    c.text_cond_dim = j.at("text_cond_dim");
    c.connector_blocks = j.at("connector_blocks");
    c.connector_heads = j.at("connector_heads");
    c.max_thinking = j.at("max_thinking");
    c.rope_base = j.at("rope_base");
    c.position_scale = j.at("position_scale");
    c.video_frame_rate = j.at("video_frame_rate");
    c.audio_token_rate = j.at("audio_token_rate");
    c.av_cross = j.at("av_cross");
    c.init_seed = j.at("init_seed");
}

std::string config_hash(const nlohmann::json& j) {
    const std::string s = j.dump();
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

}  // namespace avdit::model
