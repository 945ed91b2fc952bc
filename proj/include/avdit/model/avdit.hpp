#pragma once

#include <array>
#include <optional>

#include "avdit/model/config.hpp"
#include "avdit/model/layers.hpp"
#include "avdit/numerics/timestep.hpp"

namespace avdit::model {

using posenc::Stream;

template <class T>
struct PerStream {
    T video{};
    T audio{};
    T& operator[](Stream s) { return s == Stream::video ? video : audio; }
    const T& operator[](Stream s) const { return s == Stream::video ? video : audio; }
};

/// video_to_audio: video queries attending to audio keys ([T_v, T_a] maps).
/// audio_to_video: audio queries attending to video keys ([T_a, T_v] maps).
enum class AttnDirection { video_to_audio, audio_to_video };

/// AV cross-attention probabilities from one forward pass, averaged over
/// heads, one [T_q, T_kv] map per layer and direction.
struct AttentionCapture {
    std::vector<Tensor> video_to_audio;
    std::vector<Tensor> audio_to_video;
    const std::vector<Tensor>& maps(AttnDirection d) const {
        return d == AttnDirection::video_to_audio ? video_to_audio : audio_to_video;
    }
};

/// Frozen-encoder output for one prompt after standardization and
/// flattening, [T_max, D*L]. Constant with respect to every parameter.
struct PromptFeatures {
    Tensor flat;
    std::size_t prompt_len = 0;
};

PromptFeatures prompt_features(const std::vector<text::TokenId>& prompt, const text::EncoderConfig& cfg);

struct ForwardArgs {
    Tensor video_latent;  // [T, H, W, C_v]
    Tensor audio_latent;  // [T_a, C_a]
    double t_video = 1.0;
    double t_audio = 1.0;
    PerStream<text::TextConditioning> cond;
    PerStream<bool> drop_text;
    PerStream<bool> drop_modal;
    /// (t0, y0, x0) of the video latent on the full latent grid; tiles keep
    /// global RoPE coordinates so co-timed audio stays aligned.
    std::array<std::size_t, 3> video_origin{0, 0, 0};
    /// Token offset of the audio latent on the full audio timeline.
    std::size_t audio_origin = 0;
    AttentionCapture* capture = nullptr;
};

struct Velocity {
    Tensor video;  // same shape as the video latent
    Tensor audio;  // same shape as the audio latent
};

/// One stream's half of a dual-stream block.
struct StreamBlock {
    RmsNorm norm_self, norm_text, norm_av, norm_ffn;
    nn::Attention self_attn, text_attn;
    Tensor text_gate;  // [d], zero-init
    Linear adaln;      // temb -> shift/scale/gate for self-attention and FFN
    nn::FeedForward ffn;
    // AV cross-attention with this stream as the query side.
    Linear av_q, av_k, av_v, av_out;
    Linear av_mod_q;   // own temb -> shift/scale of Q
    Linear av_mod_kv;  // other stream's temb -> shift/scale of K and V
    Linear av_gate;    // other stream's temb -> output gate, zero-init

    StreamBlock() = default;
    StreamBlock(const StreamConfig& self, const StreamConfig& other, std::size_t cross_dim, std::size_t cross_heads,
                Rng& rng);
    void collect(ParamList& out, const std::string& prefix) const;
};

struct StreamState {
    Tensor hidden;               // [tokens, d_model]
    Tensor temb;                 // silu(timestep embedding), [d_model]
    posenc::RopeTables self_rope;
    posenc::RopeTables cross_rope;
    Tensor cond;                 // [T_max, d_model]
};

/// Asymmetric dual-stream diffusion transformer with bidirectional AV
/// cross-attention, plus the text feature projection and per-stream
/// connectors that condition it.
class AvDiT {
public:
    explicit AvDiT(const ModelConfig& cfg);

    const ModelConfig& config() const { return cfg_; }

    /// Projects prompt features with W and refines them per stream.
    PerStream<text::TextConditioning> condition(const PromptFeatures& prompt) const;
    text::TextConditioning null_conditioning(Stream s) const;

    Velocity forward(const ForwardArgs& args) const;

    /// One dual-stream block applied in place to both streams' hidden states.
    void block_forward(std::size_t index, StreamState& video, StreamState& audio, const PerStream<bool>& drop_modal,
                       AttentionCapture* capture) const;

    /// AV cross-attention up to (not including) the output projection and
    /// gate: [T_q, cross_dim]. Exposed for probing the attention itself.
    Tensor av_attended(const StreamBlock& blk, const Tensor& q_src, const Tensor& kv_src, const StreamState& q_state,
                       const StreamState& kv_state, Tensor* probs) const;
    const StreamBlock& block(Stream s, std::size_t index) const { return params(s).blocks.at(index); }
    StreamState embed(Stream s, const Tensor& tokens, double t, const posenc::TokenCoords& coords,
                      const text::TextConditioning& cond, bool drop_text) const;

    ParamList parameters() const;
    ParamList stream_parameters(Stream s) const;
    /// Overwrites every zero-initialized gate/modulation with noise. Used to
    /// exercise all paths in gradient and coupling tests.
    void randomize_gates(Rng& rng, double std = 0.1);

private:
    struct StreamParams {
        TimestepEmbedder temb;
        Linear in_proj;
        std::vector<StreamBlock> blocks;
        RmsNorm norm_out;
        Linear final_mod;  // temb -> shift/scale before the output projection
        Linear out_proj;
        Tensor null_modal;  // learned stand-in for the OTHER stream's hidden state
        text::TextConnector connector;
    };

    ModelConfig cfg_;
    text::FeatureExtractor features_;
    StreamParams video_, audio_;

    const StreamParams& params(Stream s) const { return s == Stream::video ? video_ : audio_; }
    Tensor project_out(Stream s, const StreamState& st) const;
    Tensor av_cross(const StreamBlock& blk, const Tensor& q_src, const Tensor& kv_src, const StreamState& q_state,
                    const StreamState& kv_state, Tensor* probs) const;
};

/// Parameter count of each stream's own blocks, embedders and projections.
PerStream<std::size_t> stream_parameter_counts(const AvDiT& model);

}  // namespace avdit::model
