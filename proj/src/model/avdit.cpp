#include "avdit/model/avdit.hpp"

#include <cmath>

namespace avdit::model {

namespace {

Tensor row(const Tensor& v) { return reshape(v, {1, v.numel()}); }

Tensor flat(const Tensor& v) { return reshape(v, {v.numel()}); }

void fill_noise(const Tensor& t, Rng& rng, double std) {
    std::normal_distribution<double> n(0.0, std);
    for (auto& x : Tensor(t).data()) x = n(rng);
}

}  // namespace

PromptFeatures prompt_features(const std::vector<text::TokenId>& prompt, const text::EncoderConfig& cfg) {
    const auto stack = text::stub_encode({prompt}, cfg);
    const Tensor flat3 = text::standardize_layers(stack);
    return PromptFeatures{reshape(flat3, {cfg.max_tokens, cfg.embed_dim * cfg.layers}), prompt.size()};
}

StreamBlock::StreamBlock(const StreamConfig& self, const StreamConfig& other, std::size_t cross_dim,
                         std::size_t cross_heads, Rng& rng)
    : norm_self(self.d_model),
      norm_text(self.d_model),
      norm_av(self.d_model),
      norm_ffn(self.d_model),
      self_attn(self.d_model, self.d_model, self.d_model, self.d_model, self.heads, rng),
      text_attn(self.d_model, self.d_model, self.d_model, self.d_model, self.heads, rng),
      text_gate(make_param_zeros({self.d_model})),
      adaln(Linear::zeros(self.d_model, 6 * self.d_model)),
      ffn(self.d_model, self.d_ffn, rng),
      av_q(self.d_model, cross_dim, rng),
      av_k(other.d_model, cross_dim, rng),
      av_v(other.d_model, cross_dim, rng),
      av_out(cross_dim, self.d_model, rng),
      av_mod_q(Linear::zeros(self.d_model, 2 * cross_dim)),
      av_mod_kv(Linear::zeros(other.d_model, 2 * cross_dim)),
      av_gate(Linear::zeros(other.d_model, self.d_model)) {
    if (cross_heads == 0 || cross_dim % cross_heads != 0) throw Error("stream block: bad cross-attention heads");
    // Self-attention and FFN gates open at init; the AV and text gates stay shut.
    const std::size_t d = self.d_model;
    for (std::size_t i = 0; i < d; ++i) {
        adaln.bias[2 * d + i] = 1.0;
        adaln.bias[5 * d + i] = 1.0;
    }
}

void StreamBlock::collect(ParamList& out, const std::string& p) const {
    norm_self.collect(out, p + ".norm_self");
    self_attn.collect(out, p + ".self_attn");
    norm_text.collect(out, p + ".norm_text");
    text_attn.collect(out, p + ".text_attn");
    out.add(p + ".text_gate", text_gate);
    adaln.collect(out, p + ".adaln");
    norm_ffn.collect(out, p + ".norm_ffn");
    ffn.collect(out, p + ".ffn");
    norm_av.collect(out, p + ".norm_av");
    av_q.collect(out, p + ".av.to_q");
    av_k.collect(out, p + ".av.to_k");
    av_v.collect(out, p + ".av.to_v");
    av_out.collect(out, p + ".av.to_out");
    av_mod_q.collect(out, p + ".av.mod_q");
    av_mod_kv.collect(out, p + ".av.mod_kv");
    av_gate.collect(out, p + ".av.gate");
}

AvDiT::AvDiT(const ModelConfig& cfg) : cfg_(cfg) {
    cfg_.validate();
    Rng rng(cfg_.init_seed);
    features_ = text::FeatureExtractor(cfg_.encoder, cfg_.text_cond_dim, rng);
    auto build = [&](StreamParams& sp, const StreamConfig& self, const StreamConfig& other) {
        sp.temb = TimestepEmbedder(self.d_model, rng);
        sp.in_proj = Linear(self.latent_channels, self.d_model, rng);
        for (std::size_t i = 0; i < cfg_.depth; ++i) {
            sp.blocks.emplace_back(self, other, cfg_.cross_dim, cfg_.cross_heads, rng);
        }
        sp.norm_out = RmsNorm(self.d_model);
        sp.final_mod = Linear::zeros(self.d_model, 2 * self.d_model);
        sp.out_proj = Linear(self.d_model, self.latent_channels, rng, true, 0.1 / std::sqrt(static_cast<double>(self.d_model)));
        sp.null_modal = make_param({other.d_model}, rng, 1.0);
        text::ConnectorConfig cc;
        cc.cond_dim = cfg_.text_cond_dim;
        cc.out_dim = self.d_model;
        cc.heads = cfg_.connector_heads;
        cc.blocks = cfg_.connector_blocks;
        cc.max_thinking = cfg_.max_thinking;
        cc.max_tokens = cfg_.encoder.max_tokens;
        sp.connector = text::TextConnector(cc, rng);
    };
    build(video_, cfg_.video, cfg_.audio);
    build(audio_, cfg_.audio, cfg_.video);
}

PerStream<text::TextConditioning> AvDiT::condition(const PromptFeatures& prompt) const {
    const Tensor features = features_.project(prompt.flat);
    return {video_.connector(features, prompt.prompt_len), audio_.connector(features, prompt.prompt_len)};
}

text::TextConditioning AvDiT::null_conditioning(Stream s) const { return params(s).connector.null_conditioning(); }

StreamState AvDiT::embed(Stream s, const Tensor& tokens, double t, const posenc::TokenCoords& coords,
                         const text::TextConditioning& cond, bool drop_text) const {
    const auto& sp = params(s);
    const auto& sc = s == Stream::video ? cfg_.video : cfg_.audio;
    StreamState st;
    st.hidden = sp.in_proj(tokens);
    st.temb = silu(sp.temb(t));
    const auto self_rope = cfg_.rope_for(sc.d_model / sc.heads);
    st.self_rope = s == Stream::video ? posenc::rope_3d_tables(coords, self_rope) : posenc::temporal_tables(coords, self_rope);
    st.cross_rope = posenc::temporal_tables(coords, cfg_.rope_for(cfg_.cross_dim / cfg_.cross_heads));
    const text::TextConditioning& c = drop_text ? sp.connector.null_conditioning() : cond;
    if (!c.tokens.defined() || c.tokens.shape() != Shape{cfg_.encoder.max_tokens, sc.d_model}) {
        throw Error(std::string("model_forward: ") + (s == Stream::video ? "video" : "audio") +
                    " text conditioning missing or mis-shaped");
    }
    st.cond = c.tokens;
    return st;
}

Tensor AvDiT::av_attended(const StreamBlock& blk, const Tensor& q_src, const Tensor& kv_src, const StreamState& q_state,
                          const StreamState& kv_state, Tensor* probs) const {
    if (kv_src.dim(0) == 0) throw Error("av_cross_attention: empty key/value sequence");
    const auto mod_q = nn::chunk(flat(blk.av_mod_q(row(q_state.temb))), 2);
    const auto mod_kv = nn::chunk(flat(blk.av_mod_kv(row(kv_state.temb))), 2);
    Tensor q = nn::modulate(blk.av_q(q_src), mod_q[0], mod_q[1]);
    Tensor k = nn::modulate(blk.av_k(kv_src), mod_kv[0], mod_kv[1]);
    Tensor v = nn::modulate(blk.av_v(kv_src), mod_kv[0], mod_kv[1]);
    return nn::attend(q, k, v, cfg_.cross_heads, &q_state.cross_rope, &kv_state.cross_rope, probs);
}

Tensor AvDiT::av_cross(const StreamBlock& blk, const Tensor& q_src, const Tensor& kv_src, const StreamState& q_state,
                       const StreamState& kv_state, Tensor* probs) const {
    Tensor attended = blk.av_out(av_attended(blk, q_src, kv_src, q_state, kv_state, probs));
    // The gate depends on the other modality's timestep.
    return mul(attended, flat(blk.av_gate(row(kv_state.temb))));
}

namespace {

Tensor head_mean(const Tensor& probs) {
    const std::size_t h = probs.dim(0), tq = probs.dim(1), tk = probs.dim(2);
    Tensor out({tq, tk});
    for (std::size_t hi = 0; hi < h; ++hi)
        for (std::size_t i = 0; i < tq * tk; ++i) out[i] += probs[hi * tq * tk + i];
    for (auto& x : out.data()) x /= static_cast<double>(h);
    return out;
}

}  // namespace

void AvDiT::block_forward(std::size_t index, StreamState& video, StreamState& audio,
                          const PerStream<bool>& drop_modal, AttentionCapture* capture) const {
    const StreamBlock& vb = video_.blocks.at(index);
    const StreamBlock& ab = audio_.blocks.at(index);
    PerStream<std::vector<Tensor>> mods;

    auto pre_cross = [&](const StreamBlock& blk, StreamState& st, std::vector<Tensor>& m) {
        m = nn::chunk(flat(blk.adaln(row(st.temb))), 6);
        Tensor n = nn::modulate(blk.norm_self(st.hidden), m[0], m[1]);
        st.hidden = add(st.hidden, mul(blk.self_attn(n, n, &st.self_rope, &st.self_rope), m[2]));
        st.hidden = add(st.hidden, mul(blk.text_attn(blk.norm_text(st.hidden), st.cond), blk.text_gate));
    };
    pre_cross(vb, video, mods.video);
    pre_cross(ab, audio, mods.audio);

    if (cfg_.av_cross) {
        // Both directions read the same pre-exchange states.
        const Tensor nv = vb.norm_av(video.hidden);
        const Tensor na = ab.norm_av(audio.hidden);
        // A dropped modality is replaced by the learned null vector laid over
        // the query stream's own timeline, so nothing of the other latent leaks in.
        auto null_state = [](const StreamState& q, const StreamState& kv) {
            StreamState s;
            s.temb = kv.temb;
            s.cross_rope = q.cross_rope;
            return s;
        };
        Tensor p_va, p_av;
        const bool want = capture != nullptr;
        Tensor dv = drop_modal.video
                        ? av_cross(vb, nv, ab.norm_av(repeat_rows(video_.null_modal, video.hidden.dim(0))), video,
                                   null_state(video, audio), want ? &p_va : nullptr)
                        : av_cross(vb, nv, na, video, audio, want ? &p_va : nullptr);
        Tensor da = drop_modal.audio
                        ? av_cross(ab, na, vb.norm_av(repeat_rows(audio_.null_modal, audio.hidden.dim(0))), audio,
                                   null_state(audio, video), want ? &p_av : nullptr)
                        : av_cross(ab, na, nv, audio, video, want ? &p_av : nullptr);
        video.hidden = add(video.hidden, dv);
        audio.hidden = add(audio.hidden, da);
        if (want) {
            capture->video_to_audio.push_back(head_mean(p_va));
            capture->audio_to_video.push_back(head_mean(p_av));
        }
    }

    auto post_cross = [&](const StreamBlock& blk, StreamState& st, const std::vector<Tensor>& m) {
        Tensor n = nn::modulate(blk.norm_ffn(st.hidden), m[3], m[4]);
        st.hidden = add(st.hidden, mul(blk.ffn(n), m[5]));
    };
    post_cross(vb, video, mods.video);
    post_cross(ab, audio, mods.audio);
}

Tensor AvDiT::project_out(Stream s, const StreamState& st) const {
    const auto& sp = params(s);
    const auto m = nn::chunk(flat(sp.final_mod(row(st.temb))), 2);
    return sp.out_proj(nn::modulate(sp.norm_out(st.hidden), m[0], m[1]));
}

Velocity AvDiT::forward(const ForwardArgs& args) const {
    const Tensor& vl = args.video_latent;
    const Tensor& al = args.audio_latent;
    if (!vl.defined() || vl.rank() != 4 || vl.dim(3) != cfg_.video.latent_channels) {
        throw Error("model_forward: video latent must be [T, H, W, " + std::to_string(cfg_.video.latent_channels) + "]");
    }
    if (!al.defined() || al.rank() != 2 || al.dim(1) != cfg_.audio.latent_channels) {
        throw Error("model_forward: audio latent must be [T, " + std::to_string(cfg_.audio.latent_channels) + "]");
    }
    const std::size_t tv = vl.dim(0), hv = vl.dim(1), wv = vl.dim(2), ta = al.dim(0);
    if (tv * hv * wv == 0 || ta == 0) throw Error("model_forward: empty latent");

    const auto vcoords = posenc::video_coords(tv, hv, wv, cfg_.video_frame_rate, args.video_origin[0],
                                              args.video_origin[1], args.video_origin[2]);
    const auto acoords = posenc::audio_coords(ta, cfg_.audio_token_rate, args.audio_origin);

    StreamState video = embed(Stream::video, reshape(vl, {tv * hv * wv, vl.dim(3)}), args.t_video, vcoords,
                              args.cond.video, args.drop_text.video);
    StreamState audio = embed(Stream::audio, al, args.t_audio, acoords, args.cond.audio, args.drop_text.audio);

    for (std::size_t i = 0; i < cfg_.depth; ++i) {
        block_forward(i, video, audio, args.drop_modal, args.capture);
        const std::string where = "model_forward: block " + std::to_string(i);
        video.hidden.validate(where + " video hidden state");
        audio.hidden.validate(where + " audio hidden state");
    }
    return Velocity{reshape(project_out(Stream::video, video), vl.shape()), project_out(Stream::audio, audio)};
}

ParamList AvDiT::parameters() const {
    ParamList out;
    features_.collect(out, "text.features");
    video_.connector.collect(out, "text.video_connector");
    audio_.connector.collect(out, "text.audio_connector");
    out.append(stream_parameters(Stream::video));
    out.append(stream_parameters(Stream::audio));
    return out;
}

ParamList AvDiT::stream_parameters(Stream s) const {
    const auto& sp = params(s);
    const std::string p = s == Stream::video ? "video" : "audio";
    ParamList out;
    sp.temb.collect(out, p + ".temb");
    sp.in_proj.collect(out, p + ".in_proj");
    for (std::size_t i = 0; i < sp.blocks.size(); ++i) sp.blocks[i].collect(out, p + ".blocks." + std::to_string(i));
    sp.norm_out.collect(out, p + ".norm_out");
    sp.final_mod.collect(out, p + ".final_mod");
    sp.out_proj.collect(out, p + ".out_proj");
    out.add(p + ".null_modal", sp.null_modal);
    return out;
}

void AvDiT::randomize_gates(Rng& rng, double std) {
    for (StreamParams* sp : {&video_, &audio_}) {
        for (auto& b : sp->blocks) {
            fill_noise(b.text_gate, rng, std);
            for (const Linear* l : {&b.adaln, &b.av_mod_q, &b.av_mod_kv, &b.av_gate}) {
                fill_noise(l->weight, rng, std);
                fill_noise(l->bias, rng, std);
            }
            for (std::size_t i = 0; i < 2 * b.text_gate.numel(); ++i) {
                const std::size_t d = b.text_gate.numel();
                Tensor bias = b.adaln.bias;
                bias[(i < d ? 2 * d : 5 * d) + i % d] += 1.0;
            }
        }
        fill_noise(sp->final_mod.weight, rng, std);
        fill_noise(sp->final_mod.bias, rng, std);
    }
}

PerStream<std::size_t> stream_parameter_counts(const AvDiT& model) {
    return {model.stream_parameters(Stream::video).numel(), model.stream_parameters(Stream::audio).numel()};
}

}  // namespace avdit::model
