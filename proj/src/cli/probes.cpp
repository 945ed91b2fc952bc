#include "avdit/cli/probes.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>
#include <unistd.h>
#include <map>
#include <sstream>

#include "avdit/cli/commands.hpp"
#include "avdit/model/checkpoint.hpp"
#include "avdit/numerics/grad_check.hpp"

namespace avdit::cli {

using nlohmann::json;
namespace fs = std::filesystem;
using model::AvDiT;
using model::ModelConfig;
using posenc::Stream;

std::string status_name(ProbeStatus s) {
    switch (s) {
        case ProbeStatus::pass: return "PASS";
        case ProbeStatus::fail: return "FAIL";
        default: return "SKIP";
    }
}

const std::vector<ProbeInfo>& probe_catalog() {
    static const std::vector<ProbeInfo> catalog{
        {"numerics.attention_rows", "numerics", "attention rows sum to 1 within 1e-12"},
        {"numerics.rms_norm_unit", "numerics", "rms_norm output has eps-corrected unit RMS within 1e-9"},
        {"numerics.module_grad_check", "numerics", "grad_check < 1e-4 for every parameterized module"},
        {"numerics.forward_determinism", "numerics", "forward passes are bitwise deterministic"},
        {"posenc.relative_position", "posenc", "RoPE logits depend only on position differences (1e-9)"},
        {"posenc.cross_temporal_only", "posenc", "spatial coordinates never enter cross-attention (exact)"},
        {"posenc.isometry", "posenc", "RoPE preserves L2 norm within 1e-12"},
        {"textcond.standardization", "textcond", "standardized layers have mean 0 / variance 1"},
        {"textcond.affine_invariance", "textcond", "per-layer affine maps of the stack leave features unchanged"},
        {"textcond.connector_length", "textcond", "connector output length is always T_max"},
        {"textcond.thinking_gradient", "textcond", "thinking tokens receive nonzero gradient"},
        {"avdit.init_decoupling", "avdit", "zero-init gates make each stream equal the unimodal forward (exact)"},
        {"avdit.cross_shift_invariance", "avdit", "AV attention invariant to a common temporal shift (1e-9)"},
        {"avdit.cross_modal_gradient", "avdit", "d(video loss)/d(audio input) nonzero after 50 toy steps"},
        {"avdit.param_asymmetry", "avdit", "video:audio stream parameters in [2, 4] at reference"},
        {"codecs.causality", "codecs", "future perturbations never change past latents (exact, both codecs)"},
        {"codecs.token_rate", "codecs", "audio tokens per second = 25 up to rounding"},
        {"codecs.roundtrip", "codecs", "trained codecs round-trip synthetic clips within bounds", true},
        {"flowtrain.flow_path", "flowtrain", "flow_path endpoints and linearity in t are exact"},
        {"flowtrain.loss_zero_iff_exact", "flowtrain", "loss is non-negative and zero iff predictions equal targets"},
        {"flowtrain.independent_timesteps", "flowtrain", "training draws cover the (t_v, t_a) unit square independently"},
        {"flowtrain.drop_rates", "flowtrain", "condition-drop rates over 10k draws within 0.02 of configured"},
        {"sampler.cfg_linearity", "sampler", "bimodal CFG is linear and commutes with batch permutation (exact)"},
        {"sampler.euler_oracle", "sampler", "Euler recovers the straight-path oracle in one step (exact)"},
        {"sampler.tiling_unity", "sampler", "tile weights partition unity; identity and constant fields are exact"},
        {"sampler.clamps", "sampler", "V2A/A2V keep the fixed modality bitwise with t = 0 at every call"},
        {"cli.manifest_reproduces", "cli", "a sample manifest reproduces its outputs bitwise"},
    };
    return catalog;
}

namespace {

struct Outcome {
    bool ok = true;
    std::string detail;
};

struct Context {
    const ProbeOptions& opts;
    bool mutated(const std::string& m) const { return opts.mutations.count(m) > 0; }
};

std::string fmt(double v) {
    std::ostringstream s;
    s.precision(3);
    s << v;
    return s.str();
}

Outcome bound(double worst, double limit, const std::string& what) {
    return {worst <= limit, what + " " + fmt(worst) + " (limit " + fmt(limit) + ")"};
}

Tensor dyadic(const Shape& shape, Rng& rng) {
    std::uniform_int_distribution<int> k(-16, 16);
    Tensor t(shape);
    for (auto& v : t.data()) v = k(rng) / 8.0;
    return t;
}

double dot_rows(const Tensor& a, std::size_t ra, const Tensor& b, std::size_t rb) {
    const std::size_t d = a.dim(1);
    double s = 0.0;
    for (std::size_t j = 0; j < d; ++j) s += a[ra * d + j] * b[rb * d + j];
    return s;
}

model::ForwardArgs tiny_args(const AvDiT& m, Rng& rng, std::size_t tv = 2, std::size_t hw = 2, std::size_t ta = 5) {
    const auto& c = m.config();
    model::ForwardArgs a;
    a.video_latent = Tensor::randn({tv, hw, hw, c.video.latent_channels}, rng);
    a.audio_latent = Tensor::randn({ta, c.audio.latent_channels}, rng);
    a.t_video = 0.6;
    a.t_audio = 0.3;
    a.cond = m.condition(model::prompt_features({300, 301, 302}, c.encoder));
    return a;
}

std::vector<flow::FlowItem> random_items(const ModelConfig& c, std::size_t n, Rng& rng) {
    std::vector<flow::FlowItem> items;
    for (std::size_t i = 0; i < n; ++i) {
        flow::FlowItem it;
        it.video = Tensor::randn({2, 2, 2, c.video.latent_channels}, rng);
        it.audio = Tensor::randn({5, c.audio.latent_channels}, rng);
        it.prompt = model::prompt_features({static_cast<text::TokenId>(300 + i), 301}, c.encoder);
        items.push_back(std::move(it));
    }
    return items;
}

// numerics

Outcome attention_rows(Context&) {
    Rng rng(101);
    double worst = 0.0;
    std::uniform_int_distribution<std::size_t> len(1, 12);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t tq = len(rng), tk = len(rng);
        Tensor p;
        scaled_dot_attention(Tensor::randn({2, tq, 8}, rng, 6.0), Tensor::randn({2, tk, 8}, rng, 6.0),
                             Tensor::randn({2, tk, 8}, rng), &p);
        for (std::size_t r = 0; r < 2 * tq; ++r) {
            double s = 0.0;
            for (std::size_t j = 0; j < tk; ++j) s += p[r * tk + j];
            worst = std::max(worst, std::abs(s - 1.0));
        }
    }
    return bound(worst, 1e-12, "max |row sum - 1|");
}

Outcome rms_norm_unit(Context&) {
    Rng rng(102);
    const double eps = 1e-6;
    double worst = 0.0;
    for (int trial = 0; trial < 50; ++trial) {
        const double scale = std::exp(std::uniform_real_distribution<double>(-4.0, 4.0)(rng));
        const Tensor x = Tensor::randn({4, 16}, rng, scale);
        const Tensor y = rms_norm(x, Tensor(), eps);
        for (std::size_t r = 0; r < 4; ++r) {
            const double ms = dot_rows(x, r, x, r) / 16.0;
            const double rms = std::sqrt(dot_rows(y, r, y, r) / 16.0);
            worst = std::max(worst, std::abs(rms - std::sqrt(ms / (ms + eps))));
        }
    }
    return bound(worst, 1e-9, "max |rms - sqrt(ms/(ms+eps))|");
}

Outcome module_grad_check(Context&) {
    Rng rng(103);
    const double h = 1e-5;
    std::map<std::string, double> errors;
    auto check = [&](const std::string& name, const ParamList& ps, const std::function<Tensor()>& loss) {
        errors[name] = grad_check_params(loss, ps, 40, h, rng).max_rel_error;
    };
    const Tensor x = Tensor::randn({5, 8}, rng);
    {
        Linear l(8, 6, rng);
        ParamList ps;
        l.collect(ps, "linear");
        check("Linear", ps, [&] { return mean(square(l(x))); });
    }
    {
        RmsNorm n(8);
        for (auto& v : Tensor(n.gain).data()) v = std::uniform_real_distribution<double>(0.5, 1.5)(rng);
        ParamList ps;
        n.collect(ps, "norm");
        const Tensor w = Tensor::randn({5, 8}, rng);
        check("RmsNorm", ps, [&] { return sum(mul(n(x), w)); });
    }
    {
        nn::Attention a(8, 8, 8, 8, 2, rng);
        const auto rope = posenc::rope_1d_tables({0.0, 1.0, 2.0, 3.0, 4.0}, 4, 10000.0);
        ParamList ps;
        a.collect(ps, "attn");
        check("Attention", ps, [&] { return mean(square(a(x, x, &rope, &rope))); });
    }
    {
        nn::FeedForward f(8, 16, rng);
        ParamList ps;
        f.collect(ps, "ffn");
        check("FeedForward", ps, [&] { return mean(square(f(x))); });
    }
    {
        text::FeatureExtractor fe(text::EncoderConfig{4, 2, 6}, 5, rng);
        const auto stack = text::stub_encode({{300, 301, 302}}, text::EncoderConfig{4, 2, 6});
        ParamList ps;
        fe.collect(ps, "features");
        check("FeatureExtractor", ps, [&] { return mean(square(fe(stack))); });
    }
    {
        text::ConnectorConfig cc{6, 8, 1, 1, 2, 6};
        text::TextConnector conn(cc, rng);
        const Tensor feats = Tensor::randn({6, 6}, rng);
        ParamList ps;
        conn.collect(ps, "connector");
        check("TextConnector", ps, [&] { return mean(square(conn(feats, 3).tokens)); });
    }
    {
        AvDiT m(ModelConfig::tiny());
        m.randomize_gates(rng, 0.3);
        const auto args = tiny_args(m, rng, 2, 1, 3);
        const auto feats = model::prompt_features({300, 301}, m.config().encoder);
        check("AvDiT", m.parameters(), [&] {
            auto a = args;
            a.cond = m.condition(feats);
            const auto out = m.forward(a);
            return add(mean(square(out.video)), mean(square(out.audio)));
        });
    }
    {
        codecs::AudioVae a(codecs::AudioVaeConfig{4, 6, 3, 8, 4}, rng);
        const Tensor frames = Tensor::uniform({12, 4}, rng, 0.0, 2.0);
        ParamList ps;
        a.collect(ps, "audio_vae");
        check("AudioVae", ps, [&] {
            const auto post = a.encode_posterior(frames);
            return add(mse(a.decode(post.mean), frames), mean(square(post.logvar)));
        });
    }
    {
        codecs::VideoVae v(codecs::VideoVaeConfig{2, 2, 3, 6, 2}, rng);
        const Tensor clip = Tensor::uniform({3, 4, 4, 3}, rng, 0.0, 1.0);
        ParamList ps;
        v.collect(ps, "video_vae");
        check("VideoVae", ps, [&] {
            const auto post = v.encode_posterior(clip);
            return add(mse(v.decode(post.mean), clip), mean(square(post.logvar)));
        });
    }
    double worst = 0.0;
    std::string which;
    for (const auto& [name, e] : errors) {
        if (e >= worst) {
            worst = e;
            which = name;
        }
    }
    auto out = bound(worst, 1e-4, std::to_string(errors.size()) + " modules, worst " + which + " rel error");
    out.ok = out.ok && worst < 1e-4;
    return out;
}

Outcome forward_determinism(Context&) {
    Rng rng(104);
    AvDiT a(ModelConfig::tiny()), b(ModelConfig::tiny());
    Rng ga(7), gb(7);
    a.randomize_gates(ga, 0.3);
    b.randomize_gates(gb, 0.3);
    const auto args = tiny_args(a, rng);
    const auto x = a.forward(args), y = a.forward(args), z = b.forward(args);
    const bool same = x.video.bitwise_equal(y.video) && x.audio.bitwise_equal(y.audio);
    const bool rebuilt = x.video.bitwise_equal(z.video) && x.audio.bitwise_equal(z.audio);
    return {same && rebuilt, std::string("repeat ") + (same ? "bitwise" : "differs") + ", rebuilt model " + (rebuilt ? "bitwise" : "differs")};
}

// posenc

Outcome relative_position(Context& ctx) {
    Rng rng(105);
    const bool broken = ctx.mutated("rope-base");
    auto rope = [&](const Tensor& v, double pos) {
        // The mutation ties the frequency base to the absolute position.
        return posenc::rope_1d(v, {pos}, broken ? 10000.0 + 50.0 * pos : 10000.0);
    };
    std::uniform_real_distribution<double> pos(0.0, 100.0);
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        const Tensor q = Tensor::randn({1, 32}, rng), k = Tensor::randn({1, 32}, rng);
        const double a = pos(rng), b = pos(rng), s = pos(rng);
        const double d0 = dot_rows(rope(q, a), 0, rope(k, b), 0);
        const double d1 = dot_rows(rope(q, a + s), 0, rope(k, b + s), 0);
        worst = std::max(worst, std::abs(d0 - d1));
    }
    return bound(worst, 1e-9, std::string(broken ? "[mutated rope-base] " : "") + "max logit change under common shift");
}

Outcome cross_temporal_only(Context&) {
    Rng rng(106);
    AvDiT m(ModelConfig::tiny());
    m.randomize_gates(rng, 0.3);
    const auto& c = m.config();
    const auto& blk = m.block(Stream::video, 0);
    const Tensor v_lat = Tensor::randn({2 * 3 * 3, c.video.latent_channels}, rng);
    const auto as = m.embed(Stream::audio, Tensor::randn({10, c.audio.latent_channels}, rng), 0.2, posenc::audio_coords(10, 25.0),
                            m.null_conditioning(Stream::audio), false);
    auto with_xy = posenc::video_coords(2, 3, 3, c.video_frame_rate, 0, 4, 7);
    auto zeroed = with_xy;
    std::fill(zeroed.x_idx->begin(), zeroed.x_idx->end(), 0.0);
    std::fill(zeroed.y_idx->begin(), zeroed.y_idx->end(), 0.0);
    const auto a = m.embed(Stream::video, v_lat, 0.5, with_xy, m.null_conditioning(Stream::video), false);
    const auto b = m.embed(Stream::video, v_lat, 0.5, zeroed, m.null_conditioning(Stream::video), false);
    const Tensor kv = m.block(Stream::audio, 0).norm_av(as.hidden);
    Tensor pa, pb;
    m.av_attended(blk, blk.norm_av(a.hidden), kv, a, as, &pa);
    m.av_attended(blk, blk.norm_av(b.hidden), kv, b, as, &pb);
    const bool tables = a.cross_rope.cos.bitwise_equal(b.cross_rope.cos) && a.cross_rope.sin.bitwise_equal(b.cross_rope.sin);
    const bool probs = pa.bitwise_equal(pb);
    return {tables && probs, std::string("cross tables ") + (tables ? "identical" : "differ") + ", AV probabilities " +
                                 (probs ? "identical" : "differ")};
}

Outcome isometry(Context&) {
    Rng rng(107);
    posenc::RopeConfig cfg;
    std::uniform_real_distribution<double> u(0.0, 40.0);
    double worst = 0.0;
    auto track = [&](const Tensor& before, const Tensor& after) {
        for (std::size_t r = 0; r < before.dim(0); ++r) {
            const double n0 = std::sqrt(dot_rows(before, r, before, r)), n1 = std::sqrt(dot_rows(after, r, after, r));
            worst = std::max(worst, std::abs(n1 - n0) / n0);
        }
    };
    for (int trial = 0; trial < 20; ++trial) {
        const Tensor v = Tensor::randn({6, cfg.head_dim}, rng);
        std::vector<double> pos(6);
        for (auto& p : pos) p = u(rng);
        track(v, posenc::rope_1d(v, pos));
        posenc::TokenCoords c{pos, std::vector<double>(6), std::vector<double>(6)};
        for (std::size_t i = 0; i < 6; ++i) {
            (*c.x_idx)[i] = u(rng);
            (*c.y_idx)[i] = u(rng);
        }
        track(v, posenc::rope_3d(v, c, cfg));
    }
    return bound(worst, 1e-12, "max relative norm change");
}

// textcond

Outcome standardization(Context&) {
    Rng rng(108);
    double worst = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
        text::LayerStack s{Tensor::randn({2, 5, 3, 4}, rng, 1.0 + 3.0 * trial), {5, 5}};
        for (std::size_t i = 0; i < s.values.numel(); ++i) s.values[i] += static_cast<double>(i % 4) * 7.0 - 10.0;
        const Tensor flat = text::standardize_layers(s);
        for (std::size_t b = 0; b < 2; ++b)
            for (std::size_t l = 0; l < 4; ++l) {
                double m = 0.0, v = 0.0;
                for (std::size_t t = 0; t < 5; ++t)
                    for (std::size_t d = 0; d < 3; ++d) m += flat[(b * 5 + t) * 12 + d * 4 + l];
                m /= 15.0;
                for (std::size_t t = 0; t < 5; ++t)
                    for (std::size_t d = 0; d < 3; ++d) v += std::pow(flat[(b * 5 + t) * 12 + d * 4 + l] - m, 2);
                worst = std::max({worst, std::abs(m), std::abs(v / 15.0 - 1.0)});
            }
    }
    return bound(worst, 1e-9, "max |mean| or |var - 1|");
}

Outcome affine_invariance(Context&) {
    Rng rng(109);
    double worst = 0.0;
    std::uniform_real_distribution<double> scale(0.1, 10.0), shift(-20.0, 20.0);
    for (int trial = 0; trial < 20; ++trial) {
        text::LayerStack s{Tensor::randn({1, 6, 4, 3}, rng), {6}};
        text::LayerStack t{s.values.clone(), {6}};
        const double a[3] = {scale(rng), scale(rng), scale(rng)}, b[3] = {shift(rng), shift(rng), shift(rng)};
        for (std::size_t i = 0; i < t.values.numel(); ++i) t.values[i] = a[i % 3] * t.values[i] + b[i % 3];
        const Tensor w = Tensor::randn({12, 5}, rng);
        worst = std::max(worst, max_abs_diff(text::extract_features(s, w), text::extract_features(t, w)));
    }
    return bound(worst, 1e-12, "max feature change");
}

Outcome connector_length(Context&) {
    Rng rng(110);
    text::ConnectorConfig cfg;
    text::TextConnector conn(cfg, rng);
    const Tensor feats = Tensor::randn({cfg.max_tokens, cfg.cond_dim}, rng);
    std::size_t bad = 0;
    for (std::size_t len = 0; len <= cfg.max_tokens; ++len) {
        if (conn(feats, len).tokens.shape() != Shape{cfg.max_tokens, cfg.out_dim}) ++bad;
    }
    if (conn.null_conditioning().tokens.shape() != Shape{cfg.max_tokens, cfg.out_dim}) ++bad;
    return {bad == 0, std::to_string(cfg.max_tokens + 2) + " prompt lengths and the null sequence, " + std::to_string(bad) +
                          " with the wrong length"};
}

Outcome thinking_gradient(Context&) {
    Rng rng(111);
    text::ConnectorConfig cfg;
    text::TextConnector conn(cfg, rng);
    const Tensor feats = Tensor::randn({cfg.max_tokens, cfg.cond_dim}, rng);
    ParamList ps;
    conn.collect(ps, "connector");
    Adam opt(ps, 1e-3);
    double g = 0.0;
    for (int step = 0; step < 2; ++step) {
        opt.zero_grad();
        Tape tape;
        TapeScope scope(tape);
        Tensor loss = mean(square(conn(feats, 12).tokens));
        tape.backward(loss);
        g = 0.0;
        for (double v : conn.thinking_tokens().grad()) g += std::abs(v);
        opt.step();
    }
    return {g > 0.0, "sum |grad| over thinking tokens after one step " + fmt(g)};
}

// avdit

Outcome init_decoupling(Context&) {
    Rng rng(112);
    auto cfg = ModelConfig::tiny();
    cfg.depth = 2;
    AvDiT joint(cfg);
    cfg.av_cross = false;
    AvDiT ablated(cfg);
    const auto args = tiny_args(joint, rng);
    const auto a = joint.forward(args), b = ablated.forward(args);
    const bool v = a.video.bitwise_equal(b.video), au = a.audio.bitwise_equal(b.audio);
    return {v && au, std::string("video ") + (v ? "bitwise equal" : "differs") + ", audio " + (au ? "bitwise equal" : "differs")};
}

Outcome cross_shift_invariance(Context&) {
    Rng rng(113);
    AvDiT m(ModelConfig::tiny());
    m.randomize_gates(rng, 0.3);
    const auto& c = m.config();
    const auto& blk = m.block(Stream::audio, 0);
    const auto& vblk = m.block(Stream::video, 0);
    const Tensor v_lat = Tensor::randn({4 * 2 * 2, c.video.latent_channels}, rng);
    const Tensor a_lat = Tensor::randn({20, c.audio.latent_channels}, rng);
    auto probs_at = [&](std::size_t vt0, std::size_t at0) {
        const auto vs = m.embed(Stream::video, v_lat, 0.5, posenc::video_coords(4, 2, 2, c.video_frame_rate, vt0), m.null_conditioning(Stream::video), false);
        const auto as = m.embed(Stream::audio, a_lat, 0.5, posenc::audio_coords(20, c.audio_token_rate, at0), m.null_conditioning(Stream::audio), false);
        Tensor p;
        m.av_attended(blk, blk.norm_av(as.hidden), vblk.norm_av(vs.hidden), as, vs, &p);
        return p;
    };
    const Tensor base = probs_at(0, 0);
    // Whole seconds move both streams by whole tokens: 1 s is 5 frames and 25 audio tokens.
    double worst = 0.0;
    for (std::size_t s : {1u, 2u, 7u}) worst = std::max(worst, max_abs_diff(base, probs_at(5 * s, 25 * s)));
    return bound(worst, 1e-9, "max probability change");
}

Outcome cross_modal_gradient(Context&) {
    Rng rng(114);
    auto cfg = ModelConfig::tiny();
    AvDiT m(cfg);
    const auto items = random_items(cfg, 4, rng);
    const auto args = tiny_args(m, rng);
    auto grad = [&] {
        auto a = args;
        a.audio_latent = args.audio_latent.clone();
        a.audio_latent.set_requires_grad(true);
        Tape tape;
        TapeScope scope(tape);
        Tensor loss = mean(square(m.forward(a).video));
        tape.backward(loss);
        double g = 0.0;
        for (double v : a.audio_latent.grad()) g += std::abs(v);
        return g;
    };
    const double before = grad();
    flow::TrainConfig tc;
    tc.batch = 2;
    tc.steps = 50;
    flow::Trainer trainer(m, items, tc);
    for (int i = 0; i < 50; ++i) trainer.step();
    const double after = grad();
    return {before == 0.0 && after > 0.0, "sum |d video loss / d audio| at init " + fmt(before) + ", after 50 steps " + fmt(after)};
}

Outcome param_asymmetry(Context&) {
    const AvDiT m(ModelConfig::reference());
    const double v = static_cast<double>(m.stream_parameters(Stream::video).numel());
    const double a = static_cast<double>(m.stream_parameters(Stream::audio).numel());
    return {v / a >= 2.0 && v / a <= 4.0, "video " + std::to_string(static_cast<long>(v)) + " / audio " +
                                               std::to_string(static_cast<long>(a)) + " = " + fmt(v / a)};
}

// codecs

Outcome causality(Context&) {
    Rng rng(115);
    codecs::AudioVae audio(codecs::AudioVaeConfig{}, rng);
    codecs::VideoVae video(codecs::VideoVaeConfig{}, rng);
    std::size_t broken = 0;
    const Tensor frames = Tensor::uniform({120, 32}, rng, 0.0, 3.0);
    const Tensor abase = audio.encode(frames);
    std::uniform_int_distribution<std::size_t> ka(0, 119);
    for (int probe = 0; probe < 50; ++probe) {
        const std::size_t k = ka(rng);
        Tensor edited = frames.clone();
        for (std::size_t i = k * 32; i < edited.numel(); ++i) edited[i] += 1.0 + static_cast<double>(i % 5);
        const Tensor out = audio.encode(edited);
        for (std::size_t i = 0; i < (k / 4) * 128; ++i)
            if (out[i] != abase[i]) {
                ++broken;
                break;
            }
    }
    const Tensor clip = Tensor::uniform({9, 16, 16, 3}, rng, 0.0, 1.0);
    const Tensor vbase = video.encode(clip);
    const std::size_t per = 4 * 4 * 8;
    std::uniform_int_distribution<std::size_t> kv(1, 8);
    for (int probe = 0; probe < 50; ++probe) {
        const std::size_t k = kv(rng);
        Tensor edited = clip.clone();
        for (std::size_t i = k * 16 * 16 * 3; i < edited.numel(); ++i) edited[i] = 1.0 - edited[i];
        const Tensor out = video.encode(edited);
        for (std::size_t i = 0; i < ((k + 1) / 2) * per; ++i)
            if (out[i] != vbase[i]) {
                ++broken;
                break;
            }
    }
    return {broken == 0, "100 probes (50 audio, 50 video), " + std::to_string(broken) + " changed a past latent"};
}

Outcome token_rate(Context&) {
    Rng rng(116);
    codecs::AudioVae audio(codecs::AudioVaeConfig{32, 8, 128, 8, 4}, rng);
    std::size_t bad = 0, checked = 0;
    for (std::size_t hundredths = 4; hundredths <= 400; hundredths += 3) {
        const double seconds = static_cast<double>(hundredths) / 100.0;
        const std::size_t frames = hundredths;  // 100 feature frames per second
        const std::size_t expect = static_cast<std::size_t>(std::ceil(seconds * 25.0 - 1e-9));
        if (audio.encode(Tensor({frames, 32})).dim(0) != expect) ++bad;
        ++checked;
    }
    return {bad == 0, std::to_string(checked) + " clip lengths, " + std::to_string(bad) + " off the 25 Hz contract"};
}

Outcome codec_roundtrip(Context& ctx) {
    const RunLayout L{*ctx.opts.run};
    const RunConfig c = resolve_config(std::optional<fs::path>(L.config()), {});
    const auto bundle = flow::CodecBundle::load(L.codecs(), c.data);
    std::vector<Tensor> held;
    for (std::uint64_t s = 0; s < 16; ++s) held.push_back(flow::make_sample(c.data.eval_seed_offset + s, c.data.clip, c.data.features).audio.frames);
    const double audio = codecs::audio_roundtrip_error(bundle.audio, held);
    Rng rng(117);
    std::uniform_real_distribution<double> u(0.05, 0.95);
    double constant = 0.0;
    for (int i = 0; i < 32; ++i) {
        const Tensor clip = flow::constant_clip(c.data.clip, {u(rng), u(rng), u(rng)});
        constant = std::max(constant, relative_l2(bundle.video.decode(bundle.video.encode(clip)), clip));
    }
    return {audio < 0.15 && constant < 0.05,
            "held-out audio rel L2 " + fmt(audio) + " (< 0.15), worst of 32 constant-colour clips " + fmt(constant) + " (< 0.05)"};
}

// flowtrain

Outcome flow_path_exact(Context&) {
    Rng rng(118);
    bool ok = true;
    for (int trial = 0; trial < 20; ++trial) {
        const Tensor x = dyadic({4, 3}, rng), n = dyadic({4, 3}, rng);
        ok = ok && flow::flow_path(x, n, 0.0).x_t.bitwise_equal(x) && flow::flow_path(x, n, 1.0).x_t.bitwise_equal(n);
        for (double t : {0.125, 0.25, 0.5, 0.625, 0.875}) {
            const auto p = flow::flow_path(x, n, t);
            for (std::size_t i = 0; i < x.numel(); ++i) ok = ok && p.x_t[i] == x[i] + t * p.v_target[i] && p.v_target[i] == n[i] - x[i];
        }
    }
    return {ok, ok ? "endpoints bitwise, x_t = x + t v exactly on dyadic grids" : "an endpoint or linear value differs"};
}

Outcome loss_zero_iff_exact(Context&) {
    Rng rng(119);
    const auto cfg = ModelConfig::tiny();
    const auto items = random_items(cfg, 3, rng);
    const auto batch = flow::draw_batch(items, 4, flow::DropRates{}, rng);
    auto target = [](const flow::FlowExample& ex) {
        return model::Velocity{sub(ex.noise_video, ex.item->video), sub(ex.noise_audio, ex.item->audio)};
    };
    const double exact = flow::flow_match_loss([&](const flow::FlowExample& ex, const Tensor&, const Tensor&) { return target(ex); }, batch).total.item();
    const double nudged = flow::flow_match_loss(
                              [&](const flow::FlowExample& ex, const Tensor&, const Tensor&) {
                                  auto v = target(ex);
                                  v.audio = v.audio.clone();
                                  v.audio[0] += 1e-6;
                                  return v;
                              },
                              batch)
                              .total.item();
    double lowest = 1e300;
    for (int trial = 0; trial < 20; ++trial) {
        const double l = flow::flow_match_loss(
                             [&](const flow::FlowExample&, const Tensor& xv, const Tensor& xa) {
                                 return model::Velocity{Tensor::randn(xv.shape(), rng), Tensor::randn(xa.shape(), rng)};
                             },
                             batch)
                             .total.item();
        lowest = std::min(lowest, l);
    }
    return {exact == 0.0 && nudged > 0.0 && lowest >= 0.0,
            "exact predictions " + fmt(exact) + ", one element off by 1e-6 " + fmt(nudged) + ", random minimum " + fmt(lowest)};
}

Outcome independent_timesteps(Context&) {
    Rng rng(120);
    const auto items = random_items(ModelConfig::tiny(), 2, rng);
    const auto batch = flow::draw_batch(items, 8000, flow::DropRates{}, rng);
    std::array<double, 16> cells{};
    double sv = 0, sa = 0, svv = 0, saa = 0, sva = 0;
    for (const auto& ex : batch) {
        cells[std::min<std::size_t>(3, static_cast<std::size_t>(ex.t_video * 4)) * 4 +
              std::min<std::size_t>(3, static_cast<std::size_t>(ex.t_audio * 4))] += 1.0;
        sv += ex.t_video;
        sa += ex.t_audio;
        svv += ex.t_video * ex.t_video;
        saa += ex.t_audio * ex.t_audio;
        sva += ex.t_video * ex.t_audio;
    }
    const double n = static_cast<double>(batch.size());
    const double corr = (sva / n - sv * sa / (n * n)) / std::sqrt((svv / n - sv * sv / (n * n)) * (saa / n - sa * sa / (n * n)));
    double worst = 0.0;
    for (double c : cells) worst = std::max(worst, std::abs(c / n - 1.0 / 16.0));
    return {worst < 0.015 && std::abs(corr) < 0.05,
            "4x4 grid max cell deviation " + fmt(worst) + ", corr(t_v, t_a) " + fmt(corr)};
}

Outcome drop_rates(Context&) {
    Rng rng(121);
    const auto items = random_items(ModelConfig::tiny(), 2, rng);
    flow::DropRates rates;
    const auto batch = flow::draw_batch(items, 10000, rates, rng);
    double tv = 0, ta = 0, mv = 0, ma = 0;
    for (const auto& ex : batch) {
        tv += ex.drop_text.video;
        ta += ex.drop_text.audio;
        mv += ex.drop_modal.video;
        ma += ex.drop_modal.audio;
    }
    double worst = 0.0;
    for (double r : {tv - 1e4 * rates.text, ta - 1e4 * rates.text, mv - 1e4 * rates.modal, ma - 1e4 * rates.modal})
        worst = std::max(worst, std::abs(r) / 1e4);
    return bound(worst, 0.02, "max |empirical - configured| rate");
}

// sampler

Outcome cfg_linearity(Context&) {
    Rng rng(122);
    bool ok = true;
    for (int trial = 0; trial < 20; ++trial) {
        const Tensor f = dyadic({4, 3}, rng), t = dyadic({4, 3}, rng), m = dyadic({4, 3}, rng), d = dyadic({4, 3}, rng);
        const Tensor base = sampler::bimodal_cfg(f, t, m, 3.0, 2.0);
        const Tensor df = sampler::bimodal_cfg(add(f, d), t, m, 3.0, 2.0);
        const Tensor dt = sampler::bimodal_cfg(f, add(t, d), m, 3.0, 2.0);
        const Tensor dm = sampler::bimodal_cfg(f, t, add(m, d), 3.0, 2.0);
        for (std::size_t i = 0; i < base.numel(); ++i) {
            ok = ok && df[i] - base[i] == 6.0 * d[i] && dt[i] - base[i] == -3.0 * d[i] && dm[i] - base[i] == -2.0 * d[i];
        }
        // Rows reversed before and after guidance.
        auto reverse = [](const Tensor& x) {
            Tensor r(x.shape());
            const std::size_t R = x.dim(0), C = x.dim(1);
            for (std::size_t i = 0; i < R; ++i)
                for (std::size_t j = 0; j < C; ++j) r[i * C + j] = x[(R - 1 - i) * C + j];
            return r;
        };
        ok = ok && reverse(base).bitwise_equal(sampler::bimodal_cfg(reverse(f), reverse(t), reverse(m), 3.0, 2.0));
    }
    return {ok, ok ? "additive changes scale by (1+s_t+s_m), -s_t, -s_m exactly; batch permutation commutes" : "linearity or permutation broken"};
}

Outcome euler_oracle(Context&) {
    Rng rng(123);
    const Tensor nv = dyadic({2, 2, 2, 3}, rng), xv = dyadic({2, 2, 2, 3}, rng), na = dyadic({5, 4}, rng), xa = dyadic({5, 4}, rng);
    sampler::Denoiser oracle = [&](const model::ForwardArgs&) { return model::Velocity{sub(nv, xv), sub(na, xa)}; };
    sampler::EulerInputs in;
    in.video = nv;
    in.audio = na;
    sampler::EulerConfig cfg;
    cfg.steps = 1;
    const auto out = sampler::euler_sample(oracle, in, cfg);
    const bool ok = out.video.bitwise_equal(xv) && out.audio.bitwise_equal(xa);
    return {ok, ok ? "one step from noise lands bitwise on the target" : "one-step result differs from the target"};
}

Outcome tiling_unity(Context&) {
    Rng rng(124);
    double worst = 0.0;
    bool identity = true, seamless = true;
    for (int trial = 0; trial < 10; ++trial) {
        std::uniform_int_distribution<std::size_t> dim(3, 14), tile(2, 7);
        const std::array<std::size_t, 3> dims{dim(rng), dim(rng), dim(rng)};
        std::array<std::size_t, 3> ts{tile(rng), tile(rng), tile(rng)}, ov{};
        for (std::size_t a = 0; a < 3; ++a) ov[a] = std::uniform_int_distribution<std::size_t>(0, ts[a] - 1)(rng);
        const auto layout = sampler::tile_partition(dims, ts, ov);
        const Tensor cover = layout.coverage();
        for (double c : cover.data()) worst = std::max(worst, std::abs(c - 1.0));
        const Tensor x = Tensor::randn({dims[0], dims[1], dims[2], 2}, rng);
        identity = identity && sampler::tile_blend(sampler::tile_split(x, layout), layout).bitwise_equal(x);
        const Tensor flat({dims[0], dims[1], dims[2], 2}, 0.37);
        const Tensor blended = sampler::tile_blend(sampler::tile_split(flat, layout), layout);
        for (double v : blended.data()) seamless = seamless && v == 0.37;
    }
    return {worst <= 1e-12 && identity && seamless, "max |coverage - 1| " + fmt(worst) + ", identity " +
                                                        (identity ? "exact" : "inexact") + ", constant field " +
                                                        (seamless ? "seam-free" : "has seams")};
}

Outcome clamps(Context&) {
    Rng rng(125);
    const Tensor v = dyadic({2, 2, 2, 3}, rng), a = dyadic({5, 4}, rng);
    bool ok = true;
    for (auto mode : {sampler::Mode::v2a, sampler::Mode::a2v}) {
        const bool fix_video = mode == sampler::Mode::v2a;
        sampler::Denoiser logger = [&](const model::ForwardArgs& args) {
            if (fix_video) ok = ok && args.t_video == 0.0 && args.video_latent.bitwise_equal(v);
            else ok = ok && args.t_audio == 0.0 && args.audio_latent.bitwise_equal(a);
            return model::Velocity{Tensor::randn(args.video_latent.shape(), rng), Tensor::randn(args.audio_latent.shape(), rng)};
        };
        sampler::EulerInputs in;
        in.video = fix_video ? v : Tensor::randn(v.shape(), rng);
        in.audio = fix_video ? Tensor::randn(a.shape(), rng) : a;
        in.mode = mode;
        sampler::EulerConfig cfg;
        cfg.steps = 6;
        const auto out = sampler::euler_sample(logger, in, cfg);
        ok = ok && (fix_video ? out.video.bitwise_equal(v) : out.audio.bitwise_equal(a));
    }
    return {ok, ok ? "V2A and A2V: fixed latent bitwise, t = 0 on all 18 calls each" : "a clamp was violated"};
}

// cli

bool same_files(const fs::path& a, const fs::path& b, std::string& why) {
    std::vector<fs::path> files;
    for (const auto& e : fs::recursive_directory_iterator(a))
        if (e.is_regular_file()) files.push_back(fs::relative(e.path(), a));
    for (const auto& rel : files) {
        std::ifstream fa(a / rel, std::ios::binary), fb(b / rel, std::ios::binary);
        const std::string sa((std::istreambuf_iterator<char>(fa)), {}), sb((std::istreambuf_iterator<char>(fb)), {});
        if (!fb || sa != sb) {
            why = rel.string();
            return false;
        }
    }
    why = std::to_string(files.size()) + " files";
    return true;
}

Outcome manifest_reproduces(Context&) {
    const fs::path root = fs::temp_directory_path() / ("avdit_probe_manifest_" + std::to_string(::getpid()));
    fs::remove_all(root);
    const RunConfig c = RunConfig::tiny();
    const RunLayout L{root / "run"};
    fs::create_directories(L.root);
    {
        AvDiT m(c.model);
        Rng rng(126);
        m.randomize_gates(rng, 0.2);
        save_checkpoint(L.model(), m.parameters(), c.model);
        Rng crng(c.data.codec_init_seed);
        flow::CodecBundle b{codecs::AudioVae(c.data.audio_vae, crng), codecs::VideoVae(c.data.video_vae, crng),
                            codecs::LatentStats::identity(c.data.audio_vae.latent), codecs::LatentStats::identity(c.data.video_vae.latent)};
        b.save(L.codecs());
    }
    SampleRequest req;
    req.run = L.root;
    req.prompt = "red square bounces";
    req.config = c;
    req.config.sample.record_attention = true;
    req.out = root / "first";
    run_sample(req);
    rerun_manifest(root / "first" / "manifest.json", root / "second");
    std::string why;
    const bool ok = same_files(root / "first", root / "second", why);
    fs::remove_all(root);
    return {ok, ok ? "rerun reproduced " + why + " bitwise" : "rerun differs in " + why};
}

const std::map<std::string, std::function<Outcome(Context&)>>& probe_functions() {
    static const std::map<std::string, std::function<Outcome(Context&)>> fns{
        {"numerics.attention_rows", attention_rows},
        {"numerics.rms_norm_unit", rms_norm_unit},
        {"numerics.module_grad_check", module_grad_check},
        {"numerics.forward_determinism", forward_determinism},
        {"posenc.relative_position", relative_position},
        {"posenc.cross_temporal_only", cross_temporal_only},
        {"posenc.isometry", isometry},
        {"textcond.standardization", standardization},
        {"textcond.affine_invariance", affine_invariance},
        {"textcond.connector_length", connector_length},
        {"textcond.thinking_gradient", thinking_gradient},
        {"avdit.init_decoupling", init_decoupling},
        {"avdit.cross_shift_invariance", cross_shift_invariance},
        {"avdit.cross_modal_gradient", cross_modal_gradient},
        {"avdit.param_asymmetry", param_asymmetry},
        {"codecs.causality", causality},
        {"codecs.token_rate", token_rate},
        {"codecs.roundtrip", codec_roundtrip},
        {"flowtrain.flow_path", flow_path_exact},
        {"flowtrain.loss_zero_iff_exact", loss_zero_iff_exact},
        {"flowtrain.independent_timesteps", independent_timesteps},
        {"flowtrain.drop_rates", drop_rates},
        {"sampler.cfg_linearity", cfg_linearity},
        {"sampler.euler_oracle", euler_oracle},
        {"sampler.tiling_unity", tiling_unity},
        {"sampler.clamps", clamps},
        {"cli.manifest_reproduces", manifest_reproduces},
    };
    return fns;
}

}  // namespace

std::size_t ProbeReport::count(ProbeStatus s) const {
    return static_cast<std::size_t>(std::count_if(results.begin(), results.end(), [&](const auto& r) { return r.status == s; }));
}

json ProbeReport::to_json() const {
    json probes = json::array();
    for (const auto& r : results) {
        probes.push_back({{"id", r.info.id},
                          {"module", r.info.module},
                          {"invariant", r.info.invariant},
                          {"trained", r.info.trained},
                          {"status", status_name(r.status)},
                          {"detail", r.detail},
                          {"seconds", r.seconds}});
    }
    return {{"probes", probes},
            {"total", results.size()},
            {"passed", count(ProbeStatus::pass)},
            {"failed", count(ProbeStatus::fail)},
            {"skipped", count(ProbeStatus::skip)},
            {"documented_invariants", probe_catalog().size()},
            {"ok", ok()}};
}

std::string ProbeReport::text() const {
    std::ostringstream s;
    for (const auto& r : results) {
        s << status_name(r.status) << "  " << r.info.id << "  " << r.detail;
        if (r.status != ProbeStatus::skip) s << "  [" << fmt(r.seconds) << " s]";
        s << "\n";
    }
    s << results.size() << " probes (" << probe_catalog().size() << " documented invariants): " << count(ProbeStatus::pass)
      << " passed, " << count(ProbeStatus::fail) << " failed, " << count(ProbeStatus::skip) << " skipped\n";
    return s.str();
}

ProbeReport run_probes(const ProbeOptions& opts) {
    const auto& catalog = probe_catalog();
    if (opts.suite != "all" && std::none_of(catalog.begin(), catalog.end(), [&](const auto& p) { return p.module == opts.suite; })) {
        throw Error("probe: unknown suite '" + opts.suite + "' (use all, numerics, posenc, textcond, avdit, codecs, flowtrain, sampler or cli)");
    }
    for (const auto& m : opts.mutations) {
        if (m != "rope-base") throw Error("probe: unknown mutation '" + m + "'");
    }
    const bool have_run = opts.run && fs::exists(RunLayout{*opts.run}.config()) && fs::exists(RunLayout{*opts.run}.codecs() / "params.avt");
    Context ctx{opts};
    ProbeReport report;
    for (const auto& info : catalog) {
        if (opts.suite != "all" && info.module != opts.suite) continue;
        ProbeResult r{info, ProbeStatus::skip, {}, 0.0};
        if (info.trained && !have_run) {
            r.status = ProbeStatus::skip;
            r.detail = opts.run ? "no trained codecs under " + opts.run->string() : "needs a trained run (--run DIR)";
            report.results.push_back(r);
            continue;
        }
        const auto t0 = std::chrono::steady_clock::now();
        try {
            const Outcome o = probe_functions().at(info.id)(ctx);
            r.status = o.ok ? ProbeStatus::pass : ProbeStatus::fail;
            r.detail = o.detail;
        } catch (const std::exception& e) {
            r.status = ProbeStatus::fail;
            r.detail = std::string("error: ") + e.what();
        }
        r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        report.results.push_back(r);
    }
    return report;
}

}  // namespace avdit::cli
