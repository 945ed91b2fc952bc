#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <set>

#include "avdit/model/avdit.hpp"
#include "avdit/model/checkpoint.hpp"
#include "avdit/numerics/grad_check.hpp"

using namespace avdit;
using namespace avdit::model;

namespace {

struct Inputs {
    Tensor video, audio;
    PerStream<text::TextConditioning> cond;
};

Inputs make_inputs(const AvDiT& m, Rng& rng, std::size_t tv = 2, std::size_t hw = 2, std::size_t ta = 5) {
    const auto& c = m.config();
    Inputs in;
    in.video = Tensor::randn({tv, hw, hw, c.video.latent_channels}, rng);
    in.audio = Tensor::randn({ta, c.audio.latent_channels}, rng);
    in.cond = m.condition(prompt_features({300, 301, 302}, c.encoder));
    return in;
}

ForwardArgs args_for(const Inputs& in, double tv = 0.6, double ta = 0.3) {
    ForwardArgs a;
    a.video_latent = in.video;
    a.audio_latent = in.audio;
    a.t_video = tv;
    a.t_audio = ta;
    a.cond = in.cond;
    return a;
}

ModelConfig tiny_depth(std::size_t depth) {
    auto c = ModelConfig::tiny();
    c.depth = depth;
    return c;
}

}  // namespace

TEST(ModelConfig, JsonRoundTripAndHash) {
    const auto c = ModelConfig::reference();
    nlohmann::json j = c;
    const auto back = j.get<ModelConfig>();
    EXPECT_EQ(nlohmann::json(back), j);
    EXPECT_EQ(config_hash(j).size(), 16u);
    auto d = c;
    d.depth = 3;
    EXPECT_NE(config_hash(nlohmann::json(d)), config_hash(j));
}

TEST(ModelConfig, RejectsNarrowVideoStream) {
    auto c = ModelConfig::tiny();
    c.video.d_model = 16;
    c.video.heads = 1;
    EXPECT_THROW(AvDiT{c}, Error);
}

TEST(Model, OutputShapesMatchInputs) {
    AvDiT m(tiny_depth(2));
    Rng rng(1);
    for (auto [tv, hw, ta] : {std::tuple{1u, 1u, 1u}, std::tuple{3u, 2u, 7u}, std::tuple{2u, 3u, 13u}}) {
        auto in = make_inputs(m, rng, tv, hw, ta);
        auto out = m.forward(args_for(in));
        EXPECT_EQ(out.video.shape(), in.video.shape());
        EXPECT_EQ(out.audio.shape(), in.audio.shape());
    }
}

TEST(Model, RejectsBadLatentShapes) {
    AvDiT m(ModelConfig::tiny());
    Rng rng(2);
    auto in = make_inputs(m, rng);
    auto a = args_for(in);
    a.video_latent = Tensor({2, 2, 2, 3});
    EXPECT_THROW(m.forward(a), Error);
    a = args_for(in);
    a.audio_latent = Tensor(Shape{0, m.config().audio.latent_channels});
    EXPECT_THROW(m.forward(a), Error);
}

TEST(Model, ZeroGatesDecoupleStreamsAtInit) {
    AvDiT joint(tiny_depth(2));
    auto ablated_cfg = tiny_depth(2);
    ablated_cfg.av_cross = false;
    AvDiT ablated(ablated_cfg);
    Rng rng(3);
    auto in = make_inputs(joint, rng);
    const auto ref = joint.forward(args_for(in));
    const auto uni = ablated.forward(args_for(in));
    EXPECT_TRUE(ref.video.bitwise_equal(uni.video));
    EXPECT_TRUE(ref.audio.bitwise_equal(uni.audio));

    // Audio replaced by noise of a different length: video is untouched.
    auto other = in;
    other.audio = Tensor::randn({9, joint.config().audio.latent_channels}, rng, 3.0);
    EXPECT_TRUE(joint.forward(args_for(other)).video.bitwise_equal(ref.video));
}

TEST(Model, RandomGatesCoupleStreams) {
    AvDiT m(tiny_depth(2));
    Rng rng(4);
    m.randomize_gates(rng, 0.3);
    auto in = make_inputs(m, rng);
    const auto ref = m.forward(args_for(in));
    auto other = in;
    other.audio = Tensor::randn(in.audio.shape(), rng);
    EXPECT_GT(max_abs_diff(m.forward(args_for(other)).video, ref.video), 1e-8);
}

TEST(Model, DropModalSeversAudioToVideo) {
    AvDiT m(tiny_depth(2));
    Rng rng(5);
    m.randomize_gates(rng, 0.3);
    auto in = make_inputs(m, rng);
    auto a = args_for(in);
    a.drop_modal = {true, true};
    const auto ref = m.forward(a);
    for (int trial = 0; trial < 3; ++trial) {
        auto b = a;
        b.audio_latent = Tensor::randn({3 + 4 * static_cast<std::size_t>(trial), m.config().audio.latent_channels}, rng);
        EXPECT_TRUE(m.forward(b).video.bitwise_equal(ref.video));
    }
}

TEST(Model, DropTextUsesNullConditioning) {
    AvDiT m(ModelConfig::tiny());
    Rng rng(6);
    m.randomize_gates(rng, 0.3);
    auto in = make_inputs(m, rng);
    auto a = args_for(in);
    a.drop_text = {true, true};
    auto b = a;
    b.cond = m.condition(prompt_features({400, 401}, m.config().encoder));
    EXPECT_TRUE(m.forward(a).video.bitwise_equal(m.forward(b).video));
    EXPECT_FALSE(m.forward(args_for(in)).video.bitwise_equal(m.forward(a).video));
}

TEST(Model, IndependentTimestepGridIsFinite) {
    AvDiT m(tiny_depth(2));
    Rng rng(7);
    m.randomize_gates(rng, 0.2);
    auto in = make_inputs(m, rng);
    for (double tv : {0.0, 0.25, 0.5, 0.75, 1.0}) {
        for (double ta : {0.0, 0.25, 0.5, 0.75, 1.0}) {
            auto out = m.forward(args_for(in, tv, ta));
            EXPECT_TRUE(out.video.all_finite() && out.audio.all_finite()) << tv << "," << ta;
        }
    }
    EXPECT_THROW(m.forward(args_for(in, 1.5, 0.5)), Error);
}

TEST(Model, NanReportsBlockIndex) {
    AvDiT m(tiny_depth(3));
    Rng rng(8);
    auto in = make_inputs(m, rng);
    Tensor w = m.block(Stream::audio, 1).ffn.fc2.weight;
    w[0] = std::nan("");
    try {
        m.forward(args_for(in));
        FAIL() << "expected an error";
    } catch (const Error& e) {
        EXPECT_NE(std::string(e.what()).find("block 1"), std::string::npos) << e.what();
    }
}

class AvAttention : public ::testing::Test {
protected:
    AvDiT m{ModelConfig::tiny()};
    Rng rng{9};

    void SetUp() override { m.randomize_gates(rng, 0.3); }

    StreamState state(Stream s, std::size_t n, double t, const posenc::TokenCoords& coords) {
        const auto& sc = s == Stream::video ? m.config().video : m.config().audio;
        return m.embed(s, Tensor::randn({n, sc.latent_channels}, rng), t, coords, m.null_conditioning(s), false);
    }
};

TEST_F(AvAttention, SingleKeyReturnsModulatedValue) {
    const auto& blk = m.block(Stream::video, 0);
    auto vs = state(Stream::video, 6, 0.4, posenc::video_coords(3, 1, 2, 5.0));
    auto as = state(Stream::audio, 1, 0.7, posenc::audio_coords(1, 25.0));
    Tensor q_src = blk.norm_av(vs.hidden);
    Tensor kv_src = m.block(Stream::audio, 0).norm_av(as.hidden);
    Tensor out = m.av_attended(blk, q_src, kv_src, vs, as, nullptr);

    const auto mod = nn::chunk(reshape(blk.av_mod_kv(reshape(as.temb, {1, as.temb.numel()})), {2 * m.config().cross_dim}), 2);
    Tensor v = nn::modulate(blk.av_v(kv_src), mod[0], mod[1]);
    ASSERT_EQ(out.shape(), (Shape{6, m.config().cross_dim}));
    for (std::size_t i = 0; i < 6; ++i)
        for (std::size_t j = 0; j < m.config().cross_dim; ++j)
            EXPECT_NEAR(out[i * m.config().cross_dim + j], v[j], 1e-12);
}

TEST_F(AvAttention, CommonTemporalShiftLeavesProbabilitiesUnchanged) {
    const auto& blk = m.block(Stream::audio, 0);
    const auto& vblk = m.block(Stream::video, 0);
    Tensor v_lat = Tensor::randn({4 * 2 * 2, m.config().video.latent_channels}, rng);
    Tensor a_lat = Tensor::randn({20, m.config().audio.latent_channels}, rng);
    auto probs_at = [&](std::size_t vt0, std::size_t at0) {
        auto vs = m.embed(Stream::video, v_lat, 0.5, posenc::video_coords(4, 2, 2, 5.0, vt0), m.null_conditioning(Stream::video), false);
        auto as = m.embed(Stream::audio, a_lat, 0.5, posenc::audio_coords(20, 25.0, at0), m.null_conditioning(Stream::audio), false);
        Tensor p;
        m.av_attended(blk, blk.norm_av(as.hidden), vblk.norm_av(vs.hidden), as, vs, &p);
        return p;
    };
    // +2.0 s is 10 latent video frames and 50 audio tokens.
    Tensor base = probs_at(0, 0);
    Tensor shifted = probs_at(10, 50);
    EXPECT_LT(max_abs_diff(base, shifted), 1e-9);
    // A shift of only one stream does move the map.
    EXPECT_GT(max_abs_diff(base, probs_at(0, 50)), 1e-6);
}

TEST_F(AvAttention, SpatialCoordinatesDoNotEnterCrossAttention) {
    const auto& blk = m.block(Stream::video, 0);
    Tensor v_lat = Tensor::randn({2 * 3 * 3, m.config().video.latent_channels}, rng);
    auto as = state(Stream::audio, 10, 0.2, posenc::audio_coords(10, 25.0));
    auto with_xy = posenc::video_coords(2, 3, 3, 5.0, 0, 4, 7);
    auto zeroed = with_xy;
    std::fill(zeroed.x_idx->begin(), zeroed.x_idx->end(), 0.0);
    std::fill(zeroed.y_idx->begin(), zeroed.y_idx->end(), 0.0);
    auto a = m.embed(Stream::video, v_lat, 0.5, with_xy, m.null_conditioning(Stream::video), false);
    auto b = m.embed(Stream::video, v_lat, 0.5, zeroed, m.null_conditioning(Stream::video), false);
    Tensor kv = m.block(Stream::audio, 0).norm_av(as.hidden);
    Tensor pa, pb;
    m.av_attended(blk, blk.norm_av(a.hidden), kv, a, as, &pa);
    m.av_attended(blk, blk.norm_av(b.hidden), kv, b, as, &pb);
    EXPECT_TRUE(pa.bitwise_equal(pb));
}

TEST_F(AvAttention, EmptyKeySequenceRejected) {
    const auto& blk = m.block(Stream::video, 0);
    auto vs = state(Stream::video, 2, 0.4, posenc::video_coords(2, 1, 1, 5.0));
    auto as = state(Stream::audio, 1, 0.7, posenc::audio_coords(1, 25.0));
    EXPECT_THROW(m.av_attended(blk, blk.norm_av(vs.hidden), Tensor(Shape{0, m.config().audio.d_model}), vs, as, nullptr),
                 Error);
}

TEST(AttentionCaptureTest, RowsSumToOneAndOneMapPerLayer) {
    AvDiT m(tiny_depth(2));
    Rng rng(10);
    m.randomize_gates(rng, 0.3);
    auto in = make_inputs(m, rng, 2, 2, 6);
    AttentionCapture cap;
    auto a = args_for(in);
    a.capture = &cap;
    m.forward(a);
    ASSERT_EQ(cap.video_to_audio.size(), 2u);
    ASSERT_EQ(cap.audio_to_video.size(), 2u);
    EXPECT_EQ(cap.maps(AttnDirection::video_to_audio)[0].shape(), (Shape{8, 6}));
    EXPECT_EQ(cap.maps(AttnDirection::audio_to_video)[0].shape(), (Shape{6, 8}));
    for (const auto* maps : {&cap.video_to_audio, &cap.audio_to_video}) {
        for (const auto& p : *maps) {
            const std::size_t rows = p.dim(0), cols = p.dim(1);
            for (std::size_t i = 0; i < rows; ++i) {
                double s = 0.0;
                for (std::size_t j = 0; j < cols; ++j) {
                    EXPECT_GE(p[i * cols + j], 0.0);
                    s += p[i * cols + j];
                }
                EXPECT_NEAR(s, 1.0, 1e-9);
            }
        }
    }
}

TEST(AttentionCaptureTest, ZeroQueryProjectionGivesUniformMaps) {
    AvDiT m(ModelConfig::tiny());
    Rng rng(11);
    for (Stream s : {Stream::video, Stream::audio}) {
        const auto& blk = m.block(s, 0);
        for (auto& v : Tensor(blk.av_q.weight).data()) v = 0.0;
        for (auto& v : Tensor(blk.av_q.bias).data()) v = 0.0;
    }
    auto in = make_inputs(m, rng, 2, 2, 5);
    AttentionCapture cap;
    auto a = args_for(in);
    a.capture = &cap;
    m.forward(a);
    for (double v : cap.video_to_audio[0].data()) EXPECT_NEAR(v, 1.0 / 5.0, 1e-9);
    for (double v : cap.audio_to_video[0].data()) EXPECT_NEAR(v, 1.0 / 8.0, 1e-9);
}

TEST(ModelParams, VideoToAudioRatioAtReference) {
    AvDiT m(ModelConfig::reference());
    const auto counts = stream_parameter_counts(m);
    const double ratio = static_cast<double>(counts.video) / static_cast<double>(counts.audio);
    EXPECT_GE(ratio, 2.0);
    EXPECT_LE(ratio, 4.0);
}

TEST(ModelParams, NamesAreUniqueAndPrefixed) {
    AvDiT m(ModelConfig::tiny());
    const auto ps = m.parameters();
    std::set<std::string> names;
    for (const auto& p : ps.items()) {
        EXPECT_TRUE(names.insert(p.name).second) << p.name;
        const bool ok = p.name.rfind("video.", 0) == 0 || p.name.rfind("audio.", 0) == 0 || p.name.rfind("text.", 0) == 0;
        EXPECT_TRUE(ok) << p.name;
    }
    EXPECT_EQ(ps.numel(), m.stream_parameters(Stream::video).numel() + m.stream_parameters(Stream::audio).numel() +
                              ps.filter("text.").numel());
}

TEST(ModelGrad, MatchesCentralDifferences) {
    AvDiT m(ModelConfig::tiny());
    Rng rng(12);
    m.randomize_gates(rng, 0.3);
    auto in = make_inputs(m, rng, 2, 1, 3);
    const auto feats = prompt_features({300, 301}, m.config().encoder);
    auto loss = [&] {
        auto a = args_for(in);
        a.cond = m.condition(feats);
        auto out = m.forward(a);
        return add(mean(square(out.video)), mean(square(out.audio)));
    };
    const auto report = grad_check_params(loss, m.parameters(), 200, 1e-5, rng);
    EXPECT_LT(report.max_rel_error, 1e-4) << report.worst_param << " autodiff " << report.worst_autodiff << " numeric "
                                          << report.worst_numeric;
}

TEST(ModelGrad, VideoLossReachesAudioInputThroughGates) {
    AvDiT m(ModelConfig::tiny());
    Rng rng(13);
    auto in = make_inputs(m, rng);
    auto grad_norm = [&] {
        in.audio.set_requires_grad(true);
        in.audio.zero_grad();
        Tape tape;
        {
            TapeScope scope(tape);
            Tensor loss = mean(square(m.forward(args_for(in)).video));
            tape.backward(loss);
        }
        double g = 0.0;
        for (double v : in.audio.grad()) g += std::abs(v);
        return g;
    };
    EXPECT_EQ(grad_norm(), 0.0);
    m.randomize_gates(rng, 0.3);
    EXPECT_GT(grad_norm(), 0.0);
}

TEST(Checkpoint, RoundTripRestoresOutputs) {
    auto cfg = ModelConfig::tiny();
    AvDiT a(cfg);
    Rng rng(14);
    a.randomize_gates(rng, 0.3);
    const auto dir = std::filesystem::temp_directory_path() / "avdit_ckpt_test";
    save_checkpoint(dir, a.parameters(), nlohmann::json(cfg));
    auto other = cfg;
    other.init_seed = 99;
    AvDiT b(other);
    auto in = make_inputs(a, rng);
    EXPECT_FALSE(a.forward(args_for(in)).video.bitwise_equal(b.forward(args_for(in)).video));
    load_checkpoint(dir, b.parameters());
    EXPECT_TRUE(a.forward(args_for(in)).video.bitwise_equal(b.forward(args_for(in)).video));

    AvDiT deeper(tiny_depth(2));
    EXPECT_THROW(load_checkpoint(dir, deeper.parameters()), Error);
    std::filesystem::remove_all(dir);
}
