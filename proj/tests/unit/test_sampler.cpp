#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "avdit/codecs/media.hpp"
#include "avdit/numerics/io.hpp"
#include "avdit/sampler/pipeline.hpp"

using namespace avdit;
using namespace avdit::sampler;

namespace {

// Values on a coarse dyadic grid, so sums and differences stay exact.
Tensor dyadic(const Shape& shape, Rng& rng) {
    std::uniform_int_distribution<int> k(-16, 16);
    Tensor t(shape);
    for (auto& v : t.data()) v = k(rng) / 8.0;
    return t;
}

struct Call {
    double t_video, t_audio;
    PerStream<bool> drop_text, drop_modal;
    Tensor video, audio;
};

/// Straight-path oracle: velocity noise - target on both streams, logging calls.
Denoiser oracle(const Tensor& noise_v, const Tensor& target_v, const Tensor& noise_a, const Tensor& target_a,
                std::vector<Call>* log = nullptr) {
    return [=](const model::ForwardArgs& a) {
        if (log) log->push_back({a.t_video, a.t_audio, a.drop_text, a.drop_modal, a.video_latent.clone(), a.audio_latent.clone()});
        return Velocity{sub(noise_v, target_v), sub(noise_a, target_a)};
    };
}

model::ModelConfig tiny() { return model::ModelConfig::tiny(); }

flow::DataConfig tiny_data(const model::ModelConfig& mc) {
    flow::DataConfig d;
    d.video_vae.latent = mc.video.latent_channels;
    d.video_vae.hidden = 16;
    d.audio_vae.latent = mc.audio.latent_channels;
    d.audio_vae.hidden = 16;
    return d;
}

flow::CodecBundle tiny_codecs(const flow::DataConfig& d) {
    Rng rng(d.codec_init_seed);
    codecs::AudioVae a(d.audio_vae, rng);
    codecs::VideoVae v(d.video_vae, rng);
    return {a, v, codecs::LatentStats::identity(d.audio_vae.latent), codecs::LatentStats::identity(d.video_vae.latent)};
}

SampleConfig quick(Mode mode = Mode::t2av) {
    SampleConfig c;
    c.mode = mode;
    c.steps = 3;
    c.seed = 11;
    return c;
}

}  // namespace

TEST(BimodalCfg, ZeroWeightsReturnFullPrediction) {
    Rng rng(1);
    const Tensor f = Tensor::randn({4, 3}, rng), t = Tensor::randn({4, 3}, rng), m = Tensor::randn({4, 3}, rng);
    EXPECT_TRUE(bimodal_cfg(f, t, m, 0.0, 0.0).bitwise_equal(f));
}

TEST(BimodalCfg, ScalarExample) {
    EXPECT_EQ(bimodal_cfg(Tensor({1}, 2.0), Tensor({1}, 1.0), Tensor({1}, 0.0), 3.0, 3.0)[0], 11.0);
}

TEST(BimodalCfg, ReducesToStandardGuidance) {
    Rng rng(2);
    const Tensor f = Tensor::randn({6}, rng), t = Tensor::randn({6}, rng), m = Tensor::randn({6}, rng);
    const Tensor g = bimodal_cfg(f, t, m, 4.5, 0.0);
    for (std::size_t i = 0; i < 6; ++i) EXPECT_EQ(g[i], f[i] + 4.5 * (f[i] - t[i]));
}

TEST(BimodalCfg, LinearInEachInput) {
    Rng rng(3);
    const Tensor f = dyadic({5}, rng), t = dyadic({5}, rng), m = dyadic({5}, rng), d = dyadic({5}, rng);
    const Tensor base = bimodal_cfg(f, t, m, 3.0, 2.0);
    const Tensor shifted = bimodal_cfg(f, add(t, d), m, 3.0, 2.0);
    for (std::size_t i = 0; i < 5; ++i) EXPECT_EQ(shifted[i] - base[i], -3.0 * d[i]);
}

TEST(BimodalCfg, RejectsShapeMismatch) {
    EXPECT_THROW(bimodal_cfg(Tensor({2}), Tensor({3}), Tensor({2}), 1.0, 1.0), Error);
}

TEST(Modes, ParseAndName) {
    for (Mode m : {Mode::t2av, Mode::v2a, Mode::a2v}) EXPECT_EQ(parse_mode(mode_name(m)), m);
    EXPECT_THROW(parse_mode("a2a"), Error);
}

class EulerOracle : public ::testing::Test {
protected:
    Rng rng{4};
    Tensor nv = dyadic({2, 2, 2, 3}, rng), xv = dyadic({2, 2, 2, 3}, rng);
    Tensor na = dyadic({5, 4}, rng), xa = dyadic({5, 4}, rng);

    EulerInputs start(Mode mode = Mode::t2av) const {
        EulerInputs in;
        in.video = nv;
        in.audio = na;
        in.mode = mode;
        return in;
    }
};

TEST_F(EulerOracle, OneStepRecoversTarget) {
    EulerConfig cfg;
    cfg.steps = 1;
    const auto out = euler_sample(oracle(nv, xv, na, xa), start(), cfg);
    EXPECT_TRUE(out.video.bitwise_equal(xv));
    EXPECT_TRUE(out.audio.bitwise_equal(xa));
}

TEST_F(EulerOracle, ManyStepsStayOnTheLine) {
    EulerConfig cfg;
    cfg.steps = 8;
    const auto out = euler_sample(oracle(nv, xv, na, xa), start(), cfg);
    EXPECT_LT(max_abs_diff(out.video, xv), 1e-14);
    EXPECT_LT(max_abs_diff(out.audio, xa), 1e-14);
}

TEST_F(EulerOracle, ThreeCallsPerStep) {
    std::vector<Call> log;
    EulerConfig cfg;
    cfg.steps = 4;
    euler_sample(oracle(nv, xv, na, xa, &log), start(), cfg);
    ASSERT_EQ(log.size(), 12u);
    for (std::size_t s = 0; s < 4; ++s) {
        const Call &full = log[3 * s], &no_text = log[3 * s + 1], &no_modal = log[3 * s + 2];
        EXPECT_FALSE(full.drop_text.video || full.drop_text.audio || full.drop_modal.video || full.drop_modal.audio);
        EXPECT_TRUE(no_text.drop_text.video && no_text.drop_text.audio);
        EXPECT_FALSE(no_text.drop_modal.video || no_text.drop_modal.audio);
        EXPECT_TRUE(no_modal.drop_modal.video && no_modal.drop_modal.audio);
        EXPECT_FALSE(no_modal.drop_text.video || no_modal.drop_text.audio);
        EXPECT_EQ(full.t_video, 1.0 - 0.25 * static_cast<double>(s));
        EXPECT_EQ(full.t_audio, full.t_video);
    }
}

TEST_F(EulerOracle, VideoToAudioHoldsVideoClean) {
    std::vector<Call> log;
    EulerInputs in = start(Mode::v2a);
    in.video = xv;
    EulerConfig cfg;
    cfg.steps = 5;
    const auto out = euler_sample(oracle(nv, xv, na, xa, &log), in, cfg);
    EXPECT_TRUE(out.video.bitwise_equal(xv));
    for (const auto& c : log) {
        EXPECT_EQ(c.t_video, 0.0);
        EXPECT_TRUE(c.video.bitwise_equal(xv));
    }
    EXPECT_LT(max_abs_diff(out.audio, xa), 1e-14);
}

TEST_F(EulerOracle, AudioToVideoHoldsAudioClean) {
    std::vector<Call> log;
    EulerInputs in = start(Mode::a2v);
    in.audio = xa;
    EulerConfig cfg;
    cfg.steps = 5;
    const auto out = euler_sample(oracle(nv, xv, na, xa, &log), in, cfg);
    EXPECT_TRUE(out.audio.bitwise_equal(xa));
    for (const auto& c : log) {
        EXPECT_EQ(c.t_audio, 0.0);
        EXPECT_TRUE(c.audio.bitwise_equal(xa));
    }
}

TEST_F(EulerOracle, PartialStartBeginsAtTStart) {
    std::vector<Call> log;
    EulerConfig cfg;
    cfg.steps = 2;
    cfg.t_start = 0.5;
    euler_sample(oracle(nv, xv, na, xa, &log), start(), cfg);
    EXPECT_EQ(log.front().t_video, 0.5);
    EXPECT_EQ(log.back().t_video, 0.25);
}

TEST_F(EulerOracle, NanAbortsWithStepIndex) {
    Denoiser bad = [&](const model::ForwardArgs& a) {
        const bool late = a.t_video < 0.6;
        return Velocity{Tensor(a.video_latent.shape(), late ? std::nan("") : 0.0), Tensor(a.audio_latent.shape())};
    };
    EulerConfig cfg;
    cfg.steps = 4;
    try {
        euler_sample(bad, start(), cfg);
        FAIL() << "expected an error";
    } catch (const Error& e) {
        EXPECT_NE(std::string(e.what()).find("step 2"), std::string::npos) << e.what();
    }
}

TEST_F(EulerOracle, RejectsZeroSteps) {
    EulerConfig cfg;
    cfg.steps = 0;
    EXPECT_THROW(euler_sample(oracle(nv, xv, na, xa), start(), cfg), Error);
}

TEST(EulerModel, DeterministicAndRecorded) {
    model::AvDiT m(tiny());
    Rng rng(5);
    m.randomize_gates(rng, 0.2);
    EulerInputs in;
    in.video = Tensor::randn({2, 2, 2, m.config().video.latent_channels}, rng);
    in.audio = Tensor::randn({6, m.config().audio.latent_channels}, rng);
    in.cond = m.condition(model::prompt_features({300, 301}, m.config().encoder));
    EulerConfig cfg;
    cfg.steps = 3;
    Recording rec;
    const auto a = euler_sample(model_denoiser(m), in, cfg, &rec);
    const auto b = euler_sample(model_denoiser(m), in, cfg);
    EXPECT_TRUE(a.video.bitwise_equal(b.video));
    EXPECT_TRUE(a.audio.bitwise_equal(b.audio));
    ASSERT_EQ(rec.steps.size(), 3u);
    EXPECT_EQ(rec.steps[0].video_to_audio.size(), m.config().depth);
    // Rows and columns index video tokens (2 x 2 x 2) and audio tokens.
    EXPECT_EQ(record_attention(rec, AttnDirection::video_to_audio, 0, 3).shape(), (Shape{8, 6}));
    EXPECT_EQ(record_attention(rec, AttnDirection::audio_to_video, 0, 1).shape(), (Shape{6, 8}));
}

TEST(RecordAttention, AveragesLayersAndSteps) {
    Recording rec;
    for (double s : {1.0, 2.0, 3.0}) {
        AttentionCapture c;
        c.video_to_audio = {Tensor({1, 2}, {s, 0.0}), Tensor({1, 2}, {s + 1.0, 1.0})};
        c.audio_to_video = c.video_to_audio;
        rec.steps.push_back(c);
    }
    const Tensor all = record_attention(rec, AttnDirection::video_to_audio, 0, 3);
    EXPECT_DOUBLE_EQ(all[0], 2.5);
    EXPECT_DOUBLE_EQ(all[1], 0.5);
    const Tensor last = record_attention(rec, AttnDirection::video_to_audio, 2, 3);
    EXPECT_DOUBLE_EQ(last[0], 3.5);
    EXPECT_THROW(record_attention(rec, AttnDirection::video_to_audio, 2, 2), Error);
    EXPECT_THROW(record_attention(rec, AttnDirection::video_to_audio, 1, 4), Error);
}

TEST(Upscale, ConstantStaysConstant) {
    const Tensor up = latent_upscale(Tensor({5, 8, 8, 2}, 0.7));
    EXPECT_EQ(up.shape(), (Shape{5, 16, 16, 2}));
    for (double v : up.data()) EXPECT_EQ(v, 0.7);
}

TEST(Upscale, BoxDownsampleInvertsOnSmoothLatents) {
    Rng rng(6);
    std::uniform_real_distribution<double> u(0.0, 6.28);
    for (int trial = 0; trial < 5; ++trial) {
        Tensor x({3, 8, 8, 2});
        const double py = u(rng), px = u(rng);
        for (std::size_t t = 0; t < 3; ++t)
            for (std::size_t y = 0; y < 8; ++y)
                for (std::size_t xx = 0; xx < 8; ++xx)
                    for (std::size_t c = 0; c < 2; ++c)
                        x[((t * 8 + y) * 8 + xx) * 2 + c] =
                            std::sin(0.5 * static_cast<double>(y) + py + static_cast<double>(c)) + std::cos(0.4 * static_cast<double>(xx) + px);
        EXPECT_LT(relative_l2(box_downsample(latent_upscale(x)), x), 0.1);
    }
}

TEST(Tiling, PartitionOfUnity) {
    for (auto [dims, tile, overlap] :
         {std::tuple{std::array<std::size_t, 3>{6, 8, 8}, std::array<std::size_t, 3>{6, 6, 6}, std::array<std::size_t, 3>{0, 4, 4}},
          std::tuple{std::array<std::size_t, 3>{9, 13, 7}, std::array<std::size_t, 3>{4, 5, 3}, std::array<std::size_t, 3>{2, 2, 1}},
          std::tuple{std::array<std::size_t, 3>{3, 16, 16}, std::array<std::size_t, 3>{2, 7, 6}, std::array<std::size_t, 3>{1, 3, 5}}}) {
        const auto layout = tile_partition(dims, tile, overlap);
        const Tensor cover = layout.coverage();
        for (double c : cover.data()) ASSERT_NEAR(c, 1.0, 1e-12);
    }
}

TEST(Tiling, IdentityRefinementIsExact) {
    Rng rng(7);
    const Tensor x = Tensor::randn({7, 11, 9, 3}, rng);
    const auto layout = tile_partition({7, 11, 9}, {4, 5, 4}, {2, 3, 2});
    EXPECT_GT(layout.tiles.size(), 8u);
    EXPECT_TRUE(tile_blend(tile_split(x, layout), layout).bitwise_equal(x));
}

TEST(Tiling, RampMatchesHandValues) {
    // Two tiles [0, 6) and [2, 8) share a 4-token band at positions 2..5.
    const auto four = tile_partition({1, 1, 8}, {1, 1, 6}, {0, 0, 4});
    ASSERT_EQ(four.tiles.size(), 2u);
    const double second[] = {0.2, 0.4, 0.6, 0.8};
    for (std::size_t i = 0; i < 4; ++i) {
        EXPECT_NEAR(four.weights[1][i], second[i], 1e-15);
        EXPECT_NEAR(four.weights[0][2 + i], 1.0 - second[i], 1e-15);
    }
    // With a 3-token band at 3..5 the middle position splits evenly.
    const auto three = tile_partition({1, 1, 9}, {1, 1, 6}, {0, 0, 3});
    EXPECT_EQ(three.weights[0][4], 0.5);
    EXPECT_EQ(three.weights[1][1], 0.5);
}

TEST(Tiling, TileLargerThanVolumeIsSingleTile) {
    const auto layout = tile_partition({3, 4, 4}, {6, 6, 6}, {2, 2, 2});
    ASSERT_EQ(layout.tiles.size(), 1u);
    for (double w : layout.weights[0].data()) EXPECT_EQ(w, 1.0);
}

TEST(Tiling, ConstantFieldHasNoSeams) {
    const auto layout = tile_partition({6, 16, 16}, {6, 6, 6}, {0, 4, 4});
    std::vector<Tensor> tiles;
    for (const auto& w : layout.tiles) {
        const auto e = w.extent();
        tiles.emplace_back(Shape{e[0], e[1], e[2], 2}, -1.3);
    }
    const Tensor out = tile_blend(tiles, layout);
    double worst = 0.0;
    for (double v : out.data()) worst = std::max(worst, std::abs(v + 1.3));
    EXPECT_EQ(worst, 0.0);
}

TEST(Tiling, RejectsBadArguments) {
    EXPECT_THROW(tile_partition({4, 8, 8}, {2, 4, 4}, {0, 4, 0}), Error);
    EXPECT_THROW(tile_split(Tensor({4, 8, 7, 1}), tile_partition({4, 8, 8}, {2, 4, 4}, {0, 1, 1})), Error);
}

class PipelineTest : public ::testing::Test {
protected:
    model::ModelConfig mc = tiny();
    model::AvDiT m{mc};
    flow::DataConfig data = tiny_data(mc);
    flow::CodecBundle codecs = tiny_codecs(data);
    sampler::PipelineInputs in;

    void SetUp() override {
        Rng rng(8);
        m.randomize_gates(rng, 0.2);
        in.prompt = model::prompt_features({300, 302, 305}, mc.encoder);
    }
};

TEST_F(PipelineTest, OutputIsTwiceBaseResolution) {
    const auto r = multiscale_pipeline(m, codecs, data, in, quick());
    EXPECT_EQ(r.base_video.shape(), (Shape{6, 4, 4, mc.video.latent_channels}));
    EXPECT_EQ(r.video_latent.shape(), (Shape{6, 8, 8, mc.video.latent_channels}));
    EXPECT_EQ(r.frames.shape(), (Shape{11, 32, 32, 3}));
    EXPECT_EQ(r.audio_latent.shape(), (Shape{25, mc.audio.latent_channels}));
    EXPECT_EQ(r.audio_frames.shape(), (Shape{100, 32}));
}

TEST_F(PipelineTest, SingleTileEqualsUntiled) {
    auto tiled = quick();
    tiled.tile = {64, 64, 64};
    auto whole = quick();
    whole.tiling = false;
    const auto a = multiscale_pipeline(m, codecs, data, in, tiled);
    const auto b = multiscale_pipeline(m, codecs, data, in, whole);
    EXPECT_TRUE(a.video_latent.bitwise_equal(b.video_latent));
    EXPECT_TRUE(a.frames.bitwise_equal(b.frames));
}

TEST_F(PipelineTest, DeterministicAcrossThreadCounts) {
    auto one = quick();
    auto many = quick();
    many.threads = 3;
    const auto a = multiscale_pipeline(m, codecs, data, in, one);
    const auto b = multiscale_pipeline(m, codecs, data, in, many);
    EXPECT_TRUE(a.video_latent.bitwise_equal(b.video_latent));
    EXPECT_TRUE(a.audio_latent.bitwise_equal(b.audio_latent));
}

TEST_F(PipelineTest, VideoToAudioKeepsVideo) {
    Rng rng(9);
    in.video_latent = Tensor::randn({6, 4, 4, mc.video.latent_channels}, rng);
    const auto r = multiscale_pipeline(m, codecs, data, in, quick(Mode::v2a));
    EXPECT_TRUE(r.video_latent.bitwise_equal(*in.video_latent));
    in.video_latent.reset();
    EXPECT_THROW(multiscale_pipeline(m, codecs, data, in, quick(Mode::v2a)), Error);
}

TEST_F(PipelineTest, AudioToVideoKeepsAudio) {
    Rng rng(10);
    in.audio_latent = Tensor::randn({25, mc.audio.latent_channels}, rng);
    const auto r = multiscale_pipeline(m, codecs, data, in, quick(Mode::a2v));
    EXPECT_TRUE(r.audio_latent.bitwise_equal(*in.audio_latent));
    in.audio_latent = Tensor::randn({24, mc.audio.latent_channels}, rng);
    EXPECT_THROW(multiscale_pipeline(m, codecs, data, in, quick(Mode::a2v)), Error);
}

TEST(SampleConfigJson, RoundTripAndRefineSteps) {
    SampleConfig c;
    c.mode = Mode::a2v;
    c.tile = {3, 4, 5};
    nlohmann::json j = c;
    EXPECT_EQ(nlohmann::json(j.get<SampleConfig>()), j);
    EXPECT_EQ(c.refine_steps(), 16u);
    c.steps = 1;
    EXPECT_EQ(c.refine_steps(), 1u);
}

TEST(TileThreads, CappedByEnvironment) {
    ::setenv("AVDIT_THREADS", "2", 1);
    EXPECT_EQ(tile_threads(8), 2u);
    EXPECT_EQ(tile_threads(1), 1u);
    ::unsetenv("AVDIT_THREADS");
    EXPECT_EQ(tile_threads(8), 8u);
    EXPECT_EQ(tile_threads(0), 1u);
}

TEST_F(PipelineTest, ExportWritesArtifactsAndReruns) {
    const auto dir = std::filesystem::temp_directory_path() / "avdit_export";
    std::filesystem::remove_all(dir);
    auto cfg = quick();
    cfg.record_attention = true;
    const auto r = multiscale_pipeline(m, codecs, data, in, cfg);
    export_run(r, dir, {{"sample", cfg}}, data);

    std::size_t frames = 0;
    for (const auto& e : std::filesystem::directory_iterator(dir / "frames")) frames += e.path().extension() == ".png";
    EXPECT_EQ(frames, codecs.video.pixel_frames(r.video_latent.dim(0)));
    const auto wav = codecs::read_wav(dir / "audio.wav");
    const double hop = 1.0 / data.features.frame_rate();
    EXPECT_LE(std::abs(wav.seconds() - video_seconds(frames, data.clip.fps)), hop);
    EXPECT_TRUE(std::filesystem::exists(dir / "attn_v2a.png"));
    EXPECT_TRUE(std::filesystem::exists(dir / "attn_a2v.avt"));

    std::ifstream is(dir / "manifest.json");
    const auto manifest = nlohmann::json::parse(is);
    EXPECT_EQ(manifest.at("outputs").at("frames"), frames);
    const auto again = multiscale_pipeline(m, codecs, data, in, manifest.at("sample").get<SampleConfig>());
    EXPECT_TRUE(again.video_latent.bitwise_equal(load_tensor(dir / "video_latent.avt")));
    EXPECT_TRUE(again.audio_latent.bitwise_equal(load_tensor(dir / "audio_latent.avt")));
    std::filesystem::remove_all(dir);
}
