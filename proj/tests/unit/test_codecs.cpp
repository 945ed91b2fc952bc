#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <numbers>

#include "avdit/codecs/media.hpp"
#include "avdit/codecs/train.hpp"
#include "avdit/flowtrain/pipeline.hpp"

using namespace avdit;
using namespace avdit::codecs;

namespace {

Waveform stereo(std::size_t n, const std::function<double(std::size_t)>& left, const std::function<double(std::size_t)>& right) {
    Waveform w;
    w.channels.assign(2, std::vector<double>(n));
    for (std::size_t i = 0; i < n; ++i) {
        w.channels[0][i] = left(i);
        w.channels[1][i] = right(i);
    }
    return w;
}

}  // namespace

TEST(AudioFeatures, SilenceIsZero) {
    auto f = audio_featurize(stereo(1600, [](auto) { return 0.0; }, [](auto) { return 0.0; }));
    for (double v : f.frames.data()) EXPECT_EQ(v, 0.0);
}

TEST(AudioFeatures, FrameCountFollowsHop) {
    auto one = audio_featurize(stereo(16000, [](auto) { return 0.0; }, [](auto) { return 0.0; }));
    EXPECT_EQ(one.count(), 100u);
    EXPECT_EQ(one.frames.dim(1), 32u);
    EXPECT_DOUBLE_EQ(one.frame_rate, 100.0);
    EXPECT_EQ(audio_featurize(stereo(16001, [](auto) { return 0.0; }, [](auto) { return 0.0; })).count(), 101u);
}

TEST(AudioFeatures, IdenticalChannelsGiveIdenticalHalves) {
    auto tone = [](std::size_t i) { return 0.3 * std::sin(2.0 * std::numbers::pi * 700.0 * static_cast<double>(i) / 16000.0); };
    auto f = audio_featurize(stereo(4000, tone, tone));
    for (std::size_t t = 0; t < f.count(); ++t)
        for (std::size_t b = 0; b < 16; ++b) EXPECT_EQ(f.frames[t * 32 + b], f.frames[t * 32 + 16 + b]);
}

TEST(AudioFeatures, ToneLandsInItsBand) {
    AudioFeatureConfig cfg;
    const double hz = band_center(cfg, 6);
    auto tone = [&](std::size_t i) { return 0.3 * std::cos(2.0 * std::numbers::pi * hz * static_cast<double>(i) / 16000.0); };
    auto f = audio_featurize(stereo(16000, tone, [](auto) { return 0.0; }), cfg);
    for (std::size_t t = 0; t < f.count(); t += 7) {
        std::size_t best = 0;
        for (std::size_t b = 0; b < 16; ++b)
            if (f.frames[t * 32 + b] > f.frames[t * 32 + best]) best = b;
        EXPECT_EQ(best, 6u);
        EXPECT_EQ(f.frames[t * 32 + 16 + 6], 0.0);
    }
}

TEST(AudioFeatures, RejectsMono) {
    Waveform w;
    w.channels.assign(1, std::vector<double>(100, 0.0));
    EXPECT_THROW(audio_featurize(w), Error);
}

TEST(Media, WavRoundTrip) {
    auto w = stereo(480, [](std::size_t i) { return std::sin(0.01 * static_cast<double>(i)); }, [](std::size_t i) { return -0.5 + 0.001 * static_cast<double>(i); });
    w.sample_rate = 24000.0;
    const auto path = std::filesystem::temp_directory_path() / "avdit_wav_test.wav";
    write_wav(path, w);
    auto back = read_wav(path);
    std::filesystem::remove(path);
    ASSERT_EQ(back.channels.size(), 2u);
    ASSERT_EQ(back.samples(), 480u);
    EXPECT_EQ(back.sample_rate, 24000.0);
    for (std::size_t c = 0; c < 2; ++c)
        for (std::size_t i = 0; i < 480; ++i) EXPECT_NEAR(back.channels[c][i], w.channels[c][i], 1.0 / 32767.0);
}

TEST(Media, PngWrites) {
    const auto dir = std::filesystem::temp_directory_path() / "avdit_png_test";
    std::filesystem::create_directories(dir);
    write_png(dir / "a.png", Tensor({4, 5, 3}, 0.5));
    write_heatmap_png(dir / "b.png", Tensor({3, 2}, {0.0, 1.0, 2.0, 3.0, 4.0, 5.0}), 2);
    EXPECT_GT(std::filesystem::file_size(dir / "a.png"), 0u);
    EXPECT_GT(std::filesystem::file_size(dir / "b.png"), 0u);
    EXPECT_THROW(write_png(dir / "c.png", Tensor({4, 5})), Error);
    std::filesystem::remove_all(dir);
}

TEST(Resynthesis, DurationAndSilence) {
    AudioFeatureFrames f{Tensor({100, 32}), 100.0};
    auto w = resynthesize(f);
    EXPECT_EQ(w.sample_rate, 24000.0);
    EXPECT_EQ(w.samples(), 24000u);
    for (const auto& ch : w.channels)
        for (double v : ch) EXPECT_EQ(v, 0.0);
}

class AudioVaeTest : public ::testing::Test {
protected:
    Rng rng{3};
    AudioVae vae{AudioVaeConfig{}, rng};
};

TEST_F(AudioVaeTest, TwoSecondsGiveFiftyTokensOf128) {
    Tensor frames = Tensor::uniform({200, 32}, rng, 0.0, 3.0);
    EXPECT_EQ(vae.encode(frames).shape(), (Shape{50, 128}));
}

TEST_F(AudioVaeTest, TokenRateRoundsUp) {
    for (std::size_t frames : {4u, 5u, 99u, 100u, 101u, 250u}) {
        EXPECT_EQ(vae.encode(Tensor::uniform({frames, 32}, rng, 0.0, 1.0)).dim(0), (frames + 3) / 4) << frames;
    }
}

TEST_F(AudioVaeTest, CausalUnderFuturePerturbation) {
    Tensor frames = Tensor::uniform({120, 32}, rng, 0.0, 3.0);
    const Tensor base = vae.encode(frames);
    std::uniform_int_distribution<std::size_t> pick(0, 119);
    for (int probe = 0; probe < 50; ++probe) {
        const std::size_t k = pick(rng);
        Tensor edited = frames.clone();
        for (std::size_t i = k * 32; i < edited.numel(); ++i) edited[i] += 1.0 + static_cast<double>(i % 7);
        const Tensor out = vae.encode(edited);
        const std::size_t keep = k / 4;
        for (std::size_t i = 0; i < keep * 128; ++i) ASSERT_EQ(out[i], base[i]) << "k=" << k;
        if (keep < 30) EXPECT_NE(out[keep * 128], base[keep * 128]);
    }
}

TEST_F(AudioVaeTest, RejectsShortInput) {
    EXPECT_THROW(vae.encode(Tensor({3, 32})), Error);
    EXPECT_THROW(vae.encode(Tensor({8, 31})), Error);
}

TEST_F(AudioVaeTest, DecodeTrimsToFrameCount) {
    Tensor lat = Tensor::randn({25, 128}, rng);
    EXPECT_EQ(vae.decode(lat).shape(), (Shape{100, 32}));
    EXPECT_EQ(vae.decode(lat, 98).shape(), (Shape{98, 32}));
    EXPECT_THROW(vae.decode(lat, 96), Error);
}

class VideoVaeTest : public ::testing::Test {
protected:
    Rng rng{4};
    VideoVae vae{VideoVaeConfig{}, rng};
};

TEST_F(VideoVaeTest, LatentShapeArithmetic) {
    EXPECT_EQ(vae.latent_shape({9, 32, 32, 3}), (Shape{5, 8, 8, 8}));
    EXPECT_EQ(vae.encode(Tensor::uniform({9, 32, 32, 3}, rng, 0.0, 1.0)).shape(), (Shape{5, 8, 8, 8}));
    EXPECT_EQ(vae.decode(Tensor::randn({5, 8, 8, 8}, rng)).shape(), (Shape{9, 32, 32, 3}));
    EXPECT_EQ(vae.pixel_frames(6), 11u);
}

TEST_F(VideoVaeTest, RejectsIndivisibleDims) {
    EXPECT_THROW(vae.encode(Tensor({8, 16, 16, 3})), Error);
    EXPECT_THROW(vae.encode(Tensor({9, 18, 16, 3})), Error);
    EXPECT_THROW(vae.encode(Tensor({9, 16, 16, 1})), Error);
}

TEST_F(VideoVaeTest, FirstLatentFrameSeesOnlyFirstPixelFrame) {
    Tensor px = Tensor::uniform({7, 8, 8, 3}, rng, 0.0, 1.0);
    const Tensor base = vae.encode(px);
    std::uniform_int_distribution<std::size_t> pick(1, 6);
    for (int probe = 0; probe < 50; ++probe) {
        const std::size_t k = pick(rng);
        Tensor edited = px.clone();
        for (std::size_t i = k * 8 * 8 * 3; i < edited.numel(); ++i) edited[i] = 1.0 - edited[i];
        const Tensor out = vae.encode(edited);
        // Latent j covers pixel frames up to 2j, so j < ceil(k/2) is untouched.
        const std::size_t keep = (k + 1) / 2;
        const std::size_t per = 2 * 2 * 8;
        for (std::size_t i = 0; i < keep * per; ++i) ASSERT_EQ(out[i], base[i]) << "k=" << k;
        EXPECT_NE(out[keep * per], base[keep * per]);
    }
}

TEST(KlTerm, ZeroAtStandardNormal) {
    Posterior p{Tensor({3, 2}), Tensor({3, 2})};
    EXPECT_EQ(kl_to_standard(p).item(), 0.0);
    Posterior q{Tensor({1}, 1.0), Tensor({1}, 0.0)};
    EXPECT_NEAR(kl_to_standard(q).item(), 0.5, 1e-15);
}

TEST(LatentStatsTest, NormalizeRoundTrip) {
    Rng rng(5);
    std::vector<Tensor> ls{Tensor::randn({10, 4}, rng, 3.0), Tensor::randn({6, 4}, rng, 3.0)};
    auto s = LatentStats::fit(ls);
    Tensor n = s.normalize(ls[0]);
    EXPECT_LT(max_abs_diff(s.denormalize(n), ls[0]), 1e-12);
    nlohmann::json j = s;
    EXPECT_EQ(j.get<LatentStats>().std, s.std);
}

TEST(CodecTraining, ZeroStepsLeavesParametersUntouched) {
    Rng rng(6);
    AudioVae vae(AudioVaeConfig{}, rng);
    ParamList ps;
    vae.collect(ps, "a");
    std::vector<Tensor> before;
    for (const auto& p : ps.items()) before.push_back(p.tensor.clone());
    CodecTrainConfig cfg;
    cfg.steps = 0;
    train_audio_vae(vae, {Tensor::uniform({16, 32}, rng, 0.0, 1.0)}, cfg);
    for (std::size_t i = 0; i < before.size(); ++i) EXPECT_TRUE(ps.items()[i].tensor.bitwise_equal(before[i]));
}

TEST(CodecTraining, DivergenceAborts) {
    Rng rng(7);
    AudioVae vae(AudioVaeConfig{}, rng);
    CodecTrainConfig cfg;
    cfg.steps = 50;
    cfg.lr = 50.0;
    cfg.lr_final = 50.0;
    std::vector<Tensor> clips{Tensor::uniform({16, 32}, rng, 0.0, 3.0)};
    EXPECT_THROW(train_audio_vae(vae, clips, cfg), Error);
}

// Trains both codecs at the pipeline's settings on the synthetic clips.
class TrainedCodecs : public ::testing::Test {
protected:
    static void SetUpTestSuite() {
        data_ = new flow::DataConfig();
        report_ = new flow::CodecReport();
        bundle_ = new flow::CodecBundle(flow::train_codecs(*data_, report_));
    }
    static void TearDownTestSuite() {
        delete bundle_;
        delete report_;
        delete data_;
    }
    static flow::DataConfig* data_;
    static flow::CodecReport* report_;
    static flow::CodecBundle* bundle_;
};
flow::DataConfig* TrainedCodecs::data_ = nullptr;
flow::CodecReport* TrainedCodecs::report_ = nullptr;
flow::CodecBundle* TrainedCodecs::bundle_ = nullptr;

TEST_F(TrainedCodecs, LossHalvesWithinTwoThousandSteps) {
    for (const auto* r : {&report_->audio, &report_->video}) {
        ASSERT_GE(r->loss.size(), 2000u);
        EXPECT_LT(r->loss[1999], 0.5 * r->loss[0]);
        // Means over consecutive 400-step windows never rise by more than two
        // standard errors of the difference (the tail is a noisy plateau).
        double prev = 1e300, prev_var = 0.0;
        for (std::size_t w = 0; w + 400 <= r->loss.size(); w += 400) {
            double m = 0.0, ss = 0.0;
            for (std::size_t i = w; i < w + 400; ++i) m += r->loss[i];
            m /= 400.0;
            for (std::size_t i = w; i < w + 400; ++i) ss += (r->loss[i] - m) * (r->loss[i] - m);
            const double var = ss / 399.0 / 400.0;
            EXPECT_LT(m, prev + 2.0 * std::sqrt(var + prev_var)) << "window " << w;
            prev = m;
            prev_var = var;
        }
        EXPECT_LT(prev, 0.2 * r->loss[0]);
    }
}

TEST_F(TrainedCodecs, HeldOutAudioRoundTrip) {
    std::vector<Tensor> held;
    for (std::uint64_t s = 0; s < 16; ++s) held.push_back(flow::make_sample(data_->eval_seed_offset + s).audio.frames);
    EXPECT_LT(audio_roundtrip_error(bundle_->audio, held), 0.15);
}

TEST_F(TrainedCodecs, ConstantColourRoundTrip) {
    Rng rng(8);
    std::uniform_real_distribution<double> u(0.05, 0.95);
    for (int i = 0; i < 32; ++i) {
        const std::array<double, 3> rgb{u(rng), u(rng), u(rng)};
        const Tensor clip = flow::constant_clip(data_->clip, rgb);
        EXPECT_LT(relative_l2(bundle_->video.decode(bundle_->video.encode(clip)), clip), 0.05)
            << rgb[0] << "," << rgb[1] << "," << rgb[2];
    }
}

TEST_F(TrainedCodecs, LatentChannelScaleIsUsable) {
    for (const auto* s : {&bundle_->audio_stats, &bundle_->video_stats}) {
        for (double sd : s->std) {
            EXPECT_GE(sd, 0.3);
            EXPECT_LE(sd, 3.0);
        }
    }
}

TEST_F(TrainedCodecs, SaveLoadRoundTrip) {
    const auto dir = std::filesystem::temp_directory_path() / "avdit_codec_bundle";
    bundle_->save(dir);
    auto back = flow::CodecBundle::load(dir, *data_);
    std::filesystem::remove_all(dir);
    const Tensor clip = flow::make_sample(5).video;
    EXPECT_TRUE(back.encode_video(clip).bitwise_equal(bundle_->encode_video(clip)));
}
