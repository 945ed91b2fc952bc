#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "avdit/textcond/connector.hpp"
#include "avdit/textcond/features.hpp"

using namespace avdit;
using namespace avdit::text;

namespace {

Tensor stack_slice(const LayerStack& s, std::size_t b, std::size_t t) {
    const std::size_t n = s.embed_dim() * s.layers();
    Tensor out({n});
    for (std::size_t i = 0; i < n; ++i) out[i] = s.values[(b * s.tokens() + t) * n + i];
    return out;
}

}  // namespace

TEST(Tokenizer, KnownWordsAndFallback) {
    auto tok = Tokenizer::caption_default();
    auto ids = tok.encode("Red square bounces, low tone!");
    ASSERT_EQ(ids.size(), 5u);
    for (auto id : ids) EXPECT_GE(id, Tokenizer::kFirstWord);
    // "squares" -> "square" + "##s"; "zq" -> raw bytes.
    auto sub = tok.encode("squares zq");
    ASSERT_EQ(sub.size(), 4u);
    EXPECT_EQ(sub[0], tok.vocab().at("square"));
    EXPECT_EQ(sub[1], tok.vocab().at("##s"));
    EXPECT_EQ(sub[2], Tokenizer::kFirstByte + 'z');
    EXPECT_EQ(sub[3], Tokenizer::kFirstByte + 'q');
}

TEST(Tokenizer, JsonRoundTrip) {
    auto tok = Tokenizer::caption_default();
    const auto path = std::filesystem::temp_directory_path() / "avdit_vocab_test.json";
    tok.save(path);
    auto back = Tokenizer::load(path);
    EXPECT_EQ(back.vocab(), tok.vocab());
    std::filesystem::remove(path);
    EXPECT_THROW(Tokenizer({{"x", 3}}), Error);
}

TEST(StubEncode, Deterministic) {
    EncoderConfig cfg;
    auto a = stub_encode({{300, 301, 302}}, cfg);
    auto b = stub_encode({{300, 301, 302}}, cfg);
    EXPECT_TRUE(a.values.bitwise_equal(b.values));
    EXPECT_EQ(a.values.shape(), (Shape{1, 32, 64, 4}));
}

TEST(StubEncode, EmptyPromptIsAllPad) {
    EncoderConfig cfg;
    auto s = stub_encode({{}}, cfg);
    const Tensor first = stack_slice(s, 0, 0);
    for (std::size_t t = 1; t < cfg.max_tokens; ++t) EXPECT_TRUE(stack_slice(s, 0, t).bitwise_equal(first));
}

TEST(StubEncode, OneTokenChangeIsPositionLocal) {
    EncoderConfig cfg;
    auto a = stub_encode({{300, 301, 302, 303}}, cfg);
    auto b = stub_encode({{300, 301, 399, 303}}, cfg);
    for (std::size_t t = 0; t < cfg.max_tokens; ++t) {
        EXPECT_EQ(stack_slice(a, 0, t).bitwise_equal(stack_slice(b, 0, t)), t != 2) << "position " << t;
    }
}

TEST(StubEncode, TooLongPromptRejected) {
    EncoderConfig cfg;
    cfg.max_tokens = 3;
    EXPECT_THROW(stub_encode({{1, 2, 3, 4}}, cfg), Error);
}

TEST(ExtractFeatures, HandEvaluatedTwoLayerCase) {
    // B=1, T=1, D=2, L=2; stack[d][l] = [[1, 3], [2, 6]]
    LayerStack s{Tensor({1, 1, 2, 2}, {1.0, 3.0, 2.0, 6.0}), {1}};
    Tensor flat = standardize_layers(s);
    // layer 0 over d: {1, 2} -> {-1, 1}; layer 1: {3, 6} -> {-1, 1}
    EXPECT_NEAR(flat[0], -1.0, 1e-12);
    EXPECT_NEAR(flat[1], -1.0, 1e-12);
    EXPECT_NEAR(flat[2], 1.0, 1e-12);
    EXPECT_NEAR(flat[3], 1.0, 1e-12);
    Tensor out = extract_features(s, Tensor({4, 1}, 1.0));
    EXPECT_EQ(out.shape(), (Shape{1, 1, 1}));
    EXPECT_NEAR(out[0], 0.0, 1e-12);
}

TEST(ExtractFeatures, SingleLayerIdentityIsStandardizedInput) {
    Rng rng(1);
    LayerStack s{Tensor::randn({1, 3, 2, 1}, rng, 4.0), {3}};
    Tensor eye({2, 2}, {1.0, 0.0, 0.0, 1.0});
    Tensor out = extract_features(s, eye);
    double mean = 0.0;
    for (double v : s.values.data()) mean += v;
    mean /= 6.0;
    double var = 0.0;
    for (double v : s.values.data()) var += (v - mean) * (v - mean);
    const double sd = std::sqrt(var / 6.0);
    for (std::size_t i = 0; i < 6; ++i) EXPECT_NEAR(out[i], (s.values[i] - mean) / sd, 1e-12);
}

TEST(ExtractFeatures, StandardizationInvariantProperty) {
    Rng rng(2);
    for (int trial = 0; trial < 20; ++trial) {
        LayerStack s{Tensor::randn({2, 5, 3, 4}, rng, 1.0 + trial), {5, 5}};
        for (std::size_t i = 0; i < s.values.numel(); ++i) s.values[i] += static_cast<double>(i % 4) * 7.0;
        Tensor flat = standardize_layers(s);
        for (std::size_t b = 0; b < 2; ++b) {
            for (std::size_t l = 0; l < 4; ++l) {
                double m = 0.0, v = 0.0;
                for (std::size_t t = 0; t < 5; ++t)
                    for (std::size_t d = 0; d < 3; ++d) m += flat[(b * 5 + t) * 12 + d * 4 + l];
                m /= 15.0;
                for (std::size_t t = 0; t < 5; ++t)
                    for (std::size_t d = 0; d < 3; ++d) {
                        const double c = flat[(b * 5 + t) * 12 + d * 4 + l] - m;
                        v += c * c;
                    }
                EXPECT_NEAR(m, 0.0, 1e-9);
                EXPECT_NEAR(v / 15.0, 1.0, 1e-9);
            }
        }
    }
}

TEST(ExtractFeatures, AffineInvariancePerLayer) {
    Rng rng(3);
    LayerStack s{Tensor::randn({1, 4, 3, 2}, rng), {4}};
    LayerStack t = s;
    t.values = s.values.clone();
    const double a[2] = {3.5, 0.2};
    const double b[2] = {-4.0, 11.0};
    for (std::size_t i = 0; i < t.values.numel(); ++i) t.values[i] = a[i % 2] * t.values[i] + b[i % 2];
    Tensor w = Tensor::randn({6, 5}, rng);
    EXPECT_LT(max_abs_diff(extract_features(s, w), extract_features(t, w)), 1e-12);
}

TEST(ExtractFeatures, ZeroVarianceLayer) {
    LayerStack s{Tensor({1, 2, 2, 1}, 3.0), {2}};
    Tensor flat = standardize_layers(s, 1e-6);
    for (double v : flat.data()) EXPECT_EQ(v, 0.0);
    EXPECT_THROW(standardize_layers(s, 0.0), Error);
}

TEST(ExtractFeatures, ProjectionShapeChecked) {
    LayerStack s{Tensor({1, 2, 2, 2}, 1.0), {2}};
    EXPECT_THROW(extract_features(s, Tensor({3, 1}, 1.0)), Error);
}

class ConnectorTest : public ::testing::Test {
protected:
    ConnectorConfig cfg;
    Rng rng{42};
};

TEST_F(ConnectorTest, ThinkingCountClamp) {
    EXPECT_EQ(TextConnector::thinking_count(32, 32, 8), 0u);
    EXPECT_EQ(TextConnector::thinking_count(30, 32, 8), 2u);
    EXPECT_EQ(TextConnector::thinking_count(3, 32, 8), 8u);
    EXPECT_THROW(TextConnector::thinking_count(33, 32, 8), Error);
}

TEST_F(ConnectorTest, OutputLengthAndThinkingPositions) {
    TextConnector conn(cfg, rng);
    Tensor feats = Tensor::randn({32, 64}, rng);
    for (std::size_t len : {0u, 5u, 30u, 32u}) {
        auto c = conn(feats, len);
        EXPECT_EQ(c.tokens.shape(), (Shape{32, 64}));
        EXPECT_EQ(c.n_thinking, TextConnector::thinking_count(len, 32, 8));
        EXPECT_FALSE(c.is_null);
    }
    // Full prompt: thinking tokens never enter, so changing them changes nothing.
    auto before = conn(feats, 32).tokens;
    conn.thinking_tokens().clone();
    Tensor th = conn.thinking_tokens();
    for (auto& v : th.data()) v += 1.0;
    EXPECT_TRUE(conn(feats, 32).tokens.bitwise_equal(before));
    EXPECT_FALSE(conn(feats, 10).tokens.bitwise_equal(before));
}

TEST_F(ConnectorTest, ParametersAreDisjointAcrossStreams) {
    TextConnector video(cfg, rng);
    TextConnector audio(cfg, rng);
    Tensor feats = Tensor::randn({32, 64}, rng);
    EXPECT_FALSE(video(feats, 6).tokens.bitwise_equal(audio(feats, 6).tokens));
    ParamList pv, pa;
    video.collect(pv, "v");
    audio.collect(pa, "a");
    for (const auto& x : pv.items())
        for (const auto& y : pa.items()) EXPECT_FALSE(x.tensor.same_storage(y.tensor));
    auto audio_before = audio(feats, 6).tokens;
    for (const auto& p : pv.items()) {
        for (auto& v : Tensor(p.tensor).data()) v *= 1.5;
        EXPECT_TRUE(audio(feats, 6).tokens.bitwise_equal(audio_before)) << p.name;
    }
}

TEST_F(ConnectorTest, NullConditioningStable) {
    TextConnector conn(cfg, rng);
    auto a = conn.null_conditioning();
    auto b = conn.null_conditioning();
    EXPECT_TRUE(a.is_null);
    EXPECT_TRUE(a.tokens.bitwise_equal(b.tokens));
}

TEST_F(ConnectorTest, ThinkingTokensReceiveGradient) {
    TextConnector conn(cfg, rng);
    Tensor feats = Tensor::randn({32, 64}, rng);
    Tape tape;
    {
        TapeScope scope(tape);
        Tensor loss = mean(square(conn(feats, 12).tokens));
        tape.backward(loss);
    }
    double g = 0.0;
    for (double v : conn.thinking_tokens().grad()) g += std::abs(v);
    EXPECT_GT(g, 0.0);
}

TEST_F(ConnectorTest, RejectsWrongFeatureShape) {
    TextConnector conn(cfg, rng);
    EXPECT_THROW(conn(Tensor({31, 64}), 3), Error);
}
