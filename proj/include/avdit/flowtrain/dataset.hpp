#pragma once

#include <array>
#include <string>
#include <vector>

#include "avdit/codecs/audio_features.hpp"
#include "avdit/textcond/tokenizer.hpp"

namespace avdit::flow {

struct ClipConfig {
    std::size_t frames = 11;      // pixel frames, 1 mod f_t
    std::size_t size = 16;        // H = W in pixels
    double fps = 10.0;
    double square = 4.0;          // side in pixels
    double sample_rate = 16000.0;
    double pinned_prob = 0.15;

    double seconds() const { return static_cast<double>(frames - 1) / fps; }
    double travel() const { return static_cast<double>(size) - square; }  // position range per axis
};

struct Motion {
    std::size_t color = 0;
    std::array<double, 2> p0{0.0, 0.0};  // (y, x) top-left in pixels at t = 0
    std::array<double, 2> v{0.0, 0.0};   // pixels per second
    bool pinned = false;
};

struct Impact {
    double t = 0.0;    // seconds
    std::size_t axis;  // 0 = y, 1 = x
};

struct SyntheticSample {
    Motion motion;
    Tensor video;                     // [frames, size, size, 3] in [0, 1]
    codecs::Waveform waveform;
    codecs::AudioFeatureFrames audio;
    std::vector<Impact> impacts;      // ground truth, sorted by time
    std::string caption;
};

constexpr std::array<const char*, 4> kColorNames{"red", "green", "blue", "yellow"};
constexpr double kBackground = 0.1;
std::array<double, 3> color_rgb(std::size_t color);

Motion sample_motion(std::uint64_t seed, const ClipConfig& cfg);
std::array<double, 2> position_at(const Motion& m, double t, const ClipConfig& cfg);
std::vector<Impact> impacts_of(const Motion& m, const ClipConfig& cfg);

/// Tone frequency (Hz) for a vertical position: higher on screen sounds higher.
double tone_frequency(double y, const ClipConfig& cfg, const codecs::AudioFeatureConfig& acfg);
std::string caption_for(const Motion& m, const ClipConfig& cfg);

SyntheticSample render_sample(const Motion& m, std::uint64_t noise_seed, const ClipConfig& cfg = {},
                              const codecs::AudioFeatureConfig& acfg = {});
SyntheticSample make_sample(std::uint64_t seed, const ClipConfig& cfg = {}, const codecs::AudioFeatureConfig& acfg = {});

/// Impact times recovered from rendered frames alone.
std::vector<double> video_impact_times(const Tensor& frames, const ClipConfig& cfg);
/// Feature-frame indices of clicks detected from high-band energy peaks.
std::vector<std::size_t> audio_click_frames(const codecs::AudioFeatureFrames& feats, const codecs::AudioFeatureConfig& acfg = {});
/// Index of the loudest band in one channel of frame i.
std::size_t dominant_band(const codecs::AudioFeatureFrames& feats, std::size_t i, const codecs::AudioFeatureConfig& acfg = {});

/// Every impact seen in the frames has a detected click within one feature
/// frame and vice versa.
bool impacts_cotimed(const SyntheticSample& s, const ClipConfig& cfg = {}, const codecs::AudioFeatureConfig& acfg = {});

}  // namespace avdit::flow
