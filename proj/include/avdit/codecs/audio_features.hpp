#pragma once

#include <vector>

#include "avdit/numerics/tensor.hpp"

namespace avdit::codecs {

struct Waveform {
    std::vector<std::vector<double>> channels;  // [channel][sample]
    double sample_rate = 16000.0;

    std::size_t samples() const { return channels.empty() ? 0 : channels[0].size(); }
    double seconds() const { return static_cast<double>(samples()) / sample_rate; }
};

struct AudioFeatureConfig {
    double sample_rate = 16000.0;
    std::size_t hop = 160;     // 100 frames/s
    std::size_t window = 320;  // Hann, centred on frame i * hop
    std::size_t n_fft = 512;
    std::size_t bands = 16;    // F
    double f_min = 50.0;
    double f_max = 8000.0;
    double gain = 100.0;       // feature = log1p(gain * band magnitude)

    double frame_rate() const { return sample_rate / static_cast<double>(hop); }
    std::size_t channels() const { return 2 * bands; }
};

struct AudioFeatureFrames {
    Tensor frames;  // [T_frames, 2F], left bins then right bins
    double frame_rate = 100.0;

    std::size_t count() const { return frames.dim(0); }
};

/// Mel-spaced triangular band centres in Hz, `bands + 2` edges.
std::vector<double> band_edges(const AudioFeatureConfig& cfg);
double band_center(const AudioFeatureConfig& cfg, std::size_t band);

/// ceil(samples / hop) frames of log-compressed triangular band magnitudes
/// per channel, channels concatenated.
AudioFeatureFrames audio_featurize(const Waveform& wav, const AudioFeatureConfig& cfg = {});

/// Sinusoidal resynthesis: one phase-continuous oscillator per band and
/// channel at the band centre, amplitudes interpolated between frames.
/// Approximate by design; there is no vocoder.
Waveform resynthesize(const AudioFeatureFrames& feats, const AudioFeatureConfig& cfg = {}, double out_rate = 24000.0);

}  // namespace avdit::codecs
