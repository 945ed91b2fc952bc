#include "avdit/codecs/audio_features.hpp"

#include <cmath>
#include <complex>
#include <numbers>

#include <unsupported/Eigen/FFT>

namespace avdit::codecs {

namespace {

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

void check_config(const AudioFeatureConfig& cfg) {
    if (cfg.hop == 0 || cfg.window == 0 || cfg.n_fft < cfg.window || cfg.bands == 0) {
        throw Error("audio_featurize: invalid feature config");
    }
    if (!(cfg.f_min >= 0.0 && cfg.f_max > cfg.f_min && cfg.f_max <= cfg.sample_rate / 2.0)) {
        throw Error("audio_featurize: band range must lie in (0, Nyquist]");
    }
}

}  // namespace

std::vector<double> band_edges(const AudioFeatureConfig& cfg) {
    check_config(cfg);
    const double lo = hz_to_mel(cfg.f_min), hi = hz_to_mel(cfg.f_max);
    std::vector<double> edges(cfg.bands + 2);
    for (std::size_t i = 0; i < edges.size(); ++i) {
        edges[i] = mel_to_hz(lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(cfg.bands + 1));
    }
    return edges;
}

double band_center(const AudioFeatureConfig& cfg, std::size_t band) { return band_edges(cfg).at(band + 1); }

AudioFeatureFrames audio_featurize(const Waveform& wav, const AudioFeatureConfig& cfg) {
    check_config(cfg);
    if (wav.channels.size() != 2) {
        throw Error("audio_featurize: expected 2 channels, got " + std::to_string(wav.channels.size()));
    }
    if (wav.channels[0].size() != wav.channels[1].size()) throw Error("audio_featurize: channel lengths differ");
    if (wav.sample_rate != cfg.sample_rate) throw Error("audio_featurize: sample rate mismatch");

    const std::size_t n = wav.samples();
    const std::size_t frames = (n + cfg.hop - 1) / cfg.hop;
    const std::size_t F = cfg.bands;
    const std::size_t bins = cfg.n_fft / 2 + 1;

    std::vector<double> window(cfg.window);
    double wsum = 0.0;
    for (std::size_t i = 0; i < cfg.window; ++i) {
        window[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * (static_cast<double>(i) + 0.5) / static_cast<double>(cfg.window));
        wsum += window[i];
    }
    // Triangular filters on the FFT bin grid, peak 1.
    const auto edges = band_edges(cfg);
    std::vector<std::vector<double>> filt(F, std::vector<double>(bins, 0.0));
    for (std::size_t b = 0; b < F; ++b) {
        for (std::size_t k = 0; k < bins; ++k) {
            const double f = static_cast<double>(k) * cfg.sample_rate / static_cast<double>(cfg.n_fft);
            const double up = (f - edges[b]) / (edges[b + 1] - edges[b]);
            const double down = (edges[b + 2] - f) / (edges[b + 2] - edges[b + 1]);
            filt[b][k] = std::max(0.0, std::min(up, down));
        }
    }

    Eigen::FFT<double> fft;
    std::vector<double> buf(cfg.n_fft);
    std::vector<std::complex<double>> spec;
    Tensor out({frames, 2 * F});
    const auto half = static_cast<std::ptrdiff_t>(cfg.window / 2);
    for (std::size_t c = 0; c < 2; ++c) {
        const auto& x = wav.channels[c];
        for (std::size_t i = 0; i < frames; ++i) {
            std::fill(buf.begin(), buf.end(), 0.0);
            const auto start = static_cast<std::ptrdiff_t>(i * cfg.hop) - half;
            for (std::size_t j = 0; j < cfg.window; ++j) {
                // Reflect at both ends so the clip boundary is not read as an onset.
                auto s = start + static_cast<std::ptrdiff_t>(j);
                const auto last = static_cast<std::ptrdiff_t>(n) - 1;
                if (s < 0) s = -s;
                if (s > last) s = 2 * last - s;
                if (s >= 0 && s <= last) buf[j] = x[static_cast<std::size_t>(s)] * window[j];
            }
            fft.fwd(spec, buf);
            for (std::size_t b = 0; b < F; ++b) {
                double m = 0.0;
                for (std::size_t k = 0; k < bins; ++k) {
                    if (filt[b][k] > 0.0) m += filt[b][k] * std::abs(spec[k]);
                }
                out[i * 2 * F + c * F + b] = std::log1p(cfg.gain * m * 2.0 / wsum);
            }
        }
    }
    return AudioFeatureFrames{out, cfg.frame_rate()};
}

Waveform resynthesize(const AudioFeatureFrames& feats, const AudioFeatureConfig& cfg, double out_rate) {
    const std::size_t F = cfg.bands;
    if (feats.frames.rank() != 2 || feats.frames.dim(1) != 2 * F) throw Error("resynthesize: expected [T, 2F] frames");
    if (!(out_rate > 0.0)) throw Error("resynthesize: output rate must be positive");
    const std::size_t T = feats.count();
    const double seconds = static_cast<double>(T) / feats.frame_rate;
    const auto n = static_cast<std::size_t>(std::llround(seconds * out_rate));
    const auto edges = band_edges(cfg);

    Waveform w;
    w.sample_rate = out_rate;
    w.channels.assign(2, std::vector<double>(n, 0.0));
    for (std::size_t c = 0; c < 2; ++c) {
        for (std::size_t b = 0; b < F; ++b) {
            const double f = edges[b + 1];
            if (f >= out_rate / 2.0) continue;
            const double dphi = 2.0 * std::numbers::pi * f / out_rate;
            for (std::size_t s = 0; s < n; ++s) {
                const double pos = static_cast<double>(s) / out_rate * feats.frame_rate;
                const auto i0 = std::min(static_cast<std::size_t>(pos), T - 1);
                const std::size_t i1 = std::min(i0 + 1, T - 1);
                const double a = pos - static_cast<double>(i0);
                const double v = (1.0 - a) * feats.frames[i0 * 2 * F + c * F + b] + a * feats.frames[i1 * 2 * F + c * F + b];
                const double amp = std::expm1(std::max(v, 0.0)) / cfg.gain / 2.0;
                w.channels[c][s] += amp * std::sin(dphi * static_cast<double>(s) + 0.7 * static_cast<double>(b));
            }
        }
    }
    // Keep the mix inside [-1, 1].
    double peak = 0.0;
    for (const auto& ch : w.channels)
        for (double v : ch) peak = std::max(peak, std::abs(v));
    if (peak > 1.0) {
        for (auto& ch : w.channels)
            for (double& v : ch) v /= peak;
    }
    return w;
}

}  // namespace avdit::codecs
