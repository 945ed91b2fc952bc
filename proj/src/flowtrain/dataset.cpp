#include "avdit/flowtrain/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace avdit::flow {

namespace {

constexpr std::size_t kToneLow = 2, kToneHigh = 11;  // bands the tone may occupy
constexpr std::size_t kClickBand = 13;               // clicks are detected at and above this band
constexpr double kToneAmp = 0.25;
constexpr double kClickAmp = 0.6;
constexpr double kClickSeconds = 0.003;

double fold(double u, double L) {
    double m = std::fmod(u, 2.0 * L);
    if (m < 0.0) m += 2.0 * L;
    return m <= L ? m : 2.0 * L - m;
}

double mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double inv_mel(double m) { return 700.0 * (std::pow(10.0, m / 2595.0) - 1.0); }

}  // namespace

std::array<double, 3> color_rgb(std::size_t color) {
    static constexpr std::array<std::array<double, 3>, 4> table{{
        {0.9, 0.15, 0.1}, {0.1, 0.8, 0.2}, {0.15, 0.3, 0.95}, {0.95, 0.85, 0.1}}};
    return table.at(color);
}

namespace {

// Impacts closer than the feature window cannot be told apart in audio, and
// a click in the last few ms is cut off; such motions are redrawn.
bool resolvable(const Motion& m, const ClipConfig& cfg) {
    const auto imps = impacts_of(m, cfg);
    for (std::size_t i = 0; i < imps.size(); ++i) {
        if (imps[i].t > cfg.seconds() - 0.01) return false;
        if (i > 0 && imps[i].t - imps[i - 1].t < 0.03) return false;
    }
    return true;
}

}  // namespace

Motion sample_motion(std::uint64_t seed, const ClipConfig& cfg) {
    Rng rng(seed ^ 0x5eedc0ffee123ULL);
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    const double L = cfg.travel();
    for (;;) {
        Motion m;
        m.color = static_cast<std::size_t>(u01(rng) * 4.0) % 4;
        m.p0 = {u01(rng) * L, u01(rng) * L};
        m.pinned = u01(rng) < cfg.pinned_prob;
        for (auto& v : m.v) {
            const double speed = (0.8 + 1.7 * u01(rng)) * cfg.fps;  // 0.8 .. 2.5 px per frame
            const bool negative = u01(rng) < 0.5;
            v = m.pinned ? 0.0 : (negative ? -speed : speed);
        }
        if (resolvable(m, cfg)) return m;
    }
}

std::array<double, 2> position_at(const Motion& m, double t, const ClipConfig& cfg) {
    const double L = cfg.travel();
    return {fold(m.p0[0] + m.v[0] * t, L), fold(m.p0[1] + m.v[1] * t, L)};
}

std::vector<Impact> impacts_of(const Motion& m, const ClipConfig& cfg) {
    std::vector<Impact> out;
    const double L = cfg.travel(), T = cfg.seconds();
    for (std::size_t a = 0; a < 2; ++a) {
        if (m.v[a] == 0.0) continue;
        // The unfolded coordinate p0 + v t hits a wall whenever it crosses a multiple of L.
        const double u1 = m.p0[a] + m.v[a] * T;
        const auto lo = static_cast<long>(std::floor(std::min(m.p0[a], u1) / L));
        const auto hi = static_cast<long>(std::ceil(std::max(m.p0[a], u1) / L));
        for (long k = lo; k <= hi; ++k) {
            const double t = (static_cast<double>(k) * L - m.p0[a]) / m.v[a];
            if (t > 0.0 && t <= T) out.push_back({t, a});
        }
    }
    std::sort(out.begin(), out.end(), [](const Impact& x, const Impact& y) { return x.t < y.t; });
    return out;
}

namespace {

double tone_from_mels(double y, double lo, double hi, const ClipConfig& cfg) {
    return inv_mel(lo + (hi - lo) * (1.0 - y / cfg.travel()));
}

}  // namespace

double tone_frequency(double y, const ClipConfig& cfg, const codecs::AudioFeatureConfig& acfg) {
    const auto edges = codecs::band_edges(acfg);
    return tone_from_mels(y, mel(edges[kToneLow + 1]), mel(edges[kToneHigh + 1]), cfg);
}

std::string caption_for(const Motion& m, const ClipConfig& cfg) {
    std::string c = std::string(kColorNames.at(m.color)) + " square ";
    if (m.pinned) {
        c += "still";
    } else {
        const double speed = std::max(std::abs(m.v[0]), std::abs(m.v[1])) / cfg.fps;
        c += speed > 1.65 ? "bounces fast" : "bounces slowly";
    }
    const double y_mean = position_at(m, cfg.seconds() / 2.0, cfg)[0] / cfg.travel();
    c += y_mean < 1.0 / 3.0 ? ", high tone" : (y_mean < 2.0 / 3.0 ? ", mid tone" : ", low tone");
    c += impacts_of(m, cfg).empty() ? ", no click" : ", click on impact";
    return c;
}

SyntheticSample render_sample(const Motion& m, std::uint64_t noise_seed, const ClipConfig& cfg,
                              const codecs::AudioFeatureConfig& acfg) {
    if (cfg.sample_rate != acfg.sample_rate) throw Error("render_sample: clip and feature sample rates differ");
    SyntheticSample s;
    s.motion = m;
    s.impacts = impacts_of(m, cfg);
    s.caption = caption_for(m, cfg);

    // Exact area coverage so the square's position is recoverable from pixels.
    const std::size_t N = cfg.size;
    const auto rgb = color_rgb(m.color);
    s.video = Tensor({cfg.frames, N, N, 3}, kBackground);
    for (std::size_t f = 0; f < cfg.frames; ++f) {
        const auto p = position_at(m, static_cast<double>(f) / cfg.fps, cfg);
        for (std::size_t y = 0; y < N; ++y) {
            const double cy = std::max(0.0, std::min<double>(y + 1, p[0] + cfg.square) - std::max<double>(y, p[0]));
            if (cy <= 0.0) continue;
            for (std::size_t x = 0; x < N; ++x) {
                const double cx = std::max(0.0, std::min<double>(x + 1, p[1] + cfg.square) - std::max<double>(x, p[1]));
                for (std::size_t c = 0; c < 3; ++c) {
                    s.video[((f * N + y) * N + x) * 3 + c] = kBackground + cy * cx * (rgb[c] - kBackground);
                }
            }
        }
    }

    const auto n = static_cast<std::size_t>(std::llround(cfg.seconds() * cfg.sample_rate));
    s.waveform.sample_rate = cfg.sample_rate;
    s.waveform.channels.assign(2, std::vector<double>(n, 0.0));
    const auto edges = codecs::band_edges(acfg);
    const double mel_lo = mel(edges[kToneLow + 1]), mel_hi = mel(edges[kToneHigh + 1]);
    double phase = std::numbers::pi / 2.0;  // cosine start: symmetric under edge reflection
    for (std::size_t i = 0; i < n; ++i) {
        const double t = static_cast<double>(i) / cfg.sample_rate;
        const auto p = position_at(m, t, cfg);
        const double pan = p[1] / cfg.travel();
        const double tone = kToneAmp * std::sin(phase);
        phase += 2.0 * std::numbers::pi * tone_from_mels(p[0], mel_lo, mel_hi, cfg) / cfg.sample_rate;
        s.waveform.channels[0][i] = tone * (1.0 - 0.5 * pan);
        s.waveform.channels[1][i] = tone * (0.5 + 0.5 * pan);
    }
    Rng rng(noise_seed);
    std::normal_distribution<double> noise(0.0, 1.0);
    const auto click_len = static_cast<std::size_t>(kClickSeconds * cfg.sample_rate);
    for (const auto& imp : s.impacts) {
        const auto start = static_cast<std::size_t>(std::llround(imp.t * cfg.sample_rate));
        for (std::size_t j = 0; j < click_len && start + j < n; ++j) {
            const double v = kClickAmp * noise(rng) * std::exp(-static_cast<double>(j) / (0.3 * click_len));
            s.waveform.channels[0][start + j] += v;
            s.waveform.channels[1][start + j] += v;
        }
    }
    s.audio = codecs::audio_featurize(s.waveform, acfg);
    return s;
}

SyntheticSample make_sample(std::uint64_t seed, const ClipConfig& cfg, const codecs::AudioFeatureConfig& acfg) {
    return render_sample(sample_motion(seed, cfg), seed * 2654435761ULL + 17, cfg, acfg);
}

std::vector<double> video_impact_times(const Tensor& frames, const ClipConfig& cfg) {
    const std::size_t F = frames.dim(0), N = frames.dim(1);
    // The most saturated pixel anywhere is fully covered and carries the square's colour.
    std::array<double, 3> col{kBackground, kBackground, kBackground};
    double best = 0.0;
    for (std::size_t i = 0; i < frames.numel() / 3; ++i) {
        double d = 0.0;
        for (std::size_t c = 0; c < 3; ++c) d += (frames[i * 3 + c] - kBackground) * (frames[i * 3 + c] - kBackground);
        if (d > best) {
            best = d;
            for (std::size_t c = 0; c < 3; ++c) col[c] = frames[i * 3 + c];
        }
    }
    if (best == 0.0) return {};
    std::vector<std::array<double, 2>> pos(F);
    for (std::size_t f = 0; f < F; ++f) {
        double w = 0.0, sy = 0.0, sx = 0.0;
        for (std::size_t y = 0; y < N; ++y)
            for (std::size_t x = 0; x < N; ++x) {
                double cov = 0.0;
                for (std::size_t c = 0; c < 3; ++c) cov += (frames[((f * N + y) * N + x) * 3 + c] - kBackground) * (col[c] - kBackground);
                cov /= best;
                w += cov;
                sy += cov * (static_cast<double>(y) + 0.5);
                sx += cov * (static_cast<double>(x) + 0.5);
            }
        pos[f] = {sy / w - cfg.square / 2.0, sx / w - cfg.square / 2.0};
    }
    const double L = cfg.travel(), tol = 1e-6;
    std::vector<double> out;
    for (std::size_t a = 0; a < 2; ++a) {
        std::vector<double> steps;
        for (std::size_t f = 0; f + 1 < F; ++f) steps.push_back(std::abs(pos[f + 1][a] - pos[f][a]));
        std::vector<double> sorted = steps;
        std::nth_element(sorted.begin(), sorted.begin() + sorted.size() / 2, sorted.end());
        const double D = sorted[sorted.size() / 2];
        if (D < tol) continue;
        for (std::size_t f = 0; f + 1 < F; ++f) {
            const double p = pos[f][a], q = pos[f + 1][a];
            if (f > 0 && (std::abs(p) < tol || std::abs(p - L) < tol)) out.push_back(static_cast<double>(f) / cfg.fps);
            if (D - steps[f] <= tol) continue;
            const double w = std::abs(p + q - D) < std::abs((L - p) + (L - q) - D) ? 0.0 : L;
            const double frac = std::abs(w - p) / D;
            if (frac > tol && frac < 1.0 - tol) out.push_back((static_cast<double>(f) + frac) / cfg.fps);
        }
    }
    std::sort(out.begin(), out.end());
    return out;
}

std::vector<std::size_t> audio_click_frames(const codecs::AudioFeatureFrames& feats, const codecs::AudioFeatureConfig& acfg) {
    const std::size_t T = feats.count(), F = acfg.bands;
    std::vector<double> e(T, 0.0);
    for (std::size_t i = 0; i < T; ++i)
        for (std::size_t c = 0; c < 2; ++c)
            for (std::size_t b = kClickBand; b < F; ++b) e[i] += feats.frames[i * 2 * F + c * F + b];
    const double thr = 0.5;
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < T; ++i) {
        const double prev = i > 0 ? e[i - 1] : 0.0, next = i + 1 < T ? e[i + 1] : 0.0;
        if (e[i] > thr && e[i] >= prev && e[i] > next) out.push_back(i);
    }
    return out;
}

std::size_t dominant_band(const codecs::AudioFeatureFrames& feats, std::size_t i, const codecs::AudioFeatureConfig& acfg) {
    const std::size_t F = acfg.bands;
    std::size_t best = 0;
    for (std::size_t b = 1; b < F; ++b)
        if (feats.frames[i * 2 * F + b] > feats.frames[i * 2 * F + best]) best = b;
    return best;
}

bool impacts_cotimed(const SyntheticSample& s, const ClipConfig& cfg, const codecs::AudioFeatureConfig& acfg) {
    const auto seen = video_impact_times(s.video, cfg);
    const auto clicks = audio_click_frames(s.audio, acfg);
    if (seen.size() != s.impacts.size()) return false;
    const double rate = acfg.frame_rate();
    auto near = [&](double t, std::size_t c) { return std::abs(static_cast<double>(c) - t * rate) <= 1.0; };
    for (double t : seen)
        if (std::none_of(clicks.begin(), clicks.end(), [&](std::size_t c) { return near(t, c); })) return false;
    for (std::size_t c : clicks)
        if (std::none_of(seen.begin(), seen.end(), [&](double t) { return near(t, c); })) return false;
    return true;
}

}  // namespace avdit::flow
