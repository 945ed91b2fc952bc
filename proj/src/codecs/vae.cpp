#include "avdit/codecs/vae.hpp"

#include <cmath>

namespace avdit::codecs {

namespace {

// Posterior noise starts small (std ~0.14) so early decoding is not swamped.
constexpr double kInitLogvar = -4.0;

Tensor mlp_head(const Linear& conv, const Linear& hidden, const Tensor& x) { return silu(hidden(silu(conv(x)))); }

}  // namespace

AudioVae::AudioVae(const AudioVaeConfig& cfg, Rng& rng) : cfg_(cfg) {
    if (cfg.stride == 0 || cfg.kernel < cfg.stride) throw Error("audio VAE: kernel must be >= stride > 0");
    enc_conv_ = Linear(cfg.kernel * cfg.in_channels, cfg.hidden, rng);
    enc_hidden_ = Linear(cfg.hidden, cfg.hidden, rng);
    enc_mean_ = Linear(cfg.hidden, cfg.latent, rng);
    enc_logvar_ = Linear::zeros(cfg.hidden, cfg.latent);
    for (auto& b : enc_logvar_.bias.data()) b = kInitLogvar;
    dec_in_ = Linear(cfg.latent, cfg.hidden, rng);
    dec_hidden_ = Linear(cfg.hidden, cfg.hidden, rng);
    dec_out_ = Linear(cfg.hidden, cfg.stride * cfg.in_channels, rng);
}

Posterior AudioVae::encode_posterior(const Tensor& frames) const {
    if (frames.rank() != 2 || frames.dim(1) != cfg_.in_channels) {
        throw Error("audio_encode: expected [T, " + std::to_string(cfg_.in_channels) + "] frames, got " +
                    shape_str(frames.shape()));
    }
    const std::size_t T = frames.dim(0);
    if (T < cfg_.stride) {
        throw Error("audio_encode: need at least " + std::to_string(cfg_.stride) + " frames, got " + std::to_string(T));
    }
    const std::size_t n = token_count(T), C = cfg_.in_channels, K = cfg_.kernel;
    std::vector<std::int64_t> idx(n * K * C);
    for (std::size_t j = 0; j < n; ++j) {
        for (std::size_t k = 0; k < K; ++k) {
            const auto f = static_cast<std::int64_t>(cfg_.stride * (j + 1) + k) - static_cast<std::int64_t>(K);
            for (std::size_t c = 0; c < C; ++c) {
                idx[(j * K + k) * C + c] = (f < 0 || f >= static_cast<std::int64_t>(T)) ? -1 : f * static_cast<std::int64_t>(C) + static_cast<std::int64_t>(c);
            }
        }
    }
    const Tensor h = mlp_head(enc_conv_, enc_hidden_, gather(frames, std::move(idx), {n, K * C}));
    return Posterior{enc_mean_(h), enc_logvar_(h)};
}

Tensor AudioVae::decode(const Tensor& latent, std::size_t frames) const {
    if (latent.rank() != 2 || latent.dim(1) != cfg_.latent || latent.dim(0) == 0) {
        throw Error("audio_decode: expected [T, " + std::to_string(cfg_.latent) + "] latent, got " + shape_str(latent.shape()));
    }
    const std::size_t n = latent.dim(0), full = n * cfg_.stride;
    if (frames == 0) frames = full;
    if (frames > full || frames + cfg_.stride <= full) throw Error("audio_decode: frame count does not match token count");
    const Tensor out = reshape(dec_out_(mlp_head(dec_in_, dec_hidden_, latent)), {full, cfg_.in_channels});
    return frames == full ? out : slice_rows(out, 0, frames);
}

void AudioVae::collect(ParamList& out, const std::string& p) const {
    enc_conv_.collect(out, p + ".enc_conv");
    enc_hidden_.collect(out, p + ".enc_hidden");
    enc_mean_.collect(out, p + ".enc_mean");
    enc_logvar_.collect(out, p + ".enc_logvar");
    dec_in_.collect(out, p + ".dec_in");
    dec_hidden_.collect(out, p + ".dec_hidden");
    dec_out_.collect(out, p + ".dec_out");
}

VideoVae::VideoVae(const VideoVaeConfig& cfg, Rng& rng) : cfg_(cfg) {
    if (cfg.f_t == 0 || cfg.f_s == 0 || cfg.channels == 0) throw Error("video VAE: factors must be positive");
    const std::size_t patch = cfg.f_t * cfg.f_s * cfg.f_s * cfg.channels;
    enc_conv_ = Linear(patch, cfg.hidden, rng);
    enc_hidden_ = Linear(cfg.hidden, cfg.hidden, rng);
    enc_mean_ = Linear(cfg.hidden, cfg.latent, rng);
    enc_logvar_ = Linear::zeros(cfg.hidden, cfg.latent);
    for (auto& b : enc_logvar_.bias.data()) b = kInitLogvar;
    dec_in_ = Linear(cfg.latent, cfg.hidden, rng);
    dec_hidden_ = Linear(cfg.hidden, cfg.hidden, rng);
    dec_out_ = Linear(cfg.hidden, patch, rng);
}

Shape VideoVae::latent_shape(const Shape& px) const {
    if (px.size() != 4 || px[3] != cfg_.channels) {
        throw Error("video_encode: expected [T, H, W, " + std::to_string(cfg_.channels) + "], got " + shape_str(px));
    }
    if (px[0] == 0 || (px[0] - 1) % cfg_.f_t != 0) {
        throw Error("video_encode: frame count " + std::to_string(px[0]) + " is not 1 mod " + std::to_string(cfg_.f_t));
    }
    if (px[1] == 0 || px[2] == 0 || px[1] % cfg_.f_s != 0 || px[2] % cfg_.f_s != 0) {
        throw Error("video_encode: height/width " + std::to_string(px[1]) + "x" + std::to_string(px[2]) +
                    " not divisible by " + std::to_string(cfg_.f_s));
    }
    return {(px[0] - 1) / cfg_.f_t + 1, px[1] / cfg_.f_s, px[2] / cfg_.f_s, cfg_.latent};
}

Posterior VideoVae::encode_posterior(const Tensor& frames) const {
    const Shape ls = latent_shape(frames.shape());
    const std::size_t T = ls[0], H = ls[1], W = ls[2], ft = cfg_.f_t, fs = cfg_.f_s, C = cfg_.channels;
    const std::size_t Hp = frames.dim(1), Wp = frames.dim(2);
    const std::size_t patch = ft * fs * fs * C;
    std::vector<std::int64_t> idx(T * H * W * patch);
    std::size_t o = 0;
    for (std::size_t t = 0; t < T; ++t)
        for (std::size_t y = 0; y < H; ++y)
            for (std::size_t x = 0; x < W; ++x)
                for (std::size_t k = 0; k < ft; ++k) {
                    // Slot k of latent frame t holds pixel frame ft*t - (ft-1) + k; negatives are padding.
                    const auto f = static_cast<std::int64_t>(ft * t + k) - static_cast<std::int64_t>(ft - 1);
                    for (std::size_t dy = 0; dy < fs; ++dy)
                        for (std::size_t dx = 0; dx < fs; ++dx)
                            for (std::size_t c = 0; c < C; ++c) {
                                idx[o++] = f < 0 ? -1
                                                 : static_cast<std::int64_t>(((static_cast<std::size_t>(f) * Hp + y * fs + dy) * Wp + x * fs + dx) * C + c);
                            }
                }
    const Tensor h = mlp_head(enc_conv_, enc_hidden_, gather(frames, std::move(idx), {T * H * W, patch}));
    return Posterior{reshape(enc_mean_(h), ls), reshape(enc_logvar_(h), ls)};
}

Tensor VideoVae::decode(const Tensor& latent) const {
    if (latent.rank() != 4 || latent.dim(3) != cfg_.latent || latent.numel() == 0) {
        throw Error("video_decode: expected [T, H, W, " + std::to_string(cfg_.latent) + "], got " + shape_str(latent.shape()));
    }
    const std::size_t T = latent.dim(0), H = latent.dim(1), W = latent.dim(2), ft = cfg_.f_t, fs = cfg_.f_s, C = cfg_.channels;
    const std::size_t patch = ft * fs * fs * C;
    const Tensor p = dec_out_(mlp_head(dec_in_, dec_hidden_, reshape(latent, {T * H * W, cfg_.latent})));
    const std::size_t Tp = pixel_frames(T), Hp = H * fs, Wp = W * fs;
    std::vector<std::int64_t> idx(Tp * Hp * Wp * C);
    std::size_t o = 0;
    for (std::size_t f = 0; f < Tp; ++f) {
        const std::size_t slot_index = f + (ft - 1);
        const std::size_t t = slot_index / ft, k = slot_index % ft;
        for (std::size_t yp = 0; yp < Hp; ++yp)
            for (std::size_t xp = 0; xp < Wp; ++xp)
                for (std::size_t c = 0; c < C; ++c) {
                    const std::size_t token = (t * H + yp / fs) * W + xp / fs;
                    const std::size_t within = ((k * fs + yp % fs) * fs + xp % fs) * C + c;
                    idx[o++] = static_cast<std::int64_t>(token * patch + within);
                }
    }
    return gather(p, std::move(idx), {Tp, Hp, Wp, C});
}

void VideoVae::collect(ParamList& out, const std::string& p) const {
    enc_conv_.collect(out, p + ".enc_conv");
    enc_hidden_.collect(out, p + ".enc_hidden");
    enc_mean_.collect(out, p + ".enc_mean");
    enc_logvar_.collect(out, p + ".enc_logvar");
    dec_in_.collect(out, p + ".dec_in");
    dec_hidden_.collect(out, p + ".dec_hidden");
    dec_out_.collect(out, p + ".dec_out");
}

LatentStats LatentStats::fit(const std::vector<Tensor>& latents) {
    if (latents.empty()) throw Error("LatentStats::fit: no latents");
    const std::size_t C = latents[0].shape().back();
    std::vector<double> sum(C, 0.0), sq(C, 0.0);
    std::size_t n = 0;
    for (const auto& l : latents) {
        if (l.shape().back() != C) throw Error("LatentStats::fit: channel count differs");
        for (std::size_t i = 0; i < l.numel(); ++i) sum[i % C] += l[i];
        n += l.numel() / C;
    }
    LatentStats s;
    s.mean.resize(C);
    s.std.resize(C);
    for (std::size_t c = 0; c < C; ++c) s.mean[c] = sum[c] / static_cast<double>(n);
    for (const auto& l : latents)
        for (std::size_t i = 0; i < l.numel(); ++i) {
            const double d = l[i] - s.mean[i % C];
            sq[i % C] += d * d;
        }
    for (std::size_t c = 0; c < C; ++c) s.std[c] = std::max(std::sqrt(sq[c] / static_cast<double>(n)), 1e-6);
    return s;
}

LatentStats LatentStats::identity(std::size_t channels) {
    return LatentStats{std::vector<double>(channels, 0.0), std::vector<double>(channels, 1.0)};
}

Tensor LatentStats::normalize(const Tensor& latent) const {
    const std::size_t C = mean.size();
    if (latent.shape().back() != C) throw Error("LatentStats::normalize: channel count mismatch");
    Tensor out(latent.shape());
    for (std::size_t i = 0; i < latent.numel(); ++i) out[i] = (latent[i] - mean[i % C]) / std[i % C];
    return out;
}

Tensor LatentStats::denormalize(const Tensor& latent) const {
    const std::size_t C = mean.size();
    if (latent.shape().back() != C) throw Error("LatentStats::denormalize: channel count mismatch");
    Tensor out(latent.shape());
    for (std::size_t i = 0; i < latent.numel(); ++i) out[i] = latent[i] * std[i % C] + mean[i % C];
    return out;
}

void to_json(nlohmann::json& j, const LatentStats& s) { j = {{"mean", s.mean}, {"std", s.std}}; }
void from_json(const nlohmann::json& j, LatentStats& s) {
    j.at("mean").get_to(s.mean);
    j.at("std").get_to(s.std);
    if (s.mean.size() != s.std.size()) throw Error("latent stats: mean/std length mismatch");
}

void to_json(nlohmann::json& j, const AudioVaeConfig& c) {
    j = {{"in_channels", c.in_channels}, {"hidden", c.hidden}, {"latent", c.latent}, {"kernel", c.kernel}, {"stride", c.stride}};
}
void from_json(const nlohmann::json& j, AudioVaeConfig& c) {
    j.at("in_channels").get_to(c.in_channels);
    j.at("hidden").get_to(c.hidden);
    j.at("latent").get_to(c.latent);
    j.at("kernel").get_to(c.kernel);
    j.at("stride").get_to(c.stride);
}
void to_json(nlohmann::json& j, const VideoVaeConfig& c) {
    j = {{"f_t", c.f_t}, {"f_s", c.f_s}, {"channels", c.channels}, {"hidden", c.hidden}, {"latent", c.latent}};
}
void from_json(const nlohmann::json& j, VideoVaeConfig& c) {
    j.at("f_t").get_to(c.f_t);
    j.at("f_s").get_to(c.f_s);
    j.at("channels").get_to(c.channels);
    j.at("hidden").get_to(c.hidden);
    j.at("latent").get_to(c.latent);
}

Tensor kl_to_standard(const Posterior& p) {
    // 0.5 * (mean^2 + exp(logvar) - 1 - logvar)
    const Tensor terms = sub(add(square(p.mean), exp(p.logvar)), affine(p.logvar, 1.0, 1.0));
    return affine(mean(terms), 0.5);
}

}  // namespace avdit::codecs
