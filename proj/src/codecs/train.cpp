#include "avdit/codecs/train.hpp"

#include <functional>

namespace avdit::codecs {

namespace {

Tensor sample_latent(const Posterior& p, Rng& rng) {
    const Tensor eps = Tensor::randn(p.mean.shape(), rng);
    return add(p.mean, mul(exp(affine(p.logvar, 0.5)), eps));
}

CodecTrainReport run(const ParamList& params, const std::vector<Tensor>& clips, const CodecTrainConfig& cfg,
                     const std::function<Posterior(const Tensor&)>& enc,
                     const std::function<Tensor(const Tensor&, const Tensor&)>& dec, const char* what) {
    if (clips.empty()) throw Error(std::string(what) + ": no training clips");
    if (cfg.batch == 0) throw Error(std::string(what) + ": batch must be positive");
    Rng rng(cfg.seed);
    Adam opt(params, cfg.lr);
    CodecTrainReport report;
    std::uniform_int_distribution<std::size_t> pick(0, clips.size() - 1);
    for (std::size_t step = 0; step < cfg.steps; ++step) {
        Tape tape;
        double total = 0.0, recon_total = 0.0;
        {
            TapeScope scope(tape);
            opt.zero_grad();
            for (std::size_t b = 0; b < cfg.batch; ++b) {
                const Tensor& x = clips[pick(rng)];
                const Posterior post = enc(x);
                const Tensor recon = mse(dec(sample_latent(post, rng), x), x);
                Tensor loss = affine(add(recon, affine(kl_to_standard(post), cfg.kl_weight)), 1.0 / static_cast<double>(cfg.batch));
                tape.backward(loss);
                tape.clear();
                total += loss.item();
                recon_total += recon.item() / static_cast<double>(cfg.batch);
            }
        }
        if (!std::isfinite(total) || (!report.loss.empty() && total > 10.0 * report.loss.front())) {
            throw Error(std::string(what) + ": diverged at step " + std::to_string(step) + " (loss " + std::to_string(total) +
                        ", initial " + std::to_string(report.loss.empty() ? total : report.loss.front()) + ")");
        }
        report.loss.push_back(total);
        report.recon.push_back(recon_total);
        const double frac = cfg.steps > 1 ? static_cast<double>(step) / static_cast<double>(cfg.steps - 1) : 0.0;
        opt.set_lr(cfg.lr + (cfg.lr_final - cfg.lr) * frac);
        opt.step();
    }
    return report;
}

double rel_error(const Tensor& a, const Tensor& b) { return relative_l2(a, b); }

}  // namespace

CodecTrainReport train_audio_vae(AudioVae& vae, const std::vector<Tensor>& clips, const CodecTrainConfig& cfg) {
    ParamList ps;
    vae.collect(ps, "audio_vae");
    return run(
        ps, clips, cfg, [&](const Tensor& x) { return vae.encode_posterior(x); },
        [&](const Tensor& z, const Tensor& x) { return vae.decode(z, x.dim(0)); }, "train_audio_vae");
}

CodecTrainReport train_video_vae(VideoVae& vae, const std::vector<Tensor>& clips, const CodecTrainConfig& cfg) {
    ParamList ps;
    vae.collect(ps, "video_vae");
    return run(
        ps, clips, cfg, [&](const Tensor& x) { return vae.encode_posterior(x); },
        [&](const Tensor& z, const Tensor&) { return vae.decode(z); }, "train_video_vae");
}

double audio_roundtrip_error(const AudioVae& vae, const std::vector<Tensor>& clips) {
    double s = 0.0;
    for (const auto& x : clips) s += rel_error(vae.decode(vae.encode(x), x.dim(0)), x);
    return s / static_cast<double>(clips.size());
}

double video_roundtrip_error(const VideoVae& vae, const std::vector<Tensor>& clips) {
    double s = 0.0;
    for (const auto& x : clips) s += rel_error(vae.decode(vae.encode(x)), x);
    return s / static_cast<double>(clips.size());
}

}  // namespace avdit::codecs
