#include "avdit/sampler/pipeline.hpp"

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <thread>

#include "avdit/codecs/media.hpp"
#include "avdit/numerics/io.hpp"

namespace avdit::sampler {

std::size_t SampleConfig::refine_steps() const {
    return std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(static_cast<double>(steps) * t_refine)));
}

void to_json(nlohmann::json& j, const SampleConfig& c) {
    j = {{"mode", mode_name(c.mode)},
         {"steps", c.steps},
         {"guidance",
          {{"video", {{"s_t", c.guidance.video.s_t}, {"s_m", c.guidance.video.s_m}}},
           {"audio", {{"s_t", c.guidance.audio.s_t}, {"s_m", c.guidance.audio.s_m}}}}},
         {"seed", c.seed},
         {"refine", c.refine},
         {"tiling", c.tiling},
         {"t_refine", c.t_refine},
         {"tile", c.tile},
         {"overlap", c.overlap},
         {"record_attention", c.record_attention},
         {"threads", c.threads}};
}

void from_json(const nlohmann::json& j, SampleConfig& c) {
    c.mode = parse_mode(j.at("mode").get<std::string>());
    j.at("steps").get_to(c.steps);
    const auto& g = j.at("guidance");
    g.at("video").at("s_t").get_to(c.guidance.video.s_t);
    g.at("video").at("s_m").get_to(c.guidance.video.s_m);
    g.at("audio").at("s_t").get_to(c.guidance.audio.s_t);
    g.at("audio").at("s_m").get_to(c.guidance.audio.s_m);
    j.at("seed").get_to(c.seed);
    j.at("refine").get_to(c.refine);
    j.at("tiling").get_to(c.tiling);
    j.at("t_refine").get_to(c.t_refine);
    j.at("tile").get_to(c.tile);
    j.at("overlap").get_to(c.overlap);
    j.at("record_attention").get_to(c.record_attention);
    j.at("threads").get_to(c.threads);
}

std::size_t tile_threads(std::size_t requested) {
    std::size_t n = std::max<std::size_t>(1, requested);
    if (const char* env = std::getenv("AVDIT_THREADS")) {
        const long cap = std::strtol(env, nullptr, 10);
        if (cap >= 1) n = std::min(n, static_cast<std::size_t>(cap));
    }
    return n;
}

namespace {

Tensor mix(const Tensor& clean, const Tensor& noise, double t) {
    Tensor out(clean.shape());
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] = (1.0 - t) * clean[i] + t * noise[i];
    return out;
}

Tensor refine_window(const model::AvDiT& m, const Tensor& start, const Tensor& audio, const model::PerStream<text::TextConditioning>& cond,
                     const SampleConfig& cfg, std::array<std::size_t, 3> origin) {
    EulerInputs in;
    in.video = start;
    in.audio = audio;
    in.cond = cond;
    in.mode = Mode::a2v;  // audio is fixed context during video refinement
    in.video_origin = origin;
    EulerConfig ec;
    ec.steps = cfg.refine_steps();
    ec.guidance = cfg.guidance;
    ec.t_start = cfg.t_refine;
    return euler_sample(model_denoiser(m), in, ec).video;
}

}  // namespace

PipelineResult multiscale_pipeline(const model::AvDiT& m, const flow::CodecBundle& codecs, const flow::DataConfig& data,
                                   const PipelineInputs& in, const SampleConfig& cfg) {
    const auto& mc = m.config();
    const Shape vshape = codecs.video.latent_shape({data.clip.frames, data.clip.size, data.clip.size, 3});
    const std::size_t audio_frames = static_cast<std::size_t>(std::llround(data.clip.seconds() * data.features.frame_rate()));
    const Shape ashape{codecs.audio.token_count(audio_frames), mc.audio.latent_channels};
    if (cfg.mode == Mode::v2a && !in.video_latent) throw Error("multiscale_pipeline: V2A needs a video latent");
    if (cfg.mode == Mode::a2v && !in.audio_latent) throw Error("multiscale_pipeline: A2V needs an audio latent");
    if (!(cfg.t_refine > 0.0 && cfg.t_refine <= 1.0)) throw Error("multiscale_pipeline: t_refine must lie in (0, 1]");

    Rng rng(cfg.seed);
    PipelineResult r;
    const auto cond = m.condition(in.prompt);

    EulerInputs base;
    base.cond = cond;
    base.mode = cfg.mode;
    base.video = Tensor::randn(vshape, rng);
    base.audio = Tensor::randn(ashape, rng);
    if (cfg.mode == Mode::v2a) base.video = *in.video_latent;
    if (cfg.mode == Mode::a2v) base.audio = *in.audio_latent;
    if (base.video.shape() != vshape || base.audio.shape() != ashape) throw Error("multiscale_pipeline: clamp latent has the wrong shape");
    EulerConfig ec;
    ec.steps = cfg.steps;
    ec.guidance = cfg.guidance;
    const Velocity out = euler_sample(model_denoiser(m), base, ec, cfg.record_attention ? &r.recording : nullptr);
    r.base_video = out.video;
    r.base_audio = out.audio;
    r.audio_latent = out.audio;
    r.video_latent = out.video;

    if (cfg.refine && cfg.mode != Mode::v2a) {
        const Tensor up = latent_upscale(out.video);
        const Tensor noise = Tensor::randn(up.shape(), rng);  // one field shared by every tile
        const Tensor start = mix(up, noise, cfg.t_refine);
        if (!cfg.tiling) {
            r.video_latent = refine_window(m, start, out.audio, cond, cfg, {0, 0, 0});
        } else {
            const auto layout = tile_partition({up.dim(0), up.dim(1), up.dim(2)}, cfg.tile, cfg.overlap);
            const auto starts = tile_split(start, layout);
            std::vector<Tensor> refined(starts.size());
            const std::size_t n_threads = std::min(tile_threads(cfg.threads), starts.size());
            auto work = [&](std::size_t first) {
                for (std::size_t k = first; k < starts.size(); k += n_threads) {
                    refined[k] = refine_window(m, starts[k], out.audio, cond, cfg, layout.tiles[k].begin);
                }
            };
            if (n_threads <= 1) {
                work(0);
            } else {
                std::vector<std::thread> pool;
                for (std::size_t i = 0; i < n_threads; ++i) pool.emplace_back(work, i);
                for (auto& t : pool) t.join();
            }
            r.video_latent = tile_blend(refined, layout);
        }
    }

    // The codec only knows the base grid; refined latents decode at 2x.
    r.frames = codecs.decode_video(r.video_latent);
    r.audio_frames = codecs.decode_audio(r.audio_latent, audio_frames);
    return r;
}

double video_seconds(std::size_t frames, double fps) {
    return frames == 0 ? 0.0 : static_cast<double>(frames - 1) / fps;
}

void export_run(const PipelineResult& r, const std::filesystem::path& dir, const nlohmann::json& manifest,
                const flow::DataConfig& data) {
    std::filesystem::create_directories(dir / "frames");
    const std::size_t T = r.frames.dim(0), H = r.frames.dim(1), W = r.frames.dim(2);
    for (std::size_t f = 0; f < T; ++f) {
        Tensor img({H, W, 3});
        for (std::size_t i = 0; i < img.numel(); ++i) img[i] = r.frames[f * H * W * 3 + i];
        char name[32];
        std::snprintf(name, sizeof name, "frame_%03zu.png", f);
        codecs::write_png(dir / "frames" / name, img);
    }
    Tensor nonneg = r.audio_frames.clone();
    for (auto& v : nonneg.data()) v = std::max(v, 0.0);
    const auto wav = codecs::resynthesize({nonneg, data.features.frame_rate()}, data.features, 24000.0);
    codecs::write_wav(dir / "audio.wav", wav);
    save_tensor(dir / "video_latent.avt", r.video_latent);
    save_tensor(dir / "audio_latent.avt", r.audio_latent);
    save_tensor(dir / "base_video_latent.avt", r.base_video);

    nlohmann::json m = manifest;
    m["outputs"] = {{"frames", T},
                    {"frame_size", {H, W}},
                    {"video_seconds", video_seconds(T, data.clip.fps)},
                    {"audio_seconds", wav.seconds()},
                    {"wav_rate", wav.sample_rate}};
    if (!r.recording.steps.empty()) {
        const std::size_t n = r.recording.steps.size(), third = std::max<std::size_t>(1, n / 3);
        const Tensor v2a = record_attention(r.recording, AttnDirection::video_to_audio, 0, third);
        const Tensor a2v = record_attention(r.recording, AttnDirection::audio_to_video, n - third, n);
        save_tensor(dir / "attn_v2a.avt", v2a);
        save_tensor(dir / "attn_a2v.avt", a2v);
        codecs::write_heatmap_png(dir / "attn_v2a.png", v2a, 4);
        codecs::write_heatmap_png(dir / "attn_a2v.png", a2v, 4);
        m["outputs"]["attention"] = {{"v2a_steps", {0, third}}, {"a2v_steps", {n - third, n}}};
    }
    std::ofstream os(dir / "manifest.json");
    if (!os) throw Error("export_run: cannot write " + (dir / "manifest.json").string());
    os << m.dump(2) << "\n";
}

}  // namespace avdit::sampler
