#include "avdit/flowtrain/pipeline.hpp"

#include <fstream>

#include "avdit/model/checkpoint.hpp"

namespace avdit::flow {

namespace {

nlohmann::json train_json(const codecs::CodecTrainConfig& c) {
    return {{"steps", c.steps}, {"batch", c.batch}, {"lr", c.lr}, {"lr_final", c.lr_final}, {"kl_weight", c.kl_weight}, {"seed", c.seed}};
}

codecs::CodecTrainConfig train_from(const nlohmann::json& j) {
    codecs::CodecTrainConfig c;
    j.at("steps").get_to(c.steps);
    j.at("batch").get_to(c.batch);
    j.at("lr").get_to(c.lr);
    j.at("lr_final").get_to(c.lr_final);
    j.at("kl_weight").get_to(c.kl_weight);
    j.at("seed").get_to(c.seed);
    return c;
}

ParamList codec_params(const CodecBundle& b) {
    ParamList ps;
    b.audio.collect(ps, "audio_vae");
    b.video.collect(ps, "video_vae");
    return ps;
}

}  // namespace

void to_json(nlohmann::json& j, const DataConfig& c) {
    j = {{"clip",
          {{"frames", c.clip.frames},
           {"size", c.clip.size},
           {"fps", c.clip.fps},
           {"square", c.clip.square},
           {"sample_rate", c.clip.sample_rate},
           {"pinned_prob", c.clip.pinned_prob}}},
         {"features",
          {{"hop", c.features.hop},
           {"window", c.features.window},
           {"n_fft", c.features.n_fft},
           {"bands", c.features.bands},
           {"f_min", c.features.f_min},
           {"f_max", c.features.f_max},
           {"gain", c.features.gain}}},
         {"audio_vae", c.audio_vae},
         {"video_vae", c.video_vae},
         {"audio_train", train_json(c.audio_train)},
         {"video_train", train_json(c.video_train)},
         {"codec_init_seed", c.codec_init_seed},
         {"codec_clips", c.codec_clips},
         {"constant_every", c.constant_every},
         {"train_clips", c.train_clips},
         {"eval_clips", c.eval_clips},
         {"eval_seed_offset", c.eval_seed_offset}};
}

void from_json(const nlohmann::json& j, DataConfig& c) {
    const auto& clip = j.at("clip");
    clip.at("frames").get_to(c.clip.frames);
    clip.at("size").get_to(c.clip.size);
    clip.at("fps").get_to(c.clip.fps);
    clip.at("square").get_to(c.clip.square);
    clip.at("sample_rate").get_to(c.clip.sample_rate);
    clip.at("pinned_prob").get_to(c.clip.pinned_prob);
    const auto& f = j.at("features");
    f.at("hop").get_to(c.features.hop);
    f.at("window").get_to(c.features.window);
    f.at("n_fft").get_to(c.features.n_fft);
    f.at("bands").get_to(c.features.bands);
    f.at("f_min").get_to(c.features.f_min);
    f.at("f_max").get_to(c.features.f_max);
    f.at("gain").get_to(c.features.gain);
    c.features.sample_rate = c.clip.sample_rate;
    j.at("audio_vae").get_to(c.audio_vae);
    j.at("video_vae").get_to(c.video_vae);
    c.audio_train = train_from(j.at("audio_train"));
    c.video_train = train_from(j.at("video_train"));
    j.at("codec_init_seed").get_to(c.codec_init_seed);
    j.at("codec_clips").get_to(c.codec_clips);
    j.at("constant_every").get_to(c.constant_every);
    j.at("train_clips").get_to(c.train_clips);
    j.at("eval_clips").get_to(c.eval_clips);
    j.at("eval_seed_offset").get_to(c.eval_seed_offset);
}

void CodecBundle::save(const std::filesystem::path& dir) const {
    save_checkpoint(dir, codec_params(*this),
                    {{"audio_vae", audio.config()}, {"video_vae", video.config()}});
    std::ofstream os(dir / "latent_stats.json");
    if (!os) throw Error("CodecBundle::save: cannot write " + (dir / "latent_stats.json").string());
    os << nlohmann::json{{"audio", audio_stats}, {"video", video_stats}}.dump(2) << "\n";
}

CodecBundle CodecBundle::load(const std::filesystem::path& dir, const DataConfig& cfg) {
    Rng rng(cfg.codec_init_seed);
    CodecBundle b{codecs::AudioVae(cfg.audio_vae, rng), codecs::VideoVae(cfg.video_vae, rng), {}, {}};
    load_checkpoint(dir, codec_params(b));
    std::ifstream is(dir / "latent_stats.json");
    if (!is) throw Error("CodecBundle::load: missing " + (dir / "latent_stats.json").string());
    const auto j = nlohmann::json::parse(is);
    j.at("audio").get_to(b.audio_stats);
    j.at("video").get_to(b.video_stats);
    return b;
}

Tensor constant_clip(const ClipConfig& cfg, const std::array<double, 3>& rgb) {
    Tensor c({cfg.frames, cfg.size, cfg.size, 3});
    for (std::size_t i = 0; i < c.numel(); ++i) c[i] = rgb[i % 3];
    return c;
}

CodecBundle train_codecs(const DataConfig& cfg, CodecReport* report) {
    std::vector<Tensor> video, audio;
    Rng colours(cfg.codec_init_seed + 1);
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    for (std::size_t s = 0; s < cfg.codec_clips; ++s) {
        auto smp = make_sample(s, cfg.clip, cfg.features);
        video.push_back(smp.video);
        audio.push_back(smp.audio.frames);
        if (cfg.constant_every > 0 && s % cfg.constant_every == 0) {
            const std::array<double, 3> rgb{u01(colours), u01(colours), u01(colours)};
            video.push_back(constant_clip(cfg.clip, rgb));
        }
    }
    Rng rng(cfg.codec_init_seed);
    CodecBundle b{codecs::AudioVae(cfg.audio_vae, rng), codecs::VideoVae(cfg.video_vae, rng), {}, {}};
    CodecReport rep;
    rep.audio = codecs::train_audio_vae(b.audio, audio, cfg.audio_train);
    rep.video = codecs::train_video_vae(b.video, video, cfg.video_train);
    std::vector<Tensor> la, lv;
    for (std::size_t s = 0; s < cfg.codec_clips; ++s) {
        la.push_back(b.audio.encode(audio[s]));
    }
    for (const auto& v : video) lv.push_back(b.video.encode(v));
    b.audio_stats = codecs::LatentStats::fit(la);
    b.video_stats = codecs::LatentStats::fit(lv);
    if (report) *report = std::move(rep);
    return b;
}

std::vector<FlowItem> build_items(const CodecBundle& codecs, const DataConfig& cfg, std::uint64_t first_seed,
                                  std::size_t count, const text::Tokenizer& tok, const text::EncoderConfig& enc) {
    std::vector<FlowItem> items;
    items.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        const std::uint64_t seed = first_seed + i;
        const auto smp = make_sample(seed, cfg.clip, cfg.features);
        FlowItem it;
        it.seed = seed;
        it.video = codecs.encode_video(smp.video);
        it.audio = codecs.encode_audio(smp.audio.frames);
        it.prompt = model::prompt_features(tok.encode(smp.caption), enc);
        items.push_back(std::move(it));
    }
    return items;
}

}  // namespace avdit::flow
