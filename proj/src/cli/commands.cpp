#include "avdit/cli/commands.hpp"

#include <chrono>
#include <fstream>
#include <sstream>

#include "avdit/codecs/media.hpp"
#include "avdit/model/checkpoint.hpp"
#include "avdit/numerics/io.hpp"

namespace avdit::cli {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

void write_json(const fs::path& path, const json& j) {
    std::ofstream os(path);
    if (!os) throw Error("cannot write " + path.string());
    os << j.dump(2) << "\n";
}

json read_json(const fs::path& path) {
    std::ifstream is(path);
    if (!is) throw Error("cannot read " + path.string());
    json j = json::parse(is, nullptr, false);
    if (j.is_discarded()) throw Error(path.string() + " is not valid JSON");
    return j;
}

std::optional<fs::path> latest_checkpoint(const fs::path& train_dir) {
    std::optional<fs::path> best;
    if (!fs::exists(train_dir)) return best;
    for (const auto& e : fs::directory_iterator(train_dir)) {
        const auto name = e.path().filename().string();
        if (e.is_directory() && name.rfind("ckpt_", 0) == 0 && fs::exists(e.path() / "trainer.json")) {
            if (!best || name > best->filename().string()) best = e.path();
        }
    }
    return best;
}

std::vector<flow::StepMetrics> read_metrics(const fs::path& csv) {
    std::ifstream is(csv);
    if (!is) throw Error("cannot read " + csv.string());
    std::vector<flow::StepMetrics> out;
    std::string line;
    std::getline(is, line);
    while (std::getline(is, line)) {
        std::istringstream ls(line);
        flow::StepMetrics m;
        char c;
        ls >> m.step >> c >> m.loss >> c >> m.loss_video >> c >> m.loss_audio >> c >> m.grad_norm;
        if (!ls) throw Error("malformed metrics row in " + csv.string() + ": " + line);
        out.push_back(m);
    }
    return out;
}

std::string codec_id(const fs::path& dir) {
    return model::config_hash({{"params", checkpoint_id(dir)}, {"stats", read_json(dir / "latent_stats.json")}});
}

double smoothed_at(const std::vector<flow::StepMetrics>& ms, std::size_t step) {
    return flow::smoothed_loss(ms, step, std::min<std::size_t>(50, step));
}

struct Loaded {
    model::AvDiT model;
    flow::CodecBundle codecs;
    std::string checkpoint_id, codec_id;
};

Loaded load_run(const fs::path& run, const RunConfig& c) {
    const RunLayout L{run};
    if (!fs::exists(L.model() / "params.avt")) throw Error("no trained model under " + run.string() + " (expected model/params.avt)");
    Loaded out{model::AvDiT(c.model), flow::CodecBundle::load(L.codecs(), c.data), checkpoint_id(L.model()), codec_id(L.codecs())};
    const json stored = load_checkpoint(L.model(), out.model.parameters());
    if (model::config_hash(stored) != model::config_hash(json(c.model))) {
        throw Error("model config differs from the checkpoint in " + L.model().string());
    }
    return out;
}

struct Prepared {
    sampler::PipelineInputs inputs;
    std::string prompt;
    std::vector<text::TokenId> tokens;
};

Prepared prepare_inputs(const SampleRequest& req, const Loaded& run) {
    const RunConfig& c = req.config;
    Prepared p;
    p.prompt = req.prompt;
    std::optional<flow::SyntheticSample> clip;
    if (c.sample.mode != sampler::Mode::t2av) {
        const std::uint64_t seed = req.input_clip.value_or(c.data.eval_seed_offset);
        clip = flow::make_sample(seed, c.data.clip, c.data.features);
        if (c.sample.mode == sampler::Mode::v2a) p.inputs.video_latent = run.codecs.encode_video(clip->video);
        if (c.sample.mode == sampler::Mode::a2v) p.inputs.audio_latent = run.codecs.encode_audio(clip->audio.frames);
        if (p.prompt.empty()) p.prompt = clip->caption;
    }
    p.tokens = text::Tokenizer::caption_default().encode(p.prompt);
    p.inputs.prompt = model::prompt_features(p.tokens, c.model.encoder);
    return p;
}

json sample_manifest(const SampleRequest& req, const Loaded& run, const Prepared& p) {
    json m = {{"command", "sample"},
              {"run", fs::absolute(req.run).lexically_normal().string()},
              {"checkpoint_id", run.checkpoint_id},
              {"codec_id", run.codec_id},
              {"config", req.config},
              {"config_hash", run_config_hash(req.config)},
              {"overrides", req.overrides},
              {"prompt", p.prompt},
              {"tokens", p.tokens},
              {"seed", req.config.sample.seed}};
    m["input_clip"] = req.input_clip ? json(*req.input_clip) : json(nullptr);
    return m;
}

void save_map(const fs::path& stem, const Tensor& map) {
    save_tensor(stem.string() + ".avt", map);
    codecs::write_heatmap_png(stem.string() + ".png", map, 4);
}

}  // namespace

json run_train(const TrainRequest& req) {
    const auto t0 = std::chrono::steady_clock::now();
    auto log = [&](const std::string& s) {
        if (req.log) req.log(s);
    };
    const RunLayout L{req.out};
    const RunConfig& c = req.config;
    fs::create_directories(L.root);
    if (req.resume && fs::exists(L.config())) {
        if (model::config_hash(read_json(L.config())) != run_config_hash(c)) {
            throw Error("resume: config differs from " + L.config().string());
        }
    }
    write_json(L.config(), c);

    flow::CodecBundle codecs = [&] {
        if (req.resume && fs::exists(L.codecs() / "params.avt")) {
            log("codecs: reusing " + L.codecs().string());
            return flow::CodecBundle::load(L.codecs(), c.data);
        }
        log("codecs: training audio (" + std::to_string(c.data.audio_train.steps) + " steps) and video (" +
            std::to_string(c.data.video_train.steps) + " steps)");
        flow::CodecReport rep;
        auto b = flow::train_codecs(c.data, &rep);
        b.save(L.codecs());
        std::ostringstream s;
        s << "codecs: audio loss " << rep.audio.loss.front() << " -> " << rep.audio.loss.back() << ", video loss "
          << rep.video.loss.front() << " -> " << rep.video.loss.back();
        log(s.str());
        return b;
    }();

    const auto tok = text::Tokenizer::caption_default();
    const auto items = flow::build_items(codecs, c.data, 0, c.data.train_clips, tok, c.model.encoder);
    const auto held = flow::build_items(codecs, c.data, c.data.eval_seed_offset, c.data.eval_clips, tok, c.model.encoder);
    log("data: " + std::to_string(items.size()) + " training clips, " + std::to_string(held.size()) + " held out");

    model::AvDiT m(c.model);
    flow::Trainer trainer(m, items, c.train);
    if (req.resume) {
        if (const auto last = latest_checkpoint(L.train())) {
            trainer.load_state(*last);
            log("resumed from " + last->string());
        }
    }
    const double std_error = flow::standardization_error(items, c.model.encoder.layers);
    const auto run = flow::run_training(trainer, c.train, L.train(), [&](const flow::StepMetrics& s) {
        if (s.step % 100 == 0 || s.step == c.train.steps) {
            std::ostringstream line;
            line << "step " << s.step << " loss " << s.loss << " (video " << s.loss_video << ", audio " << s.loss_audio
                 << ") grad " << s.grad_norm;
            log(line.str());
        }
    });
    const auto final_ckpt = latest_checkpoint(L.train());
    if (!final_ckpt) throw Error("run_train: no checkpoint was written");
    fs::remove_all(L.model());
    fs::copy(*final_ckpt, L.model(), fs::copy_options::recursive);

    const auto metrics = read_metrics(L.train() / "metrics.csv");
    const auto eval = flow::eval_cross_modal(m, held, 2, c.train.seed + 1);
    json results = {{"steps", trainer.steps_done()},
                    {"standardization_error", std_error},
                    {"cross_modal",
                     {{"with_context", eval.with_context}, {"without_context", eval.without_context}, {"ratio", eval.ratio()}}}};
    if (!metrics.empty()) {
        const std::size_t last = metrics.back().step;
        results["smoothed_loss_final"] = smoothed_at(metrics, last);
        if (last >= 100) {
            results["smoothed_loss_100"] = smoothed_at(metrics, 100);
            results["loss_ratio"] = results["smoothed_loss_final"].get<double>() / results["smoothed_loss_100"].get<double>();
        }
    }
    std::ostringstream s;
    s << "eval: audio loss with video " << eval.with_context << ", without " << eval.without_context << ", ratio "
      << eval.ratio();
    log(s.str());

    const json manifest = {{"command", "train"},
                           {"config", c},
                           {"config_hash", run_config_hash(c)},
                           {"overrides", req.overrides},
                           {"codec_id", codec_id(L.codecs())},
                           {"checkpoint_id", checkpoint_id(L.model())},
                           {"final_checkpoint", final_ckpt->filename().string()},
                           {"results", results},
                           {"seconds", std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count()}};
    write_json(L.manifest(), manifest);
    return manifest;
}

json run_sample(const SampleRequest& req) {
    const Loaded run = load_run(req.run, req.config);
    const Prepared p = prepare_inputs(req, run);
    const auto result = sampler::multiscale_pipeline(run.model, run.codecs, req.config.data, p.inputs, req.config.sample);
    sampler::export_run(result, req.out, sample_manifest(req, run, p), req.config.data);
    return read_json(req.out / "manifest.json");
}

json rerun_manifest(const fs::path& manifest, const fs::path& out) {
    const json m = read_json(manifest);
    if (m.value("command", "") != "sample") throw Error(manifest.string() + " is not a sample manifest");
    SampleRequest req;
    req.run = m.at("run").get<std::string>();
    req.prompt = m.at("prompt").get<std::string>();
    req.config = resolve_config(m.at("config"), {});
    req.overrides = m.at("overrides").get<std::vector<std::string>>();
    if (!m.at("input_clip").is_null()) req.input_clip = m.at("input_clip").get<std::uint64_t>();
    req.out = out;
    if (run_config_hash(req.config) != m.at("config_hash").get<std::string>()) {
        throw Error("rerun: config hash in " + manifest.string() + " does not match its config");
    }
    const RunLayout L{req.run};
    if (checkpoint_id(L.model()) != m.at("checkpoint_id").get<std::string>()) {
        throw Error("rerun: model weights under " + L.model().string() + " changed since the manifest was written");
    }
    if (codec_id(L.codecs()) != m.at("codec_id").get<std::string>()) {
        throw Error("rerun: codecs under " + L.codecs().string() + " changed since the manifest was written");
    }
    return run_sample(req);
}

json run_dump_attention(const SampleRequest& req, const AttentionDump& window) {
    SampleRequest r = req;
    r.config.sample.refine = false;
    r.config.sample.record_attention = true;
    const Loaded run = load_run(r.run, r.config);
    const Prepared p = prepare_inputs(r, run);
    const auto result = sampler::multiscale_pipeline(run.model, run.codecs, r.config.data, p.inputs, r.config.sample);
    const std::size_t n = result.recording.steps.size();
    const std::size_t end = window.end == 0 ? n : window.end;
    if (window.begin >= end || end > n) {
        throw Error("dump-attn: step window [" + std::to_string(window.begin) + ", " + std::to_string(end) +
                    ") is outside the " + std::to_string(n) + " recorded steps");
    }
    const std::size_t per_frame = result.base_video.dim(1) * result.base_video.dim(2);
    fs::create_directories(r.out);
    json summary = sample_manifest(r, run, p);
    summary["command"] = "dump-attn";
    summary["window"] = {window.begin, end};
    for (auto [dir, name] : {std::pair{sampler::AttnDirection::video_to_audio, "v2a"}, std::pair{sampler::AttnDirection::audio_to_video, "a2v"}}) {
        const Tensor tokens = sampler::record_attention(result.recording, dir, window.begin, end);
        const Tensor frames = sampler::frame_attention(tokens, dir, per_frame);
        save_map(r.out / (std::string("attn_") + name + "_tokens"), tokens);
        save_map(r.out / (std::string("attn_") + name + "_frames"), frames);
        summary["maps"][name] = {{"tokens", tokens.shape()}, {"frames", frames.shape()}};
    }
    write_json(r.out / "manifest.json", summary);
    return summary;
}

}  // namespace avdit::cli
