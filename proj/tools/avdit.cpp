// avdit: train, sample, probe and dump-attn front end.

#include <CLI11.hpp>

#include <cstdlib>
#include <fstream>
#include <iostream>

#include "avdit/cli/commands.hpp"
#include "avdit/cli/probes.hpp"

namespace fs = std::filesystem;
using namespace avdit;
using namespace avdit::cli;

namespace {

struct ConfigArgs {
    std::string config;
    std::vector<std::string> sets;
    std::string preset;
};

void add_config_options(CLI::App* app, ConfigArgs& a) {
    app->add_option("--config", a.config, "run config JSON (see config/schema.json)");
    app->add_option("--set", a.sets, "override a dotted key, e.g. --set train.steps=500 (repeatable, last wins)");
    app->add_option("--preset", a.preset, "start from a preset instead of the defaults")->check(CLI::IsMember({"tiny"}));
}

// Preset, then run directory config, then --config file, then overrides.
RunConfig resolve(const ConfigArgs& a, const std::optional<fs::path>& run_config, const std::vector<std::string>& overrides) {
    nlohmann::json doc = nlohmann::json::object();
    if (a.preset == "tiny") doc = RunConfig::tiny();
    auto merge = [&](const fs::path& p) {
        std::ifstream is(p);
        if (!is) throw Error("cannot read config " + p.string());
        doc.merge_patch(nlohmann::json::parse(is));
    };
    if (run_config) merge(*run_config);
    if (!a.config.empty()) merge(a.config);
    return resolve_config(doc, overrides);
}

std::string triple(const std::string& v) {
    if (v.find(',') == std::string::npos) return "[" + v + "," + v + "," + v + "]";
    return "[" + v + "]";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"avdit: joint audio-video diffusion transformer toolkit"};
    app.require_subcommand(1);

    ConfigArgs train_cfg;
    std::string train_out;
    bool resume = false;
    auto* train = app.add_subcommand("train", "train codecs and the model into a run directory");
    add_config_options(train, train_cfg);
    train->add_option("--out", train_out, "run directory")->required();
    train->add_flag("--resume", resume, "continue from the newest checkpoint in --out");

    ConfigArgs sample_cfg;
    std::string run_dir, prompt, mode, out_dir, from_manifest, tile_size, overlap;
    std::optional<std::size_t> steps, threads;
    std::optional<double> st_v, sm_v, st_a, sm_a;
    std::optional<std::uint64_t> seed, input_clip;
    std::size_t attn_begin = 0, attn_end = 0;
    auto add_sample_options = [&](CLI::App* sub) {
        add_config_options(sub, sample_cfg);
        sub->add_option("--run", run_dir, "trained run directory");
        sub->add_option("--prompt", prompt, "caption (empty: the input clip's caption)");
        sub->add_option("--mode", mode, "t2av, v2a or a2v")->check(CLI::IsMember({"t2av", "v2a", "a2v"}));
        sub->add_option("--steps", steps, "Euler steps");
        sub->add_option("--s-t-video", st_v, "video text guidance");
        sub->add_option("--s-m-video", sm_v, "video cross-modal guidance");
        sub->add_option("--s-t-audio", st_a, "audio text guidance");
        sub->add_option("--s-m-audio", sm_a, "audio cross-modal guidance");
        sub->add_option("--tile-size", tile_size, "refinement tile in latent tokens: N or T,H,W");
        sub->add_option("--overlap", overlap, "tile overlap in latent tokens: N or T,H,W");
        sub->add_option("--threads", threads, "parallel tiles (capped by AVDIT_THREADS)");
        sub->add_option("--seed", seed, "sampling seed");
        sub->add_option("--input-clip", input_clip, "synthetic clip seed providing the fixed modality for v2a/a2v");
        sub->add_option("--out", out_dir, "output directory")->required();
    };
    auto* sample = app.add_subcommand("sample", "generate video and audio from a trained run");
    add_sample_options(sample);
    sample->add_option("--from-manifest", from_manifest, "rerun a previous sample manifest");

    auto* dump = app.add_subcommand("dump-attn", "write head- and layer-averaged AV attention maps");
    add_sample_options(dump);
    dump->add_option("--begin", attn_begin, "first recorded step");
    dump->add_option("--end", attn_end, "one past the last recorded step (0: all)");

    std::string suite = "all", probe_run, json_out;
    std::vector<std::string> mutations;
    auto* probe = app.add_subcommand("probe", "check every documented invariant; exit 0 iff all pass");
    probe->add_option("--suite", suite, "all or one module: numerics, posenc, textcond, avdit, codecs, flowtrain, sampler, cli");
    probe->add_option("--run", probe_run, "trained run for the trained-only probes");
    probe->add_option("--json", json_out, "also write the report as JSON");
    probe->add_option("--mutate", mutations, "inject a known fault")->group("");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*train) {
            auto log = [](const std::string& s) { std::cerr << s << "\n"; };
            std::optional<fs::path> stored;
            if (resume && fs::exists(RunLayout{train_out}.config())) stored = RunLayout{train_out}.config();
            const RunConfig c = resolve(train_cfg, stored, train_cfg.sets);
            const auto manifest = run_train({c, train_cfg.sets, train_out, resume, log});
            std::cout << manifest.at("results").dump(2) << "\n";
            return 0;
        }
        if (*sample || *dump) {
            if (!from_manifest.empty()) {
                rerun_manifest(from_manifest, out_dir);
                std::cout << "wrote " << out_dir << "\n";
                return 0;
            }
            if (run_dir.empty()) throw Error("--run is required (or --from-manifest)");
            std::vector<std::string> overrides = sample_cfg.sets;
            auto set = [&](const std::string& key, const std::string& value) { overrides.push_back(key + "=" + value); };
            if (!mode.empty()) set("sample.mode", "\"" + mode + "\"");
            if (steps) set("sample.steps", std::to_string(*steps));
            auto num = [](double v) { return nlohmann::json(v).dump(); };
            if (st_v) set("sample.guidance.video.s_t", num(*st_v));
            if (sm_v) set("sample.guidance.video.s_m", num(*sm_v));
            if (st_a) set("sample.guidance.audio.s_t", num(*st_a));
            if (sm_a) set("sample.guidance.audio.s_m", num(*sm_a));
            if (!tile_size.empty()) set("sample.tile", triple(tile_size));
            if (!overlap.empty()) set("sample.overlap", triple(overlap));
            if (threads) set("sample.threads", std::to_string(*threads));
            if (seed) set("sample.seed", std::to_string(*seed));
            SampleRequest req;
            req.run = run_dir;
            req.prompt = prompt;
            req.config = resolve(sample_cfg, RunLayout{run_dir}.config(), overrides);
            req.overrides = overrides;
            req.input_clip = input_clip;
            req.out = out_dir;
            if (*dump) run_dump_attention(req, {attn_begin, attn_end});
            else run_sample(req);
            std::cout << "wrote " << out_dir << "\n";
            return 0;
        }
        if (*probe) {
            ProbeOptions opts;
            opts.suite = suite;
            if (!probe_run.empty()) opts.run = probe_run;
            opts.mutations.insert(mutations.begin(), mutations.end());
            const ProbeReport report = run_probes(opts);
            std::cout << report.text();
            if (!json_out.empty()) {
                std::ofstream os(json_out);
                if (!os) throw Error("cannot write " + json_out);
                os << report.to_json().dump(2) << "\n";
            }
            return report.ok() ? 0 : 1;
        }
    } catch (const std::exception& e) {
        std::cerr << "avdit: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
