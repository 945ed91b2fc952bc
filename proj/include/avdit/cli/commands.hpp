#pragma once

#include <functional>

#include "avdit/cli/config.hpp"

namespace avdit::cli {

using Logger = std::function<void(const std::string&)>;

/// Layout of a training run directory.
struct RunLayout {
    std::filesystem::path root;
    std::filesystem::path config() const { return root / "config.json"; }
    std::filesystem::path codecs() const { return root / "codecs"; }
    std::filesystem::path train() const { return root / "train"; }
    std::filesystem::path model() const { return root / "model"; }  // final checkpoint
    std::filesystem::path manifest() const { return root / "manifest.json"; }
};

struct TrainRequest {
    RunConfig config;
    std::vector<std::string> overrides;  // recorded, already applied to config
    std::filesystem::path out;
    bool resume = false;                 // continue from the newest ckpt_* and reuse codecs
    Logger log;
};

/// Trains codecs and the model, writes the run directory and returns its
/// manifest (also written to out/manifest.json).
nlohmann::json run_train(const TrainRequest& req);

struct SampleRequest {
    std::filesystem::path run;           // training run directory
    std::string prompt;
    RunConfig config;                    // sample section drives generation
    std::vector<std::string> overrides;
    std::optional<std::uint64_t> input_clip;  // synthetic clip seed for V2A/A2V
    std::filesystem::path out;
};

/// Generates, exports frames/audio/latents/attention and writes
/// out/manifest.json with everything needed to rerun.
nlohmann::json run_sample(const SampleRequest& req);

/// Rebuilds the request stored in a sample manifest, checks the weights
/// still have the recorded ids, and runs it into `out`.
nlohmann::json rerun_manifest(const std::filesystem::path& manifest, const std::filesystem::path& out);

struct AttentionDump {
    std::size_t begin = 0, end = 0;  // step window [begin, end); end 0 means all steps
};

/// Samples the base stage with recording on and writes per-token and
/// per-frame AV attention maps (AVT1 + PNG) for both directions.
nlohmann::json run_dump_attention(const SampleRequest& req, const AttentionDump& window);

}  // namespace avdit::cli
