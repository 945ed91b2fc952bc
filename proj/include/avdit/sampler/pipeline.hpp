#pragma once

#include <filesystem>
#include <optional>

#include "avdit/flowtrain/pipeline.hpp"
#include "avdit/sampler/sampler.hpp"

namespace avdit::sampler {

struct SampleConfig {
    Mode mode = Mode::t2av;
    std::size_t steps = 40;
    GuidanceWeights guidance;
    std::uint64_t seed = 0;
    bool refine = true;          // upscale + re-noise + refine the video latent
    bool tiling = true;          // false refines the whole upscaled volume at once
    double t_refine = 0.4;
    std::array<std::size_t, 3> tile{6, 6, 6};
    std::array<std::size_t, 3> overlap{0, 4, 4};
    bool record_attention = false;
    std::size_t threads = 1;     // parallel tiles; capped by AVDIT_THREADS

    std::size_t refine_steps() const;
};

void to_json(nlohmann::json& j, const SampleConfig& c);
void from_json(const nlohmann::json& j, SampleConfig& c);

struct PipelineResult {
    Tensor base_video;    // normalized latents at base resolution
    Tensor base_audio;
    Tensor video_latent;  // final (refined) normalized video latent
    Tensor audio_latent;
    Tensor frames;        // decoded [T_px, H_px, W_px, 3]
    Tensor audio_frames;  // decoded [T_frames, 2F]
    Recording recording;  // base-stage attention, when requested
};

struct PipelineInputs {
    model::PromptFeatures prompt;
    std::optional<Tensor> video_latent;  // clean normalized latent, required for V2A
    std::optional<Tensor> audio_latent;  // required for A2V
};

/// Base generation, then for the video: latent upscale, partial re-noise to
/// t_refine from one global noise field, tile-wise refinement with the audio
/// held clean as context, blending, and decoding of both modalities.
PipelineResult multiscale_pipeline(const model::AvDiT& m, const flow::CodecBundle& codecs, const flow::DataConfig& data,
                                   const PipelineInputs& in, const SampleConfig& cfg);

/// Threads for tile refinement: min(requested, AVDIT_THREADS if set), at least 1.
std::size_t tile_threads(std::size_t requested);

/// Writes frames (PNG), audio (WAV via resynthesis), latents (AVT1),
/// attention maps (PNG + AVT1) when recorded, and `manifest.json`.
void export_run(const PipelineResult& r, const std::filesystem::path& dir, const nlohmann::json& manifest,
                const flow::DataConfig& data);

/// Seconds spanned by the frame timestamps: (frames - 1) / fps.
double video_seconds(std::size_t frames, double fps);

}  // namespace avdit::sampler
