#pragma once

#include <filesystem>

#include "avdit/codecs/train.hpp"
#include "avdit/flowtrain/dataset.hpp"
#include "avdit/flowtrain/flow.hpp"

namespace avdit::flow {

struct DataConfig {
    ClipConfig clip;
    codecs::AudioFeatureConfig features;
    codecs::AudioVaeConfig audio_vae;
    codecs::VideoVaeConfig video_vae;
    codecs::CodecTrainConfig audio_train{2000, 8, 1e-3, 1e-4, 1e-4, 11};
    codecs::CodecTrainConfig video_train{4000, 8, 2e-3, 1e-4, 1e-4, 12};
    std::uint64_t codec_init_seed = 99;
    std::size_t codec_clips = 300;
    std::size_t constant_every = 1;    // one flat-colour clip per this many codec clips
    std::size_t train_clips = 512;
    std::size_t eval_clips = 64;
    std::uint64_t eval_seed_offset = 1000000;  // held-out seeds start here
};

void to_json(nlohmann::json& j, const DataConfig& c);
void from_json(const nlohmann::json& j, DataConfig& c);

struct CodecBundle {
    codecs::AudioVae audio;
    codecs::VideoVae video;
    codecs::LatentStats audio_stats;
    codecs::LatentStats video_stats;

    void save(const std::filesystem::path& dir) const;
    static CodecBundle load(const std::filesystem::path& dir, const DataConfig& cfg);

    /// Pixel clip / feature frames -> normalized diffusion latents and back.
    Tensor encode_video(const Tensor& frames) const { return video_stats.normalize(video.encode(frames)); }
    Tensor encode_audio(const Tensor& frames) const { return audio_stats.normalize(audio.encode(frames)); }
    Tensor decode_video(const Tensor& latent) const { return video.decode(video_stats.denormalize(latent)); }
    Tensor decode_audio(const Tensor& latent, std::size_t frames = 0) const {
        return audio.decode(audio_stats.denormalize(latent), frames);
    }
};

struct CodecReport {
    codecs::CodecTrainReport audio, video;
};

/// Flat clips of one colour, used alongside bouncing clips for the video codec.
Tensor constant_clip(const ClipConfig& cfg, const std::array<double, 3>& rgb);

/// Trains both codecs on seeds [0, codec_clips) and fits latent statistics.
CodecBundle train_codecs(const DataConfig& cfg, CodecReport* report = nullptr);

std::vector<FlowItem> build_items(const CodecBundle& codecs, const DataConfig& cfg, std::uint64_t first_seed,
                                  std::size_t count, const text::Tokenizer& tok, const text::EncoderConfig& enc);

}  // namespace avdit::flow
