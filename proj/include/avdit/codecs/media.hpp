#pragma once

#include <filesystem>

#include "avdit/codecs/audio_features.hpp"

namespace avdit::codecs {

/// 16-bit PCM, interleaved channels; samples clipped to [-1, 1].
void write_wav(const std::filesystem::path& path, const Waveform& wav);
Waveform read_wav(const std::filesystem::path& path);

/// RGB image from an [H, W, 3] tensor with values in [0, 1] (clipped).
void write_png(const std::filesystem::path& path, const Tensor& rgb);
/// Grayscale heatmap of a 2D map, min-max scaled, each cell drawn as a
/// `cell` x `cell` block.
void write_heatmap_png(const std::filesystem::path& path, const Tensor& map, std::size_t cell = 8);

}  // namespace avdit::codecs
