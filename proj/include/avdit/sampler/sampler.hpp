#pragma once

#include <functional>

#include "avdit/model/avdit.hpp"

namespace avdit::sampler {

using model::AttentionCapture;
using model::AttnDirection;
using model::PerStream;
using model::Velocity;

struct Guidance {
    double s_t = 0.0;  // text
    double s_m = 0.0;  // cross-modal
};

struct GuidanceWeights {
    Guidance video{3.0, 3.0};
    Guidance audio{7.0, 3.0};
};

/// m_full + s_t (m_full - m_no_text) + s_m (m_full - m_no_modal).
Tensor bimodal_cfg(const Tensor& m_full, const Tensor& m_no_text, const Tensor& m_no_modal, double s_t, double s_m);

enum class Mode { t2av, v2a, a2v };
Mode parse_mode(const std::string& s);
std::string mode_name(Mode m);

/// Velocity model as seen by the sampler; the model's forward or a test oracle.
using Denoiser = std::function<Velocity(const model::ForwardArgs&)>;
Denoiser model_denoiser(const model::AvDiT& m);

struct EulerConfig {
    std::size_t steps = 40;
    GuidanceWeights guidance;
    double t_start = 1.0;  // < 1 continues from a partially noised state
};

/// Per-step AV attention captures from the fully conditioned call.
struct Recording {
    std::vector<AttentionCapture> steps;
};

/// Heads are already averaged; this averages layers and steps [begin, end).
Tensor record_attention(const Recording& rec, AttnDirection dir, std::size_t begin, std::size_t end);
/// Collapses the video axis of a token-level map to latent frames: video
/// query rows are averaged per frame, video key columns are summed (the
/// probability mass a frame receives). Rows still sum to one.
Tensor frame_attention(const Tensor& map, AttnDirection dir, std::size_t tokens_per_frame);

struct EulerInputs {
    Tensor video;  // start state at t_start (noise for t_start = 1), or the clamp in V2A
    Tensor audio;  // likewise; the clamp in A2V
    PerStream<text::TextConditioning> cond;
    Mode mode = Mode::t2av;
    std::array<std::size_t, 3> video_origin{0, 0, 0};
    std::size_t audio_origin = 0;
};

/// Euler integration from t_start to 0 with bimodal guidance: three model
/// calls per step (full, text dropped on both streams, other modality
/// dropped on both). In V2A/A2V the given modality is held fixed at t = 0.
Velocity euler_sample(const Denoiser& model, const EulerInputs& in, const EulerConfig& cfg, Recording* rec = nullptr);

/// Bilinear x2 upsampling of the spatial axes of [T, H, W, C] (half-pixel
/// centres, edge clamped); time is kept.
Tensor latent_upscale(const Tensor& v_lat, std::size_t factor = 2);
/// 2x2 box average over the spatial axes; the reference inverse of upscaling.
Tensor box_downsample(const Tensor& v_lat, std::size_t factor = 2);

struct Window {
    std::array<std::size_t, 3> begin{};
    std::array<std::size_t, 3> end{};
    std::array<std::size_t, 3> extent() const { return {end[0] - begin[0], end[1] - begin[1], end[2] - begin[2]}; }
};

struct TileLayout {
    std::array<std::size_t, 3> dims{};
    std::vector<Window> tiles;
    std::vector<Tensor> weights;  // per tile, [t, h, w] blend weights over its window

    /// Sum of tile weights at every position of the volume.
    Tensor coverage() const;
};

/// Tiles of `tile` tokens per axis with at least `overlap` shared tokens
/// between neighbours; an axis shorter than its tile gets a single tile.
/// Weights ramp linearly across each overlap band and are normalized so
/// they sum to one at every position.
TileLayout tile_partition(const std::array<std::size_t, 3>& dims, const std::array<std::size_t, 3>& tile,
                          const std::array<std::size_t, 3>& overlap);
/// Cuts the [T, H, W, C] latent into the layout's windows.
std::vector<Tensor> tile_split(const Tensor& latent, const TileLayout& layout);
/// Weighted sum of tile contents, accumulated as a running weighted mean so
/// identical contents reproduce themselves bitwise.
Tensor tile_blend(const std::vector<Tensor>& tiles, const TileLayout& layout);

}  // namespace avdit::sampler
