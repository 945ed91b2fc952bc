#pragma once

#include <optional>
#include <vector>

#include "avdit/numerics/tensor.hpp"

namespace avdit::posenc {

enum class Stream { video, audio };

/// Positions are seconds on a clock shared by both streams, multiplied by
/// `position_scale` so that one audio token advances one rotation unit.
struct RopeConfig {
    std::size_t head_dim = 32;
    double base = 10000.0;
    double position_scale = 25.0;
    // 3D split of head_dim: t gets half, x and y a quarter each.
    double t_fraction = 0.5;
    double x_fraction = 0.25;

    struct AxisDims {
        std::size_t t, x, y;
    };
    /// Throws unless every group is even and the groups sum to head_dim.
    AxisDims axis_dims() const;
};

struct TokenCoords {
    std::vector<double> t_seconds;
    std::optional<std::vector<double>> x_idx;
    std::optional<std::vector<double>> y_idx;

    std::size_t size() const { return t_seconds.size(); }
    bool spatial() const { return x_idx.has_value() && y_idx.has_value(); }
};

/// cos/sin tables of shape [T, head_dim/2], consumed by rotate_pairs.
struct RopeTables {
    Tensor cos;
    Tensor sin;
};

RopeTables rope_1d_tables(const std::vector<double>& positions, std::size_t head_dim, double base);
/// Video: [t | x | y] groups rotated by their own axis.
RopeTables rope_3d_tables(const TokenCoords& coords, const RopeConfig& cfg);
/// Temporal-only rotation over the full head (audio self-attention and all
/// cross-modal attention). Spatial coordinates are ignored.
RopeTables temporal_tables(const TokenCoords& coords, const RopeConfig& cfg);

/// vec [T, head_dim] rotated pairwise by positions[t] * theta_i.
Tensor rope_1d(const Tensor& vec, const std::vector<double>& positions, double base = 10000.0);
Tensor rope_3d(const Tensor& vec, const TokenCoords& coords, const RopeConfig& cfg);

/// Seconds of each token (audio) or of each latent frame (video).
std::vector<double> temporal_positions(Stream stream, std::size_t n_tokens, double rate);

/// Coordinates for a [frames, height, width] latent grid in token order
/// (t-major, then y, then x). Offsets place a sub-window on the global grid.
TokenCoords video_coords(std::size_t frames, std::size_t height, std::size_t width, double frame_rate,
                         std::size_t t0 = 0, std::size_t y0 = 0, std::size_t x0 = 0);
TokenCoords audio_coords(std::size_t n_tokens, double token_rate, std::size_t t0 = 0);

}  // namespace avdit::posenc
