#include "avdit/posenc/rope.hpp"

#include <cmath>

#include "avdit/numerics/ops.hpp"

namespace avdit::posenc {

namespace {

void fill_group(RopeTables& tables, std::size_t token, std::size_t pair_offset, std::size_t group_dim, double position,
                double base, std::size_t half) {
    for (std::size_t i = 0; i < group_dim / 2; ++i) {
        const double theta = std::pow(base, -2.0 * static_cast<double>(i) / static_cast<double>(group_dim));
        const double angle = position * theta;
        tables.cos[token * half + pair_offset + i] = std::cos(angle);
        tables.sin[token * half + pair_offset + i] = std::sin(angle);
    }
}

Tensor apply(const Tensor& vec, const RopeTables& tables) {
    if (vec.rank() != 2) throw Error("rope: expected [T, head_dim], got " + shape_str(vec.shape()));
    Tensor as_heads = reshape(vec, {1, vec.dim(0), vec.dim(1)});
    return reshape(rotate_pairs(as_heads, tables.cos, tables.sin), vec.shape());
}

}  // namespace

RopeConfig::AxisDims RopeConfig::axis_dims() const {
    if (head_dim % 2 != 0) throw Error("rope: odd head_dim " + std::to_string(head_dim));
    const auto pairs = head_dim / 2;
    const auto t = static_cast<std::size_t>(std::lround(t_fraction * static_cast<double>(pairs))) * 2;
    const auto x = static_cast<std::size_t>(std::lround(x_fraction * static_cast<double>(pairs))) * 2;
    if (t + x > head_dim) throw Error("rope: axis split exceeds head_dim");
    return {t, x, head_dim - t - x};
}

RopeTables rope_1d_tables(const std::vector<double>& positions, std::size_t head_dim, double base) {
    if (head_dim % 2 != 0) throw Error("rope_1d: odd head_dim " + std::to_string(head_dim));
    const std::size_t half = head_dim / 2;
    RopeTables tables{Tensor({positions.size(), half}), Tensor({positions.size(), half})};
    for (std::size_t t = 0; t < positions.size(); ++t) fill_group(tables, t, 0, head_dim, positions[t], base, half);
    return tables;
}

RopeTables rope_3d_tables(const TokenCoords& coords, const RopeConfig& cfg) {
    if (!coords.spatial()) throw Error("rope_3d: token coordinates lack spatial axes");
    const auto& xs = *coords.x_idx;
    const auto& ys = *coords.y_idx;
    if (xs.size() != coords.size() || ys.size() != coords.size()) throw Error("rope_3d: coordinate length mismatch");
    const auto dims = cfg.axis_dims();
    const std::size_t half = cfg.head_dim / 2;
    RopeTables tables{Tensor({coords.size(), half}), Tensor({coords.size(), half})};
    for (std::size_t i = 0; i < coords.size(); ++i) {
        fill_group(tables, i, 0, dims.t, coords.t_seconds[i] * cfg.position_scale, cfg.base, half);
        fill_group(tables, i, dims.t / 2, dims.x, xs[i], cfg.base, half);
        fill_group(tables, i, (dims.t + dims.x) / 2, dims.y, ys[i], cfg.base, half);
    }
    return tables;
}

RopeTables temporal_tables(const TokenCoords& coords, const RopeConfig& cfg) {
    std::vector<double> pos(coords.size());
    for (std::size_t i = 0; i < pos.size(); ++i) pos[i] = coords.t_seconds[i] * cfg.position_scale;
    return rope_1d_tables(pos, cfg.head_dim, cfg.base);
}

Tensor rope_1d(const Tensor& vec, const std::vector<double>& positions, double base) {
    if (vec.rank() != 2 || vec.dim(0) != positions.size()) throw Error("rope_1d: positions do not match tokens");
    return apply(vec, rope_1d_tables(positions, vec.dim(1), base));
}

Tensor rope_3d(const Tensor& vec, const TokenCoords& coords, const RopeConfig& cfg) {
    if (vec.rank() != 2 || vec.dim(1) != cfg.head_dim) throw Error("rope_3d: vector width does not match head_dim");
    return apply(vec, rope_3d_tables(coords, cfg));
}

std::vector<double> temporal_positions(Stream, std::size_t n_tokens, double rate) {
    if (!(rate > 0.0)) throw Error("temporal_positions: rate must be positive");
    if (n_tokens == 0) throw Error("temporal_positions: no tokens");
    std::vector<double> out(n_tokens);
    for (std::size_t i = 0; i < n_tokens; ++i) out[i] = static_cast<double>(i) / rate;
    return out;
}

TokenCoords video_coords(std::size_t frames, std::size_t height, std::size_t width, double frame_rate, std::size_t t0,
                         std::size_t y0, std::size_t x0) {
    const auto frame_times = temporal_positions(Stream::video, t0 + frames, frame_rate);
    TokenCoords c;
    c.x_idx.emplace();
    c.y_idx.emplace();
    for (std::size_t f = 0; f < frames; ++f) {
        for (std::size_t y = 0; y < height; ++y) {
            for (std::size_t x = 0; x < width; ++x) {
                c.t_seconds.push_back(frame_times[t0 + f]);
                c.y_idx->push_back(static_cast<double>(y0 + y));
                c.x_idx->push_back(static_cast<double>(x0 + x));
            }
        }
    }
    return c;
}

TokenCoords audio_coords(std::size_t n_tokens, double token_rate, std::size_t t0) {
    auto all = temporal_positions(Stream::audio, t0 + n_tokens, token_rate);
    return TokenCoords{std::vector<double>(all.begin() + static_cast<std::ptrdiff_t>(t0), all.end()), std::nullopt,
                       std::nullopt};
}

}  // namespace avdit::posenc
