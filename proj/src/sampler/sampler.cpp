#include "avdit/sampler/sampler.hpp"

#include <cmath>

namespace avdit::sampler {

Tensor bimodal_cfg(const Tensor& m_full, const Tensor& m_no_text, const Tensor& m_no_modal, double s_t, double s_m) {
    if (m_full.shape() != m_no_text.shape() || m_full.shape() != m_no_modal.shape()) {
        throw Error("bimodal_cfg: shape mismatch " + shape_str(m_full.shape()) + ", " + shape_str(m_no_text.shape()) + ", " +
                    shape_str(m_no_modal.shape()));
    }
    if (!std::isfinite(s_t) || !std::isfinite(s_m)) throw Error("bimodal_cfg: guidance weights must be finite");
    Tensor out(m_full.shape());
    for (std::size_t i = 0; i < out.numel(); ++i) {
        const double m = m_full[i];
        out[i] = m + s_t * (m - m_no_text[i]) + s_m * (m - m_no_modal[i]);
    }
    return out;
}

Mode parse_mode(const std::string& s) {
    if (s == "t2av") return Mode::t2av;
    if (s == "v2a") return Mode::v2a;
    if (s == "a2v") return Mode::a2v;
    throw Error("unknown sampling mode '" + s + "' (expected t2av, v2a or a2v)");
}

std::string mode_name(Mode m) {
    switch (m) {
        case Mode::t2av: return "t2av";
        case Mode::v2a: return "v2a";
        case Mode::a2v: return "a2v";
    }
    return "?";
}

Denoiser model_denoiser(const model::AvDiT& m) {
    return [&m](const model::ForwardArgs& a) { return m.forward(a); };
}

Tensor record_attention(const Recording& rec, AttnDirection dir, std::size_t begin, std::size_t end) {
    if (begin >= end || end > rec.steps.size()) {
        throw Error("record_attention: window [" + std::to_string(begin) + ", " + std::to_string(end) +
                    ") outside a run of " + std::to_string(rec.steps.size()) + " steps");
    }
    Tensor acc;
    std::size_t n = 0;
    for (std::size_t s = begin; s < end; ++s) {
        const auto& maps = rec.steps[s].maps(dir);
        if (maps.empty()) throw Error("record_attention: step " + std::to_string(s) + " has no attention maps");
        for (const auto& m : maps) {
            if (!acc.defined()) acc = Tensor(m.shape());
            if (m.shape() != acc.shape()) throw Error("record_attention: map shapes differ across steps");
            for (std::size_t i = 0; i < m.numel(); ++i) acc[i] += m[i];
            ++n;
        }
    }
    for (auto& v : acc.data()) v /= static_cast<double>(n);
    return acc;
}

Velocity euler_sample(const Denoiser& model, const EulerInputs& in, const EulerConfig& cfg, Recording* rec) {
    if (cfg.steps == 0) throw Error("euler_sample: steps must be >= 1");
    if (!(cfg.t_start > 0.0 && cfg.t_start <= 1.0)) throw Error("euler_sample: t_start must lie in (0, 1]");
    Tensor xv = in.video.clone();
    Tensor xa = in.audio.clone();
    const bool fix_video = in.mode == Mode::v2a;
    const bool fix_audio = in.mode == Mode::a2v;
    const double dt = cfg.t_start / static_cast<double>(cfg.steps);

    for (std::size_t k = 0; k < cfg.steps; ++k) {
        const double t = cfg.t_start * (1.0 - static_cast<double>(k) / static_cast<double>(cfg.steps));
        model::ForwardArgs a;
        a.video_latent = xv;
        a.audio_latent = xa;
        a.t_video = fix_video ? 0.0 : t;
        a.t_audio = fix_audio ? 0.0 : t;
        a.cond = in.cond;
        a.video_origin = in.video_origin;
        a.audio_origin = in.audio_origin;
        AttentionCapture cap;
        if (rec) a.capture = &cap;
        const Velocity full = model(a);
        a.capture = nullptr;
        a.drop_text = {true, true};
        const Velocity no_text = model(a);
        a.drop_text = {false, false};
        a.drop_modal = {true, true};
        const Velocity no_modal = model(a);
        if (rec) rec->steps.push_back(std::move(cap));

        if (!fix_video) {
            const Tensor v = bimodal_cfg(full.video, no_text.video, no_modal.video, cfg.guidance.video.s_t, cfg.guidance.video.s_m);
            Tensor next(xv.shape());
            for (std::size_t i = 0; i < next.numel(); ++i) next[i] = xv[i] - dt * v[i];
            xv = next;
            if (!xv.all_finite()) throw Error("euler_sample: non-finite video latent at step " + std::to_string(k));
        }
        if (!fix_audio) {
            const Tensor v = bimodal_cfg(full.audio, no_text.audio, no_modal.audio, cfg.guidance.audio.s_t, cfg.guidance.audio.s_m);
            Tensor next(xa.shape());
            for (std::size_t i = 0; i < next.numel(); ++i) next[i] = xa[i] - dt * v[i];
            xa = next;
            if (!xa.all_finite()) throw Error("euler_sample: non-finite audio latent at step " + std::to_string(k));
        }
    }
    return Velocity{xv, xa};
}

Tensor latent_upscale(const Tensor& v, std::size_t factor) {
    if (factor != 2) throw Error("latent_upscale: only factor 2 is supported");
    if (v.rank() != 4) throw Error("latent_upscale: expected [T, H, W, C], got " + shape_str(v.shape()));
    const std::size_t T = v.dim(0), H = v.dim(1), W = v.dim(2), C = v.dim(3);
    const std::size_t H2 = H * factor, W2 = W * factor;
    Tensor out({T, H2, W2, C});
    auto src = [](std::size_t o, std::size_t n, std::size_t f, std::size_t& i0, std::size_t& i1, double& a) {
        // Half-pixel centres: output o sits at input coordinate (o + 0.5) / f - 0.5.
        const double x = std::clamp((static_cast<double>(o) + 0.5) / static_cast<double>(f) - 0.5, 0.0, static_cast<double>(n - 1));
        i0 = static_cast<std::size_t>(std::floor(x));
        i1 = std::min(i0 + 1, n - 1);
        a = x - static_cast<double>(i0);
    };
    for (std::size_t t = 0; t < T; ++t)
        for (std::size_t y = 0; y < H2; ++y) {
            std::size_t y0, y1;
            double ay;
            src(y, H, factor, y0, y1, ay);
            for (std::size_t x = 0; x < W2; ++x) {
                std::size_t x0, x1;
                double ax;
                src(x, W, factor, x0, x1, ax);
                for (std::size_t c = 0; c < C; ++c) {
                    auto at = [&](std::size_t yy, std::size_t xx) { return v[((t * H + yy) * W + xx) * C + c]; };
                    const double top = at(y0, x0) + ax * (at(y0, x1) - at(y0, x0));
                    const double bot = at(y1, x0) + ax * (at(y1, x1) - at(y1, x0));
                    out[((t * H2 + y) * W2 + x) * C + c] = top + ay * (bot - top);
                }
            }
        }
    return out;
}

Tensor box_downsample(const Tensor& v, std::size_t factor) {
    if (v.rank() != 4 || factor == 0 || v.dim(1) % factor != 0 || v.dim(2) % factor != 0) {
        throw Error("box_downsample: expected [T, H, W, C] with H, W divisible by the factor");
    }
    const std::size_t T = v.dim(0), H = v.dim(1), W = v.dim(2), C = v.dim(3), h = H / factor, w = W / factor;
    Tensor out({T, h, w, C});
    const double norm = 1.0 / static_cast<double>(factor * factor);
    for (std::size_t t = 0; t < T; ++t)
        for (std::size_t y = 0; y < H; ++y)
            for (std::size_t x = 0; x < W; ++x)
                for (std::size_t c = 0; c < C; ++c)
                    out[((t * h + y / factor) * w + x / factor) * C + c] += norm * v[((t * H + y) * W + x) * C + c];
    return out;
}

Tensor frame_attention(const Tensor& map, AttnDirection dir, std::size_t tokens_per_frame) {
    if (map.rank() != 2 || tokens_per_frame == 0) throw Error("frame_attention: expected a 2-D map");
    const bool rows = dir == AttnDirection::video_to_audio;
    const std::size_t R = map.dim(0), C = map.dim(1), n = rows ? R : C;
    if (n % tokens_per_frame != 0) throw Error("frame_attention: video axis is not a whole number of frames");
    const std::size_t frames = n / tokens_per_frame;
    Tensor out(rows ? Shape{frames, C} : Shape{R, frames});
    const double inv = 1.0 / static_cast<double>(tokens_per_frame);
    for (std::size_t r = 0; r < R; ++r)
        for (std::size_t c = 0; c < C; ++c) {
            if (rows) out[(r / tokens_per_frame) * C + c] += inv * map[r * C + c];
            else out[r * frames + c / tokens_per_frame] += map[r * C + c];
        }
    return out;
}

namespace {

struct Span {
    std::size_t begin, end;
};

std::vector<Span> axis_spans(std::size_t n, std::size_t tile, std::size_t overlap) {
    if (tile == 0) throw Error("tile_partition: tile size must be positive");
    if (tile >= n) return {{0, n}};
    if (overlap >= tile) throw Error("tile_partition: tile size must exceed overlap");
    std::vector<Span> out;
    const std::size_t stride = tile - overlap;
    for (std::size_t s = 0;; s += stride) {
        if (s + tile >= n) {
            out.push_back({n - tile, n});
            break;
        }
        out.push_back({s, s + tile});
    }
    return out;
}

/// Raw ramp weight of span i at absolute position p, then normalized.
std::vector<std::vector<double>> axis_weights(const std::vector<Span>& spans, std::size_t n) {
    std::vector<std::vector<double>> w(spans.size());
    for (std::size_t i = 0; i < spans.size(); ++i) {
        const Span& s = spans[i];
        w[i].resize(s.end - s.begin);
        for (std::size_t p = s.begin; p < s.end; ++p) {
            double v = 1.0;
            if (i > 0 && spans[i - 1].end > s.begin) {
                const double band = static_cast<double>(spans[i - 1].end - s.begin);
                v = std::min(v, static_cast<double>(p - s.begin + 1) / (band + 1.0));
            }
            if (i + 1 < spans.size() && s.end > spans[i + 1].begin) {
                const double band = static_cast<double>(s.end - spans[i + 1].begin);
                v = std::min(v, static_cast<double>(s.end - p) / (band + 1.0));
            }
            w[i][p - s.begin] = v;
        }
    }
    std::vector<double> total(n, 0.0);
    for (std::size_t i = 0; i < spans.size(); ++i)
        for (std::size_t p = spans[i].begin; p < spans[i].end; ++p) total[p] += w[i][p - spans[i].begin];
    for (std::size_t i = 0; i < spans.size(); ++i)
        for (std::size_t p = spans[i].begin; p < spans[i].end; ++p) w[i][p - spans[i].begin] /= total[p];
    return w;
}

}  // namespace

Tensor TileLayout::coverage() const {
    Tensor c({dims[0], dims[1], dims[2]});
    for (std::size_t k = 0; k < tiles.size(); ++k) {
        const auto& win = tiles[k];
        const auto e = win.extent();
        for (std::size_t t = 0; t < e[0]; ++t)
            for (std::size_t y = 0; y < e[1]; ++y)
                for (std::size_t x = 0; x < e[2]; ++x)
                    c[((win.begin[0] + t) * dims[1] + win.begin[1] + y) * dims[2] + win.begin[2] + x] += weights[k][(t * e[1] + y) * e[2] + x];
    }
    return c;
}

TileLayout tile_partition(const std::array<std::size_t, 3>& dims, const std::array<std::size_t, 3>& tile,
                          const std::array<std::size_t, 3>& overlap) {
    for (std::size_t a = 0; a < 3; ++a) {
        if (dims[a] == 0) throw Error("tile_partition: empty volume");
    }
    std::array<std::vector<Span>, 3> spans;
    std::array<std::vector<std::vector<double>>, 3> w;
    for (std::size_t a = 0; a < 3; ++a) {
        spans[a] = axis_spans(dims[a], tile[a], overlap[a]);
        w[a] = axis_weights(spans[a], dims[a]);
    }
    TileLayout L;
    L.dims = dims;
    for (std::size_t i = 0; i < spans[0].size(); ++i)
        for (std::size_t j = 0; j < spans[1].size(); ++j)
            for (std::size_t k = 0; k < spans[2].size(); ++k) {
                Window win{{spans[0][i].begin, spans[1][j].begin, spans[2][k].begin},
                           {spans[0][i].end, spans[1][j].end, spans[2][k].end}};
                const auto e = win.extent();
                Tensor wt({e[0], e[1], e[2]});
                for (std::size_t t = 0; t < e[0]; ++t)
                    for (std::size_t y = 0; y < e[1]; ++y)
                        for (std::size_t x = 0; x < e[2]; ++x) wt[(t * e[1] + y) * e[2] + x] = w[0][i][t] * w[1][j][y] * w[2][k][x];
                L.tiles.push_back(win);
                L.weights.push_back(wt);
            }
    return L;
}

std::vector<Tensor> tile_split(const Tensor& latent, const TileLayout& layout) {
    if (latent.rank() != 4 || latent.dim(0) != layout.dims[0] || latent.dim(1) != layout.dims[1] || latent.dim(2) != layout.dims[2]) {
        throw Error("tile_split: latent " + shape_str(latent.shape()) + " does not match the layout");
    }
    const std::size_t H = layout.dims[1], W = layout.dims[2], C = latent.dim(3);
    std::vector<Tensor> out;
    for (const auto& win : layout.tiles) {
        const auto e = win.extent();
        Tensor t({e[0], e[1], e[2], C});
        for (std::size_t a = 0; a < e[0]; ++a)
            for (std::size_t y = 0; y < e[1]; ++y)
                for (std::size_t x = 0; x < e[2]; ++x)
                    for (std::size_t c = 0; c < C; ++c)
                        t[((a * e[1] + y) * e[2] + x) * C + c] =
                            latent[(((win.begin[0] + a) * H + win.begin[1] + y) * W + win.begin[2] + x) * C + c];
        out.push_back(t);
    }
    return out;
}

Tensor tile_blend(const std::vector<Tensor>& tiles, const TileLayout& layout) {
    if (tiles.size() != layout.tiles.size() || tiles.empty()) throw Error("tile_blend: tile count does not match the layout");
    const std::size_t T = layout.dims[0], H = layout.dims[1], W = layout.dims[2], C = tiles[0].shape().back();
    Tensor out({T, H, W, C});
    std::vector<double> wsum(T * H * W, 0.0);
    for (std::size_t k = 0; k < tiles.size(); ++k) {
        const auto& win = layout.tiles[k];
        const auto e = win.extent();
        if (tiles[k].shape() != Shape{e[0], e[1], e[2], C}) throw Error("tile_blend: tile " + std::to_string(k) + " has the wrong shape");
        for (std::size_t a = 0; a < e[0]; ++a)
            for (std::size_t y = 0; y < e[1]; ++y)
                for (std::size_t x = 0; x < e[2]; ++x) {
                    const double w = layout.weights[k][(a * e[1] + y) * e[2] + x];
                    if (w == 0.0) continue;
                    const std::size_t pos = ((win.begin[0] + a) * H + win.begin[1] + y) * W + win.begin[2] + x;
                    const bool first = wsum[pos] == 0.0;
                    wsum[pos] += w;
                    const double frac = w / wsum[pos];
                    for (std::size_t c = 0; c < C; ++c) {
                        const double v = tiles[k][((a * e[1] + y) * e[2] + x) * C + c];
                        double& o = out[pos * C + c];
                        o = first ? v : o + frac * (v - o);
                    }
                }
    }
    return out;
}

}  // namespace avdit::sampler
