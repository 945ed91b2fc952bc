#include "avdit/numerics/ops.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

namespace avdit {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;
using Vec = Eigen::Map<Eigen::VectorXd>;
using ConstVec = Eigen::Map<const Eigen::VectorXd>;

ConstMapMat cmat(const Tensor& t, std::size_t rows, std::size_t cols, std::size_t offset = 0) {
    return ConstMapMat(t.ptr() + offset, static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}
MapMat mmat(std::span<double> s, std::size_t rows, std::size_t cols, std::size_t offset = 0) {
    return MapMat(s.data() + offset, static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

// Returns the broadcast period of b over a: numel(b) if b's shape is a
// suffix of a's shape.
std::size_t broadcast_period(const Tensor& a, const Tensor& b, const char* op) {
    const auto& sa = a.shape();
    const auto& sb = b.shape();
    bool ok = sb.size() <= sa.size();
    for (std::size_t i = 0; ok && i < sb.size(); ++i) ok = sb[sb.size() - 1 - i] == sa[sa.size() - 1 - i];
    if (!ok) throw Error(std::string(op) + ": cannot broadcast " + shape_str(sb) + " onto " + shape_str(sa));
    return b.numel();
}

template <class Fn>
void record(std::initializer_list<const Tensor*> inputs, Tensor& out, Fn&& fn) {
    if (!should_record(inputs)) return;
    out.set_requires_grad(true);
    active_tape()->record([out, fn = std::forward<Fn>(fn)]() mutable {
        if (!out.has_grad()) return;
        fn(out.grad());
    });
}

enum class Binary { add, sub, mul };

Tensor binary(const Tensor& a, const Tensor& b, Binary kind, const char* name) {
    const std::size_t period = broadcast_period(a, b, name);
    Tensor out(a.shape());
    const std::size_t n = a.numel();
    const double* pa = a.ptr();
    const double* pb = b.ptr();
    double* po = out.ptr();
    for (std::size_t i = 0; i < n; i += period) {
        for (std::size_t j = 0; j < period; ++j) {
            switch (kind) {
                case Binary::add: po[i + j] = pa[i + j] + pb[j]; break;
                case Binary::sub: po[i + j] = pa[i + j] - pb[j]; break;
                case Binary::mul: po[i + j] = pa[i + j] * pb[j]; break;
            }
        }
    }
    record({&a, &b}, out, [a, b, kind, period, n](std::span<const double> go) mutable {
        if (a.requires_grad()) {
            auto ga = a.grad();
            if (kind == Binary::mul) {
                const double* pb = b.ptr();
                for (std::size_t i = 0; i < n; i += period)
                    for (std::size_t j = 0; j < period; ++j) ga[i + j] += go[i + j] * pb[j];
            } else {
                for (std::size_t i = 0; i < n; ++i) ga[i] += go[i];
            }
        }
        if (b.requires_grad()) {
            auto gb = b.grad();
            const double* pa = a.ptr();
            for (std::size_t i = 0; i < n; i += period) {
                for (std::size_t j = 0; j < period; ++j) {
                    switch (kind) {
                        case Binary::add: gb[j] += go[i + j]; break;
                        case Binary::sub: gb[j] -= go[i + j]; break;
                        case Binary::mul: gb[j] += go[i + j] * pa[i + j]; break;
                    }
                }
            }
        }
    });
    return out;
}

template <class F, class DF>
Tensor unary(const Tensor& x, F f, DF df) {
    Tensor out(x.shape());
    const std::size_t n = x.numel();
    for (std::size_t i = 0; i < n; ++i) out[i] = f(x[i]);
    record({&x}, out, [x, df, n](std::span<const double> go) mutable {
        auto gx = x.grad();
        for (std::size_t i = 0; i < n; ++i) gx[i] += go[i] * df(x[i]);
    });
    return out;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) { return binary(a, b, Binary::add, "add"); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary(a, b, Binary::sub, "sub"); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary(a, b, Binary::mul, "mul"); }

Tensor affine(const Tensor& a, double s, double c) {
    return unary(a, [s, c](double x) { return x * s + c; }, [s](double) { return s; });
}

Tensor silu(const Tensor& x) {
    return unary(
        x, [](double v) { return v / (1.0 + std::exp(-v)); },
        [](double v) {
            const double sg = 1.0 / (1.0 + std::exp(-v));
            return sg * (1.0 + v * (1.0 - sg));
        });
}

Tensor gelu(const Tensor& x) {
    constexpr double k = 0.7978845608028654;  // sqrt(2/pi)
    constexpr double c = 0.044715;
    return unary(
        x, [](double v) { return 0.5 * v * (1.0 + std::tanh(k * (v + c * v * v * v))); },
        [](double v) {
            const double u = k * (v + c * v * v * v);
            const double th = std::tanh(u);
            const double du = k * (1.0 + 3.0 * c * v * v);
            return 0.5 * (1.0 + th) + 0.5 * v * (1.0 - th * th) * du;
        });
}

Tensor exp(const Tensor& x) {
    return unary(x, [](double v) { return std::exp(v); }, [](double v) { return std::exp(v); });
}

Tensor square(const Tensor& x) {
    return unary(x, [](double v) { return v * v; }, [](double v) { return 2.0 * v; });
}

Tensor sum(const Tensor& x) {
    double s = 0.0;
    for (double v : x.data()) s += v;
    Tensor out = Tensor::scalar(s);
    record({&x}, out, [x](std::span<const double> go) mutable {
        for (auto& g : x.grad()) g += go[0];
    });
    return out;
}

Tensor mean(const Tensor& x) {
    if (x.numel() == 0) throw Error("mean: empty tensor");
    return affine(sum(x), 1.0 / static_cast<double>(x.numel()));
}

Tensor mse(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) throw Error("mse: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    if (a.numel() == 0) throw Error("mse: empty tensor");
    const std::size_t n = a.numel();
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    Tensor out = Tensor::scalar(s / static_cast<double>(n));
    record({&a, &b}, out, [a, b, n](std::span<const double> go) mutable {
        const double k = 2.0 * go[0] / static_cast<double>(n);
        if (a.requires_grad()) {
            auto ga = a.grad();
            for (std::size_t i = 0; i < n; ++i) ga[i] += k * (a[i] - b[i]);
        }
        if (b.requires_grad()) {
            auto gb = b.grad();
            for (std::size_t i = 0; i < n; ++i) gb[i] -= k * (a[i] - b[i]);
        }
    });
    return out;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
        throw Error("matmul: incompatible shapes " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
    }
    const std::size_t n = a.dim(0), k = a.dim(1), m = b.dim(1);
    Tensor out({n, m});
    mmat(out.data(), n, m).noalias() = cmat(a, n, k) * cmat(b, k, m);
    record({&a, &b}, out, [a, b, n, k, m](std::span<const double> go) mutable {
        ConstMapMat g(go.data(), static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(m));
        if (a.requires_grad()) mmat(a.grad(), n, k).noalias() += g * cmat(b, k, m).transpose();
        if (b.requires_grad()) mmat(b.grad(), k, m).noalias() += cmat(a, n, k).transpose() * g;
    });
    return out;
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& bias) {
    if (x.rank() != 2 || w.rank() != 2 || x.dim(1) != w.dim(0)) {
        throw Error("linear: incompatible shapes " + shape_str(x.shape()) + " x " + shape_str(w.shape()));
    }
    const std::size_t n = x.dim(0), k = x.dim(1), m = w.dim(1);
    const bool has_bias = bias.defined();
    if (has_bias && (bias.numel() != m)) throw Error("linear: bias " + shape_str(bias.shape()) + " for width " + std::to_string(m));
    Tensor out({n, m});
    auto o = mmat(out.data(), n, m);
    o.noalias() = cmat(x, n, k) * cmat(w, k, m);
    if (has_bias) o.rowwise() += ConstVec(bias.ptr(), static_cast<Eigen::Index>(m)).transpose();
    record({&x, &w, &bias}, out, [x, w, bias, n, k, m, has_bias](std::span<const double> go) mutable {
        ConstMapMat g(go.data(), static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(m));
        if (x.requires_grad()) mmat(x.grad(), n, k).noalias() += g * cmat(w, k, m).transpose();
        if (w.requires_grad()) mmat(w.grad(), k, m).noalias() += cmat(x, n, k).transpose() * g;
        if (has_bias && bias.requires_grad()) Vec(bias.grad().data(), static_cast<Eigen::Index>(m)) += g.colwise().sum().transpose();
    });
    return out;
}

Tensor rms_norm(const Tensor& x, const Tensor& gain, double eps) {
    if (x.numel() == 0 || x.rank() == 0) throw Error("rms_norm: empty tensor");
    if (!(eps > 0.0)) throw Error("rms_norm: eps must be positive");
    const std::size_t d = x.shape().back();
    if (d == 0) throw Error("rms_norm: empty feature axis");
    const bool has_gain = gain.defined();
    if (has_gain && gain.numel() != d) throw Error("rms_norm: gain size mismatch");
    const std::size_t rows = x.numel() / d;
    Tensor out(x.shape());
    std::vector<double> inv(rows);
    for (std::size_t r = 0; r < rows; ++r) {
        const double* px = x.ptr() + r * d;
        double ss = 0.0;
        for (std::size_t j = 0; j < d; ++j) ss += px[j] * px[j];
        inv[r] = 1.0 / std::sqrt(ss / static_cast<double>(d) + eps);
        double* po = out.ptr() + r * d;
        for (std::size_t j = 0; j < d; ++j) po[j] = px[j] * inv[r] * (has_gain ? gain[j] : 1.0);
    }
    record({&x, &gain}, out, [x, gain, d, rows, has_gain, inv = std::move(inv)](std::span<const double> go) mutable {
        std::span<double> gx = x.requires_grad() ? x.grad() : std::span<double>{};
        std::span<double> gg = (has_gain && gain.requires_grad()) ? gain.grad() : std::span<double>{};
        for (std::size_t r = 0; r < rows; ++r) {
            const double* px = x.ptr() + r * d;
            const double* pg = go.data() + r * d;
            if (!gg.empty()) {
                for (std::size_t j = 0; j < d; ++j) gg[j] += pg[j] * px[j] * inv[r];
            }
            if (!gx.empty()) {
                double dot = 0.0;
                for (std::size_t j = 0; j < d; ++j) dot += pg[j] * (has_gain ? gain[j] : 1.0) * px[j];
                const double k = dot * inv[r] * inv[r] * inv[r] / static_cast<double>(d);
                for (std::size_t j = 0; j < d; ++j) {
                    gx[r * d + j] += pg[j] * (has_gain ? gain[j] : 1.0) * inv[r] - px[j] * k;
                }
            }
        }
    });
    return out;
}

Tensor scaled_dot_attention(const Tensor& q, const Tensor& k, const Tensor& v, Tensor* probs_out) {
    if (q.rank() != 3 || k.rank() != 3 || v.rank() != 3) throw Error("attention: expected [heads, T, dh] tensors");
    const std::size_t h = q.dim(0), tq = q.dim(1), dh = q.dim(2), tk = k.dim(1);
    if (k.dim(0) != h || v.dim(0) != h || k.dim(2) != dh || v.dim(2) != dh || v.dim(1) != tk) {
        throw Error("attention: mismatched shapes q" + shape_str(q.shape()) + " k" + shape_str(k.shape()) + " v" +
                    shape_str(v.shape()));
    }
    if (tk == 0) throw Error("attention: empty key sequence");
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    Tensor probs({h, tq, tk});
    Tensor out({h, tq, dh});
    for (std::size_t hi = 0; hi < h; ++hi) {
        auto p = mmat(probs.data(), tq, tk, hi * tq * tk);
        p.noalias() = cmat(q, tq, dh, hi * tq * dh) * cmat(k, tk, dh, hi * tk * dh).transpose();
        p *= scale;
        for (Eigen::Index r = 0; r < p.rows(); ++r) {
            const double mx = p.row(r).maxCoeff();
            p.row(r) = (p.row(r).array() - mx).exp();
            p.row(r) /= p.row(r).sum();
        }
        mmat(out.data(), tq, dh, hi * tq * dh).noalias() = p * cmat(v, tk, dh, hi * tk * dh);
    }
    if (probs_out != nullptr) *probs_out = probs;
    record({&q, &k, &v}, out, [q, k, v, probs, h, tq, tk, dh, scale](std::span<const double> go) mutable {
        RowMat dp(tq, tk);
        for (std::size_t hi = 0; hi < h; ++hi) {
            ConstMapMat g(go.data() + hi * tq * dh, static_cast<Eigen::Index>(tq), static_cast<Eigen::Index>(dh));
            auto p = cmat(probs, tq, tk, hi * tq * tk);
            if (v.requires_grad()) mmat(v.grad(), tk, dh, hi * tk * dh).noalias() += p.transpose() * g;
            if (!q.requires_grad() && !k.requires_grad()) continue;
            dp.noalias() = g * cmat(v, tk, dh, hi * tk * dh).transpose();
            // softmax backward: ds = p * (dp - rowsum(dp * p))
            for (Eigen::Index r = 0; r < dp.rows(); ++r) {
                const double dot = dp.row(r).dot(p.row(r));
                dp.row(r) = p.row(r).array() * (dp.row(r).array() - dot);
            }
            dp *= scale;
            if (q.requires_grad()) mmat(q.grad(), tq, dh, hi * tq * dh).noalias() += dp * cmat(k, tk, dh, hi * tk * dh);
            if (k.requires_grad()) mmat(k.grad(), tk, dh, hi * tk * dh).noalias() += dp.transpose() * cmat(q, tq, dh, hi * tq * dh);
        }
    });
    return out;
}

Tensor rotate_pairs(const Tensor& x, const Tensor& cos_table, const Tensor& sin_table) {
    if (x.rank() != 3) throw Error("rotate_pairs: expected [heads, T, dh]");
    const std::size_t h = x.dim(0), t = x.dim(1), dh = x.dim(2);
    if (dh % 2 != 0) throw Error("rotate_pairs: odd head dimension " + std::to_string(dh));
    const std::size_t half = dh / 2;
    if (cos_table.shape() != Shape{t, half} || sin_table.shape() != Shape{t, half}) {
        throw Error("rotate_pairs: angle table " + shape_str(cos_table.shape()) + " for " + shape_str(x.shape()));
    }
    Tensor out(x.shape());
    for (std::size_t hi = 0; hi < h; ++hi) {
        for (std::size_t ti = 0; ti < t; ++ti) {
            const double* px = x.ptr() + (hi * t + ti) * dh;
            double* po = out.ptr() + (hi * t + ti) * dh;
            for (std::size_t i = 0; i < half; ++i) {
                const double c = cos_table[ti * half + i];
                const double s = sin_table[ti * half + i];
                po[2 * i] = px[2 * i] * c - px[2 * i + 1] * s;
                po[2 * i + 1] = px[2 * i] * s + px[2 * i + 1] * c;
            }
        }
    }
    record({&x}, out, [x, cos_table, sin_table, h, t, dh, half](std::span<const double> go) mutable {
        auto gx = x.grad();
        for (std::size_t hi = 0; hi < h; ++hi) {
            for (std::size_t ti = 0; ti < t; ++ti) {
                const std::size_t base = (hi * t + ti) * dh;
                for (std::size_t i = 0; i < half; ++i) {
                    const double c = cos_table[ti * half + i];
                    const double s = sin_table[ti * half + i];
                    const double g0 = go[base + 2 * i];
                    const double g1 = go[base + 2 * i + 1];
                    gx[base + 2 * i] += g0 * c + g1 * s;
                    gx[base + 2 * i + 1] += -g0 * s + g1 * c;
                }
            }
        }
    });
    return out;
}

Tensor gather(const Tensor& x, std::vector<std::int64_t> index, Shape out_shape) {
    if (index.size() != shape_numel(out_shape)) throw Error("gather: index count does not match output shape");
    const auto n = static_cast<std::int64_t>(x.numel());
    Tensor out(std::move(out_shape));
    for (std::size_t i = 0; i < index.size(); ++i) {
        const auto j = index[i];
        if (j >= n) throw Error("gather: index " + std::to_string(j) + " out of range");
        out[i] = j < 0 ? 0.0 : x[static_cast<std::size_t>(j)];
    }
    record({&x}, out, [x, index = std::move(index)](std::span<const double> go) mutable {
        auto gx = x.grad();
        for (std::size_t i = 0; i < index.size(); ++i) {
            if (index[i] >= 0) gx[static_cast<std::size_t>(index[i])] += go[i];
        }
    });
    return out;
}

Tensor concat(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw Error("concat: no inputs");
    Shape shape = parts.front().shape();
    if (shape.empty()) throw Error("concat: scalar input");
    std::size_t rows = 0;
    for (const auto& p : parts) {
        if (p.rank() != shape.size() || !std::equal(shape.begin() + 1, shape.end(), p.shape().begin() + 1)) {
            throw Error("concat: trailing shape mismatch " + shape_str(p.shape()) + " vs " + shape_str(shape));
        }
        rows += p.dim(0);
    }
    shape[0] = rows;
    Tensor out(shape);
    std::size_t off = 0;
    bool any = false;
    for (const auto& p : parts) {
        std::copy(p.data().begin(), p.data().end(), out.data().begin() + static_cast<std::ptrdiff_t>(off));
        off += p.numel();
        any = any || p.requires_grad();
    }
    if (any && active_tape() != nullptr) {
        out.set_requires_grad(true);
        active_tape()->record([out, parts]() mutable {
            if (!out.has_grad()) return;
            auto go = out.grad();
            std::size_t o = 0;
            for (auto& p : parts) {
                if (p.requires_grad()) {
                    auto gp = p.grad();
                    for (std::size_t i = 0; i < gp.size(); ++i) gp[i] += go[o + i];
                }
                o += p.numel();
            }
        });
    }
    return out;
}

Tensor reshape(const Tensor& x, Shape shape) {
    if (shape_numel(shape) != x.numel()) throw Error("reshape: " + shape_str(x.shape()) + " -> " + shape_str(shape));
    Tensor out(std::move(shape), std::vector<double>(x.data().begin(), x.data().end()));
    record({&x}, out, [x](std::span<const double> go) mutable {
        auto gx = x.grad();
        for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += go[i];
    });
    return out;
}

Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t end) {
    if (x.rank() == 0 || begin > end || end > x.dim(0)) throw Error("slice_rows: bad range");
    const std::size_t stride = x.numel() / std::max<std::size_t>(x.dim(0), 1);
    Shape shape = x.shape();
    shape[0] = end - begin;
    Tensor out(shape, std::vector<double>(x.data().begin() + static_cast<std::ptrdiff_t>(begin * stride),
                                          x.data().begin() + static_cast<std::ptrdiff_t>(end * stride)));
    record({&x}, out, [x, begin, stride](std::span<const double> go) mutable {
        auto gx = x.grad();
        for (std::size_t i = 0; i < go.size(); ++i) gx[begin * stride + i] += go[i];
    });
    return out;
}

Tensor split_heads(const Tensor& x, std::size_t heads) {
    if (x.rank() != 2 || heads == 0 || x.dim(1) % heads != 0) throw Error("split_heads: bad shape " + shape_str(x.shape()));
    const std::size_t t = x.dim(0), dh = x.dim(1) / heads;
    std::vector<std::int64_t> idx(x.numel());
    for (std::size_t h = 0; h < heads; ++h)
        for (std::size_t ti = 0; ti < t; ++ti)
            for (std::size_t j = 0; j < dh; ++j)
                idx[(h * t + ti) * dh + j] = static_cast<std::int64_t>(ti * heads * dh + h * dh + j);
    return gather(x, std::move(idx), {heads, t, dh});
}

Tensor merge_heads(const Tensor& x) {
    if (x.rank() != 3) throw Error("merge_heads: bad shape " + shape_str(x.shape()));
    const std::size_t heads = x.dim(0), t = x.dim(1), dh = x.dim(2);
    std::vector<std::int64_t> idx(x.numel());
    for (std::size_t ti = 0; ti < t; ++ti)
        for (std::size_t h = 0; h < heads; ++h)
            for (std::size_t j = 0; j < dh; ++j)
                idx[ti * heads * dh + h * dh + j] = static_cast<std::int64_t>((h * t + ti) * dh + j);
    return gather(x, std::move(idx), {t, heads * dh});
}

Tensor repeat_rows(const Tensor& v, std::size_t n) {
    const std::size_t d = v.numel();
    std::vector<std::int64_t> idx(n * d);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) idx[i * d + j] = static_cast<std::int64_t>(j);
    return gather(v, std::move(idx), {n, d});
}

}  // namespace avdit
