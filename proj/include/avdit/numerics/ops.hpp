#pragma once

#include <cstdint>
#include <vector>

#include "avdit/numerics/autograd.hpp"
#include "avdit/numerics/tensor.hpp"

namespace avdit {

// Elementwise. `b` may match `a` exactly or match a trailing block of a's
// shape, in which case it is broadcast over the leading axes.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
/// a * s + c for scalars s, c.
Tensor affine(const Tensor& a, double s, double c = 0.0);

Tensor silu(const Tensor& x);
Tensor gelu(const Tensor& x);
Tensor exp(const Tensor& x);
Tensor square(const Tensor& x);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
/// mean((a - b)^2), fused.
Tensor mse(const Tensor& a, const Tensor& b);

/// [N, K] x [K, M] -> [N, M]
Tensor matmul(const Tensor& a, const Tensor& b);
/// x [N, in] * w [in, out] + bias [out]; bias may be undefined.
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& bias);

/// x / sqrt(mean(x^2) + eps) * gain over the last axis; gain may be undefined.
Tensor rms_norm(const Tensor& x, const Tensor& gain, double eps);

/// softmax(q k^T / sqrt(dh)) v for q [H, Tq, dh], k, v [H, Tk, dh].
/// When `probs_out` is non-null it receives the [H, Tq, Tk] attention matrix.
Tensor scaled_dot_attention(const Tensor& q, const Tensor& k, const Tensor& v, Tensor* probs_out = nullptr);

/// Rotates consecutive coordinate pairs of every [T, dh] head slice of x [H, T, dh]
/// by the per-token angles encoded as cos/sin tables of shape [T, dh/2].
Tensor rotate_pairs(const Tensor& x, const Tensor& cos_table, const Tensor& sin_table);

/// out[i] = x[index[i]], or 0 where index[i] < 0. Backward scatter-adds.
Tensor gather(const Tensor& x, std::vector<std::int64_t> index, Shape out_shape);

/// Concatenates along axis 0; trailing shapes must agree.
Tensor concat(const std::vector<Tensor>& parts);
Tensor reshape(const Tensor& x, Shape shape);
/// Rows [begin, end) of axis 0.
Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t end);

/// [T, H*dh] -> [H, T, dh]
Tensor split_heads(const Tensor& x, std::size_t heads);
/// [H, T, dh] -> [T, H*dh]
Tensor merge_heads(const Tensor& x);

/// [D] -> [n, D]
Tensor repeat_rows(const Tensor& v, std::size_t n);

}  // namespace avdit
