#pragma once

#include "avdit/numerics/nn.hpp"
#include "avdit/posenc/rope.hpp"

namespace avdit::nn {

/// Multi-head attention with separate query and key/value sources. RoPE
/// tables, when given, rotate the per-head queries/keys.
struct Attention {
    Linear to_q, to_k, to_v, to_out;
    std::size_t heads = 1;

    Attention() = default;
    Attention(std::size_t q_dim, std::size_t kv_dim, std::size_t inner_dim, std::size_t out_dim, std::size_t heads,
              Rng& rng);

    std::size_t head_dim() const { return to_q.out_features() / heads; }

    Tensor operator()(const Tensor& xq, const Tensor& xkv, const posenc::RopeTables* rope_q = nullptr,
                      const posenc::RopeTables* rope_k = nullptr, Tensor* probs = nullptr) const;
    void collect(ParamList& out, const std::string& prefix) const;
};

/// Projects already-computed q/k/v rows through heads, RoPE and attention.
Tensor attend(const Tensor& q, const Tensor& k, const Tensor& v, std::size_t heads, const posenc::RopeTables* rope_q,
              const posenc::RopeTables* rope_k, Tensor* probs);

struct FeedForward {
    Linear fc1, fc2;

    FeedForward() = default;
    FeedForward(std::size_t dim, std::size_t hidden, Rng& rng);
    Tensor operator()(const Tensor& x) const { return fc2(gelu(fc1(x))); }
    void collect(ParamList& out, const std::string& prefix) const;
};

/// x * (1 + scale) + shift, with shift/scale broadcast over rows.
Tensor modulate(const Tensor& x, const Tensor& shift, const Tensor& scale);

/// Splits a [n * width] vector into n contiguous [width] chunks.
std::vector<Tensor> chunk(const Tensor& v, std::size_t n);

}  // namespace avdit::nn
