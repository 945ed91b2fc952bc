#include "avdit/model/layers.hpp"

namespace avdit::nn {

Attention::Attention(std::size_t q_dim, std::size_t kv_dim, std::size_t inner_dim, std::size_t out_dim,
                     std::size_t heads_, Rng& rng)
    : to_q(q_dim, inner_dim, rng),
      to_k(kv_dim, inner_dim, rng),
      to_v(kv_dim, inner_dim, rng),
      to_out(inner_dim, out_dim, rng),
      heads(heads_) {
    if (heads == 0 || inner_dim % heads != 0) throw Error("attention: inner width not divisible by heads");
}

Tensor attend(const Tensor& q, const Tensor& k, const Tensor& v, std::size_t heads, const posenc::RopeTables* rope_q,
              const posenc::RopeTables* rope_k, Tensor* probs) {
    Tensor qh = split_heads(q, heads);
    Tensor kh = split_heads(k, heads);
    if (rope_q != nullptr) qh = rotate_pairs(qh, rope_q->cos, rope_q->sin);
    if (rope_k != nullptr) kh = rotate_pairs(kh, rope_k->cos, rope_k->sin);
    return merge_heads(scaled_dot_attention(qh, kh, split_heads(v, heads), probs));
}

Tensor Attention::operator()(const Tensor& xq, const Tensor& xkv, const posenc::RopeTables* rope_q,
                             const posenc::RopeTables* rope_k, Tensor* probs) const {
    return to_out(attend(to_q(xq), to_k(xkv), to_v(xkv), heads, rope_q, rope_k, probs));
}

void Attention::collect(ParamList& out, const std::string& prefix) const {
    to_q.collect(out, prefix + ".to_q");
    to_k.collect(out, prefix + ".to_k");
    to_v.collect(out, prefix + ".to_v");
    to_out.collect(out, prefix + ".to_out");
}

FeedForward::FeedForward(std::size_t dim, std::size_t hidden, Rng& rng) : fc1(dim, hidden, rng), fc2(hidden, dim, rng) {}

void FeedForward::collect(ParamList& out, const std::string& prefix) const {
    fc1.collect(out, prefix + ".fc1");
    fc2.collect(out, prefix + ".fc2");
}

Tensor modulate(const Tensor& x, const Tensor& shift, const Tensor& scale) {
    return add(mul(x, affine(scale, 1.0, 1.0)), shift);
}

std::vector<Tensor> chunk(const Tensor& v, std::size_t n) {
    if (n == 0 || v.numel() % n != 0) throw Error("chunk: " + std::to_string(v.numel()) + " not divisible by " + std::to_string(n));
    const std::size_t w = v.numel() / n;
    Tensor rows = reshape(v, {n, w});
    std::vector<Tensor> out;
    for (std::size_t i = 0; i < n; ++i) out.push_back(reshape(slice_rows(rows, i, i + 1), {w}));
    return out;
}

}  // namespace avdit::nn
