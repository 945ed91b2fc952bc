#include "avdit/textcond/connector.hpp"

#include <algorithm>
#include <numeric>

namespace avdit::text {

TextConnector::TextConnector(const ConnectorConfig& cfg, Rng& rng) : cfg_(cfg) {
    thinking_ = make_param({cfg.max_thinking, cfg.cond_dim}, rng, 1.0);
    for (std::size_t i = 0; i < cfg.blocks; ++i) {
        blocks_.push_back(Block{RmsNorm(cfg.cond_dim), RmsNorm(cfg.cond_dim),
                                nn::Attention(cfg.cond_dim, cfg.cond_dim, cfg.cond_dim, cfg.cond_dim, cfg.heads, rng),
                                nn::FeedForward(cfg.cond_dim, 4 * cfg.cond_dim, rng)});
    }
    final_norm_ = RmsNorm(cfg.cond_dim);
    caption_proj_ = Linear(cfg.cond_dim, cfg.out_dim, rng);
    null_tokens_ = make_param({cfg.max_tokens, cfg.out_dim}, rng, 0.5);
    std::vector<double> positions(cfg.max_tokens);
    std::iota(positions.begin(), positions.end(), 0.0);
    rope_ = posenc::rope_1d_tables(positions, cfg.cond_dim / cfg.heads, 10000.0);
}

std::size_t TextConnector::thinking_count(std::size_t prompt_len, std::size_t max_tokens, std::size_t max_thinking) {
    if (prompt_len > max_tokens) throw Error("connect_text: prompt_len exceeds T_max");
    return std::min(max_thinking, max_tokens - prompt_len);
}

TextConditioning TextConnector::operator()(const Tensor& features, std::size_t prompt_len) const {
    if (features.rank() != 2 || features.dim(0) != cfg_.max_tokens || features.dim(1) != cfg_.cond_dim) {
        throw Error("connect_text: features " + shape_str(features.shape()) + " expected [" +
                    std::to_string(cfg_.max_tokens) + ", " + std::to_string(cfg_.cond_dim) + "]");
    }
    const std::size_t n_think = thinking_count(prompt_len, cfg_.max_tokens, cfg_.max_thinking);
    Tensor h = features;
    if (n_think > 0) {
        std::vector<Tensor> parts;
        if (prompt_len > 0) parts.push_back(slice_rows(features, 0, prompt_len));
        parts.push_back(slice_rows(thinking_, 0, n_think));
        if (prompt_len + n_think < cfg_.max_tokens) parts.push_back(slice_rows(features, prompt_len + n_think, cfg_.max_tokens));
        h = concat(parts);
    }
    for (const auto& b : blocks_) {
        Tensor n = b.norm1(h);
        h = add(h, b.attn(n, n, &rope_, &rope_));
        h = add(h, b.ffn(b.norm2(h)));
    }
    return TextConditioning{caption_proj_(final_norm_(h)), prompt_len, n_think, false};
}

TextConditioning TextConnector::null_conditioning() const { return TextConditioning{null_tokens_, 0, 0, true}; }

void TextConnector::collect(ParamList& out, const std::string& prefix) const {
    out.add(prefix + ".thinking", thinking_);
    for (std::size_t i = 0; i < blocks_.size(); ++i) {
        const std::string p = prefix + ".blocks." + std::to_string(i);
        blocks_[i].norm1.collect(out, p + ".norm1");
        blocks_[i].attn.collect(out, p + ".attn");
        blocks_[i].norm2.collect(out, p + ".norm2");
        blocks_[i].ffn.collect(out, p + ".ffn");
    }
    final_norm_.collect(out, prefix + ".final_norm");
    caption_proj_.collect(out, prefix + ".caption_proj");
    out.add(prefix + ".null_tokens", null_tokens_);
}

}  // namespace avdit::text
