#pragma once

#include "avdit/model/layers.hpp"
#include "avdit/posenc/rope.hpp"

namespace avdit::text {

struct ConnectorConfig {
    std::size_t cond_dim = 64;    // width of extracted features
    std::size_t out_dim = 64;     // stream width the caption projection maps to
    std::size_t heads = 2;
    std::size_t blocks = 2;       // N_conn
    std::size_t max_thinking = 8; // K_max
    std::size_t max_tokens = 32;  // T_max
};

struct TextConditioning {
    Tensor tokens;  // [T_max, out_dim]
    std::size_t prompt_len = 0;
    std::size_t n_thinking = 0;
    bool is_null = false;
};

/// Bidirectional transformer that refines extracted text features for one
/// stream. Learnable thinking tokens overwrite the leading pad positions.
class TextConnector {
public:
    TextConnector() = default;
    TextConnector(const ConnectorConfig& cfg, Rng& rng);

    /// features [T_max, cond_dim] -> conditioning [T_max, out_dim]
    TextConditioning operator()(const Tensor& features, std::size_t prompt_len) const;
    /// The stream's learned null sequence (CFG's empty text condition).
    TextConditioning null_conditioning() const;

    static std::size_t thinking_count(std::size_t prompt_len, std::size_t max_tokens, std::size_t max_thinking);

    const ConnectorConfig& config() const { return cfg_; }
    const Tensor& thinking_tokens() const { return thinking_; }
    void collect(ParamList& out, const std::string& prefix) const;

private:
    struct Block {
        RmsNorm norm1, norm2;
        nn::Attention attn;
        nn::FeedForward ffn;
    };

    ConnectorConfig cfg_;
    Tensor thinking_;  // [K_max, cond_dim]
    std::vector<Block> blocks_;
    RmsNorm final_norm_;
    Linear caption_proj_;
    Tensor null_tokens_;  // [T_max, out_dim]
    posenc::RopeTables rope_;
};

}  // namespace avdit::text
