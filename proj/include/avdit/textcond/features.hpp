#pragma once

#include <vector>

#include "avdit/numerics/nn.hpp"
#include "avdit/textcond/tokenizer.hpp"

namespace avdit::text {

struct EncoderConfig {
    std::size_t embed_dim = 64;   // D
    std::size_t layers = 4;       // L
    std::size_t max_tokens = 32;  // T_max
};

/// Per-layer hidden states of the frozen text encoder, [B, T_max, D, L].
struct LayerStack {
    Tensor values;
    std::vector<std::size_t> prompt_lens;

    std::size_t batch() const { return values.dim(0); }
    std::size_t tokens() const { return values.dim(1); }
    std::size_t embed_dim() const { return values.dim(2); }
    std::size_t layers() const { return values.dim(3); }
};

/// Deterministic stand-in for a frozen decoder-only LLM. Each (token id,
/// position, layer) cell is a pure function of those three values, so
/// changing one token only changes that position. Pad positions carry a
/// per-layer constant vector.
LayerStack stub_encode(const std::vector<std::vector<TokenId>>& prompts, const EncoderConfig& cfg);

/// Steps 1-2 of feature extraction: each layer slice of each batch element
/// is standardized jointly over (T, D), then layers are flattened per token
/// to [B, T, D*L]. Deviation is floored at `eps`; eps == 0 with a constant
/// layer is an error.
Tensor standardize_layers(const LayerStack& stack, double eps = 1e-6);

/// Step 3: the learnable dense projection W [D*L, D_cond].
struct FeatureExtractor {
    Tensor projection;

    FeatureExtractor() = default;
    FeatureExtractor(const EncoderConfig& cfg, std::size_t cond_dim, Rng& rng);

    /// flat [T, D*L] for one batch element -> [T, D_cond]
    Tensor project(const Tensor& flat) const { return matmul(flat, projection); }
    /// Full three-step pipeline, [B, T, D_cond].
    Tensor operator()(const LayerStack& stack, double eps = 1e-6) const;
    void collect(ParamList& out, const std::string& prefix) const { out.add(prefix + ".projection", projection); }
};

/// Convenience: full pipeline with an explicit W.
Tensor extract_features(const LayerStack& stack, const Tensor& projection, double eps = 1e-6);

}  // namespace avdit::text
