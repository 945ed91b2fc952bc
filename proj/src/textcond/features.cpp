#include "avdit/textcond/features.hpp"

#include <cmath>

namespace avdit::text {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

// Uniform in [-1, 1) from a hashed key.
double hashed_unit(std::uint64_t a, std::uint64_t b, std::uint64_t c, std::uint64_t d) {
    std::uint64_t h = splitmix64(a);
    h = splitmix64(h ^ b);
    h = splitmix64(h ^ c);
    h = splitmix64(h ^ d);
    return static_cast<double>(h >> 11) * 0x1.0p-52 - 1.0;
}

constexpr std::uint64_t kTokenStream = 0x746f6b656eULL;
constexpr std::uint64_t kPositionStream = 0x706f73ULL;
constexpr std::uint64_t kPadStream = 0x706164ULL;

}  // namespace

LayerStack stub_encode(const std::vector<std::vector<TokenId>>& prompts, const EncoderConfig& cfg) {
    const std::size_t b = prompts.size(), t = cfg.max_tokens, d = cfg.embed_dim, l = cfg.layers;
    if (l == 0) throw Error("stub_encode: layer count must be >= 1");
    LayerStack stack{Tensor({b, t, d, l}), {}};
    for (std::size_t bi = 0; bi < b; ++bi) {
        const auto& prompt = prompts[bi];
        if (prompt.size() > t) {
            throw Error("stub_encode: prompt of " + std::to_string(prompt.size()) + " tokens exceeds T_max " +
                        std::to_string(t));
        }
        stack.prompt_lens.push_back(prompt.size());
        for (std::size_t ti = 0; ti < t; ++ti) {
            for (std::size_t di = 0; di < d; ++di) {
                for (std::size_t li = 0; li < l; ++li) {
                    double v;
                    if (ti < prompt.size()) {
                        const auto id = static_cast<std::uint64_t>(prompt[ti]);
                        // Token identity dominates; position adds a smaller, layer-dependent component.
                        v = hashed_unit(kTokenStream, id, li, di) +
                            0.5 * hashed_unit(kPositionStream ^ id, ti, li, di) * static_cast<double>(li + 1) /
                                static_cast<double>(l);
                    } else {
                        v = 0.25 * hashed_unit(kPadStream, 0, li, di);
                    }
                    stack.values[((bi * t + ti) * d + di) * l + li] = v;
                }
            }
        }
    }
    return stack;
}

Tensor standardize_layers(const LayerStack& stack, double eps) {
    const std::size_t b = stack.batch(), t = stack.tokens(), d = stack.embed_dim(), l = stack.layers();
    if (eps < 0.0) throw Error("standardize_layers: negative eps");
    const double n = static_cast<double>(t * d);
    Tensor out({b, t, d * l});
    const auto& v = stack.values;
    for (std::size_t bi = 0; bi < b; ++bi) {
        for (std::size_t li = 0; li < l; ++li) {
            double mean = 0.0;
            for (std::size_t ti = 0; ti < t; ++ti)
                for (std::size_t di = 0; di < d; ++di) mean += v[((bi * t + ti) * d + di) * l + li];
            mean /= n;
            double var = 0.0;
            for (std::size_t ti = 0; ti < t; ++ti) {
                for (std::size_t di = 0; di < d; ++di) {
                    const double c = v[((bi * t + ti) * d + di) * l + li] - mean;
                    var += c * c;
                }
            }
            const double sd = std::sqrt(var / n);
            if (sd == 0.0 && eps == 0.0) {
                throw Error("standardize_layers: layer " + std::to_string(li) + " has zero variance and eps is disabled");
            }
            const double denom = std::max(sd, eps);
            // Flattening [T, D, L] keeps the row-major (d, l) order per token.
            for (std::size_t ti = 0; ti < t; ++ti) {
                for (std::size_t di = 0; di < d; ++di) {
                    const std::size_t src = ((bi * t + ti) * d + di) * l + li;
                    out[(bi * t + ti) * d * l + di * l + li] = (v[src] - mean) / denom;
                }
            }
        }
    }
    return out;
}

FeatureExtractor::FeatureExtractor(const EncoderConfig& cfg, std::size_t cond_dim, Rng& rng)
    : projection(make_param({cfg.embed_dim * cfg.layers, cond_dim}, rng,
                            1.0 / std::sqrt(static_cast<double>(cfg.embed_dim * cfg.layers)))) {}

Tensor FeatureExtractor::operator()(const LayerStack& stack, double eps) const {
    return extract_features(stack, projection, eps);
}

Tensor extract_features(const LayerStack& stack, const Tensor& projection, double eps) {
    const std::size_t b = stack.batch(), t = stack.tokens(), dl = stack.embed_dim() * stack.layers();
    if (projection.rank() != 2 || projection.dim(0) != dl) {
        throw Error("extract_features: projection " + shape_str(projection.shape()) + " does not accept D*L = " +
                    std::to_string(dl));
    }
    const Tensor flat = standardize_layers(stack, eps);
    std::vector<Tensor> rows;
    for (std::size_t bi = 0; bi < b; ++bi) {
        rows.push_back(matmul(slice_rows(reshape(flat, {b * t, dl}), bi * t, (bi + 1) * t), projection));
    }
    return reshape(concat(rows), {b, t, projection.dim(1)});
}

}  // namespace avdit::text
