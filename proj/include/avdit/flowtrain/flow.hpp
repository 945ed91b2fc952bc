#pragma once

#include <functional>

#include "avdit/model/avdit.hpp"

namespace avdit::flow {

using model::PerStream;
using model::Velocity;

struct FlowPoint {
    Tensor x_t;
    Tensor v_target;
};

/// Straight path: x_t = (1 - t) x + t noise, v = noise - x. t = 0 is data.
FlowPoint flow_path(const Tensor& x_clean, const Tensor& noise, double t);

/// One training clip in diffusion space: normalized latents plus the frozen
/// encoder features of its caption.
struct FlowItem {
    Tensor video;  // [T, H, W, C_v]
    Tensor audio;  // [T_a, C_a]
    model::PromptFeatures prompt;
    std::uint64_t seed = 0;
};

struct FlowExample {
    const FlowItem* item = nullptr;
    Tensor noise_video, noise_audio;
    double t_video = 0.0, t_audio = 0.0;
    PerStream<bool> drop_text;
    PerStream<bool> drop_modal;
};

struct DropRates {
    double text = 0.1;
    double modal = 0.1;
};

/// Independent uniform t per stream, standard normal noise and Bernoulli
/// drop flags per stream and condition.
std::vector<FlowExample> draw_batch(const std::vector<FlowItem>& items, std::size_t batch, const DropRates& rates, Rng& rng);

/// Maps an example and its noised latents to predicted velocities.
using Predictor = std::function<Velocity(const FlowExample&, const Tensor& xt_video, const Tensor& xt_audio)>;
Predictor model_predictor(const model::AvDiT& m);

struct LossWeights {
    double video = 1.0;
    double audio = 1.0;
};

struct FlowLoss {
    Tensor total;        // scalar, differentiable
    double video = 0.0;  // unweighted batch means
    double audio = 0.0;
};

/// Mean over the batch of w_v * MSE_v + w_a * MSE_a. Throws on a NaN loss.
FlowLoss flow_match_loss(const Predictor& predict, const std::vector<FlowExample>& batch, const LossWeights& w = {});

}  // namespace avdit::flow
