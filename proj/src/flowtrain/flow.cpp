#include "avdit/flowtrain/flow.hpp"

#include <cmath>

namespace avdit::flow {

FlowPoint flow_path(const Tensor& x_clean, const Tensor& noise, double t) {
    if (x_clean.shape() != noise.shape()) {
        throw Error("flow_path: shape mismatch " + shape_str(x_clean.shape()) + " vs " + shape_str(noise.shape()));
    }
    if (!(t >= 0.0 && t <= 1.0)) throw Error("flow_path: t must lie in [0, 1]");
    return FlowPoint{add(affine(x_clean, 1.0 - t), affine(noise, t)), sub(noise, x_clean)};
}

std::vector<FlowExample> draw_batch(const std::vector<FlowItem>& items, std::size_t batch, const DropRates& rates, Rng& rng) {
    if (items.empty()) throw Error("draw_batch: empty dataset");
    std::uniform_int_distribution<std::size_t> pick(0, items.size() - 1);
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    std::vector<FlowExample> out(batch);
    for (auto& ex : out) {
        ex.item = &items[pick(rng)];
        ex.t_video = u01(rng);
        ex.t_audio = u01(rng);
        ex.noise_video = Tensor::randn(ex.item->video.shape(), rng);
        ex.noise_audio = Tensor::randn(ex.item->audio.shape(), rng);
        ex.drop_text.video = u01(rng) < rates.text;
        ex.drop_text.audio = u01(rng) < rates.text;
        ex.drop_modal.video = u01(rng) < rates.modal;
        ex.drop_modal.audio = u01(rng) < rates.modal;
    }
    return out;
}

Predictor model_predictor(const model::AvDiT& m) {
    return [&m](const FlowExample& ex, const Tensor& xv, const Tensor& xa) {
        model::ForwardArgs a;
        a.video_latent = xv;
        a.audio_latent = xa;
        a.t_video = ex.t_video;
        a.t_audio = ex.t_audio;
        // Only run the connectors a stream will actually read.
        if (!(ex.drop_text.video && ex.drop_text.audio)) a.cond = m.condition(ex.item->prompt);
        a.drop_text = ex.drop_text;
        a.drop_modal = ex.drop_modal;
        return m.forward(a);
    };
}

FlowLoss flow_match_loss(const Predictor& predict, const std::vector<FlowExample>& batch, const LossWeights& w) {
    if (batch.empty()) throw Error("flow_match_loss: empty batch");
    FlowLoss out;
    std::vector<Tensor> terms;
    const double inv_b = 1.0 / static_cast<double>(batch.size());
    for (const auto& ex : batch) {
        const FlowPoint pv = flow_path(ex.item->video, ex.noise_video, ex.t_video);
        const FlowPoint pa = flow_path(ex.item->audio, ex.noise_audio, ex.t_audio);
        const Velocity v = predict(ex, pv.x_t, pa.x_t);
        const Tensor lv = mse(v.video, pv.v_target);
        const Tensor la = mse(v.audio, pa.v_target);
        out.video += lv.item() * inv_b;
        out.audio += la.item() * inv_b;
        terms.push_back(affine(add(affine(lv, w.video), affine(la, w.audio)), inv_b));
    }
    out.total = terms[0];
    for (std::size_t i = 1; i < terms.size(); ++i) out.total = add(out.total, terms[i]);
    if (!std::isfinite(out.total.item())) throw Error("flow_match_loss: loss is not finite");
    return out;
}

}  // namespace avdit::flow
