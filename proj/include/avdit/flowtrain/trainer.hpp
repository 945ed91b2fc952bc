#pragma once

#include <filesystem>
#include <optional>

#include "avdit/flowtrain/flow.hpp"

namespace avdit::flow {

struct TrainConfig {
    std::size_t steps = 3000;
    std::size_t batch = 8;
    double lr = 1e-3;
    DropRates drop;
    LossWeights weights;
    std::size_t freeze_features_after = 200;  // W is trained jointly, then frozen
    std::uint64_t seed = 2024;
    std::size_t checkpoint_every = 500;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

struct StepMetrics {
    std::size_t step = 0;  // 1-based index of the step just taken
    double loss = 0.0;
    double loss_video = 0.0;
    double loss_audio = 0.0;
    double grad_norm = 0.0;
};

/// Owns the optimizer and data RNG for one model. Single-threaded steps are
/// bitwise reproducible, including across save_state/load_state.
class Trainer {
public:
    Trainer(model::AvDiT& model, const std::vector<FlowItem>& items, const TrainConfig& cfg);

    StepMetrics step();
    std::size_t steps_done() const { return step_; }
    bool features_frozen() const { return step_ >= cfg_.freeze_features_after; }

    /// Model checkpoint plus optimizer moments, step count and RNG state.
    void save_state(const std::filesystem::path& dir) const;
    void load_state(const std::filesystem::path& dir);

private:
    model::AvDiT& model_;
    const std::vector<FlowItem>& items_;
    TrainConfig cfg_;
    Adam opt_;
    Rng rng_;
    std::size_t step_ = 0;
};

struct TrainRun {
    std::vector<StepMetrics> metrics;
    std::vector<std::filesystem::path> checkpoints;
};

/// Runs until cfg.steps, appending to `out_dir/metrics.csv` and writing
/// `out_dir/ckpt_<step>` every checkpoint_every steps and at the end. A
/// non-finite loss or one above 10x the first step's aborts with the last
/// good checkpoint named in the error.
TrainRun run_training(Trainer& trainer, const TrainConfig& cfg, const std::filesystem::path& out_dir,
                      const std::function<void(const StepMetrics&)>& on_step = {});

/// Trailing mean of loss over the `window` steps ending at `step` (1-based).
double smoothed_loss(const std::vector<StepMetrics>& metrics, std::size_t step, std::size_t window = 50);

struct CrossModalEval {
    double with_context = 0.0;
    double without_context = 0.0;
    double ratio() const { return with_context / without_context; }
};

/// Audio velocity loss on `items` with the clean video as context versus
/// the video pathway dropped, using identical noise and t_a draws.
CrossModalEval eval_cross_modal(const model::AvDiT& m, const std::vector<FlowItem>& items, std::size_t draws_per_item,
                                std::uint64_t seed);

/// Largest deviation of per-layer mean from 0 and variance from 1 across the
/// standardized encoder features of `items` ([T, D*L] in (d, l) order).
double standardization_error(const std::vector<FlowItem>& items, std::size_t layers);

}  // namespace avdit::flow
