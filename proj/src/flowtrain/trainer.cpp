#include "avdit/flowtrain/trainer.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "avdit/model/checkpoint.hpp"
#include "avdit/numerics/io.hpp"

namespace avdit::flow {

void to_json(nlohmann::json& j, const TrainConfig& c) {
    j = {{"steps", c.steps},
         {"batch", c.batch},
         {"lr", c.lr},
         {"drop_text", c.drop.text},
         {"drop_modal", c.drop.modal},
         {"weight_video", c.weights.video},
         {"weight_audio", c.weights.audio},
         {"freeze_features_after", c.freeze_features_after},
         {"seed", c.seed},
         {"checkpoint_every", c.checkpoint_every}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
    j.at("steps").get_to(c.steps);
    j.at("batch").get_to(c.batch);
    j.at("lr").get_to(c.lr);
    j.at("drop_text").get_to(c.drop.text);
    j.at("drop_modal").get_to(c.drop.modal);
    j.at("weight_video").get_to(c.weights.video);
    j.at("weight_audio").get_to(c.weights.audio);
    j.at("freeze_features_after").get_to(c.freeze_features_after);
    j.at("seed").get_to(c.seed);
    j.at("checkpoint_every").get_to(c.checkpoint_every);
}

Trainer::Trainer(model::AvDiT& model, const std::vector<FlowItem>& items, const TrainConfig& cfg)
    : model_(model), items_(items), cfg_(cfg), opt_(model.parameters(), cfg.lr), rng_(cfg.seed) {
    if (cfg.batch == 0) throw Error("trainer: batch must be positive");
    if (items.empty()) throw Error("trainer: empty dataset");
    opt_.set_frozen([this](const std::string& name) {
        return features_frozen() && name.rfind("text.features", 0) == 0;
    });
}

StepMetrics Trainer::step() {
    const auto batch = draw_batch(items_, cfg_.batch, cfg_.drop, rng_);
    opt_.zero_grad();
    StepMetrics m;
    {
        Tape tape;
        TapeScope scope(tape);
        FlowLoss loss = flow_match_loss(model_predictor(model_), batch, cfg_.weights);
        tape.backward(loss.total);
        m.loss = loss.total.item();
        m.loss_video = loss.video;
        m.loss_audio = loss.audio;
    }
    m.grad_norm = opt_.params().grad_norm();
    opt_.step();
    m.step = ++step_;
    return m;
}

void Trainer::save_state(const std::filesystem::path& dir) const {
    save_checkpoint(dir, model_.parameters(), model_.config());
    std::vector<Tensor> moments = opt_.first_moments();
    moments.insert(moments.end(), opt_.second_moments().begin(), opt_.second_moments().end());
    save_tensors(dir / "optimizer.avt", moments);
    std::ostringstream rng_state;
    rng_state << rng_;
    const nlohmann::json state{{"step", step_}, {"adam_t", opt_.step_count()}, {"rng", rng_state.str()}, {"train", cfg_}};
    std::ofstream os(dir / "trainer.json");
    if (!os) throw Error("save_state: cannot write " + (dir / "trainer.json").string());
    os << state.dump(2) << "\n";
}

void Trainer::load_state(const std::filesystem::path& dir) {
    const auto stored = load_checkpoint(dir, model_.parameters());
    if (model::config_hash(stored) != model::config_hash(nlohmann::json(model_.config()))) {
        throw Error("load_state: checkpoint config differs from the model's");
    }
    std::ifstream is(dir / "trainer.json");
    if (!is) throw Error("load_state: missing " + (dir / "trainer.json").string());
    const auto state = nlohmann::json::parse(is);
    const auto moments = load_tensors(dir / "optimizer.avt");
    auto& m = opt_.first_moments();
    auto& v = opt_.second_moments();
    if (moments.size() != m.size() + v.size()) throw Error("load_state: optimizer state does not match the model");
    for (std::size_t i = 0; i < m.size(); ++i) {
        m[i] = moments[i].clone();
        v[i] = moments[m.size() + i].clone();
    }
    opt_.set_step_count(state.at("adam_t").get<long>());
    step_ = state.at("step").get<std::size_t>();
    std::istringstream rs(state.at("rng").get<std::string>());
    rs >> rng_;
}

namespace {

std::string checkpoint_name(std::size_t step) {
    char name[32];
    std::snprintf(name, sizeof name, "ckpt_%06zu", step);
    return name;
}

}  // namespace

TrainRun run_training(Trainer& trainer, const TrainConfig& cfg, const std::filesystem::path& out_dir,
                      const std::function<void(const StepMetrics&)>& on_step) {
    std::filesystem::create_directories(out_dir);
    const auto csv_path = out_dir / "metrics.csv";
    const bool fresh = !std::filesystem::exists(csv_path) || trainer.steps_done() == 0;
    std::ofstream csv(csv_path, fresh ? std::ios::trunc : std::ios::app);
    if (!csv) throw Error("run_training: cannot write " + csv_path.string());
    if (fresh) csv << "step,loss,loss_v,loss_a,grad_norm\n";
    csv.precision(17);

    TrainRun run;
    std::optional<double> first;
    std::filesystem::path last_good;
    auto checkpoint = [&] {
        const auto dir = out_dir / checkpoint_name(trainer.steps_done());
        trainer.save_state(dir);
        run.checkpoints.push_back(dir);
        last_good = dir;
    };
    while (trainer.steps_done() < cfg.steps) {
        const StepMetrics m = [&] {
            try {
                return trainer.step();
            } catch (const Error& e) {
                throw Error(std::string(e.what()) + "; last good checkpoint: " +
                            (last_good.empty() ? std::string("none") : last_good.string()));
            }
        }();
        if (!first) first = m.loss;
        if (!std::isfinite(m.loss) || m.loss > 10.0 * *first) {
            throw Error("run_training: diverged at step " + std::to_string(m.step) + " (loss " + std::to_string(m.loss) +
                        "); last good checkpoint: " + (last_good.empty() ? std::string("none") : last_good.string()));
        }
        csv << m.step << ',' << m.loss << ',' << m.loss_video << ',' << m.loss_audio << ',' << m.grad_norm << '\n';
        run.metrics.push_back(m);
        if (on_step) on_step(m);
        if (cfg.checkpoint_every > 0 && m.step % cfg.checkpoint_every == 0) checkpoint();
    }
    csv.flush();
    if (last_good.empty() || last_good.filename() != checkpoint_name(trainer.steps_done())) checkpoint();
    return run;
}

double smoothed_loss(const std::vector<StepMetrics>& metrics, std::size_t step, std::size_t window) {
    if (window == 0 || step < window) throw Error("smoothed_loss: need at least `window` steps before `step`");
    double s = 0.0;
    std::size_t n = 0;
    for (const auto& m : metrics) {
        if (m.step > step - window && m.step <= step) {
            s += m.loss;
            ++n;
        }
    }
    if (n != window) throw Error("smoothed_loss: metrics do not cover steps up to " + std::to_string(step));
    return s / static_cast<double>(n);
}

CrossModalEval eval_cross_modal(const model::AvDiT& m, const std::vector<FlowItem>& items, std::size_t draws_per_item,
                                std::uint64_t seed) {
    if (items.empty() || draws_per_item == 0) throw Error("eval_cross_modal: nothing to evaluate");
    Rng rng(seed);
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    CrossModalEval out;
    std::size_t n = 0;
    for (const auto& item : items) {
        const auto cond = m.condition(item.prompt);
        for (std::size_t d = 0; d < draws_per_item; ++d) {
            const double t_a = u01(rng);
            const Tensor noise = Tensor::randn(item.audio.shape(), rng);
            const FlowPoint pa = flow_path(item.audio, noise, t_a);
            model::ForwardArgs a;
            a.video_latent = item.video;  // clean video context, as in V2A
            a.audio_latent = pa.x_t;
            a.t_video = 0.0;
            a.t_audio = t_a;
            a.cond = cond;
            out.with_context += mse(m.forward(a).audio, pa.v_target).item();
            a.drop_modal.audio = true;
            out.without_context += mse(m.forward(a).audio, pa.v_target).item();
            ++n;
        }
    }
    out.with_context /= static_cast<double>(n);
    out.without_context /= static_cast<double>(n);
    return out;
}

double standardization_error(const std::vector<FlowItem>& items, std::size_t layers) {
    double worst = 0.0;
    for (const auto& item : items) {
        const Tensor& f = item.prompt.flat;
        const std::size_t rows = f.dim(0), cols = f.dim(1), D = cols / layers;
        for (std::size_t l = 0; l < layers; ++l) {
            double s = 0.0, sq = 0.0;
            for (std::size_t t = 0; t < rows; ++t)
                for (std::size_t d = 0; d < D; ++d) s += f[t * cols + d * layers + l];
            const double mu = s / static_cast<double>(rows * D);
            for (std::size_t t = 0; t < rows; ++t)
                for (std::size_t d = 0; d < D; ++d) {
                    const double c = f[t * cols + d * layers + l] - mu;
                    sq += c * c;
                }
            worst = std::max({worst, std::abs(mu), std::abs(sq / static_cast<double>(rows * D) - 1.0)});
        }
    }
    return worst;
}

}  // namespace avdit::flow
