#pragma once

#include <functional>
#include <string>
#include <vector>

#include "avdit/numerics/ops.hpp"

namespace avdit {

struct NamedParam {
    std::string name;
    Tensor tensor;
};

/// Flat, ordered view over a model's parameters. Order is the registration
/// order and is stable across runs, which checkpoints and the optimizer rely on.
class ParamList {
public:
    void add(std::string name, const Tensor& t) { items_.push_back({std::move(name), t}); }
    void append(const ParamList& other) { items_.insert(items_.end(), other.items_.begin(), other.items_.end()); }

    const std::vector<NamedParam>& items() const { return items_; }
    std::size_t size() const { return items_.size(); }
    std::size_t numel() const;
    /// Parameters whose name starts with `prefix`.
    ParamList filter(const std::string& prefix) const;
    const Tensor& at(const std::string& name) const;

    void zero_grad();
    double grad_norm() const;

private:
    std::vector<NamedParam> items_;
};

Tensor make_param(const Shape& shape, Rng& rng, double std);
Tensor make_param_zeros(const Shape& shape);
Tensor make_param_filled(const Shape& shape, double value);

struct Linear {
    Tensor weight;  // [in, out]
    Tensor bias;    // [out] or undefined

    Linear() = default;
    /// Normal init with std 1/sqrt(in) when init_std < 0.
    Linear(std::size_t in, std::size_t out, Rng& rng, bool with_bias = true, double init_std = -1.0);
    static Linear zeros(std::size_t in, std::size_t out);

    Tensor operator()(const Tensor& x) const { return linear(x, weight, bias); }
    std::size_t in_features() const { return weight.dim(0); }
    std::size_t out_features() const { return weight.dim(1); }
    void collect(ParamList& out, const std::string& prefix) const;
};

struct RmsNorm {
    Tensor gain;
    double eps = 1e-6;

    RmsNorm() = default;
    explicit RmsNorm(std::size_t dim, double eps_ = 1e-6) : gain(make_param_filled({dim}, 1.0)), eps(eps_) {}
    Tensor operator()(const Tensor& x) const { return rms_norm(x, gain, eps); }
    void collect(ParamList& out, const std::string& prefix) const { out.add(prefix + ".gain", gain); }
};

/// Adam with bias correction. Parameters whose names match `frozen` are skipped.
class Adam {
public:
    Adam(ParamList params, double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

    void step();
    void zero_grad() { params_.zero_grad(); }
    void set_frozen(std::function<bool(const std::string&)> frozen) { frozen_ = std::move(frozen); }
    bool is_frozen(const std::string& name) const { return frozen_ && frozen_(name); }

    long step_count() const { return t_; }
    double lr() const { return lr_; }
    void set_lr(double lr) { lr_ = lr; }
    const ParamList& params() const { return params_; }

    // Moment buffers, exposed for checkpointing.
    std::vector<Tensor>& first_moments() { return m_; }
    std::vector<Tensor>& second_moments() { return v_; }
    const std::vector<Tensor>& first_moments() const { return m_; }
    const std::vector<Tensor>& second_moments() const { return v_; }
    void set_step_count(long t) { t_ = t; }

private:
    ParamList params_;
    double lr_, beta1_, beta2_, eps_;
    long t_ = 0;
    std::vector<Tensor> m_, v_;
    std::function<bool(const std::string&)> frozen_;
};

}  // namespace avdit
