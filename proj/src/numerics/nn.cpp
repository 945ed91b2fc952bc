#include "avdit/numerics/nn.hpp"

#include <cmath>

namespace avdit {

std::size_t ParamList::numel() const {
    std::size_t n = 0;
    for (const auto& p : items_) n += p.tensor.numel();
    return n;
}

ParamList ParamList::filter(const std::string& prefix) const {
    ParamList out;
    for (const auto& p : items_) {
        if (p.name.rfind(prefix, 0) == 0) out.add(p.name, p.tensor);
    }
    return out;
}

const Tensor& ParamList::at(const std::string& name) const {
    for (const auto& p : items_) {
        if (p.name == name) return p.tensor;
    }
    throw Error("no parameter named '" + name + "'");
}

void ParamList::zero_grad() {
    for (auto& p : items_) p.tensor.zero_grad();
}

double ParamList::grad_norm() const {
    double s = 0.0;
    for (const auto& p : items_) {
        if (!p.tensor.has_grad()) continue;
        for (double g : p.tensor.grad()) s += g * g;
    }
    return std::sqrt(s);
}

Tensor make_param(const Shape& shape, Rng& rng, double std) {
    Tensor t = Tensor::randn(shape, rng, std);
    t.set_requires_grad(true);
    return t;
}

Tensor make_param_zeros(const Shape& shape) { return make_param_filled(shape, 0.0); }

Tensor make_param_filled(const Shape& shape, double value) {
    Tensor t(shape, value);
    t.set_requires_grad(true);
    return t;
}

Linear::Linear(std::size_t in, std::size_t out, Rng& rng, bool with_bias, double init_std) {
    const double std = init_std < 0.0 ? 1.0 / std::sqrt(static_cast<double>(in)) : init_std;
    weight = make_param({in, out}, rng, std);
    if (with_bias) bias = make_param_zeros({out});
}

Linear Linear::zeros(std::size_t in, std::size_t out) {
    Linear l;
    l.weight = make_param_zeros({in, out});
    l.bias = make_param_zeros({out});
    return l;
}

void Linear::collect(ParamList& out, const std::string& prefix) const {
    out.add(prefix + ".weight", weight);
    if (bias.defined()) out.add(prefix + ".bias", bias);
}

Adam::Adam(ParamList params, double lr, double beta1, double beta2, double eps)
    : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
    for (const auto& p : params_.items()) {
        m_.emplace_back(p.tensor.shape());
        v_.emplace_back(p.tensor.shape());
    }
}

void Adam::step() {
    ++t_;
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    const auto& items = params_.items();
    for (std::size_t i = 0; i < items.size(); ++i) {
        Tensor p = items[i].tensor;
        if (is_frozen(items[i].name)) continue;
        // A parameter the loss did not reach still decays its moments, so the
        // update never depends on whether a gradient buffer was allocated.
        const bool reached = p.has_grad();
        const std::span<double> g = reached ? p.grad() : std::span<double>{};
        auto w = p.data();
        auto m = m_[i].data();
        auto v = v_[i].data();
        for (std::size_t j = 0; j < w.size(); ++j) {
            const double gj = reached ? g[j] : 0.0;
            m[j] = beta1_ * m[j] + (1.0 - beta1_) * gj;
            v[j] = beta2_ * v[j] + (1.0 - beta2_) * gj * gj;
            w[j] -= lr_ * (m[j] / c1) / (std::sqrt(v[j] / c2) + eps_);
        }
    }
}

}  // namespace avdit
