#include "avdit/numerics/grad_check.hpp"

#include <cmath>

namespace avdit {

namespace {

void check_step(double h) {
    if (!(h >= 1e-6 && h <= 1e-3)) throw Error("grad_check: step must lie in [1e-6, 1e-3]");
}

double eval_scalar(const std::function<Tensor()>& f) {
    const double v = f().item();
    if (std::isnan(v)) throw Error("grad_check: function returned NaN");
    return v;
}

double rel_error(double autodiff, double numeric) {
    return std::abs(autodiff - numeric) / (std::abs(autodiff) + 1e-8);
}

}  // namespace

double grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x, double h) {
    check_step(h);
    Tensor probe = x.clone();
    probe.set_requires_grad(true);
    probe.zero_grad();
    std::vector<double> analytic;
    {
        Tape tape;
        TapeScope scope(tape);
        Tensor y = f(probe);
        if (std::isnan(y.item())) throw Error("grad_check: function returned NaN");
        if (y.requires_grad()) tape.backward(y);
        auto g = probe.grad();
        analytic.assign(g.begin(), g.end());
    }
    double worst = 0.0;
    for (std::size_t i = 0; i < probe.numel(); ++i) {
        const double orig = probe[i];
        probe[i] = orig + h;
        const double fp = eval_scalar([&] { return f(probe); });
        probe[i] = orig - h;
        const double fm = eval_scalar([&] { return f(probe); });
        probe[i] = orig;
        worst = std::max(worst, rel_error(analytic[i], (fp - fm) / (2.0 * h)));
    }
    return worst;
}

GradCheckReport grad_check_params(const std::function<Tensor()>& loss, const ParamList& params, std::size_t n_coords,
                                  double h, Rng& rng) {
    check_step(h);
    ParamList ps = params;
    ps.zero_grad();
    {
        Tape tape;
        TapeScope scope(tape);
        Tensor y = loss();
        if (std::isnan(y.item())) throw Error("grad_check: loss is NaN");
        tape.backward(y);
    }
    const std::size_t total = ps.numel();
    if (total == 0) throw Error("grad_check: no parameters");
    std::uniform_int_distribution<std::size_t> pick(0, total - 1);
    GradCheckReport report;
    for (std::size_t c = 0; c < n_coords; ++c) {
        std::size_t flat = pick(rng);
        for (const auto& p : ps.items()) {
            if (flat >= p.tensor.numel()) {
                flat -= p.tensor.numel();
                continue;
            }
            Tensor t = p.tensor;
            const double analytic = t.grad()[flat];
            const double orig = t[flat];
            t[flat] = orig + h;
            const double fp = eval_scalar(loss);
            t[flat] = orig - h;
            const double fm = eval_scalar(loss);
            t[flat] = orig;
            const double numeric = (fp - fm) / (2.0 * h);
            const double err = rel_error(analytic, numeric);
            if (err >= report.max_rel_error) {
                report.max_rel_error = err;
                report.worst_param = p.name + "[" + std::to_string(flat) + "]";
                report.worst_autodiff = analytic;
                report.worst_numeric = numeric;
            }
            break;
        }
        ++report.coords;
    }
    return report;
}

}  // namespace avdit
