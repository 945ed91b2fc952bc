#pragma once

#include <functional>

#include "avdit/numerics/nn.hpp"

namespace avdit {

/// Max over coordinates of |autodiff - central difference| / (|autodiff| + 1e-8)
/// for scalar f at x. `f` must build its result from its argument with ops.
double grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x, double h);

struct GradCheckReport {
    double max_rel_error = 0.0;
    std::size_t coords = 0;
    std::string worst_param;
    double worst_autodiff = 0.0;
    double worst_numeric = 0.0;
};

/// Same check over `n_coords` parameter coordinates sampled uniformly from
/// `params`. `loss` is re-evaluated from scratch for every probe.
GradCheckReport grad_check_params(const std::function<Tensor()>& loss, const ParamList& params, std::size_t n_coords,
                                  double h, Rng& rng);

}  // namespace avdit
