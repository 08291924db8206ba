#pragma once

#include <functional>
#include <string>
#include <vector>

#include "phaforce/nn/layers.hpp"

namespace phaforce::nn {

struct GradCheckReport {
    double max_rel_error = 0.0;
    std::string worst_param;
    std::size_t worst_index = 0;
    std::size_t checked = 0;
};

/// Compares reverse-mode gradients of `loss` (rebuilt on every call) against
/// central differences for every entry of every parameter in `params`.
/// Relative error is |a - n| / max(|a|, |n|, floor), where floor is raised to
/// 1e4 eps |L| / h: below that the difference quotient's rounding noise
/// exceeds 1e-4 of the gradient.
GradCheckReport grad_check(const ParamStore& params, const std::function<Tensor()>& loss, double h = 1e-5,
                           double floor = 1e-8);

}  // namespace phaforce::nn
