#pragma once

#include <vector>

#include "phaforce/nn/tensor.hpp"

namespace phaforce::nn {

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    /// Global-norm gradient clip; <= 0 disables.
    double clip_norm = 0.0;
};

/// Bias-corrected Adam over a fixed parameter list.
class Adam {
public:
    Adam(std::vector<Tensor> params, AdamConfig cfg);

    /// Applies one update from the accumulated gradients. Throws NonFiniteInput
    /// if a gradient or updated parameter is not finite.
    void step();
    void zero_grad();
    void set_lr(double lr) { cfg_.lr = lr; }
    long steps() const { return t_; }

private:
    std::vector<Tensor> params_;
    std::vector<std::vector<double>> m_, v_;
    AdamConfig cfg_;
    long t_ = 0;
};

}  // namespace phaforce::nn
