#pragma once

#include <string>
#include <utility>
#include <vector>

#include "phaforce/nn/ops.hpp"
#include "phaforce/nn/tensor.hpp"
#include "phaforce/rng.hpp"

namespace phaforce::nn {

/// Named, ordered parameter collection. Names are unique.
class ParamStore {
public:
    /// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) initialisation.
    Tensor add(const std::string& name, Shape shape, std::size_t fan_in, Rng& rng);
    Tensor add_value(const std::string& name, Shape shape, std::vector<double> values);
    /// Registers an existing tensor (shared parameters).
    void add_shared(const std::string& name, const Tensor& t);

    const Tensor& get(const std::string& name) const;
    bool contains(const std::string& name) const;
    const std::vector<std::pair<std::string, Tensor>>& items() const { return items_; }
    std::vector<Tensor> tensors() const;
    std::size_t count() const;

    void zero_grad();
    void set_requires_grad(bool on);

private:
    std::vector<std::pair<std::string, Tensor>> items_;
};

struct Linear {
    Tensor W, b;
    Linear() = default;
    Linear(ParamStore& ps, const std::string& name, std::size_t din, std::size_t dout, Rng& rng);
    Tensor operator()(const Tensor& x) const { return linear(x, W, b); }
    std::size_t in() const { return W.dim(0); }
    std::size_t out() const { return W.dim(1); }
};

/// Stack of Linear layers with ReLU between them (none after the last).
struct Mlp {
    std::vector<Linear> layers;
    Mlp() = default;
    Mlp(ParamStore& ps, const std::string& name, const std::vector<std::size_t>& widths, Rng& rng);
    Tensor operator()(const Tensor& x) const;
};

/// 3x3 stride-2 convolution stack + linear head; input NHWC [B x H x W x 1].
struct ConvEncoder {
    std::vector<Tensor> kernels, biases;
    Linear head;
    std::size_t image = 0;
    ConvEncoder() = default;
    ConvEncoder(ParamStore& ps, const std::string& name, std::size_t image, const std::vector<std::size_t>& channels,
                std::size_t embed, Rng& rng);
    Tensor operator()(const Tensor& x) const;
};

}  // namespace phaforce::nn
