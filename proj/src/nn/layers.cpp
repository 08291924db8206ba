#include "phaforce/nn/layers.hpp"

#include <cmath>
#include <stdexcept>

namespace phaforce::nn {

Tensor ParamStore::add(const std::string& name, Shape shape, std::size_t fan_in, Rng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::vector<double> v(numel(shape));
    for (auto& x : v) x = rng.uniform(-bound, bound);
    return add_value(name, std::move(shape), std::move(v));
}

Tensor ParamStore::add_value(const std::string& name, Shape shape, std::vector<double> values) {
    auto t = Tensor::from(std::move(shape), std::move(values), true);
    add_shared(name, t);
    return t;
}

void ParamStore::add_shared(const std::string& name, const Tensor& t) {
    if (contains(name)) throw std::invalid_argument("duplicate parameter name: " + name);
    items_.emplace_back(name, t);
}

const Tensor& ParamStore::get(const std::string& name) const {
    for (const auto& [n, t] : items_)
        if (n == name) return t;
    throw std::out_of_range("unknown parameter: " + name);
}

bool ParamStore::contains(const std::string& name) const {
    for (const auto& [n, t] : items_)
        if (n == name) return true;
    return false;
}

std::vector<Tensor> ParamStore::tensors() const {
    std::vector<Tensor> out;
    out.reserve(items_.size());
    for (const auto& [n, t] : items_) out.push_back(t);
    return out;
}

std::size_t ParamStore::count() const {
    std::size_t n = 0;
    for (const auto& [name, t] : items_) n += t.size();
    return n;
}

void ParamStore::zero_grad() {
    for (auto& [n, t] : items_) t.zero_grad();
}

void ParamStore::set_requires_grad(bool on) {
    for (auto& [n, t] : items_) t.node()->requires_grad = on;
}

Linear::Linear(ParamStore& ps, const std::string& name, std::size_t din, std::size_t dout, Rng& rng)
    : W(ps.add(name + ".W", {din, dout}, din, rng)), b(ps.add(name + ".b", {dout}, din, rng)) {}

Mlp::Mlp(ParamStore& ps, const std::string& name, const std::vector<std::size_t>& widths, Rng& rng) {
    for (std::size_t i = 0; i + 1 < widths.size(); ++i)
        layers.emplace_back(ps, name + "." + std::to_string(i), widths[i], widths[i + 1], rng);
}

Tensor Mlp::operator()(const Tensor& x) const {
    Tensor h = x;
    for (std::size_t i = 0; i < layers.size(); ++i) {
        h = layers[i](h);
        if (i + 1 < layers.size()) h = relu(h);
    }
    return h;
}

ConvEncoder::ConvEncoder(ParamStore& ps, const std::string& name, std::size_t image_size,
                         const std::vector<std::size_t>& channels, std::size_t embed, Rng& rng)
    : image(image_size) {
    std::size_t cin = 1, side = image_size;
    for (std::size_t i = 0; i < channels.size(); ++i) {
        const std::size_t fan = 9 * cin;
        const std::string p = name + ".conv" + std::to_string(i);
        kernels.push_back(ps.add(p + ".W", {3, 3, cin, channels[i]}, fan, rng));
        biases.push_back(ps.add(p + ".b", {channels[i]}, fan, rng));
        cin = channels[i];
        side = (side + 2 - 3) / 2 + 1;
    }
    head = Linear(ps, name + ".head", side * side * cin, embed, rng);
}

Tensor ConvEncoder::operator()(const Tensor& x) const {
    Tensor h = x;
    for (std::size_t i = 0; i < kernels.size(); ++i) h = relu(conv2d(h, kernels[i], biases[i], 2, 1));
    const std::size_t B = h.dim(0);
    return head(reshape(h, {B, h.size() / B}));
}

}  // namespace phaforce::nn
