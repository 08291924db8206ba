#include "phaforce/nn/tensor.hpp"

#include <unordered_set>

namespace phaforce::nn {

namespace {
thread_local bool t_grad_enabled = true;
}

std::size_t numel(const Shape& s) {
    std::size_t n = 1;
    for (auto d : s) n *= d;
    return n;
}

std::string shape_str(const Shape& s) {
    std::string out = "[";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) out += "x";
        out += std::to_string(s[i]);
    }
    return out + "]";
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
    auto n = std::make_shared<Node>();
    n->value.assign(numel(shape), 0.0);
    n->shape = std::move(shape);
    n->requires_grad = requires_grad;
    return Tensor(std::move(n));
}

Tensor Tensor::from(Shape shape, std::vector<double> data, bool requires_grad) {
    if (numel(shape) != data.size())
        throw ShapeMismatch("Tensor::from: " + shape_str(shape) + " vs " + std::to_string(data.size()) + " values");
    auto n = std::make_shared<Node>();
    n->shape = std::move(shape);
    n->value = std::move(data);
    n->requires_grad = requires_grad;
    return Tensor(std::move(n));
}

Tensor Tensor::scalar(double v, bool requires_grad) { return from({1}, {v}, requires_grad); }

std::size_t Tensor::rows() const {
    std::size_t r = 1;
    for (std::size_t i = 0; i + 1 < node_->shape.size(); ++i) r *= node_->shape[i];
    return r;
}

double Tensor::item() const {
    if (size() != 1) throw ShapeMismatch("item() on tensor of shape " + shape_str(shape()));
    return node_->value[0];
}

void Tensor::zero_grad() {
    if (node_->grad.size() == node_->value.size())
        std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

Tensor Tensor::detach() const { return from(node_->shape, node_->value, false); }

void Tensor::backward() {
    if (size() != 1) throw ShapeMismatch("backward() requires a scalar, got " + shape_str(shape()));
    // iterative post-order DFS for a topological order
    std::vector<Node*> order;
    std::unordered_set<Node*> seen;
    std::vector<std::pair<Node*, std::size_t>> stack{{node_.get(), 0}};
    seen.insert(node_.get());
    while (!stack.empty()) {
        auto& [n, i] = stack.back();
        if (i < n->parents.size()) {
            Node* p = n->parents[i++].get();
            if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
        } else {
            order.push_back(n);
            stack.pop_back();
        }
    }
    node_->ensure_grad();
    node_->grad[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (!n->backward) continue;
        n->ensure_grad();
        for (auto& p : n->parents)
            if (p->requires_grad) p->ensure_grad();
        n->backward(*n);
    }
}

bool grad_enabled() { return t_grad_enabled; }

NoGradGuard::NoGradGuard() : prev_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = prev_; }

namespace detail {

Tensor make_result(Shape shape, std::vector<double> value, std::vector<Tensor> parents,
                   std::function<void(Node&)> backward) {
    auto n = std::make_shared<Node>();
    n->shape = std::move(shape);
    n->value = std::move(value);
    bool needs = false;
    if (t_grad_enabled)
        for (const auto& p : parents) needs = needs || p.requires_grad();
    if (needs) {
        n->requires_grad = true;
        n->parents.reserve(parents.size());
        for (const auto& p : parents) n->parents.push_back(p.ptr());
        n->backward = std::move(backward);
    }
    return Tensor(std::move(n));
}

}  // namespace detail

}  // namespace phaforce::nn
