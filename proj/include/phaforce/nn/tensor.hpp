#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace phaforce::nn {

using Shape = std::vector<std::size_t>;

struct ShapeMismatch : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct NonFiniteInput : std::domain_error {
    using std::domain_error::domain_error;
};

std::size_t numel(const Shape& s);
std::string shape_str(const Shape& s);

struct Node {
    Shape shape;
    std::vector<double> value;
    std::vector<double> grad;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backward;
    bool requires_grad = false;

    void ensure_grad() {
        if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
    }
};

/// Handle to a node of the autodiff tape. Copies share the node.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::shared_ptr<Node> n) : node_(std::move(n)) {}

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor from(Shape shape, std::vector<double> data, bool requires_grad = false);
    static Tensor scalar(double v, bool requires_grad = false);

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const { return node_->shape; }
    std::size_t dim(std::size_t i) const { return node_->shape.at(i); }
    std::size_t ndim() const { return node_->shape.size(); }
    std::size_t size() const { return node_->value.size(); }
    /// Leading dimension for 2-D views: product of all dims but the last.
    std::size_t rows() const;
    std::size_t cols() const { return node_->shape.back(); }

    std::span<double> data() { return node_->value; }
    std::span<const double> data() const { return node_->value; }
    std::span<double> grad() {
        node_->ensure_grad();
        return node_->grad;
    }
    std::span<const double> grad() const { return node_->grad; }
    bool has_grad() const { return node_->grad.size() == node_->value.size(); }
    double item() const;
    double operator[](std::size_t i) const { return node_->value[i]; }

    bool requires_grad() const { return node_->requires_grad; }
    void zero_grad();

    /// Reverse-mode sweep from this (scalar) tensor.
    void backward();

    /// Detached copy of the value (no tape link).
    Tensor detach() const;

    Node* node() const { return node_.get(); }
    const std::shared_ptr<Node>& ptr() const { return node_; }
    bool same(const Tensor& o) const { return node_ == o.node_; }

private:
    std::shared_ptr<Node> node_;
};

/// Tape recording is on by default; disable for inference.
bool grad_enabled();

class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool prev_;
};

namespace detail {
/// Builds an op result; parents and backward are dropped when no parent needs grad.
Tensor make_result(Shape shape, std::vector<double> value, std::vector<Tensor> parents,
                   std::function<void(Node&)> backward);
}  // namespace detail

}  // namespace phaforce::nn
