#include "phaforce/nn/optim.hpp"

#include <cmath>

namespace phaforce::nn {

Adam::Adam(std::vector<Tensor> params, AdamConfig cfg) : params_(std::move(params)), cfg_(cfg) {
    for (const auto& p : params_) {
        m_.emplace_back(p.size(), 0.0);
        v_.emplace_back(p.size(), 0.0);
    }
}

void Adam::zero_grad() {
    for (auto& p : params_) p.zero_grad();
}

void Adam::step() {
    ++t_;
    double scale = 1.0;
    if (cfg_.clip_norm > 0.0) {
        double n2 = 0.0;
        for (auto& p : params_)
            if (p.has_grad())
                for (double g : p.grad()) n2 += g * g;
        const double n = std::sqrt(n2);
        if (n > cfg_.clip_norm) scale = cfg_.clip_norm / n;
    }
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (std::size_t k = 0; k < params_.size(); ++k) {
        auto& p = params_[k];
        if (!p.has_grad()) continue;
        auto w = p.data();
        auto g = p.grad();
        auto& m = m_[k];
        auto& v = v_[k];
        for (std::size_t i = 0; i < w.size(); ++i) {
            const double gi = g[i] * scale;
            if (!std::isfinite(gi)) throw NonFiniteInput("adam: non-finite gradient");
            m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * gi;
            v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * gi * gi;
            const double mh = m[i] / bc1;
            const double vh = v[i] / bc2;
            w[i] -= cfg_.lr * mh / (std::sqrt(vh) + cfg_.eps);
            if (!std::isfinite(w[i])) throw NonFiniteInput("adam: parameter became non-finite");
        }
    }
}

}  // namespace phaforce::nn
