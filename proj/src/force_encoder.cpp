#include "phaforce/force_encoder.hpp"

#include <cmath>

#include "phaforce/rng.hpp"

namespace phaforce {

using namespace nn;

std::size_t ForceEncoderConfig::receptive_field() const {
    std::size_t rf = 1;
    for (auto d : dilations) rf += (kernel - 1) * d;
    return rf;
}

ForceEncoder::ForceEncoder(const ForceEncoderConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
    Rng rng(seed);
    in_proj_ = Linear(params_, "force.in", 6, cfg.hidden, rng);
    for (std::size_t i = 0; i < cfg.dilations.size(); ++i) {
        const std::string p = "force.block" + std::to_string(i);
        const std::size_t fan = cfg.kernel * cfg.hidden;
        conv_w_.push_back(params_.add(p + ".W", {cfg.kernel, cfg.hidden, cfg.hidden}, fan, rng));
        conv_b_.push_back(params_.add(p + ".b", {cfg.hidden}, fan, rng));
    }
    token_proj_ = Linear(params_, "force.token", cfg.hidden, cfg.token_dim, rng);
    pool_proj_ = Linear(params_, "force.pool", cfg.token_dim, cfg.pooled_dim, rng);
}

Tensor ForceEncoder::prepare(std::span<const double> raw, std::size_t batch) const {
    if (raw.size() != batch * cfg_.window * 6)
        throw ShapeMismatch("force window: expected " + std::to_string(batch * cfg_.window * 6) + " values, got " +
                            std::to_string(raw.size()));
    for (double v : raw)
        if (!std::isfinite(v)) throw NonFiniteInput("non-finite wrench sample");
    return Tensor::from({batch * cfg_.window, 6}, norm_.applied(raw));
}

Tensor ForceEncoder::tokens(const Tensor& w, std::size_t batch) const {
    if (w.cols() != 6 || w.rows() != batch * cfg_.window)
        throw ShapeMismatch("force window tensor " + shape_str(w.shape()));
    Tensor h = in_proj_(w);
    for (std::size_t i = 0; i < conv_w_.size(); ++i)
        h = add(h, relu(add_rowvec(dilated_causal_conv1d(h, conv_w_[i], batch, cfg_.dilations[i]), conv_b_[i])));
    return token_proj_(h);
}

Tensor ForceEncoder::pool(const Tensor& tokens, std::size_t batch) const { return pool_proj_(group_mean(tokens, batch)); }

}  // namespace phaforce
