#pragma once

#include <memory>
#include <span>
#include <vector>

#include "phaforce/nn/layers.hpp"
#include "phaforce/normalizer.hpp"

namespace phaforce {

struct ForceEncoderConfig {
    std::size_t window = 36;
    std::size_t hidden = 32;
    std::size_t kernel = 2;
    std::vector<std::size_t> dilations{1, 2, 4, 8};
    std::size_t token_dim = 96;
    std::size_t pooled_dim = 32;

    /// Number of past samples (including the current one) a token can see.
    std::size_t receptive_field() const;
};

/// Dilated causal TCN over a wrench window. One instance is shared by CAP,
/// Slow and Fast; its parameters live in its own store.
class ForceEncoder {
public:
    ForceEncoder(const ForceEncoderConfig& cfg, std::uint64_t seed);

    const ForceEncoderConfig& config() const { return cfg_; }
    nn::ParamStore& params() { return params_; }
    const nn::ParamStore& params() const { return params_; }

    /// Raw windows [batch][window][6] (row-major) -> normalized tensor [batch*window x 6].
    nn::Tensor prepare(std::span<const double> raw, std::size_t batch) const;

    /// [batch*window x 6] normalized -> tokens [batch*window x token_dim].
    nn::Tensor tokens(const nn::Tensor& w, std::size_t batch) const;
    /// Mean over positions then projection: [batch x pooled_dim].
    nn::Tensor pool(const nn::Tensor& tokens, std::size_t batch) const;
    nn::Tensor pooled(const nn::Tensor& w, std::size_t batch) const { return pool(tokens(w, batch), batch); }

    Standardizer& normalizer() { return norm_; }
    const Standardizer& normalizer() const { return norm_; }

private:
    ForceEncoderConfig cfg_;
    nn::ParamStore params_;
    nn::Linear in_proj_, token_proj_, pool_proj_;
    std::vector<nn::Tensor> conv_w_, conv_b_;
    Standardizer norm_ = Standardizer::identity(6);
};

using ForceEncoderPtr = std::shared_ptr<ForceEncoder>;

}  // namespace phaforce
