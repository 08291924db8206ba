#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "phaforce/observation.hpp"
#include "phaforce/task.hpp"

namespace phaforce {

struct CapConfig {
    ImageLayout layout;
    std::vector<std::size_t> channels{8, 16, 32};
    std::size_t view_embed = 64;
    std::size_t hidden = 128;
};

/// Contact-aware phase predictor.
class Cap {
public:
    Cap(const CapConfig& cfg, std::size_t phases, ForceEncoderPtr encoder, std::uint64_t seed);

    struct Logits {
        nn::Tensor contact;  // [B x 1]
        nn::Tensor phase;    // [B x K]
    };

    Logits forward(const ObsBatch& batch) const;
    std::vector<PhaseSchedule> predict(std::span<const Observation* const> obs) const;
    PhaseSchedule predict(const Observation& obs) const;

    std::size_t phases() const { return phases_; }
    const CapConfig& config() const { return cfg_; }
    nn::ParamStore& params() { return params_; }
    const nn::ParamStore& params() const { return params_; }
    const ForceEncoderPtr& encoder() const { return encoder_; }
    Standardizer& proprio_norm() { return proprio_norm_; }
    const Standardizer& proprio_norm() const { return proprio_norm_; }

private:
    CapConfig cfg_;
    std::size_t phases_;
    ForceEncoderPtr encoder_;
    nn::ParamStore params_;
    std::vector<nn::ConvEncoder> views_;
    nn::Mlp fusion_;
    nn::Linear contact_head_, phase_head_;
    Standardizer proprio_norm_ = Standardizer::identity(kProprioDim);
};

struct CapLabels {
    std::uint8_t future_contact = 0;
    std::uint8_t future_phase = 0;
};

struct EmptyTrajectory : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

/// Future-window contact label (OR over t+1..t+horizon) and phase offset label
/// (phase at t+offset); windows past the last step are truncated to it.
std::vector<CapLabels> make_labels(std::span<const std::uint8_t> contact, std::span<const std::uint8_t> phase,
                                   std::size_t horizon = 8, std::size_t offset = 3);

/// Mean BCE on the contact logit plus weighted mean phase cross-entropy.
nn::Tensor cap_loss(const nn::Tensor& contact_logits, const nn::Tensor& phase_logits, std::span<const CapLabels> labels,
                    double phase_weight = 2.0);

}  // namespace phaforce
