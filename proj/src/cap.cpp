#include "phaforce/cap.hpp"

#include <algorithm>

#include "phaforce/rng.hpp"

namespace phaforce {

using namespace nn;

Cap::Cap(const CapConfig& cfg, std::size_t phases, ForceEncoderPtr encoder, std::uint64_t seed)
    : cfg_(cfg), phases_(phases), encoder_(std::move(encoder)) {
    Rng rng(seed);
    for (std::size_t v = 0; v < cfg.layout.views; ++v)
        views_.emplace_back(params_, "cap.view" + std::to_string(v), cfg.layout.side, cfg.channels, cfg.view_embed, rng);
    const std::size_t in = cfg.layout.views * cfg.view_embed + encoder_->config().pooled_dim + kProprioDim;
    fusion_ = Mlp(params_, "cap.fusion", {in, cfg.hidden, cfg.hidden}, rng);
    contact_head_ = Linear(params_, "cap.contact", cfg.hidden, 1, rng);
    phase_head_ = Linear(params_, "cap.phase", cfg.hidden, phases, rng);
}

Cap::Logits Cap::forward(const ObsBatch& b) const {
    std::vector<Tensor> parts;
    for (std::size_t v = 0; v < views_.size(); ++v) parts.push_back(views_[v](b.views[v]));
    parts.push_back(encoder_->pooled(b.wrench, b.batch));
    parts.push_back(b.proprio);
    Tensor h = relu(fusion_(concat_cols(parts)));
    return {contact_head_(h), phase_head_(h)};
}

std::vector<PhaseSchedule> Cap::predict(std::span<const Observation* const> obs) const {
    NoGradGuard ng;
    const ObsBatch b = make_obs_batch(obs, cfg_.layout, *encoder_, proprio_norm_);
    const Logits l = forward(b);
    std::vector<PhaseSchedule> out(b.batch);
    for (std::size_t i = 0; i < b.batch; ++i) {
        out[i].contact_prob = sigmoid(l.contact[i]);
        out[i].belief = softmax(std::span<const double>(l.phase.data().data() + i * phases_, phases_));
    }
    return out;
}

PhaseSchedule Cap::predict(const Observation& obs) const {
    const Observation* p = &obs;
    return predict(std::span<const Observation* const>(&p, 1)).front();
}

std::vector<CapLabels> make_labels(std::span<const std::uint8_t> contact, std::span<const std::uint8_t> phase,
                                   std::size_t horizon, std::size_t offset) {
    if (contact.empty() || phase.empty()) throw EmptyTrajectory("cannot label an empty trajectory");
    if (contact.size() != phase.size()) throw std::invalid_argument("contact and phase tracks differ in length");
    const std::size_t T = contact.size();
    std::vector<CapLabels> out(T);
    for (std::size_t t = 0; t < T; ++t) {
        const std::size_t last = std::min(T - 1, t + horizon);
        std::uint8_t any = 0;
        for (std::size_t i = t + 1; i <= last; ++i) any |= contact[i] ? 1 : 0;
        out[t].future_contact = any;
        out[t].future_phase = phase[std::min(T - 1, t + offset)];
    }
    return out;
}

Tensor cap_loss(const Tensor& contact_logits, const Tensor& phase_logits, std::span<const CapLabels> labels,
                double phase_weight) {
    std::vector<double> c(labels.size());
    std::vector<int> p(labels.size());
    for (std::size_t i = 0; i < labels.size(); ++i) {
        c[i] = labels[i].future_contact;
        p[i] = labels[i].future_phase;
    }
    return add(bce_with_logits(contact_logits, c), scale(cross_entropy(phase_logits, p), phase_weight));
}

}  // namespace phaforce
