#include "phaforce/fast.hpp"

#include <cmath>

namespace phaforce {

using namespace nn;

geometry::Twist route(const Vec6& c, const PhaseSchedule& sched, const PhaseSet& phases) {
    if (sched.belief.size() != phases.size()) throw ShapeMismatch("belief size differs from phase count");
    std::array<double, 6> out{};
    for (int i = 0; i < 6; ++i) {
        double w = 0.0;
        for (std::size_t k = 0; k < phases.size(); ++k) w += sched.belief[k] * phases.masks[k][i];
        out[i] = sched.contact_prob * c[i] * w;
    }
    return geometry::Twist::from_array(out);
}

std::optional<Vec6> phase_teacher(const std::string& phase, const Vec6& F, const TeacherGains& g) {
    if (phase == "search") return Vec6{-g.lin[0] * F[0], -g.lin[1] * F[1], 0, 0, 0, -g.ang[2] * F[5]};
    if (phase == "wiping") return Vec6{0, 0, g.lin[2] * (g.target_fz - F[2]), 0, 0, 0};
    if (phase == "insert") return Vec6{0, 0, g.lin[2] * (g.insert_fz - F[2]), 0, 0, -g.ang[2] * F[5]};
    if (phase == "unlock") return Vec6{-g.lin[0] * F[0], -g.lin[1] * F[1], 0, 0, 0, 0};
    if (phase == "pull") return Vec6{-g.lin[0] * F[0], -g.lin[1] * F[1], 0, -g.ang[0] * F[3], -g.ang[1] * F[4], 0};
    return std::nullopt;
}

geometry::Twist teacher_target(const Vec6& wrench, const PhaseSchedule& sched, const PhaseSet& phases,
                               const TeacherGains& g) {
    if (sched.belief.size() != phases.size()) throw ShapeMismatch("belief size differs from phase count");
    Vec6 mix{};
    for (std::size_t k = 0; k < phases.size(); ++k) {
        const auto t = phase_teacher(phases.names[k], wrench, g);
        if (!t) {
            for (double m : phases.masks[k])
                if (m != 0.0) throw UnregisteredPhase("no teacher registered for phase '" + phases.names[k] + "'");
            continue;  // planner-only phase
        }
        for (int i = 0; i < 6; ++i) mix[i] += sched.belief[k] * (*t)[i];
    }
    for (auto& v : mix) v *= sched.contact_prob;
    return geometry::Twist::from_array(mix);
}

Tensor fast_loss(const Tensor& predicted, const Tensor& teacher) { return l1(predicted, teacher); }

FastCorrector::FastCorrector(const FastConfig& cfg, const PhaseSet& phases, ForceEncoderPtr encoder, std::uint64_t seed)
    : cfg_(cfg), phases_(phases), encoder_(std::move(encoder)),
      history_norm_(Standardizer::identity(cfg.history * 8)) {
    Rng rng(seed);
    std::vector<std::size_t> widths{encoder_->config().pooled_dim + 6 + kProprioDim + cfg.history * 8 + 1 + phases.size()};
    widths.insert(widths.end(), cfg.hidden.begin(), cfg.hidden.end());
    widths.push_back(6);
    mlp_ = Mlp(params_, "fast.mlp", widths, rng);
    std::vector<double> m;
    for (const auto& mk : phases.masks) m.insert(m.end(), mk.begin(), mk.end());
    mask_matrix_ = Tensor::from({phases.size(), 6}, std::move(m));
}

Vec6 FastCorrector::caps() const {
    const double l = cfg_.linear_cap, a = cfg_.angular_cap;
    return {l, l, l, a, a, a};
}

PhaseSchedule FastCorrector::effective_schedule(const PhaseSchedule& s) const {
    return cfg_.no_pb ? PhaseSchedule::uniform(phases_.size(), s.contact_prob) : s;
}

FastCorrector::Inputs FastCorrector::prepare(std::span<const CorrectorObservation* const> obs) const {
    const std::size_t B = obs.size(), K = phases_.size(), Hn = cfg_.history * 8;
    std::vector<double> wrench, proprio, history, pc(B), belief(B * K);
    for (std::size_t b = 0; b < B; ++b) {
        const auto& o = *obs[b];
        if (o.slow_history.size() != cfg_.history) throw ShapeMismatch("slow history length differs from config");
        if (o.proprio.size() != kProprioDim) throw ShapeMismatch("proprio size");
        wrench.insert(wrench.end(), o.wrench.begin(), o.wrench.end());
        proprio.insert(proprio.end(), o.proprio.begin(), o.proprio.end());
        for (const auto& a : o.slow_history) history.insert(history.end(), a.begin(), a.end());
        const PhaseSchedule s = effective_schedule(o.schedule);
        if (s.belief.size() != K) throw ShapeMismatch("belief size differs from phase count");
        pc[b] = s.contact_prob;
        std::copy(s.belief.begin(), s.belief.end(), belief.begin() + static_cast<long>(b * K));
    }
    proprio_norm_.apply(proprio);
    history_norm_.apply(history);
    Inputs in;
    in.batch = B;
    in.contact = Tensor::from({B}, pc);
    in.belief = Tensor::from({B, K}, belief);
    const Tensor window = encoder_->prepare(wrench, B);
    const Tensor pooled = encoder_->pooled(window, B).detach();
    // the newest sample enters directly as well, unclamped, so large forces extrapolate linearly
    const std::size_t W = encoder_->config().window;
    const auto& norm = encoder_->normalizer();
    std::vector<double> latest(B * 6);
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t i = 0; i < 6; ++i)
            latest[b * 6 + i] = (wrench[((b + 1) * W - 1) * 6 + i] - norm.mean[i]) / norm.stddev[i];
    in.features = concat_cols({pooled, Tensor::from({B, 6}, std::move(latest)), Tensor::from({B, kProprioDim}, std::move(proprio)),
                               Tensor::from({B, Hn}, std::move(history)), Tensor::from({B, 1}, pc), in.belief});
    return in;
}

Tensor FastCorrector::channel(const Inputs& in) const {
    const Vec6 cap = caps();
    std::vector<double> scale_rows(in.batch * 6);
    for (std::size_t b = 0; b < in.batch; ++b)
        for (int i = 0; i < 6; ++i) scale_rows[b * 6 + i] = cap[i];
    return mul(tanh(mlp_(in.features)), Tensor::from({in.batch, 6}, std::move(scale_rows)));
}

Tensor FastCorrector::routed(const Tensor& c, const Inputs& in) const {
    return mul(c, mul_colvec(matmul(in.belief, mask_matrix_), in.contact));
}

FastCorrector::Prediction FastCorrector::predict(const CorrectorObservation& obs) const {
    NoGradGuard ng;
    const CorrectorObservation* p = &obs;
    const Inputs in = prepare(std::span<const CorrectorObservation* const>(&p, 1));
    const Tensor c = channel(in);
    Prediction out;
    for (int i = 0; i < 6; ++i) out.channel[i] = c[i];
    out.twist = route(out.channel, effective_schedule(obs.schedule), phases_);
    return out;
}

}  // namespace phaforce
