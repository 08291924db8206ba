#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "phaforce/geometry.hpp"
#include "phaforce/observation.hpp"
#include "phaforce/slow.hpp"
#include "phaforce/task.hpp"

namespace phaforce {

using Vec6 = std::array<double, 6>;

struct TeacherGains {
    std::array<double, 3> lin{5e-5, 5e-5, 5e-5};  // m/N
    std::array<double, 3> ang{3e-2, 3e-2, 3e-2};  // rad/(N m)
    double target_fz = -12.0;                     // normal-force target while wiping (F_z = -F_n)
    double insert_fz = -8.0;                      // insertion drive force
};

struct UnregisteredPhase : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

/// delta_xi_i = p_c * c_i * sum_k belief_k * mask_k[i]
geometry::Twist route(const Vec6& c, const PhaseSchedule& sched, const PhaseSet& phases);

/// Per-phase admittance prior from the instantaneous wrench; nullopt when no
/// formula is registered under that phase name.
std::optional<Vec6> phase_teacher(const std::string& phase, const Vec6& wrench, const TeacherGains& g);

/// Belief-mixed, contact-gated teacher. Phases without a formula contribute
/// zero if their mask is zero and throw UnregisteredPhase otherwise.
geometry::Twist teacher_target(const Vec6& wrench, const PhaseSchedule& sched, const PhaseSet& phases,
                               const TeacherGains& g);

/// Mean absolute error over channels and batch.
nn::Tensor fast_loss(const nn::Tensor& predicted, const nn::Tensor& teacher);

struct FastConfig {
    std::size_t history = 4;
    std::vector<std::size_t> hidden{128, 128};
    double linear_cap = 0.002;                 // m per control step
    double angular_cap = 0.017453292519943295;  // rad per control step (1 deg)
    bool no_pb = false;
};

struct CorrectorObservation {
    std::vector<double> wrench;   // window x 6
    std::vector<double> proprio;  // kProprioDim
    std::vector<Action> slow_history;
    PhaseSchedule schedule;
};

/// Control-rate residual predictor.
class FastCorrector {
public:
    FastCorrector(const FastConfig& cfg, const PhaseSet& phases, ForceEncoderPtr encoder, std::uint64_t seed);

    /// Model-ready inputs; pooled force embedding is computed by the (frozen) encoder.
    struct Inputs {
        std::size_t batch = 0;
        nn::Tensor features;  // [B x in_dim]
        nn::Tensor contact;   // [B]
        nn::Tensor belief;    // [B x K]
    };
    Inputs prepare(std::span<const CorrectorObservation* const> obs) const;

    /// Channel residual c, tanh-bounded per channel: [B x 6].
    nn::Tensor channel(const Inputs& in) const;
    /// Differentiable routing of c by belief and contact probability: [B x 6].
    nn::Tensor routed(const nn::Tensor& channel, const Inputs& in) const;

    struct Prediction {
        Vec6 channel{};
        geometry::Twist twist;
    };
    Prediction predict(const CorrectorObservation& obs) const;

    /// Per-channel caps [lin x3, ang x3].
    Vec6 caps() const;
    PhaseSchedule effective_schedule(const PhaseSchedule& s) const;

    const FastConfig& config() const { return cfg_; }
    const PhaseSet& phases() const { return phases_; }
    nn::ParamStore& params() { return params_; }
    const nn::ParamStore& params() const { return params_; }
    const ForceEncoderPtr& encoder() const { return encoder_; }
    Standardizer& proprio_norm() { return proprio_norm_; }
    const Standardizer& proprio_norm() const { return proprio_norm_; }
    Standardizer& history_norm() { return history_norm_; }
    const Standardizer& history_norm() const { return history_norm_; }

private:
    FastConfig cfg_;
    PhaseSet phases_;
    ForceEncoderPtr encoder_;
    nn::ParamStore params_;
    nn::Mlp mlp_;
    nn::Tensor mask_matrix_;  // [K x 6]
    Standardizer proprio_norm_ = Standardizer::identity(kProprioDim);
    Standardizer history_norm_;
};

}  // namespace phaforce
