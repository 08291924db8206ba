#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <vector>

#include "phaforce/observation.hpp"
#include "phaforce/rng.hpp"
#include "phaforce/task.hpp"

namespace phaforce {

using Action = std::array<double, 8>;  // position, quaternion (w,x,y,z), gripper width
using ActionChunk = std::vector<Action>;

inline constexpr std::size_t kTrainActionDim = 10;  // position, 6D rotation, gripper width

std::array<double, kTrainActionDim> action_to_train(const Action& a);
/// Rotation part is orthonormalized; throws geometry::DegenerateRotation on collapse.
Action action_from_train(std::span<const double> x);

struct UntrainedModel : std::logic_error {
    using std::logic_error::logic_error;
};

/// Cosine noise schedule with deterministic (eta = 0) strided sampling.
class DdimSchedule {
public:
    explicit DdimSchedule(std::size_t train_steps = 100);

    std::size_t train_steps() const { return alpha_bar_.size(); }
    double alpha_bar(std::size_t t) const { return alpha_bar_.at(t); }
    /// Descending timesteps used at inference, e.g. 99, 89, ..., 9 for 10 of 100.
    std::vector<std::size_t> inference_timesteps(std::size_t steps) const;

    using EpsFn = std::function<std::vector<double>(const std::vector<double>& x, std::size_t t)>;
    /// Runs the deterministic sampler from x (pure noise at the first timestep).
    /// When `clip` is set the clean-sample estimate is clamped to [-1, 1].
    std::vector<double> sample(std::vector<double> x, std::size_t steps, const EpsFn& eps, bool clip) const;

private:
    std::vector<double> alpha_bar_;
};

/// 2k-dim sinusoidal embedding of a diffusion timestep.
std::vector<double> timestep_embedding(std::size_t t, std::size_t dim);

/// Cross-attention from the visual token to force tokens, head-wise phase
/// gating, and orthogonal residual injection into the visual token.
class DualGatedFusion {
public:
    struct Config {
        std::size_t dim = 96;
        std::size_t heads = 8;
        std::size_t phases = 5;
        std::size_t gate_hidden = 32;
        double alpha_init = 0.5;
        double alpha_min = 0.0;
        double alpha_max = 2.0;
        double eps = 1e-6;
    };

    DualGatedFusion() = default;
    DualGatedFusion(nn::ParamStore& ps, const Config& cfg, Rng& rng);

    struct Out {
        nn::Tensor gates;       // [B x H]
        nn::Tensor delta;       // [B x d], gated heads after the output projection
        nn::Tensor delta_perp;  // [B x d]
        nn::Tensor fused;       // [B x d]
    };

    /// v [B x d], force tokens [B*window x d], contact_prob [B], belief [B x K].
    Out operator()(const nn::Tensor& v, const nn::Tensor& tokens, const nn::Tensor& contact_prob,
                   const nn::Tensor& belief) const;
    nn::Tensor gates(const nn::Tensor& belief) const;
    /// Same as operator() with externally supplied head gates [B x H].
    Out with_gates(const nn::Tensor& v, const nn::Tensor& tokens, const nn::Tensor& contact_prob,
                   const nn::Tensor& gates) const;

    /// Clamps the injection gain back into its range.
    void project_alpha();
    double alpha() const { return alpha_[0]; }
    const Config& config() const { return cfg_; }

private:
    Config cfg_;
    nn::Linear q_, k_, v_, o_;
    nn::Mlp gate_;
    nn::Tensor alpha_;
};

struct SlowConfig {
    ImageLayout layout;
    std::vector<std::size_t> channels{8, 16, 32};
    std::size_t view_embed = 32;  // visual token dim = views * view_embed
    std::size_t heads = 8;
    std::size_t gate_hidden = 32;
    std::size_t cond_dim = 128;
    std::size_t denoiser_hidden = 256;
    std::size_t time_embed = 32;
    std::size_t horizon = 16;
    std::size_t train_timesteps = 100;
    std::size_t infer_timesteps = 10;
    double alpha_init = 0.5;
    double alpha_min = 0.0;
    double alpha_max = 2.0;
    bool clip_sample = true;
    bool no_ori = false;  // condition on the attention output instead of the fused token
    bool no_pb = false;   // uniform phase belief everywhere
    bool relative = true;  // chunk poses relative to the TCP pose at the snapshot

    std::size_t token_dim() const { return layout.views * view_embed; }
};

/// Diffusion chunk planner conditioned on the fused vision-force token.
class SlowPlanner {
public:
    SlowPlanner(const SlowConfig& cfg, std::size_t phases, ForceEncoderPtr encoder, std::uint64_t seed);

    struct Conditioning {
        nn::Tensor cond;
        DualGatedFusion::Out fusion;
        nn::Tensor visual;
    };

    Conditioning condition(const ObsBatch& b, std::span<const PhaseSchedule> sched) const;
    /// Denoiser forward: noisy chunk [B x H_a*10], timesteps, conditioning [B x cond_dim].
    nn::Tensor predict_eps(const nn::Tensor& noisy, std::span<const std::size_t> t, const nn::Tensor& cond) const;

    /// Epsilon-prediction MSE at uniformly drawn timesteps; `x0` holds normalized
    /// chunks [B x H_a*10]. Each chunk is noised `draws` times.
    nn::Tensor loss(const ObsBatch& b, std::span<const PhaseSchedule> sched, const nn::Tensor& x0, Rng& rng,
                    std::size_t draws = 1) const;

    ActionChunk sample(const Observation& obs, const PhaseSchedule& sched, std::uint64_t seed) const;

    /// Training representation of a chunk (unscaled rows); with `relative`
    /// poses are expressed against the TCP pose in `proprio`.
    std::vector<std::array<double, kTrainActionDim>> chunk_rows(std::span<const Action> chunk,
                                                                std::span<const double> proprio) const;
    /// Normalized training vector for a chunk of wire actions.
    std::vector<double> encode_chunk(std::span<const Action> chunk, std::span<const double> proprio) const;

    void set_trained(bool on) { trained_ = on; }
    bool trained() const { return trained_; }
    void project_alpha() { fusion_.project_alpha(); }

    const SlowConfig& config() const { return cfg_; }
    std::size_t phases() const { return phases_; }
    nn::ParamStore& params() { return params_; }
    const nn::ParamStore& params() const { return params_; }
    const ForceEncoderPtr& encoder() const { return encoder_; }
    const DualGatedFusion& fusion() const { return fusion_; }
    const DdimSchedule& schedule() const { return ddim_; }
    MinMaxScaler& action_scaler() { return scaler_; }
    const MinMaxScaler& action_scaler() const { return scaler_; }
    Standardizer& proprio_norm() { return proprio_norm_; }
    const Standardizer& proprio_norm() const { return proprio_norm_; }

private:
    SlowConfig cfg_;
    std::size_t phases_;
    ForceEncoderPtr encoder_;
    nn::ParamStore params_;
    std::vector<nn::ConvEncoder> views_;
    DualGatedFusion fusion_;
    nn::Linear cond_;
    nn::Mlp denoiser_;
    nn::Linear skip_;
    DdimSchedule ddim_;
    MinMaxScaler scaler_;
    Standardizer proprio_norm_ = Standardizer::identity(kProprioDim);
    bool trained_ = false;
};

}  // namespace phaforce
