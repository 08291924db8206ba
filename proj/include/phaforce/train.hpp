#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "phaforce/cap.hpp"
#include "phaforce/fast.hpp"
#include "phaforce/sim.hpp"
#include "phaforce/slow.hpp"

namespace phaforce::train {

using Logger = std::function<void(const std::string&)>;

/// Episode-level split; held-out episodes never contribute to normalizers.
struct Split {
    std::vector<std::size_t> train, held_out;
};
Split split_episodes(std::size_t n, double held_out_fraction, std::uint64_t seed);

struct StageConfig {
    std::size_t steps = 1500;
    std::size_t batch = 32;
    double lr = 1e-3;
    double final_lr_fraction = 0.1;  // cosine decay down to lr * this
    double clip_norm = 1.0;
    std::uint64_t seed = 0;
    std::size_t log_every = 100;
    std::size_t noise_draws = 1;  // diffusion noise samples per chunk (Slow only)
};

struct CurveRow {
    std::size_t step = 0;
    double loss = 0.0;
    double lr = 0.0;
};

/// (episode, step) index into a dataset.
struct SampleRef {
    std::uint32_t episode = 0;
    std::uint32_t t = 0;
};
std::vector<SampleRef> samples_of(const sim::Dataset& ds, const std::vector<std::size_t>& episodes);

struct CapMetrics {
    double loss = 0.0;
    double contact_accuracy = 0.0;
    double phase_accuracy = 0.0;
    double anticipation = 0.0;  // fraction of contact onsets with p_c >= 0.5 at the onset step
    std::size_t onsets = 0;
    std::size_t samples = 0;
};

struct CapRun {
    std::shared_ptr<Cap> cap;
    std::vector<CurveRow> curve;
    CapMetrics held_out;
};

/// Trains the shared force encoder together with CAP.
CapRun train_cap(const sim::Dataset& ds, const Split& split, const CapConfig& cfg, const ForceEncoderConfig& enc_cfg,
                 const StageConfig& stage, const Logger& log = {});
CapMetrics evaluate_cap(const Cap& cap, const sim::Dataset& ds, const std::vector<std::size_t>& episodes);

/// CAP schedules for every step of the listed episodes, in samples_of order.
std::vector<PhaseSchedule> cap_schedules(const Cap& cap, const sim::Dataset& ds, const std::vector<SampleRef>& refs);

struct SlowRun {
    std::shared_ptr<SlowPlanner> slow;
    std::vector<CurveRow> curve;
    double held_out_loss = 0.0;
};

/// Trains the planner with CAP and the force encoder frozen.
SlowRun train_slow(const sim::Dataset& ds, const Split& split, const Cap& cap, const SlowConfig& cfg,
                   const StageConfig& stage, const Logger& log = {});

struct FastRun {
    std::shared_ptr<FastCorrector> fast;
    std::vector<CurveRow> curve;
    double held_out_l1 = 0.0;  // in cap-normalized units
    double zero_l1 = 0.0;      // same metric for the all-zero predictor
};

/// Offline teacher supervision over recorded demos, CAP and encoder frozen.
FastRun train_fast(const sim::Dataset& ds, const Split& split, const Cap& cap, const FastConfig& cfg,
                   const TeacherGains& gains, const StageConfig& stage, const Logger& log = {});

/// Teacher twist for step t of an episode (instantaneous wrench, given schedule).
Vec6 teacher_for(const sim::Episode& ep, std::size_t t, const PhaseSchedule& sched, const PhaseSet& phases,
                 const TeacherGains& gains, bool no_pb);

void write_curve(const std::string& path, const std::vector<CurveRow>& curve);

}  // namespace phaforce::train
