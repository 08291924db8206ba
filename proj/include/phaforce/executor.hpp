#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "phaforce/cap.hpp"
#include "phaforce/fast.hpp"
#include "phaforce/sim.hpp"
#include "phaforce/slow.hpp"

namespace phaforce::exec {

using geometry::Pose;

struct RateError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct RateConfig {
    double f_s = 6.0;   // planner rate, Hz
    double f_c = 24.0;  // control rate, Hz
    std::size_t horizon = 16;
    std::size_t latency_discard = 3;  // leading chunk steps dropped at splice time
    std::size_t inference_delay = 3;  // control steps between snapshot and chunk arrival
    int interp_substeps = 4;
    double residual_linear_bound = 0.05;  // m, accumulated residual offset
    double residual_angular_bound = 0.5235987755982988;  // rad (30 deg)

    std::size_t period() const;  // control steps per planning period
};
void validate(const RateConfig& r);
nlohmann::json to_json(const RateConfig& r);
RateConfig rate_config_from_json(const nlohmann::json& j, const RateConfig& base);

/// Trained models, or ablation stand-ins: a null `fast` disables the residual.
struct Policy {
    std::shared_ptr<const Cap> cap;
    std::shared_ptr<const SlowPlanner> slow;
    std::shared_ptr<const FastCorrector> fast;
};

/// Source of base chunks; the default samples the Slow planner.
using ChunkSource = std::function<ActionChunk(const Observation&, const PhaseSchedule&, std::uint64_t seed)>;

struct TraceRow {
    std::size_t t = 0;
    std::size_t chunk_index = 0;  // index into the active chunk
    std::size_t chunk_id = 0;
    bool starved = false;
    Pose base;
    Vec6 residual{};  // routed, clamped per-step twist
    Pose executed;
    double gripper = 0.0;
    Vec6 wrench{};
    double normal_force = 0.0;
    bool contact = false;
    double contact_prob = 0.0;
    std::vector<double> belief;
    std::size_t phase = 0;  // geometric ground truth
};

struct Trace {
    std::string task;
    std::uint64_t seed = 0;
    std::vector<TraceRow> rows;
    std::size_t starvations = 0;
    bool workspace_violation = false;
    // final state
    double depth = 0.0;
    double lateral = 0.0;
    double seat_depth = 0.0;
    double clearance = 0.0;
    double wiped_fraction = 0.0;
};

struct EpisodeMetrics {
    bool success = false;
    double wiping_score = 0.0;
    std::optional<double> mean_fn;  // empty without contact steps
    double over_ratio = 0.0;
    double under_ratio = 0.0;
    std::size_t contact_steps = 0;
};

inline constexpr double kOverPressure = 25.0;  // N
inline constexpr double kUnderPressure = 2.5;  // N
inline constexpr const char* kNotApplicable = "--";

Trace run_episode(const Policy& policy, sim::Env& env, const RateConfig& rates, std::uint64_t seed,
                  const ChunkSource& source = {});
EpisodeMetrics compute_metrics(const Trace& trace, const std::string& task);

void write_trace_csv(const Trace& trace, const std::filesystem::path& path);
/// Little-endian f64 rows with the same columns as the CSV.
void write_trace_binary(const Trace& trace, const std::filesystem::path& path);
std::vector<std::string> trace_columns(std::size_t phases);

struct TrialResult {
    std::uint64_t seed = 0;
    EpisodeMetrics metrics;
    std::size_t steps = 0;
    std::size_t starvations = 0;
};

struct Summary {
    std::string task;
    bool ood = false;
    std::string variant;
    std::size_t n_trials = 0;
    double sr = 0.0;
    std::optional<double> score;  // wiping only
    std::optional<double> mean_fn, over, under;
    std::vector<TrialResult> trials;
};

inline constexpr std::size_t kDefaultTrials = 20;

/// Trial i runs with seed mix_seed(seed, i). Traces go to `trace_dir` when set.
Summary batch_eval(const Policy& policy, const sim::SimConfig& sim, const RateConfig& rates, std::size_t n_trials,
                   std::uint64_t seed, const std::string& variant = "full",
                   const std::optional<std::filesystem::path>& trace_dir = std::nullopt);
nlohmann::json to_json(const Summary& s);
void write_trials_csv(const Summary& s, const std::filesystem::path& path);

}  // namespace phaforce::exec
