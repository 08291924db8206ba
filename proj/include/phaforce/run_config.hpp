#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>

#include <nlohmann/json.hpp>

#include "phaforce/cap.hpp"
#include "phaforce/executor.hpp"
#include "phaforce/fast.hpp"
#include "phaforce/sim.hpp"
#include "phaforce/slow.hpp"
#include "phaforce/train.hpp"

namespace phaforce {

struct RunConfigError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct Ablation {
    bool no_pb = false;    // uniform phase belief in training and at test time
    bool no_ori = false;   // planner conditions on the raw attention output
    bool no_fast = false;  // residual disabled

    bool any() const { return no_pb || no_ori || no_fast; }
    /// "full", or the enabled flags joined by '+'.
    std::string name() const;
};
/// Parses "full" or a comma/plus separated list of no_pb, no_ori, no_fast.
Ablation parse_ablation(const std::string& s);

/// Everything a command needs; reproducible from the config file and seed.
struct RunConfig {
    std::string task = "charger";
    bool ood = false;
    std::uint64_t seed = 1;
    std::size_t demos = 80;
    double held_out_fraction = 0.2;
    std::size_t trials = exec::kDefaultTrials;

    sim::SimConfig sim;
    ForceEncoderConfig encoder;
    CapConfig cap;
    SlowConfig slow;
    FastConfig fast;
    TeacherGains teacher;
    exec::RateConfig rates;
    train::StageConfig train_cap, train_slow, train_fast;
    Ablation ablation;

    /// Sim config with the OOD offset applied.
    sim::SimConfig env_config() const;
    /// Model configs with the ablation flags folded in.
    SlowConfig slow_config() const;
    FastConfig fast_config() const;
};

/// Defaults for a task id (charger, usb, wiping); unknown ids throw RunConfigError.
RunConfig default_run_config(const std::string& task);
/// The "task" key selects the defaults; every other key overrides them.
RunConfig run_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const RunConfig& c);
nlohmann::json to_json(const train::StageConfig& s);
/// Cross-field checks; throws RunConfigError.
void validate(const RunConfig& c);

/// On-disk layout of one task's artifacts under the output root.
struct RunPaths {
    std::filesystem::path root;

    std::filesystem::path task_dir(const RunConfig& c) const { return root / c.task; }
    std::filesystem::path dataset(const RunConfig& c) const;
    std::filesystem::path cap(const RunConfig& c) const;
    std::filesystem::path slow(const RunConfig& c) const;
    std::filesystem::path fast(const RunConfig& c) const;
    std::filesystem::path eval(const RunConfig& c) const;
    std::filesystem::path ablate(const RunConfig& c) const;
};

}  // namespace phaforce
