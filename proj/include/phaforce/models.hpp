#pragma once

#include <filesystem>
#include <memory>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "phaforce/cap.hpp"
#include "phaforce/fast.hpp"
#include "phaforce/slow.hpp"

namespace phaforce::models {

struct ModelConfigError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// JSON round trips; parsing starts from `base`, rejects unknown keys and validates.
nlohmann::json to_json(const ForceEncoderConfig& c);
nlohmann::json to_json(const CapConfig& c);
nlohmann::json to_json(const SlowConfig& c);
nlohmann::json to_json(const FastConfig& c);
nlohmann::json to_json(const TeacherGains& g);
ForceEncoderConfig encoder_config_from_json(const nlohmann::json& j, const ForceEncoderConfig& base);
CapConfig cap_config_from_json(const nlohmann::json& j, const CapConfig& base);
SlowConfig slow_config_from_json(const nlohmann::json& j, const SlowConfig& base);
FastConfig fast_config_from_json(const nlohmann::json& j, const FastConfig& base);
TeacherGains teacher_gains_from_json(const nlohmann::json& j, const TeacherGains& base);

void validate(const ForceEncoderConfig& c);
/// Also checks that the force token width matches the visual token width and
/// divides evenly into attention heads.
void validate(const SlowConfig& c, const ForceEncoderConfig& enc);

// Checkpoints. A CAP checkpoint directory also holds the shared force encoder.
void save_cap(const std::filesystem::path& dir, const Cap& cap);
std::shared_ptr<Cap> load_cap(const std::filesystem::path& dir);
void save_slow(const std::filesystem::path& dir, const SlowPlanner& slow);
std::shared_ptr<SlowPlanner> load_slow(const std::filesystem::path& dir, ForceEncoderPtr encoder);
void save_fast(const std::filesystem::path& dir, const FastCorrector& fast);
std::shared_ptr<FastCorrector> load_fast(const std::filesystem::path& dir, ForceEncoderPtr encoder);

}  // namespace phaforce::models
