#pragma once

#include <filesystem>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "phaforce/nn/layers.hpp"

namespace phaforce::nn {

struct CheckpointError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Writes `dir/manifest.json` (names, shapes, files, `meta`) plus one raw
/// little-endian f64 blob per parameter under `dir/params/`.
void save_checkpoint(const std::filesystem::path& dir, const ParamStore& params, const nlohmann::json& meta);

/// Loads values into an already-constructed store; every name and shape must match.
/// Returns the manifest's `meta` object.
nlohmann::json load_checkpoint(const std::filesystem::path& dir, ParamStore& params);

nlohmann::json read_manifest(const std::filesystem::path& dir);

void write_f64(const std::filesystem::path& file, std::span<const double> values);
std::vector<double> read_f64(const std::filesystem::path& file);

}  // namespace phaforce::nn
