#pragma once

#include <span>
#include <vector>

#include <nlohmann/json.hpp>

namespace phaforce {

/// Per-channel (x - mean) / std. With `lo`/`hi` set, raw values are first
/// clamped to that range, so inputs beyond the training data saturate.
struct Standardizer {
    std::vector<double> mean, stddev;
    std::vector<double> lo, hi;  // empty: no clamping

    /// `rows` is row-major with `dim` columns. Channels with std below `min_std`
    /// use `min_std` instead.
    static Standardizer fit(std::span<const double> rows, std::size_t dim, double min_std = 1e-6);
    static Standardizer identity(std::size_t dim);
    /// Records the per-channel min/max of `rows` as the clamp range.
    Standardizer& bound_to(std::span<const double> rows);

    std::size_t dim() const { return mean.size(); }
    void apply(std::span<double> rows) const;
    std::vector<double> applied(std::span<const double> rows) const;

    nlohmann::json to_json() const;
    static Standardizer from_json(const nlohmann::json& j);
};

/// Per-dimension min-max map onto [-1, 1].
struct MinMaxScaler {
    std::vector<double> lo, hi;

    static MinMaxScaler fit(std::span<const double> rows, std::size_t dim, double min_range = 1e-6);

    std::size_t dim() const { return lo.size(); }
    double forward(double x, std::size_t j) const { return 2.0 * (x - lo[j]) / (hi[j] - lo[j]) - 1.0; }
    double inverse(double y, std::size_t j) const { return lo[j] + 0.5 * (y + 1.0) * (hi[j] - lo[j]); }

    nlohmann::json to_json() const;
    static MinMaxScaler from_json(const nlohmann::json& j);
};

}  // namespace phaforce
