#include "phaforce/normalizer.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace phaforce {

Standardizer Standardizer::fit(std::span<const double> rows, std::size_t dim, double min_std) {
    if (dim == 0 || rows.size() % dim != 0 || rows.empty()) throw std::invalid_argument("Standardizer::fit: bad input");
    const std::size_t n = rows.size() / dim;
    Standardizer s;
    s.mean.assign(dim, 0.0);
    s.stddev.assign(dim, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < dim; ++j) s.mean[j] += rows[i * dim + j];
    for (auto& m : s.mean) m /= static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < dim; ++j) {
            const double d = rows[i * dim + j] - s.mean[j];
            s.stddev[j] += d * d;
        }
    for (auto& v : s.stddev) v = std::max(std::sqrt(v / static_cast<double>(n)), min_std);
    return s;
}

Standardizer Standardizer::identity(std::size_t dim) {
    Standardizer s;
    s.mean.assign(dim, 0.0);
    s.stddev.assign(dim, 1.0);
    return s;
}

Standardizer& Standardizer::bound_to(std::span<const double> rows) {
    const std::size_t d = dim();
    if (rows.empty() || rows.size() % d != 0) throw std::invalid_argument("Standardizer::bound_to: bad input");
    lo.assign(rows.begin(), rows.begin() + static_cast<long>(d));
    hi = lo;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        lo[i % d] = std::min(lo[i % d], rows[i]);
        hi[i % d] = std::max(hi[i % d], rows[i]);
    }
    return *this;
}

void Standardizer::apply(std::span<double> rows) const {
    const std::size_t d = dim();
    if (rows.size() % d != 0) throw std::invalid_argument("Standardizer::apply: width mismatch");
    if (lo.empty()) {
        for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = (rows[i] - mean[i % d]) / stddev[i % d];
        return;
    }
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const std::size_t j = i % d;
        rows[i] = (std::clamp(rows[i], lo[j], hi[j]) - mean[j]) / stddev[j];
    }
}

std::vector<double> Standardizer::applied(std::span<const double> rows) const {
    std::vector<double> out(rows.begin(), rows.end());
    apply(out);
    return out;
}

nlohmann::json Standardizer::to_json() const {
    nlohmann::json j{{"mean", mean}, {"std", stddev}};
    if (!lo.empty()) {
        j["lo"] = lo;
        j["hi"] = hi;
    }
    return j;
}

Standardizer Standardizer::from_json(const nlohmann::json& j) {
    Standardizer s;
    s.mean = j.at("mean").get<std::vector<double>>();
    s.stddev = j.at("std").get<std::vector<double>>();
    if (j.contains("lo")) {
        s.lo = j.at("lo").get<std::vector<double>>();
        s.hi = j.at("hi").get<std::vector<double>>();
        if (s.lo.size() != s.dim() || s.hi.size() != s.dim()) throw std::invalid_argument("Standardizer: bad clamp range");
    }
    return s;
}

MinMaxScaler MinMaxScaler::fit(std::span<const double> rows, std::size_t dim, double min_range) {
    if (dim == 0 || rows.size() % dim != 0 || rows.empty()) throw std::invalid_argument("MinMaxScaler::fit: bad input");
    MinMaxScaler s;
    s.lo.assign(rows.begin(), rows.begin() + static_cast<long>(dim));
    s.hi = s.lo;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        s.lo[i % dim] = std::min(s.lo[i % dim], rows[i]);
        s.hi[i % dim] = std::max(s.hi[i % dim], rows[i]);
    }
    for (std::size_t j = 0; j < dim; ++j)
        if (s.hi[j] - s.lo[j] < min_range) {
            const double c = 0.5 * (s.hi[j] + s.lo[j]);
            s.lo[j] = c - 0.5 * min_range;
            s.hi[j] = c + 0.5 * min_range;
        }
    return s;
}

nlohmann::json MinMaxScaler::to_json() const { return {{"lo", lo}, {"hi", hi}}; }

MinMaxScaler MinMaxScaler::from_json(const nlohmann::json& j) {
    return {j.at("lo").get<std::vector<double>>(), j.at("hi").get<std::vector<double>>()};
}

}  // namespace phaforce
