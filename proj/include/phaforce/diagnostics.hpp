#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "phaforce/nn/gradcheck.hpp"

namespace phaforce::diagnostics {

struct BlockCheck {
    std::string block;
    nn::GradCheckReport report;
};

/// Finite-difference gradient checks on small instances of every trainable
/// block: CNN, TCN, attention with gates and injection, denoiser, Fast MLP.
std::vector<BlockCheck> gradcheck_suite(std::uint64_t seed);

}  // namespace phaforce::diagnostics
