#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "phaforce/force_encoder.hpp"
#include "phaforce/nn/tensor.hpp"
#include "phaforce/normalizer.hpp"

namespace phaforce {

inline constexpr std::size_t kProprioDim = 8;  // position, quaternion (w,x,y,z), gripper width

/// Planner observation: rasters, wrench history and proprioception.
struct Observation {
    std::vector<std::uint8_t> images;  // views x side x side
    std::vector<double> wrench;        // window x 6, oldest first
    std::vector<double> proprio;       // kProprioDim
};

struct ImageLayout {
    std::size_t views = 3;
    std::size_t side = 32;
    std::size_t pixels() const { return side * side; }
};

/// Model-ready tensors for a batch of observations.
struct ObsBatch {
    std::size_t batch = 0;
    std::vector<nn::Tensor> views;  // each [B x side x side x 1], scaled to [0, 1]
    nn::Tensor wrench;              // [B*window x 6], normalized
    nn::Tensor proprio;             // [B x kProprioDim], normalized
};

ObsBatch make_obs_batch(std::span<const Observation* const> obs, const ImageLayout& layout, const ForceEncoder& enc,
                        const Standardizer& proprio_norm);

}  // namespace phaforce
