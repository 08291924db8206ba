#include "phaforce/observation.hpp"

#include <string>

namespace phaforce {

ObsBatch make_obs_batch(std::span<const Observation* const> obs, const ImageLayout& layout, const ForceEncoder& enc,
                        const Standardizer& proprio_norm) {
    const std::size_t B = obs.size(), P = layout.pixels(), W = enc.config().window;
    ObsBatch out;
    out.batch = B;
    std::vector<double> wrench;
    wrench.reserve(B * W * 6);
    std::vector<double> proprio;
    proprio.reserve(B * kProprioDim);
    std::vector<std::vector<double>> views(layout.views, std::vector<double>(B * P));
    for (std::size_t b = 0; b < B; ++b) {
        const Observation& o = *obs[b];
        if (o.images.size() != layout.views * P || o.wrench.size() != W * 6 || o.proprio.size() != kProprioDim)
            throw nn::ShapeMismatch("observation " + std::to_string(b) + " does not match the configured layout");
        for (std::size_t v = 0; v < layout.views; ++v)
            for (std::size_t i = 0; i < P; ++i) views[v][b * P + i] = o.images[v * P + i] / 255.0;
        wrench.insert(wrench.end(), o.wrench.begin(), o.wrench.end());
        proprio.insert(proprio.end(), o.proprio.begin(), o.proprio.end());
    }
    for (auto& v : views) out.views.push_back(nn::Tensor::from({B, layout.side, layout.side, 1}, std::move(v)));
    out.wrench = enc.prepare(wrench, B);
    proprio_norm.apply(proprio);
    out.proprio = nn::Tensor::from({B, kProprioDim}, std::move(proprio));
    return out;
}

}  // namespace phaforce
