#include "phaforce/diagnostics.hpp"

#include <memory>

#include "phaforce/cap.hpp"
#include "phaforce/fast.hpp"
#include "phaforce/slow.hpp"
#include "phaforce/task.hpp"

namespace phaforce::diagnostics {

using namespace nn;

namespace {

Tensor randn(Shape s, Rng& rng, double scale = 1.0) {
    std::vector<double> v(numel(s));
    for (auto& x : v) x = scale * rng.normal();
    return Tensor::from(std::move(s), std::move(v));
}

Observation random_obs(Rng& rng, const ImageLayout& layout, std::size_t window) {
    Observation o;
    o.images.resize(layout.views * layout.pixels());
    for (auto& p : o.images) p = static_cast<std::uint8_t>(rng.index(256));
    o.wrench.resize(window * 6);
    for (auto& v : o.wrench) v = 5.0 * rng.normal();
    o.proprio = {0.1 * rng.normal(), 0.1 * rng.normal(), 0.1 * rng.normal(), 1, 0, 0, 0, 0.02};
    return o;
}

// small enough that central differences over every weight stay cheap
ForceEncoderConfig small_encoder() {
    ForceEncoderConfig c;
    c.window = 8;
    c.hidden = 4;
    c.token_dim = 6;
    c.pooled_dim = 3;
    c.dilations = {1, 2};
    return c;
}

BlockCheck check_cnn(std::uint64_t seed) {
    ForceEncoderConfig fc = small_encoder();
    fc.window = 4;
    auto enc = std::make_shared<ForceEncoder>(fc, seed);
    CapConfig cc;
    cc.layout.side = 8;
    cc.layout.views = 2;
    cc.channels = {2, 3};
    cc.view_embed = 3;
    cc.hidden = 6;
    Cap cap(cc, 3, enc, seed + 1);
    Rng rng(seed + 2);
    std::vector<Observation> obs{random_obs(rng, cc.layout, fc.window), random_obs(rng, cc.layout, fc.window)};
    std::vector<const Observation*> ptr{&obs[0], &obs[1]};
    const auto b = make_obs_batch(ptr, cc.layout, *enc, cap.proprio_norm());
    const std::vector<CapLabels> labels{{1, 2}, {0, 1}};
    return {"cnn+cap_heads", grad_check(cap.params(), [&] {
                auto l = cap.forward(b);
                return cap_loss(l.contact, l.phase, labels);
            })};
}

BlockCheck check_tcn(std::uint64_t seed) {
    ForceEncoder enc(small_encoder(), seed);
    Rng rng(seed + 1);
    std::vector<double> raw(2 * small_encoder().window * 6);
    for (auto& v : raw) v = 5.0 * rng.normal();
    const auto w = enc.prepare(raw, 2);
    return {"tcn", grad_check(enc.params(), [&] { return sum(tanh(enc.pooled(w, 2))); })};
}

BlockCheck check_fusion(std::uint64_t seed) {
    ParamStore ps;
    Rng rng(seed);
    DualGatedFusion::Config c;
    c.dim = 12;
    c.heads = 3;
    c.phases = 4;
    c.gate_hidden = 6;
    DualGatedFusion fusion(ps, c, rng);
    const auto v = randn({2, 12}, rng);
    const auto F = randn({10, 12}, rng);
    const auto pc = Tensor::from({2}, {0.7, 0.3});
    const auto belief = Tensor::from({2, 4}, {0.1, 0.2, 0.3, 0.4, 0.25, 0.25, 0.4, 0.1});
    const auto R = randn({2, 12}, rng);
    return {"attention+gates+injection", grad_check(ps, [&] { return sum(mul(fusion(v, F, pc, belief).fused, R)); })};
}

BlockCheck check_denoiser(std::uint64_t seed) {
    ForceEncoderConfig fc = small_encoder();
    fc.token_dim = 8;
    auto enc = std::make_shared<ForceEncoder>(fc, seed);
    SlowConfig sc;
    sc.layout.side = 8;
    sc.layout.views = 1;
    sc.channels = {2, 4};
    sc.view_embed = 8;
    sc.heads = 2;
    sc.cond_dim = 8;
    sc.time_embed = 8;
    sc.denoiser_hidden = 12;
    sc.horizon = 2;
    SlowPlanner slow(sc, 4, enc, seed + 1);
    Rng rng(seed + 2);
    const auto o = random_obs(rng, sc.layout, fc.window);
    const Observation* p = &o;
    const auto b = make_obs_batch(std::span<const Observation* const>(&p, 1), sc.layout, *enc, slow.proprio_norm());
    const std::vector<PhaseSchedule> s{PhaseSchedule::uniform(4, 0.6)};
    const auto x = randn({1, sc.horizon * kTrainActionDim}, rng);
    const std::vector<std::size_t> t{37};
    ParamStore sub;
    for (const auto& [name, tensor] : slow.params().items())
        if (name.rfind("slow.denoiser", 0) == 0 || name.rfind("slow.cond", 0) == 0) sub.add_shared(name, tensor);
    return {"denoiser", grad_check(sub, [&] { return sum(square(slow.predict_eps(x, t, slow.condition(b, s).cond))); })};
}

BlockCheck check_fast(std::uint64_t seed) {
    auto enc = std::make_shared<ForceEncoder>(small_encoder(), seed);
    FastConfig cfg;
    cfg.hidden = {8, 8};
    const PhaseSet phases = plug_in_phases();
    FastCorrector fast(cfg, phases, enc, seed + 1);
    Rng rng(seed + 2);
    std::vector<CorrectorObservation> obs(2);
    for (auto& o : obs) {
        o.wrench.resize(small_encoder().window * 6);
        for (auto& v : o.wrench) v = 5.0 * rng.normal();
        o.proprio = {0.1 * rng.normal(), 0.1 * rng.normal(), 0.1 * rng.normal(), 1, 0, 0, 0, 0.02};
        for (std::size_t h = 0; h < cfg.history; ++h)
            o.slow_history.push_back({0.1 * rng.normal(), 0.1 * rng.normal(), 0.1, 1, 0, 0, 0, 0.02});
        std::vector<double> belief(phases.size());
        double total = 0.0;
        for (auto& v : belief) total += (v = rng.uniform() + 1e-3);
        for (auto& v : belief) v /= total;
        o.schedule = {rng.uniform(), belief};
    }
    std::vector<const CorrectorObservation*> ptr{&obs[0], &obs[1]};
    const auto in = fast.prepare(ptr);
    const auto teacher = randn({2, 6}, rng, 1e-3);
    return {"fast_mlp", grad_check(fast.params(), [&] { return sum(square(sub(fast.routed(fast.channel(in), in), teacher))); })};
}

}  // namespace

std::vector<BlockCheck> gradcheck_suite(std::uint64_t seed) {
    return {check_cnn(seed), check_tcn(seed + 10), check_fusion(seed + 20), check_denoiser(seed + 30),
            check_fast(seed + 40)};
}

}  // namespace phaforce::diagnostics
