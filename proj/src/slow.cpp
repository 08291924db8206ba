#include "phaforce/slow.hpp"

#include <cmath>
#include <numbers>

#include "phaforce/geometry.hpp"

namespace phaforce {

using namespace nn;

std::array<double, kTrainActionDim> action_to_train(const Action& a) {
    const geometry::Quat q(a[3], a[4], a[5], a[6]);
    const auto r = geometry::rot6d_encode(q.normalized());
    std::array<double, kTrainActionDim> out{};
    out[0] = a[0];
    out[1] = a[1];
    out[2] = a[2];
    for (int i = 0; i < 6; ++i) out[3 + i] = r.v[i];
    out[9] = a[7];
    return out;
}

Action action_from_train(std::span<const double> x) {
    geometry::Rot6d r;
    for (int i = 0; i < 6; ++i) r.v[i] = x[3 + i];
    const geometry::Quat q = geometry::canonical(geometry::rot6d_decode(r));
    return {x[0], x[1], x[2], q.w(), q.x(), q.y(), q.z(), x[9]};
}

DdimSchedule::DdimSchedule(std::size_t train_steps) {
    auto f = [&](double s) {
        const double c = std::cos((s / static_cast<double>(train_steps) + 0.008) / 1.008 * std::numbers::pi / 2.0);
        return c * c;
    };
    double prod = 1.0;
    for (std::size_t t = 0; t < train_steps; ++t) {
        const double beta = std::min(1.0 - f(t + 1.0) / f(static_cast<double>(t)), 0.999);
        prod *= 1.0 - beta;
        alpha_bar_.push_back(prod);
    }
}

std::vector<std::size_t> DdimSchedule::inference_timesteps(std::size_t steps) const {
    const std::size_t T = train_steps();
    if (steps == 0 || steps > T) throw std::invalid_argument("inference steps must be in [1, train steps]");
    std::vector<std::size_t> ts;
    const double stride = static_cast<double>(T) / static_cast<double>(steps);
    for (std::size_t i = 0; i < steps; ++i) {
        const long t = std::lround(static_cast<double>(T) - static_cast<double>(i) * stride) - 1;
        ts.push_back(static_cast<std::size_t>(t));
    }
    return ts;
}

std::vector<double> DdimSchedule::sample(std::vector<double> x, std::size_t steps, const EpsFn& eps, bool clip) const {
    const auto ts = inference_timesteps(steps);
    for (std::size_t i = 0; i < ts.size(); ++i) {
        const double ab = alpha_bar_[ts[i]];
        const double ab_prev = i + 1 < ts.size() ? alpha_bar_[ts[i + 1]] : 1.0;
        const std::vector<double> e = eps(x, ts[i]);
        const double sa = std::sqrt(ab), sb = std::sqrt(1.0 - ab);
        const double pa = std::sqrt(ab_prev), pb = std::sqrt(1.0 - ab_prev);
        for (std::size_t j = 0; j < x.size(); ++j) {
            double x0 = (x[j] - sb * e[j]) / sa;
            double ej = e[j];
            if (clip && (x0 > 1.0 || x0 < -1.0)) {
                x0 = std::clamp(x0, -1.0, 1.0);
                ej = (x[j] - sa * x0) / sb;
            }
            x[j] = pa * x0 + pb * ej;
        }
    }
    return x;
}

std::vector<double> timestep_embedding(std::size_t t, std::size_t dim) {
    const std::size_t half = dim / 2;
    std::vector<double> out(dim, 0.0);
    for (std::size_t i = 0; i < half; ++i) {
        const double freq = std::exp(-std::log(1000.0) * static_cast<double>(i) / static_cast<double>(half));
        out[i] = std::sin(static_cast<double>(t) * freq);
        out[half + i] = std::cos(static_cast<double>(t) * freq);
    }
    return out;
}

DualGatedFusion::DualGatedFusion(ParamStore& ps, const Config& cfg, Rng& rng) : cfg_(cfg) {
    if (cfg.heads == 0 || cfg.dim % cfg.heads != 0)
        throw std::invalid_argument("token dim " + std::to_string(cfg.dim) + " is not divisible by " +
                                    std::to_string(cfg.heads) + " heads");
    q_ = Linear(ps, "slow.fuse.q", cfg.dim, cfg.dim, rng);
    k_ = Linear(ps, "slow.fuse.k", cfg.dim, cfg.dim, rng);
    v_ = Linear(ps, "slow.fuse.v", cfg.dim, cfg.dim, rng);
    // no bias: with every head gated off the injected feature must vanish
    o_.W = ps.add("slow.fuse.o.W", {cfg.dim, cfg.dim}, cfg.dim, rng);
    gate_ = Mlp(ps, "slow.fuse.gate", {cfg.phases, cfg.gate_hidden, cfg.heads}, rng);
    alpha_ = ps.add_value("slow.fuse.alpha", {1}, {cfg.alpha_init});
}

Tensor DualGatedFusion::gates(const Tensor& belief) const { return sigmoid(gate_(belief)); }

DualGatedFusion::Out DualGatedFusion::operator()(const Tensor& v, const Tensor& tokens, const Tensor& contact_prob,
                                                 const Tensor& belief) const {
    return with_gates(v, tokens, contact_prob, gates(belief));
}

DualGatedFusion::Out DualGatedFusion::with_gates(const Tensor& v, const Tensor& tokens, const Tensor& contact_prob,
                                                 const Tensor& g) const {
    Out out;
    const Tensor att = multihead_cross_attention(q_(v), k_(tokens), v_(tokens), cfg_.heads);
    out.gates = g;
    out.delta = matmul(scale_heads(att, out.gates), o_.W);
    const Tensor coef = div(row_sum(mul(out.delta, v)), add_const(row_sum(square(v)), cfg_.eps));
    out.delta_perp = sub(out.delta, mul_colvec(v, coef));
    out.fused = add(v, mul_scalar(mul_colvec(out.delta_perp, contact_prob), alpha_));
    return out;
}

void DualGatedFusion::project_alpha() {
    auto a = alpha_.data();
    a[0] = std::clamp(a[0], cfg_.alpha_min, cfg_.alpha_max);
}

SlowPlanner::SlowPlanner(const SlowConfig& cfg, std::size_t phases, ForceEncoderPtr encoder, std::uint64_t seed)
    : cfg_(cfg), phases_(phases), encoder_(std::move(encoder)), ddim_(cfg.train_timesteps) {
    if (encoder_->config().token_dim != cfg.token_dim())
        throw std::invalid_argument("force token dim must equal the visual token dim");
    Rng rng(seed);
    for (std::size_t v = 0; v < cfg.layout.views; ++v)
        views_.emplace_back(params_, "slow.view" + std::to_string(v), cfg.layout.side, cfg.channels, cfg.view_embed, rng);
    DualGatedFusion::Config fc;
    fc.dim = cfg.token_dim();
    fc.heads = cfg.heads;
    fc.phases = phases;
    fc.gate_hidden = cfg.gate_hidden;
    fc.alpha_init = cfg.alpha_init;
    fc.alpha_min = cfg.alpha_min;
    fc.alpha_max = cfg.alpha_max;
    fusion_ = DualGatedFusion(params_, fc, rng);
    cond_ = Linear(params_, "slow.cond", cfg.token_dim() + kProprioDim + 1 + phases, cfg.cond_dim, rng);
    const std::size_t x_dim = cfg.horizon * kTrainActionDim;
    denoiser_ = Mlp(params_, "slow.denoiser", {x_dim + cfg.time_embed + cfg.cond_dim, cfg.denoiser_hidden,
                                               cfg.denoiser_hidden, x_dim},
                    rng);
    skip_ = Linear(params_, "slow.denoiser_skip", cfg.time_embed, 1, rng);
    scaler_.lo.assign(kTrainActionDim, -1.0);
    scaler_.hi.assign(kTrainActionDim, 1.0);
}

SlowPlanner::Conditioning SlowPlanner::condition(const ObsBatch& b, std::span<const PhaseSchedule> sched) const {
    const std::size_t B = b.batch;
    if (sched.size() != B) throw ShapeMismatch("one phase schedule per observation required");
    std::vector<double> pc(B), belief(B * phases_);
    for (std::size_t i = 0; i < B; ++i) {
        pc[i] = sched[i].contact_prob;
        if (!cfg_.no_pb && sched[i].belief.size() != phases_) throw ShapeMismatch("belief size differs from phase count");
        for (std::size_t k = 0; k < phases_; ++k)
            belief[i * phases_ + k] = cfg_.no_pb ? 1.0 / static_cast<double>(phases_) : sched[i].belief[k];
    }
    const Tensor pc_t = Tensor::from({B}, pc);
    const Tensor belief_t = Tensor::from({B, phases_}, belief);

    Conditioning c;
    std::vector<Tensor> parts;
    for (std::size_t v = 0; v < views_.size(); ++v) parts.push_back(views_[v](b.views[v]));
    c.visual = concat_cols(parts);
    c.fusion = fusion_(c.visual, encoder_->tokens(b.wrench, B), pc_t, belief_t);
    const Tensor token = cfg_.no_ori ? c.fusion.delta : c.fusion.fused;
    c.cond = relu(cond_(concat_cols({token, b.proprio, reshape(pc_t, {B, 1}), belief_t})));
    return c;
}

Tensor SlowPlanner::predict_eps(const Tensor& noisy, std::span<const std::size_t> t, const Tensor& cond) const {
    const std::size_t B = noisy.rows();
    std::vector<double> emb;
    emb.reserve(B * cfg_.time_embed);
    for (std::size_t i = 0; i < B; ++i) {
        const auto e = timestep_embedding(t[i], cfg_.time_embed);
        emb.insert(emb.end(), e.begin(), e.end());
    }
    const Tensor te = Tensor::from({B, cfg_.time_embed}, std::move(emb));
    // timestep-gated identity path: at high noise the target is close to the input itself
    return add(denoiser_(concat_cols({noisy, te, cond})), mul_colvec(noisy, reshape(skip_(te), {B})));
}

Tensor SlowPlanner::loss(const ObsBatch& b, std::span<const PhaseSchedule> sched, const Tensor& x0, Rng& rng,
                         std::size_t draws) const {
    const std::size_t B = b.batch, D = cfg_.horizon * kTrainActionDim, N = B * std::max<std::size_t>(draws, 1);
    if (x0.rows() != B || x0.cols() != D) throw ShapeMismatch("target chunks " + shape_str(x0.shape()));
    // row r uses observation r % B; extra draws reuse the (expensive) conditioning
    std::vector<std::size_t> t(N);
    std::vector<double> noisy(N * D), eps(N * D);
    for (std::size_t r = 0; r < N; ++r) {
        const std::size_t i = r % B;
        t[r] = rng.index(ddim_.train_steps());
        const double ab = ddim_.alpha_bar(t[r]);
        for (std::size_t j = 0; j < D; ++j) {
            eps[r * D + j] = rng.normal();
            noisy[r * D + j] = std::sqrt(ab) * x0[i * D + j] + std::sqrt(1.0 - ab) * eps[r * D + j];
        }
    }
    const Conditioning c = condition(b, sched);
    Tensor cond = c.cond;
    if (N != B) {
        const std::size_t C = cfg_.cond_dim;
        auto idx = std::make_shared<std::vector<long>>(N * C);
        for (std::size_t r = 0; r < N; ++r)
            for (std::size_t j = 0; j < C; ++j) (*idx)[r * C + j] = static_cast<long>((r % B) * C + j);
        cond = gather(cond, idx, {N, C});
    }
    return mse(predict_eps(Tensor::from({N, D}, noisy), t, cond), Tensor::from({N, D}, eps));
}

namespace {

Action to_reference_frame(const Action& a, std::span<const double> ref) {
    const geometry::Quat q0(ref[3], ref[4], ref[5], ref[6]);
    const geometry::Quat q = geometry::canonical(q0.normalized().conjugate() * geometry::Quat(a[3], a[4], a[5], a[6]).normalized());
    return {a[0] - ref[0], a[1] - ref[1], a[2] - ref[2], q.w(), q.x(), q.y(), q.z(), a[7]};
}

Action from_reference_frame(const Action& a, std::span<const double> ref) {
    const geometry::Quat q0(ref[3], ref[4], ref[5], ref[6]);
    const geometry::Quat q = geometry::canonical(q0.normalized() * geometry::Quat(a[3], a[4], a[5], a[6]).normalized());
    return {a[0] + ref[0], a[1] + ref[1], a[2] + ref[2], q.w(), q.x(), q.y(), q.z(), a[7]};
}

}  // namespace

ActionChunk SlowPlanner::sample(const Observation& obs, const PhaseSchedule& sched, std::uint64_t seed) const {
    if (!trained_) throw UntrainedModel("slow planner has no trained weights");
    NoGradGuard ng;
    const Observation* p = &obs;
    const ObsBatch b = make_obs_batch(std::span<const Observation* const>(&p, 1), cfg_.layout, *encoder_, proprio_norm_);
    const Conditioning c = condition(b, std::span<const PhaseSchedule>(&sched, 1));
    const std::size_t D = cfg_.horizon * kTrainActionDim;
    Rng rng(seed);
    std::vector<double> x(D);
    for (auto& v : x) v = rng.normal();
    auto eps = [&](const std::vector<double>& xt, std::size_t t) {
        const std::size_t ts[1] = {t};
        const Tensor e = predict_eps(Tensor::from({1, D}, xt), ts, c.cond);
        return std::vector<double>(e.data().begin(), e.data().end());
    };
    x = ddim_.sample(std::move(x), cfg_.infer_timesteps, eps, cfg_.clip_sample);
    ActionChunk chunk(cfg_.horizon);
    Action prev{0, 0, 0, 1, 0, 0, 0, 0};
    for (std::size_t h = 0; h < cfg_.horizon; ++h) {
        std::array<double, kTrainActionDim> raw{};
        for (std::size_t j = 0; j < kTrainActionDim; ++j) raw[j] = scaler_.inverse(x[h * kTrainActionDim + j], j);
        Action a;
        try {
            a = action_from_train(raw);
        } catch (const geometry::DegenerateRotation&) {
            // collapsed rotation columns: keep the previous orientation
            a = {raw[0], raw[1], raw[2], prev[3], prev[4], prev[5], prev[6], raw[9]};
        }
        prev = a;
        chunk[h] = cfg_.relative ? from_reference_frame(a, obs.proprio) : a;
    }
    return chunk;
}


std::vector<std::array<double, kTrainActionDim>> SlowPlanner::chunk_rows(std::span<const Action> chunk,
                                                                         std::span<const double> proprio) const {
    if (chunk.size() != cfg_.horizon) throw ShapeMismatch("chunk length differs from the configured horizon");
    if (cfg_.relative && proprio.size() != kProprioDim) throw ShapeMismatch("proprio size");
    std::vector<std::array<double, kTrainActionDim>> out;
    out.reserve(chunk.size());
    for (const auto& a : chunk) out.push_back(action_to_train(cfg_.relative ? to_reference_frame(a, proprio) : a));
    return out;
}

std::vector<double> SlowPlanner::encode_chunk(std::span<const Action> chunk, std::span<const double> proprio) const {
    std::vector<double> out;
    out.reserve(cfg_.horizon * kTrainActionDim);
    for (const auto& x : chunk_rows(chunk, proprio))
        for (std::size_t j = 0; j < kTrainActionDim; ++j) out.push_back(scaler_.forward(x[j], j));
    return out;
}

}  // namespace phaforce
