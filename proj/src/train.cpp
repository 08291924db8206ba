#include "phaforce/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <numeric>

#include "phaforce/nn/optim.hpp"

namespace phaforce::train {

using namespace nn;
using sim::Dataset;
using sim::Episode;

namespace {

constexpr std::size_t kContactHorizon = 8;  // K_f
constexpr std::size_t kPhaseOffset = 3;     // delta
constexpr double kPhaseWeight = 2.0;        // lambda_phi
constexpr std::size_t kEvalBatch = 256;

double cosine_lr(const StageConfig& s, std::size_t step) {
    const double frac = s.steps > 1 ? double(step) / double(s.steps - 1) : 1.0;
    const double lo = s.lr * s.final_lr_fraction;
    return lo + 0.5 * (s.lr - lo) * (1.0 + std::cos(std::numbers::pi * frac));
}

struct ObsSet {
    std::vector<Observation> obs;
    std::vector<const Observation*> ptrs;
};

ObsSet gather(const Dataset& ds, std::span<const SampleRef> refs, std::size_t window) {
    ObsSet s;
    s.obs.reserve(refs.size());
    for (const auto& r : refs) s.obs.push_back(ds.episodes[r.episode].observation(r.t, window));
    for (const auto& o : s.obs) s.ptrs.push_back(&o);
    return s;
}

std::vector<SampleRef> draw(const std::vector<SampleRef>& pool, std::size_t n, Rng& rng) {
    std::vector<SampleRef> out(n);
    for (auto& r : out) r = pool[rng.index(pool.size())];
    return out;
}

std::vector<double> rows_of(const Dataset& ds, const std::vector<std::size_t>& eps,
                            std::vector<double> Episode::*field) {
    std::vector<double> out;
    for (auto e : eps) {
        const auto& v = ds.episodes[e].*field;
        out.insert(out.end(), v.begin(), v.end());
    }
    return out;
}

void report(const Logger& log, const char* stage, std::size_t step, std::size_t steps, double loss) {
    if (!log) return;
    char buf[128];
    std::snprintf(buf, sizeof buf, "%s step %zu/%zu loss %.6f", stage, step, steps, loss);
    log(buf);
}

}  // namespace

Split split_episodes(std::size_t n, double held_out_fraction, std::uint64_t seed) {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    Rng rng(mix_seed(seed, 0x5e1));
    for (std::size_t i = n; i > 1; --i) std::swap(idx[i - 1], idx[rng.index(i)]);
    std::size_t h = static_cast<std::size_t>(std::round(held_out_fraction * double(n)));
    if (n > 1) h = std::clamp<std::size_t>(h, 1, n - 1);
    Split s;
    s.held_out.assign(idx.begin(), idx.begin() + static_cast<long>(h));
    s.train.assign(idx.begin() + static_cast<long>(h), idx.end());
    std::sort(s.held_out.begin(), s.held_out.end());
    std::sort(s.train.begin(), s.train.end());
    return s;
}

std::vector<SampleRef> samples_of(const Dataset& ds, const std::vector<std::size_t>& episodes) {
    std::vector<SampleRef> out;
    for (auto e : episodes)
        for (std::size_t t = 0; t < ds.episodes[e].length; ++t)
            out.push_back({static_cast<std::uint32_t>(e), static_cast<std::uint32_t>(t)});
    return out;
}

CapRun train_cap(const Dataset& ds, const Split& split, const CapConfig& cfg, const ForceEncoderConfig& enc_cfg,
                 const StageConfig& stage, const Logger& log) {
    const auto task = task_by_id(ds.config.task);
    auto enc = std::make_shared<ForceEncoder>(enc_cfg, mix_seed(stage.seed, 11));
    // wrench inputs saturate at the demonstrated range, so unseen force levels read as the strongest seen contact
    const auto wrenches = rows_of(ds, split.train, &Episode::wrenches);
    enc->normalizer() = Standardizer::fit(wrenches, 6, 1e-3);
    enc->normalizer().bound_to(wrenches);
    CapRun run;
    run.cap = std::make_shared<Cap>(cfg, task.phases.size(), enc, mix_seed(stage.seed, 12));
    Cap& cap = *run.cap;
    cap.proprio_norm() = Standardizer::fit(rows_of(ds, split.train, &Episode::proprio), kProprioDim, 1e-3);

    std::vector<std::vector<CapLabels>> labels(ds.episodes.size());
    for (auto e : split.train) labels[e] = make_labels(ds.episodes[e].contact, ds.episodes[e].phase, kContactHorizon, kPhaseOffset);
    const auto pool = samples_of(ds, split.train);

    std::vector<Tensor> params = cap.params().tensors();
    for (const auto& t : enc->params().tensors()) params.push_back(t);
    Adam opt(params, {stage.lr, 0.9, 0.999, 1e-8, stage.clip_norm});
    Rng rng(mix_seed(stage.seed, 13));
    double running = 0.0;
    for (std::size_t step = 0; step < stage.steps; ++step) {
        const auto refs = draw(pool, stage.batch, rng);
        const auto set = gather(ds, refs, enc_cfg.window);
        std::vector<CapLabels> lab;
        for (const auto& r : refs) lab.push_back(labels[r.episode][r.t]);
        const ObsBatch b = make_obs_batch(set.ptrs, cfg.layout, *enc, cap.proprio_norm());
        const auto logits = cap.forward(b);
        Tensor loss = cap_loss(logits.contact, logits.phase, lab, kPhaseWeight);
        opt.zero_grad();
        loss.backward();
        opt.set_lr(cosine_lr(stage, step));
        opt.step();
        running = step == 0 ? loss.item() : 0.95 * running + 0.05 * loss.item();
        run.curve.push_back({step, loss.item(), cosine_lr(stage, step)});
        if (stage.log_every && (step + 1) % stage.log_every == 0) report(log, "cap", step + 1, stage.steps, running);
    }
    run.held_out = evaluate_cap(cap, ds, split.held_out);
    return run;
}

CapMetrics evaluate_cap(const Cap& cap, const Dataset& ds, const std::vector<std::size_t>& episodes) {
    CapMetrics m;
    const std::size_t window = cap.encoder()->config().window;
    double loss_sum = 0.0;
    std::size_t contact_ok = 0, phase_ok = 0, anticipated = 0;
    for (auto e : episodes) {
        const Episode& ep = ds.episodes[e];
        const auto labels = make_labels(ep.contact, ep.phase, kContactHorizon, kPhaseOffset);
        std::vector<double> pc(ep.length);
        for (std::size_t t0 = 0; t0 < ep.length; t0 += kEvalBatch) {
            const std::size_t n = std::min(kEvalBatch, ep.length - t0);
            std::vector<SampleRef> refs;
            for (std::size_t t = t0; t < t0 + n; ++t) refs.push_back({std::uint32_t(e), std::uint32_t(t)});
            const auto set = gather(ds, refs, window);
            NoGradGuard ng;
            const ObsBatch b = make_obs_batch(set.ptrs, cap.config().layout, *cap.encoder(), cap.proprio_norm());
            const auto logits = cap.forward(b);
            const std::span<const CapLabels> lab(labels.data() + t0, n);
            loss_sum += cap_loss(logits.contact, logits.phase, lab, kPhaseWeight).item() * double(n);
            const std::size_t K = cap.phases();
            for (std::size_t i = 0; i < n; ++i) {
                pc[t0 + i] = sigmoid(logits.contact[i]);
                contact_ok += (pc[t0 + i] >= 0.5) == (lab[i].future_contact == 1);
                const double* row = logits.phase.data().data() + i * K;
                phase_ok += std::size_t(std::max_element(row, row + K) - row) == lab[i].future_phase;
            }
        }
        for (std::size_t t = 0; t < ep.length; ++t)
            if (ep.contact[t] && (t == 0 || !ep.contact[t - 1])) {
                ++m.onsets;
                anticipated += pc[t] >= 0.5;
            }
        m.samples += ep.length;
    }
    if (m.samples) {
        m.loss = loss_sum / double(m.samples);
        m.contact_accuracy = double(contact_ok) / double(m.samples);
        m.phase_accuracy = double(phase_ok) / double(m.samples);
    }
    m.anticipation = m.onsets ? double(anticipated) / double(m.onsets) : 1.0;
    return m;
}

std::vector<PhaseSchedule> cap_schedules(const Cap& cap, const Dataset& ds, const std::vector<SampleRef>& refs) {
    std::vector<PhaseSchedule> out;
    out.reserve(refs.size());
    const std::size_t window = cap.encoder()->config().window;
    for (std::size_t i = 0; i < refs.size(); i += kEvalBatch) {
        const std::size_t n = std::min(kEvalBatch, refs.size() - i);
        const auto set = gather(ds, std::span<const SampleRef>(refs.data() + i, n), window);
        auto s = cap.predict(set.ptrs);
        out.insert(out.end(), s.begin(), s.end());
    }
    return out;
}

SlowRun train_slow(const Dataset& ds, const Split& split, const Cap& cap, const SlowConfig& cfg,
                   const StageConfig& stage, const Logger& log) {
    auto enc = cap.encoder();
    enc->params().set_requires_grad(false);  // frozen after the CAP stage
    SlowRun run;
    run.slow = std::make_shared<SlowPlanner>(cfg, cap.phases(), enc, mix_seed(stage.seed, 21));
    SlowPlanner& slow = *run.slow;
    slow.proprio_norm() = Standardizer::fit(rows_of(ds, split.train, &Episode::proprio), kProprioDim, 1e-3);
    {
        std::vector<double> rows;
        for (auto e : split.train) {
            const Episode& ep = ds.episodes[e];
            for (std::size_t t = 0; t < ep.length; ++t) {
                const std::span<const double> proprio(ep.proprio.data() + t * kProprioDim, kProprioDim);
                for (const auto& x : slow.chunk_rows(ep.chunk(t, cfg.horizon), proprio)) rows.insert(rows.end(), x.begin(), x.end());
            }
        }
        slow.action_scaler() = MinMaxScaler::fit(rows, kTrainActionDim, 1e-4);
    }

    const auto pool = samples_of(ds, split.train);
    const auto pool_sched = cap_schedules(cap, ds, pool);
    const std::size_t window = enc->config().window, D = cfg.horizon * kTrainActionDim;

    auto batch_loss = [&](std::span<const std::size_t> idx, const std::vector<SampleRef>& refs,
                          const std::vector<PhaseSchedule>& scheds, Rng& rng, std::size_t draws) {
        std::vector<SampleRef> picked;
        std::vector<PhaseSchedule> s;
        std::vector<double> x0;
        x0.reserve(idx.size() * D);
        for (auto i : idx) {
            picked.push_back(refs[i]);
            s.push_back(scheds[i]);
            const Episode& ep = ds.episodes[refs[i].episode];
            const std::span<const double> proprio(ep.proprio.data() + refs[i].t * kProprioDim, kProprioDim);
            const auto v = slow.encode_chunk(ep.chunk(refs[i].t, cfg.horizon), proprio);
            x0.insert(x0.end(), v.begin(), v.end());
        }
        const auto set = gather(ds, picked, window);
        const ObsBatch b = make_obs_batch(set.ptrs, cfg.layout, *enc, slow.proprio_norm());
        return slow.loss(b, s, Tensor::from({idx.size(), D}, std::move(x0)), rng, draws);
    };

    Adam opt(slow.params().tensors(), {stage.lr, 0.9, 0.999, 1e-8, stage.clip_norm});
    Rng rng(mix_seed(stage.seed, 22));
    double running = 0.0;
    std::vector<std::size_t> idx(stage.batch);
    for (std::size_t step = 0; step < stage.steps; ++step) {
        for (auto& i : idx) i = rng.index(pool.size());
        Tensor loss = batch_loss(idx, pool, pool_sched, rng, stage.noise_draws);
        opt.zero_grad();
        loss.backward();
        opt.set_lr(cosine_lr(stage, step));
        opt.step();
        slow.project_alpha();
        running = step == 0 ? loss.item() : 0.95 * running + 0.05 * loss.item();
        run.curve.push_back({step, loss.item(), cosine_lr(stage, step)});
        if (stage.log_every && (step + 1) % stage.log_every == 0) report(log, "slow", step + 1, stage.steps, running);
    }
    slow.set_trained(true);

    const auto held = samples_of(ds, split.held_out);
    if (!held.empty()) {
        const auto held_sched = cap_schedules(cap, ds, held);
        Rng eval_rng(mix_seed(stage.seed, 23));
        NoGradGuard ng;
        double sum = 0.0;
        std::size_t n = 0;
        std::vector<std::size_t> all(held.size());
        std::iota(all.begin(), all.end(), 0);
        for (std::size_t i = 0; i < all.size(); i += kEvalBatch) {
            const std::size_t m = std::min(kEvalBatch, all.size() - i);
            sum += batch_loss(std::span<const std::size_t>(all.data() + i, m), held, held_sched, eval_rng, 1).item() * double(m);
            n += m;
        }
        run.held_out_loss = sum / double(n);
    }
    return run;
}

Vec6 teacher_for(const Episode& ep, std::size_t t, const PhaseSchedule& sched, const PhaseSet& phases,
                 const TeacherGains& gains, bool no_pb) {
    const PhaseSchedule s = no_pb ? PhaseSchedule::uniform(phases.size(), sched.contact_prob) : sched;
    return teacher_target(ep.wrench(t), s, phases, gains).to_array();
}

FastRun train_fast(const Dataset& ds, const Split& split, const Cap& cap, const FastConfig& cfg,
                   const TeacherGains& gains, const StageConfig& stage, const Logger& log) {
    auto enc = cap.encoder();
    enc->params().set_requires_grad(false);
    const auto phases = task_by_id(ds.config.task).phases;
    FastRun run;
    run.fast = std::make_shared<FastCorrector>(cfg, phases, enc, mix_seed(stage.seed, 31));
    FastCorrector& fast = *run.fast;
    const auto proprio_rows = rows_of(ds, split.train, &Episode::proprio);
    fast.proprio_norm() = Standardizer::fit(proprio_rows, kProprioDim, 1e-3);
    {
        const auto a = Standardizer::fit(rows_of(ds, split.train, &Episode::actions), 8, 1e-3);
        Standardizer h;
        for (std::size_t k = 0; k < cfg.history; ++k) {
            h.mean.insert(h.mean.end(), a.mean.begin(), a.mean.end());
            h.stddev.insert(h.stddev.end(), a.stddev.begin(), a.stddev.end());
        }
        fast.history_norm() = h;
    }
    const Vec6 caps = fast.caps();
    const std::size_t window = enc->config().window;

    struct Prepared {
        std::vector<CorrectorObservation> obs;
        std::vector<double> teacher;  // cap-normalized, B x 6
    };
    auto prepare = [&](std::span<const SampleRef> refs, std::span<const PhaseSchedule> scheds) {
        Prepared p;
        for (std::size_t i = 0; i < refs.size(); ++i) {
            const Episode& ep = ds.episodes[refs[i].episode];
            const std::size_t t = refs[i].t;
            auto o = ep.observation(t, window);
            p.obs.push_back({std::move(o.wrench), std::move(o.proprio), ep.history(t, cfg.history), scheds[i]});
            const Vec6 target = teacher_for(ep, t, scheds[i], phases, gains, cfg.no_pb);
            for (int k = 0; k < 6; ++k) p.teacher.push_back(target[k] / caps[k]);
        }
        return p;
    };
    auto normalized_l1 = [&](const Prepared& p) {
        std::vector<const CorrectorObservation*> ptrs;
        for (const auto& o : p.obs) ptrs.push_back(&o);
        const auto in = fast.prepare(ptrs);
        const std::size_t B = in.batch;
        std::vector<double> inv(B * 6);
        for (std::size_t b = 0; b < B; ++b)
            for (int k = 0; k < 6; ++k) inv[b * 6 + k] = 1.0 / caps[k];
        const Tensor pred = mul(fast.routed(fast.channel(in), in), Tensor::from({B, 6}, std::move(inv)));
        return fast_loss(pred, Tensor::from({B, 6}, p.teacher));
    };

    const auto pool = samples_of(ds, split.train);
    const auto pool_sched = cap_schedules(cap, ds, pool);
    Adam opt(fast.params().tensors(), {stage.lr, 0.9, 0.999, 1e-8, stage.clip_norm});
    Rng rng(mix_seed(stage.seed, 32));
    double running = 0.0;
    for (std::size_t step = 0; step < stage.steps; ++step) {
        std::vector<SampleRef> refs;
        std::vector<PhaseSchedule> scheds;
        for (std::size_t i = 0; i < stage.batch; ++i) {
            const auto j = rng.index(pool.size());
            refs.push_back(pool[j]);
            scheds.push_back(pool_sched[j]);
        }
        Tensor loss = normalized_l1(prepare(refs, scheds));
        opt.zero_grad();
        loss.backward();
        opt.set_lr(cosine_lr(stage, step));
        opt.step();
        running = step == 0 ? loss.item() : 0.95 * running + 0.05 * loss.item();
        run.curve.push_back({step, loss.item(), cosine_lr(stage, step)});
        if (stage.log_every && (step + 1) % stage.log_every == 0) report(log, "fast", step + 1, stage.steps, running);
    }

    const auto held = samples_of(ds, split.held_out);
    if (!held.empty()) {
        const auto held_sched = cap_schedules(cap, ds, held);
        NoGradGuard ng;
        double sum = 0.0, zero = 0.0;
        for (std::size_t i = 0; i < held.size(); i += kEvalBatch) {
            const std::size_t m = std::min(kEvalBatch, held.size() - i);
            const auto p = prepare(std::span<const SampleRef>(held.data() + i, m),
                                   std::span<const PhaseSchedule>(held_sched.data() + i, m));
            sum += normalized_l1(p).item() * double(m);
            for (double v : p.teacher) zero += std::abs(v) / 6.0;
        }
        run.held_out_l1 = sum / double(held.size());
        run.zero_l1 = zero / double(held.size());
    }
    return run;
}

void write_curve(const std::string& path, const std::vector<CurveRow>& curve) {
    std::ofstream os(path, std::ios::trunc);
    os << "step,loss,lr\n";
    char buf[96];
    for (const auto& r : curve) {
        std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g\n", r.step, r.loss, r.lr);
        os << buf;
    }
}

}  // namespace phaforce::train
