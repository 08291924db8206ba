#include "phaforce/executor.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <deque>
#include <fstream>

namespace phaforce::exec {

using geometry::Quat;
using geometry::Twist;
using geometry::Vec3;

std::size_t RateConfig::period() const { return static_cast<std::size_t>(std::llround(f_c / f_s)); }

void validate(const RateConfig& r) {
    if (!(r.f_s > 0.0) || !(r.f_c > 0.0)) throw RateError("rates must be positive");
    const double ratio = r.f_c / r.f_s;
    if (ratio < 1.0 || std::abs(ratio - std::round(ratio)) > 1e-9) throw RateError("f_c must be a multiple of f_s");
    if (r.horizon == 0) throw RateError("horizon must be positive");
    if (r.latency_discard >= r.horizon) throw RateError("latency_discard must be smaller than the horizon");
    if (r.inference_delay >= r.horizon) throw RateError("inference_delay must be smaller than the horizon");
    if (r.interp_substeps < 1) throw RateError("interp_substeps must be at least 1");
    if (!(r.residual_linear_bound >= 0.0) || !(r.residual_angular_bound >= 0.0))
        throw RateError("residual bounds must be non-negative");
}

nlohmann::json to_json(const RateConfig& r) {
    return {{"f_s", r.f_s},
            {"f_c", r.f_c},
            {"horizon", r.horizon},
            {"latency_discard", r.latency_discard},
            {"inference_delay", r.inference_delay},
            {"interp_substeps", r.interp_substeps},
            {"residual_linear_bound", r.residual_linear_bound},
            {"residual_angular_bound", r.residual_angular_bound}};
}

RateConfig rate_config_from_json(const nlohmann::json& j, const RateConfig& base) {
    if (!j.is_object()) throw RateError("rates must be an object");
    RateConfig r = base;
    try {
        for (const auto& [k, v] : j.items()) {
            if (k == "f_s") r.f_s = v.get<double>();
            else if (k == "f_c") r.f_c = v.get<double>();
            else if (k == "horizon") r.horizon = v.get<std::size_t>();
            else if (k == "latency_discard") r.latency_discard = v.get<std::size_t>();
            else if (k == "inference_delay") r.inference_delay = v.get<std::size_t>();
            else if (k == "interp_substeps") r.interp_substeps = v.get<int>();
            else if (k == "residual_linear_bound") r.residual_linear_bound = v.get<double>();
            else if (k == "residual_angular_bound") r.residual_angular_bound = v.get<double>();
            else throw RateError("unknown rate key '" + k + "'");
        }
    } catch (const nlohmann::json::exception& e) {
        throw RateError(std::string("bad rate value: ") + e.what());
    }
    validate(r);
    return r;
}

namespace {

Pose action_pose(const Action& a) { return Pose(Vec3(a[0], a[1], a[2]), Quat(a[3], a[4], a[5], a[6]).normalized()); }

// Keeps the accumulated residual inside a ball in translation and a cone in rotation.
Pose bound_offset(const Pose& p, double lin, double ang) {
    Pose out = p;
    const double n = out.position.norm();
    if (n > lin) out.position *= lin / n;
    Eigen::AngleAxisd aa(out.orientation);
    if (aa.angle() > ang) out.orientation = geometry::canonical(Quat(Eigen::AngleAxisd(ang, aa.axis())));
    return out;
}

bool goal_reached(const sim::Env& env) {
    return env.config().wiping() ? env.wiped_fraction() >= 1.0 : env.seated();
}

constexpr int kSettleSteps = 6;  // consecutive goal steps before the episode ends

struct PendingChunk {
    ActionChunk chunk;
    std::size_t ready_at = 0;
};

}  // namespace

Trace run_episode(const Policy& policy, sim::Env& env, const RateConfig& rates, std::uint64_t seed,
                  const ChunkSource& source) {
    validate(rates);
    if (!policy.cap) throw std::invalid_argument("run_episode needs a CAP model");
    if (!source && !policy.slow) throw std::invalid_argument("run_episode needs a planner or a chunk source");
    if (policy.slow && policy.slow->config().horizon != rates.horizon)
        throw RateError("planner horizon differs from the rate config");

    const ChunkSource sample = source ? source : ChunkSource([&](const Observation& o, const PhaseSchedule& s,
                                                                 std::uint64_t sd) { return policy.slow->sample(o, s, sd); });
    const std::size_t window = policy.cap->encoder()->config().window, period = rates.period();
    const std::size_t n_hist = policy.fast ? policy.fast->config().history : 0;
    const auto& cfg = env.config();

    Trace tr;
    tr.task = cfg.task;
    tr.seed = seed;
    tr.seat_depth = cfg.seat_depth;
    tr.clearance = cfg.clearance;

    std::deque<double> wrenches(window * 6, 0.0);
    std::deque<Action> history;
    ActionChunk active;
    std::size_t active_start = 0, chunk_id = 0;  // control step at which active[active_offset] runs
    std::size_t active_offset = 0;
    std::optional<PendingChunk> pending;
    Pose acc = Pose::identity(), last_base = env.state().tcp;
    double last_gripper = env.state().gripper;
    int settled = 0;

    for (std::size_t t = 0; t < static_cast<std::size_t>(cfg.max_steps); ++t) {
        Observation obs{env.render(), std::vector<double>(wrenches.begin(), wrenches.end()), env.proprio()};
        const PhaseSchedule sched = policy.cap->predict(obs);

        if (t % period == 0) {
            // the planner lives in its own frame: it sees the base pose, not the residual-corrected one,
            // otherwise relative chunks would fold the residual in a second time
            Observation plan = obs;
            const auto b = last_base.to_array();
            plan.proprio.assign(b.begin(), b.end());
            plan.proprio.push_back(last_gripper);
            ActionChunk c = sample(plan, sched, mix_seed(seed, t));
            if (c.size() != rates.horizon) throw RateError("chunk length differs from the horizon");
            if (t == 0) {
                active = std::move(c);  // first chunk is awaited, nothing to discard
                active_start = 0;
                active_offset = 0;
            } else {
                pending = PendingChunk{std::move(c), t + rates.inference_delay};
            }
        }
        if (pending && t >= pending->ready_at) {
            active = std::move(pending->chunk);
            active_start = t;
            active_offset = rates.latency_discard;
            ++chunk_id;
            pending.reset();
        }

        TraceRow row;
        row.t = t;
        row.chunk_id = chunk_id;
        row.chunk_index = active_offset + (t - active_start);
        Pose base;
        double gripper;
        if (row.chunk_index >= active.size()) {
            row.starved = true;
            ++tr.starvations;
            base = last_base;
            gripper = last_gripper;
        } else {
            const Action& a = active[row.chunk_index];
            base = action_pose(a);
            gripper = a[7];
            if (policy.fast) {
                history.push_back(a);
                while (history.size() > n_hist) history.pop_front();
                while (history.size() < n_hist) history.push_front(history.front());
            }
        }

        Pose executed = base;
        if (policy.fast) {
            CorrectorObservation co{obs.wrench, obs.proprio, {history.begin(), history.end()}, sched};
            const auto p = policy.fast->predict(co);
            const Vec6 cap = policy.fast->caps();
            const Twist xi = geometry::clamp_twist(p.twist, cap[0], cap[3]);
            row.residual = xi.to_array();
            acc = bound_offset(geometry::compose(acc, geometry::twist_to_delta_pose(xi)), rates.residual_linear_bound,
                               rates.residual_angular_bound);
            executed = geometry::compose(base, acc);
        }
        last_base = base;
        last_gripper = gripper;

        sim::StepResult res;
        try {
            res = env.step({executed, gripper});
        } catch (const sim::WorkspaceViolation&) {
            tr.workspace_violation = true;
            break;
        }
        for (int i = 0; i < 6; ++i) {
            wrenches.pop_front();
            wrenches.push_back(res.wrench[i]);
        }

        row.base = base;
        row.executed = executed;
        row.gripper = gripper;
        row.wrench = res.wrench;
        row.normal_force = res.normal_force;
        row.contact = res.contact;
        row.contact_prob = sched.contact_prob;
        row.belief = sched.belief;
        row.phase = env.geometric_phase();
        tr.rows.push_back(std::move(row));

        settled = goal_reached(env) ? settled + 1 : 0;
        if (settled >= kSettleSteps) break;
    }
    tr.depth = env.depth();
    tr.lateral = env.lateral_offset();
    tr.wiped_fraction = cfg.wiping() ? env.wiped_fraction() : 0.0;
    return tr;
}

EpisodeMetrics compute_metrics(const Trace& trace, const std::string& task) {
    EpisodeMetrics m;
    double sum = 0.0;
    std::size_t over = 0, under = 0;
    for (const auto& r : trace.rows) {
        if (!r.contact) continue;
        ++m.contact_steps;
        sum += r.normal_force;
        over += r.normal_force > kOverPressure;
        under += r.normal_force < kUnderPressure;
    }
    if (m.contact_steps) {
        const double n = double(m.contact_steps);
        m.mean_fn = sum / n;
        m.over_ratio = double(over) / n;
        m.under_ratio = double(under) / n;
    }
    if (trace.workspace_violation) return m;
    if (task == "wiping") {
        m.wiping_score = trace.wiped_fraction >= 1.0 ? 1.0 : trace.wiped_fraction > 0.0 ? 0.5 : 0.0;
        m.success = m.wiping_score >= 0.5;
    } else {
        m.success = trace.depth >= trace.seat_depth && trace.lateral < trace.clearance;
    }
    return m;
}

std::vector<std::string> trace_columns(std::size_t phases) {
    std::vector<std::string> c{"t", "chunk_id", "chunk_index", "starved"};
    for (const char* n : {"px", "py", "pz", "qw", "qx", "qy", "qz"}) c.push_back(std::string("base_") + n);
    for (const char* n : {"x", "y", "z", "roll", "pitch", "yaw"}) c.push_back(std::string("res_") + n);
    for (const char* n : {"px", "py", "pz", "qw", "qx", "qy", "qz"}) c.push_back(std::string("exec_") + n);
    c.push_back("gripper");
    for (const char* n : {"fx", "fy", "fz", "tx", "ty", "tz"}) c.push_back(n);
    c.insert(c.end(), {"normal_force", "contact", "contact_prob"});
    for (std::size_t k = 0; k < phases; ++k) c.push_back("belief_" + std::to_string(k));
    c.push_back("phase");
    return c;
}

namespace {

std::vector<double> row_values(const TraceRow& r) {
    std::vector<double> v{double(r.t), double(r.chunk_id), double(r.chunk_index), r.starved ? 1.0 : 0.0};
    for (double x : r.base.to_array()) v.push_back(x);
    for (double x : r.residual) v.push_back(x);
    for (double x : r.executed.to_array()) v.push_back(x);
    v.push_back(r.gripper);
    for (double x : r.wrench) v.push_back(x);
    v.insert(v.end(), {r.normal_force, r.contact ? 1.0 : 0.0, r.contact_prob});
    v.insert(v.end(), r.belief.begin(), r.belief.end());
    v.push_back(double(r.phase));
    return v;
}

std::size_t phase_count(const Trace& t) { return t.rows.empty() ? 0 : t.rows.front().belief.size(); }

}  // namespace

void write_trace_csv(const Trace& trace, const std::filesystem::path& path) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw std::runtime_error("cannot write " + path.string());
    const auto cols = trace_columns(phase_count(trace));
    for (std::size_t i = 0; i < cols.size(); ++i) os << (i ? "," : "") << cols[i];
    os << '\n';
    char buf[32];
    for (const auto& r : trace.rows) {
        const auto v = row_values(r);
        for (std::size_t i = 0; i < v.size(); ++i) {
            std::snprintf(buf, sizeof buf, "%.17g", v[i]);
            os << (i ? "," : "") << buf;
        }
        os << '\n';
    }
}

void write_trace_binary(const Trace& trace, const std::filesystem::path& path) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("cannot write " + path.string());
    for (const auto& r : trace.rows) {
        const auto v = row_values(r);
        os.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(double)));
    }
}

Summary batch_eval(const Policy& policy, const sim::SimConfig& sim_cfg, const RateConfig& rates, std::size_t n_trials,
                   std::uint64_t seed, const std::string& variant,
                   const std::optional<std::filesystem::path>& trace_dir) {
    validate(rates);
    sim::SimConfig cfg = sim_cfg;
    cfg.substeps = rates.interp_substeps;
    cfg.control_rate = rates.f_c;
    Summary s;
    s.task = cfg.task;
    s.ood = cfg.ood;
    s.variant = variant;
    s.n_trials = n_trials;
    s.trials.resize(n_trials);
    std::vector<Trace> traces(n_trials);
    // episodes are independent; results land in fixed slots so the order never depends on scheduling
#pragma omp parallel for schedule(dynamic, 1)
    for (std::size_t i = 0; i < n_trials; ++i) {
        const std::uint64_t trial_seed = mix_seed(seed, i);
        sim::Env env(cfg, trial_seed);
        traces[i] = run_episode(policy, env, rates, trial_seed);
        s.trials[i] = {trial_seed, compute_metrics(traces[i], cfg.task), traces[i].rows.size(), traces[i].starvations};
    }
    if (trace_dir) {
        std::filesystem::create_directories(*trace_dir);
        for (std::size_t i = 0; i < n_trials; ++i) {
            char name[32];
            std::snprintf(name, sizeof name, "trial_%03zu", i);
            write_trace_csv(traces[i], *trace_dir / (std::string(name) + ".csv"));
            write_trace_binary(traces[i], *trace_dir / (std::string(name) + ".f64"));
        }
    }

    std::size_t wins = 0, contact = 0;
    double score = 0.0, fn = 0.0, over = 0.0, under = 0.0;
    for (const auto& t : s.trials) {
        wins += t.metrics.success;
        score += t.metrics.wiping_score;
        if (!t.metrics.contact_steps) continue;
        const double n = double(t.metrics.contact_steps);
        contact += t.metrics.contact_steps;
        fn += *t.metrics.mean_fn * n;
        over += t.metrics.over_ratio * n;
        under += t.metrics.under_ratio * n;
    }
    s.sr = n_trials ? double(wins) / double(n_trials) : 0.0;
    if (cfg.wiping() && n_trials) s.score = score / double(n_trials);
    if (contact) {
        s.mean_fn = fn / double(contact);
        s.over = over / double(contact);
        s.under = under / double(contact);
    }
    return s;
}

nlohmann::json to_json(const Summary& s) {
    auto opt = [](const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(kNotApplicable); };
    nlohmann::json j;
    j["task"] = s.task;
    j["ood"] = s.ood;
    j["variant"] = s.variant;
    j["n_trials"] = s.n_trials;
    j["SR"] = s.sr;
    j["Score"] = opt(s.score);
    j["mean_Fn"] = opt(s.mean_fn);
    j["over"] = opt(s.over);
    j["under"] = opt(s.under);
    std::size_t starved = 0;
    for (const auto& t : s.trials) starved += t.starvations;
    j["starvations"] = starved;
    return j;
}

void write_trials_csv(const Summary& s, const std::filesystem::path& path) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw std::runtime_error("cannot write " + path.string());
    os << "trial,seed,success,score,mean_Fn,over,under,steps,starvations\n";
    char buf[256];
    for (std::size_t i = 0; i < s.trials.size(); ++i) {
        const auto& t = s.trials[i];
        const auto& m = t.metrics;
        char fn[32];
        if (m.mean_fn) std::snprintf(fn, sizeof fn, "%.17g", *m.mean_fn);
        else std::snprintf(fn, sizeof fn, "%s", kNotApplicable);
        std::snprintf(buf, sizeof buf, "%zu,%llu,%d,%.17g,%s,%.17g,%.17g,%zu,%zu\n", i,
                      static_cast<unsigned long long>(t.seed), m.success ? 1 : 0, m.wiping_score, fn, m.over_ratio,
                      m.under_ratio, t.steps, t.starvations);
        os << buf;
    }
}

}  // namespace phaforce::exec
