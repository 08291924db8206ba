#include "phaforce/run_config.hpp"

#include <functional>
#include <map>
#include <sstream>

#include "phaforce/models.hpp"

namespace phaforce {

using nlohmann::json;

namespace {

using Setters = std::map<std::string, std::function<void(const json&)>>;

void apply(const json& j, const std::string& what, const Setters& setters) {
    if (!j.is_object()) throw RunConfigError(what + " must be an object");
    for (const auto& [k, v] : j.items()) {
        const auto it = setters.find(k);
        if (it == setters.end()) throw RunConfigError("unknown " + what + " key '" + k + "'");
        try {
            it->second(v);
        } catch (const json::exception& e) {
            throw RunConfigError("bad value for " + what + "." + k + ": " + e.what());
        }
    }
}

train::StageConfig stage_from_json(const json& j, const std::string& what, train::StageConfig s) {
    apply(j, what,
          Setters{{"steps", [&](const json& v) { s.steps = v.get<std::size_t>(); }},
                  {"batch", [&](const json& v) { s.batch = v.get<std::size_t>(); }},
                  {"lr", [&](const json& v) { s.lr = v.get<double>(); }},
                  {"final_lr_fraction", [&](const json& v) { s.final_lr_fraction = v.get<double>(); }},
                  {"clip_norm", [&](const json& v) { s.clip_norm = v.get<double>(); }},
                  {"log_every", [&](const json& v) { s.log_every = v.get<std::size_t>(); }},
                  {"noise_draws", [&](const json& v) { s.noise_draws = v.get<std::size_t>(); }}});
    if (s.steps == 0 || s.batch == 0 || s.noise_draws == 0) throw RunConfigError(what + ": steps, batch and noise_draws must be positive");
    if (!(s.lr > 0.0) || !(s.final_lr_fraction >= 0.0 && s.final_lr_fraction <= 1.0) || !(s.clip_norm > 0.0))
        throw RunConfigError(what + ": lr and clip_norm must be positive, final_lr_fraction in [0, 1]");
    return s;
}

bool same_layout(const ImageLayout& a, const ImageLayout& b) { return a.views == b.views && a.side == b.side; }

// wraps the per-module parsers so every schema error surfaces as RunConfigError
template <class F>
auto rethrow(const std::string& what, F&& f) {
    try {
        return f();
    } catch (const RunConfigError&) {
        throw;
    } catch (const std::invalid_argument& e) {
        throw RunConfigError(what + ": " + e.what());
    }
}

}  // namespace

std::string Ablation::name() const {
    std::string s;
    auto add = [&](bool on, const char* n) {
        if (!on) return;
        if (!s.empty()) s += '+';
        s += n;
    };
    add(no_pb, "no_pb");
    add(no_ori, "no_ori");
    add(no_fast, "no_fast");
    return s.empty() ? "full" : s;
}

Ablation parse_ablation(const std::string& s) {
    Ablation a;
    std::string token;
    std::stringstream ss(s);
    while (std::getline(ss, token, ',')) {
        std::stringstream parts(token);
        std::string flag;
        while (std::getline(parts, flag, '+')) {
            if (flag == "no_pb") a.no_pb = true;
            else if (flag == "no_ori") a.no_ori = true;
            else if (flag == "no_fast") a.no_fast = true;
            else if (flag != "full" && !flag.empty()) throw RunConfigError("unknown ablation '" + flag + "'");
        }
    }
    return a;
}

sim::SimConfig RunConfig::env_config() const {
    sim::SimConfig c = sim;
    c.ood = ood;
    c.substeps = rates.interp_substeps;
    c.control_rate = rates.f_c;
    return c;
}

SlowConfig RunConfig::slow_config() const {
    SlowConfig c = slow;
    c.no_pb = c.no_pb || ablation.no_pb;
    c.no_ori = c.no_ori || ablation.no_ori;
    return c;
}

FastConfig RunConfig::fast_config() const {
    FastConfig c = fast;
    c.no_pb = c.no_pb || ablation.no_pb;
    return c;
}

RunConfig default_run_config(const std::string& task) {
    if (task != "charger" && task != "usb" && task != "wiping") throw RunConfigError("unknown task '" + task + "'");
    RunConfig c;
    c.task = task;
    c.sim = sim::default_config(task);
    c.cap.layout = c.sim.layout;
    c.slow.layout = c.sim.layout;
    c.train_cap.steps = 1000;
    c.train_cap.log_every = 250;
    c.train_slow.steps = 3000;
    c.train_slow.noise_draws = 8;
    c.train_slow.log_every = 500;
    c.train_fast.steps = 1500;
    c.train_fast.log_every = 500;
    return c;
}

json to_json(const train::StageConfig& s) {
    return {{"steps", s.steps},         {"batch", s.batch},     {"lr", s.lr},
            {"final_lr_fraction", s.final_lr_fraction}, {"clip_norm", s.clip_norm}, {"log_every", s.log_every},
            {"noise_draws", s.noise_draws}};
}

json to_json(const RunConfig& c) {
    json sim = sim::to_json(c.sim);
    sim.erase("ood");  // the top-level flag is authoritative
    return {{"task", c.task},
            {"ood", c.ood},
            {"seed", c.seed},
            {"demos", c.demos},
            {"held_out_fraction", c.held_out_fraction},
            {"trials", c.trials},
            {"ablation", c.ablation.name()},
            {"sim", sim},
            {"encoder", models::to_json(c.encoder)},
            {"cap", models::to_json(c.cap)},
            {"slow", models::to_json(c.slow)},
            {"fast", models::to_json(c.fast)},
            {"teacher", models::to_json(c.teacher)},
            {"rates", exec::to_json(c.rates)},
            {"train", {{"cap", to_json(c.train_cap)}, {"slow", to_json(c.train_slow)}, {"fast", to_json(c.train_fast)}}}};
}

RunConfig run_config_from_json(const json& j) {
    if (!j.is_object()) throw RunConfigError("config must be a JSON object");
    std::string task = "charger";
    if (j.contains("task")) {
        if (!j["task"].is_string()) throw RunConfigError("task must be a string");
        task = j["task"].get<std::string>();
    }
    RunConfig c = default_run_config(task);
    apply(j, "config",
          Setters{{"task", [](const json&) {}},
                  {"ood", [&](const json& v) { c.ood = v.get<bool>(); }},
                  {"seed", [&](const json& v) { c.seed = v.get<std::uint64_t>(); }},
                  {"demos", [&](const json& v) { c.demos = v.get<std::size_t>(); }},
                  {"held_out_fraction", [&](const json& v) { c.held_out_fraction = v.get<double>(); }},
                  {"trials", [&](const json& v) { c.trials = v.get<std::size_t>(); }},
                  {"ablation", [&](const json& v) { c.ablation = parse_ablation(v.get<std::string>()); }},
                  {"sim",
                   [&](const json& v) {
                       json s = v;
                       if (s.is_object()) s["task"] = task;
                       c.sim = rethrow("sim", [&] { return sim::sim_config_from_json(s, c.sim); });
                       c.cap.layout = c.slow.layout = c.sim.layout;
                   }},
                  {"encoder", [&](const json& v) { c.encoder = rethrow("encoder", [&] { return models::encoder_config_from_json(v, c.encoder); }); }},
                  {"cap", [&](const json& v) { c.cap = rethrow("cap", [&] { return models::cap_config_from_json(v, c.cap); }); }},
                  {"slow", [&](const json& v) { c.slow = rethrow("slow", [&] { return models::slow_config_from_json(v, c.slow); }); }},
                  {"fast", [&](const json& v) { c.fast = rethrow("fast", [&] { return models::fast_config_from_json(v, c.fast); }); }},
                  {"teacher", [&](const json& v) { c.teacher = rethrow("teacher", [&] { return models::teacher_gains_from_json(v, c.teacher); }); }},
                  {"rates", [&](const json& v) { c.rates = rethrow("rates", [&] { return exec::rate_config_from_json(v, c.rates); }); }},
                  {"train", [&](const json& v) {
                       apply(v, "train",
                             Setters{{"cap", [&](const json& s) { c.train_cap = stage_from_json(s, "train.cap", c.train_cap); }},
                                     {"slow", [&](const json& s) { c.train_slow = stage_from_json(s, "train.slow", c.train_slow); }},
                                     {"fast", [&](const json& s) { c.train_fast = stage_from_json(s, "train.fast", c.train_fast); }}});
                   }}});
    // "sim" must be parsed before model layouts are compared, whatever the key order
    if (j.contains("sim") && j["sim"].contains("layout")) {
        if (j.contains("cap") && j["cap"].contains("layout") && !same_layout(c.cap.layout, c.sim.layout))
            throw RunConfigError("cap.layout differs from sim.layout");
        if (j.contains("slow") && j["slow"].contains("layout") && !same_layout(c.slow.layout, c.sim.layout))
            throw RunConfigError("slow.layout differs from sim.layout");
    }
    validate(c);
    return c;
}

void validate(const RunConfig& c) {
    if (c.demos < 2) throw RunConfigError("demos must be at least 2");
    if (!(c.held_out_fraction > 0.0 && c.held_out_fraction < 1.0)) throw RunConfigError("held_out_fraction must be in (0, 1)");
    if (c.trials == 0) throw RunConfigError("trials must be positive");
    if (c.ood && !c.sim.wiping()) throw RunConfigError("--ood applies to the wiping task only");
    if (!same_layout(c.cap.layout, c.sim.layout) || !same_layout(c.slow.layout, c.sim.layout))
        throw RunConfigError("model image layouts must match the simulator's");
    if (c.slow.horizon != c.rates.horizon) throw RunConfigError("slow.horizon must equal rates.horizon");
    rethrow("sim", [&] { sim::validate(c.env_config()); return 0; });
    rethrow("rates", [&] { exec::validate(c.rates); return 0; });
    rethrow("slow", [&] { models::validate(c.slow, c.encoder); return 0; });
    rethrow("encoder", [&] { models::validate(c.encoder); return 0; });
}

namespace fs = std::filesystem;

fs::path RunPaths::dataset(const RunConfig& c) const { return task_dir(c) / (c.ood ? "data_ood" : "data"); }
fs::path RunPaths::cap(const RunConfig& c) const { return task_dir(c) / "models" / "cap"; }

// only the flags that change a stage's weights select a separate checkpoint
fs::path RunPaths::slow(const RunConfig& c) const {
    Ablation a;
    a.no_pb = c.ablation.no_pb;
    a.no_ori = c.ablation.no_ori;
    return task_dir(c) / "models" / (a.any() ? "slow_" + a.name() : std::string("slow"));
}

fs::path RunPaths::fast(const RunConfig& c) const {
    return task_dir(c) / "models" / (c.ablation.no_pb ? "fast_no_pb" : "fast");
}

fs::path RunPaths::eval(const RunConfig& c) const {
    return task_dir(c) / "eval" / (c.ablation.name() + (c.ood ? "_ood" : ""));
}

fs::path RunPaths::ablate(const RunConfig& c) const { return task_dir(c) / (c.ood ? "ablate_ood" : "ablate"); }

}  // namespace phaforce
