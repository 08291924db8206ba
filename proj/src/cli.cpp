#include "phaforce/cli.hpp"

#include <cstdlib>
#include <fstream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "phaforce/diagnostics.hpp"
#include "phaforce/models.hpp"
#include "phaforce/run_config.hpp"

namespace phaforce::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Options {
    std::string config, task, ablate, out;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> trials;
    bool ood = false;
    std::string stage;
};

void write_text(const fs::path& path, const std::string& text) {
    fs::create_directories(path.parent_path());
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot write " + path.string());
    os << text;
}

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

RunConfig resolve(const Options& o) {
    json j = json::object();
    if (!o.config.empty()) {
        std::ifstream is(o.config);
        if (!is) throw RunConfigError("cannot open config file " + o.config);
        try {
            j = json::parse(is);
        } catch (const json::parse_error& e) {
            throw RunConfigError("config " + o.config + " is not valid JSON: " + e.what());
        }
        if (!j.is_object()) throw RunConfigError("config must be a JSON object");
    }
    if (!o.task.empty()) j["task"] = o.task;
    if (o.seed) j["seed"] = *o.seed;
    if (o.ood) j["ood"] = true;
    if (!o.ablate.empty()) j["ablation"] = o.ablate;
    if (o.trials) j["trials"] = *o.trials;
    return run_config_from_json(j);
}

RunPaths paths_for(const Options& o) {
    if (!o.out.empty()) return {o.out};
    if (const char* env = std::getenv(kOutEnv); env && *env) return {env};
    return {"runs"};
}

struct Context {
    RunConfig cfg;
    RunPaths paths;
    std::ostream& out;
    train::Logger log() const {
        return [&os = out](const std::string& s) { os << s << "\n" << std::flush; };
    }
};

sim::Dataset require_dataset(const Context& c) {
    const fs::path dir = c.paths.dataset(c.cfg);
    if (!fs::exists(dir / "manifest.json")) throw MissingDependency("no dataset at " + dir.string() + "; run gen first");
    return sim::load_dataset(dir);
}

std::shared_ptr<Cap> require_cap(const Context& c) {
    const fs::path dir = c.paths.cap(c.cfg);
    if (!fs::exists(dir / "cap")) throw MissingDependency("no CAP checkpoint at " + dir.string() + "; run train cap first");
    return models::load_cap(dir);
}

std::shared_ptr<SlowPlanner> require_slow(const Context& c, const Cap& cap) {
    const fs::path dir = c.paths.slow(c.cfg);
    if (!fs::exists(dir)) throw MissingDependency("no Slow checkpoint at " + dir.string() + "; run train slow first");
    return models::load_slow(dir, cap.encoder());
}

std::shared_ptr<FastCorrector> require_fast(const Context& c, const Cap& cap) {
    const fs::path dir = c.paths.fast(c.cfg);
    if (!fs::exists(dir)) throw MissingDependency("no Fast checkpoint at " + dir.string() + "; run train fast first");
    return models::load_fast(dir, cap.encoder());
}

train::StageConfig seeded(train::StageConfig s, std::uint64_t seed) {
    s.seed = seed;
    return s;
}

void cmd_gen(const Context& c) {
    const fs::path dir = c.paths.dataset(c.cfg);
    const sim::Dataset ds = sim::generate_dataset(c.cfg.env_config(), c.cfg.demos, c.cfg.seed, c.log());
    fs::remove_all(dir);
    sim::save_dataset(ds, dir);
    write_json(dir / "config.json", to_json(c.cfg));
    c.out << "generated " << ds.episodes.size() << " episodes (" << ds.discarded << " failed rollouts discarded) in "
          << dir.string() << "\n";
}

void train_stage(const Context& c, const std::string& stage) {
    const sim::Dataset ds = require_dataset(c);
    const auto split = train::split_episodes(ds.episodes.size(), c.cfg.held_out_fraction, c.cfg.seed);
    fs::path dir;
    std::vector<train::CurveRow> curve;
    json metrics;
    if (stage == "cap") {
        dir = c.paths.cap(c.cfg);
        auto run = train::train_cap(ds, split, c.cfg.cap, c.cfg.encoder, seeded(c.cfg.train_cap, c.cfg.seed), c.log());
        fs::remove_all(dir);
        models::save_cap(dir, *run.cap);
        curve = std::move(run.curve);
        metrics = {{"contact_accuracy", run.held_out.contact_accuracy},
                   {"phase_accuracy", run.held_out.phase_accuracy},
                   {"anticipation", run.held_out.anticipation},
                   {"onsets", run.held_out.onsets},
                   {"loss", run.held_out.loss}};
    } else if (stage == "slow") {
        const auto cap = require_cap(c);
        dir = c.paths.slow(c.cfg);
        auto run = train::train_slow(ds, split, *cap, c.cfg.slow_config(), seeded(c.cfg.train_slow, c.cfg.seed), c.log());
        fs::remove_all(dir);
        models::save_slow(dir, *run.slow);
        curve = std::move(run.curve);
        metrics = {{"held_out_loss", run.held_out_loss}};
    } else if (stage == "fast") {
        const auto cap = require_cap(c);
        dir = c.paths.fast(c.cfg);
        auto run = train::train_fast(ds, split, *cap, c.cfg.fast_config(), c.cfg.teacher, seeded(c.cfg.train_fast, c.cfg.seed),
                                     c.log());
        fs::remove_all(dir);
        models::save_fast(dir, *run.fast);
        curve = std::move(run.curve);
        metrics = {{"held_out_l1", run.held_out_l1}, {"zero_l1", run.zero_l1}};
    } else {
        throw RunConfigError("unknown stage '" + stage + "' (expected cap, slow or fast)");
    }
    train::write_curve((dir / "curve.csv").string(), curve);
    write_json(dir / "metrics.json", metrics);
    write_json(dir / "config.json", to_json(c.cfg));
    c.out << stage << " held-out " << metrics.dump() << "\n" << stage << " checkpoint in " << dir.string() << "\n";
}

exec::Summary evaluate(const Context& c) {
    const auto cap = require_cap(c);
    exec::Policy policy{cap, require_slow(c, *cap), nullptr};
    if (!c.cfg.ablation.no_fast) policy.fast = require_fast(c, *cap);
    const fs::path dir = c.paths.eval(c.cfg);
    fs::remove_all(dir);
    const auto summary = exec::batch_eval(policy, c.cfg.env_config(), c.cfg.rates, c.cfg.trials, c.cfg.seed,
                                          c.cfg.ablation.name(), dir / "traces");
    write_json(dir / "summary.json", exec::to_json(summary));
    exec::write_trials_csv(summary, dir / "trials.csv");
    write_json(dir / "config.json", to_json(c.cfg));
    return summary;
}

void cmd_eval(const Context& c) {
    const auto s = evaluate(c);
    c.out << exec::to_json(s).dump() << "\n";
}

std::string cell(const json& v) {
    if (v.is_string()) return v.get<std::string>();
    std::ostringstream os;
    os << v.get<double>();
    return os.str();
}

void cmd_ablate(const Context& base, const std::string& list) {
    std::vector<Ablation> variants;
    if (list.empty()) {
        variants = {Ablation{}, Ablation{true, false, false}, Ablation{false, true, false}, Ablation{false, false, true}};
    } else {
        std::stringstream ss(list);
        for (std::string v; std::getline(ss, v, ',');) variants.push_back(parse_ablation(v));
    }
    json rows = json::array();
    std::string table = "variant,SR,Score,mean_Fn,over,under\n";
    for (const auto& a : variants) {
        Context c{base.cfg, base.paths, base.out};
        c.cfg.ablation = a;
        // the ablation sweep trains whichever variant checkpoints are missing (training data is always in-distribution)
        RunConfig train_cfg = c.cfg;
        train_cfg.ood = false;
        const Context tc{train_cfg, c.paths, c.out};
        if (!fs::exists(c.paths.slow(train_cfg))) train_stage(tc, "slow");
        if (!a.no_fast && !fs::exists(c.paths.fast(train_cfg))) train_stage(tc, "fast");
        const auto s = exec::to_json(evaluate(c));
        c.out << s.dump() << "\n";
        rows.push_back(s);
        table += a.name();
        for (const char* k : {"SR", "Score", "mean_Fn", "over", "under"}) table += "," + cell(s.at(k));
        table += "\n";
    }
    const fs::path dir = base.paths.ablate(base.cfg);
    write_json(dir / "summary.json", rows);
    write_text(dir / "table.csv", table);
    write_json(dir / "config.json", to_json(base.cfg));
    base.out << table;
}

int cmd_gradcheck(const Context& c) {
    bool ok = true;
    for (const auto& b : diagnostics::gradcheck_suite(c.cfg.seed)) {
        const bool pass = b.report.max_rel_error <= 1e-4;
        ok = ok && pass;
        c.out << (pass ? "ok   " : "FAIL ") << b.block << " max_rel_error " << b.report.max_rel_error << " over "
              << b.report.checked << " entries (worst " << b.report.worst_param << "[" << b.report.worst_index << "])\n";
    }
    return ok ? kExitOk : kExitRuntime;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Phase-aware force-guided slow-fast manipulation policy"};
    app.require_subcommand(1);
    Options o;
    auto common = [&](CLI::App* sub) {
        sub->add_option("--config", o.config, "JSON run config")->check(CLI::ExistingFile);
        sub->add_option("--seed", o.seed, "seed (overrides the config)");
        sub->add_option("--task", o.task, "charger, usb or wiping");
        sub->add_flag("--ood", o.ood, "raised wiping board");
        sub->add_option("--ablate", o.ablate, "no_pb, no_ori, no_fast (comma separated)");
        sub->add_option("--out", o.out, std::string("output root (default $") + kOutEnv + " or ./runs)");
    };
    auto* gen = app.add_subcommand("gen", "generate expert demonstrations");
    auto* trn = app.add_subcommand("train", "train one stage: cap, slow or fast");
    trn->add_option("stage", o.stage, "cap, slow or fast")->required()->check(CLI::IsMember({"cap", "slow", "fast"}));
    auto* evl = app.add_subcommand("eval", "closed-loop evaluation");
    evl->add_option("--trials", o.trials, "number of trials");
    auto* abl = app.add_subcommand("ablate", "train missing variants and evaluate each");
    abl->add_option("--trials", o.trials, "number of trials");
    auto* gck = app.add_subcommand("gradcheck", "finite-difference gradient checks of every block");
    for (auto* s : {gen, trn, evl, abl, gck}) common(s);

    std::vector<std::string> rev(args.rbegin(), args.rend() - (args.empty() ? 0 : 1));
    try {
        app.parse(rev);
    } catch (const CLI::CallForHelp& e) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::CallForAllHelp& e) {
        out << app.help("", CLI::AppFormatMode::All);
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n";
        return kExitConfig;
    }

    try {
        // the sweep's --ablate is a list of variants, not one combined variant
        std::string sweep;
        if (abl->parsed()) std::swap(sweep, o.ablate);
        Context c{resolve(o), paths_for(o), out};
        if (gen->parsed()) cmd_gen(c);
        else if (trn->parsed()) train_stage(c, o.stage);
        else if (evl->parsed()) cmd_eval(c);
        else if (abl->parsed()) cmd_ablate(c, sweep);
        else return cmd_gradcheck(c);
        return kExitOk;
    } catch (const RunConfigError& e) {
        err << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const MissingDependency& e) {
        err << "missing dependency: " << e.what() << "\n";
        return kExitRuntime;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kExitRuntime;
    }
}

}  // namespace phaforce::cli
