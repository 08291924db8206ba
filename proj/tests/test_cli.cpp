#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <filesystem>
#include <fstream>
#include <sstream>

#include "phaforce/cli.hpp"
#include "phaforce/run_config.hpp"

using namespace phaforce;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Result {
    int code;
    std::string out, err;
};

Result invoke(std::vector<std::string> args) {
    args.insert(args.begin(), "phaforce");
    std::ostringstream out, err;
    const int code = cli::run(args, out, err);
    return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(is), {});
}

// byte-level snapshot of every file below `dir`
std::map<std::string, std::string> tree(const fs::path& dir) {
    std::map<std::string, std::string> m;
    for (const auto& e : fs::recursive_directory_iterator(dir))
        if (e.is_regular_file()) m[fs::relative(e.path(), dir).string()] = slurp(e.path());
    return m;
}

// a run small enough for a unit test
json tiny_config(const std::string& task) {
    return {{"task", task},
            {"demos", 4},
            {"trials", 2},
            {"encoder", {{"hidden", 8}, {"token_dim", 24}, {"pooled_dim", 8}}},
            {"cap", {{"channels", {4, 8}}, {"view_embed", 8}, {"hidden", 16}}},
            {"slow", {{"channels", {4, 8}}, {"view_embed", 8}, {"heads", 4}, {"cond_dim", 16}, {"denoiser_hidden", 32}}},
            {"fast", {{"hidden", {16}}}},
            {"train",
             {{"cap", {{"steps", 5}, {"batch", 4}}},
              {"slow", {{"steps", 5}, {"batch", 4}, {"noise_draws", 2}}},
              {"fast", {{"steps", 5}, {"batch", 4}}}}}};
}

fs::path write_config(const fs::path& dir, const json& j) {
    fs::create_directories(dir);
    const fs::path p = dir / "run.json";
    std::ofstream(p) << j.dump(2);
    return p;
}

}  // namespace

TEST_CASE("run config: task defaults and constants") {
    const auto c = default_run_config("wiping");
    CHECK(c.trials == 20);
    CHECK(c.demos == 80);
    CHECK(c.rates.f_s == 6.0);
    CHECK(c.rates.f_c == 24.0);
    CHECK(c.rates.horizon == 16);
    CHECK(c.encoder.window == 36);
    CHECK(c.slow.heads == 8);
    CHECK(c.slow.train_timesteps == 100);
    CHECK(c.slow.infer_timesteps == 10);
    CHECK(c.teacher.lin[0] == 5e-5);
    CHECK(c.teacher.ang[2] == 3e-2);
    CHECK(c.teacher.target_fz == -12.0);
    CHECK_THROWS_AS(default_run_config("drawer"), RunConfigError);
}

TEST_CASE("run config: JSON round trip, overrides and schema errors") {
    for (const char* task : {"charger", "usb", "wiping"}) {
        const auto c = default_run_config(task);
        CHECK(to_json(run_config_from_json(to_json(c))) == to_json(c));
    }
    const auto c = run_config_from_json({{"task", "usb"}, {"seed", 9}, {"train", {{"slow", {{"steps", 7}}}}}});
    CHECK(c.task == "usb");
    CHECK(c.seed == 9);
    CHECK(c.train_slow.steps == 7);
    CHECK(c.train_slow.noise_draws == default_run_config("usb").train_slow.noise_draws);
    CHECK_THROWS_AS(run_config_from_json({{"tsak", "usb"}}), RunConfigError);
    CHECK_THROWS_AS(run_config_from_json({{"slow", {{"heads", 7}}}}), RunConfigError);  // token dim not divisible
    CHECK_THROWS_AS(run_config_from_json({{"rates", {{"f_c", 25.0}}}}), RunConfigError);
    CHECK_THROWS_AS(run_config_from_json({{"task", "charger"}, {"ood", true}}), RunConfigError);
    CHECK_THROWS_AS(run_config_from_json({{"sim", {{"k_n", -1.0}}}}), RunConfigError);
    CHECK_THROWS_AS(run_config_from_json({{"train", {{"cap", {{"steps", 0}}}}}}), RunConfigError);
}

TEST_CASE("ablation flags and artifact paths") {
    CHECK(parse_ablation("full").name() == "full");
    CHECK(parse_ablation("no_fast").no_fast);
    const auto both = parse_ablation("no_pb,no_ori");
    CHECK(both.no_pb);
    CHECK(both.no_ori);
    CHECK(both.name() == "no_pb+no_ori");
    CHECK_THROWS_AS(parse_ablation("no_vision"), RunConfigError);

    auto c = default_run_config("wiping");
    const RunPaths p{"/r"};
    CHECK(p.slow(c) == fs::path("/r/wiping/models/slow"));
    c.ablation.no_fast = true;
    CHECK(p.slow(c) == fs::path("/r/wiping/models/slow"));  // no_fast does not retrain the planner
    CHECK(p.fast(c) == fs::path("/r/wiping/models/fast"));
    c.ablation = parse_ablation("no_pb");
    CHECK(p.slow(c) == fs::path("/r/wiping/models/slow_no_pb"));
    CHECK(p.fast(c) == fs::path("/r/wiping/models/fast_no_pb"));
    CHECK(c.slow_config().no_pb);
    CHECK(c.fast_config().no_pb);
    c.ood = true;
    CHECK(p.eval(c) == fs::path("/r/wiping/eval/no_pb_ood"));
    CHECK(p.dataset(c) == fs::path("/r/wiping/data_ood"));
}

TEST_CASE("cli: exit codes for config errors and missing dependencies") {
    const fs::path root = fs::temp_directory_path() / "phaforce_cli_errors";
    fs::remove_all(root);
    CHECK(invoke({"gen", "--task", "drawer", "--out", root.string()}).code == cli::kExitConfig);
    CHECK(invoke({"frobnicate"}).code == cli::kExitConfig);
    CHECK(invoke({"train", "warp", "--out", root.string()}).code == cli::kExitConfig);
    CHECK(invoke({"eval", "--ablate", "no_vision", "--out", root.string()}).code == cli::kExitConfig);
    const auto bad = write_config(root, {{"task", "wiping"}, {"demos", "many"}});
    CHECK(invoke({"gen", "--config", bad.string(), "--out", root.string()}).code == cli::kExitConfig);

    const auto r = invoke({"train", "slow", "--task", "charger", "--out", root.string()});
    CHECK(r.code == cli::kExitRuntime);
    CHECK(r.err.find("missing dependency") != std::string::npos);
    fs::remove_all(root);
}

TEST_CASE("cli: gen, train and eval are reproducible from config and seed") {
    const fs::path root = fs::temp_directory_path() / "phaforce_cli_run";
    fs::remove_all(root);
    const auto cfg = write_config(root / "cfg", tiny_config("wiping")).string();
    const std::string out = (root / "out").string();

    REQUIRE(invoke({"gen", "--config", cfg, "--out", out}).code == 0);
    CHECK(fs::exists(root / "out/wiping/data/manifest.json"));
    CHECK(fs::exists(root / "out/wiping/data/config.json"));

    // fast before cap is a stage-ordering error
    CHECK(invoke({"train", "fast", "--config", cfg, "--out", out}).code == cli::kExitRuntime);

    for (const char* stage : {"cap", "slow", "fast"}) REQUIRE(invoke({"train", stage, "--config", cfg, "--out", out}).code == 0);
    const auto models = tree(root / "out/wiping/models");
    CHECK(models.count("cap/curve.csv"));
    CHECK(models.count("slow/config.json"));
    for (const char* stage : {"cap", "slow", "fast"}) REQUIRE(invoke({"train", stage, "--config", cfg, "--out", out}).code == 0);
    CHECK(tree(root / "out/wiping/models") == models);

    const auto e1 = invoke({"eval", "--config", cfg, "--out", out});
    REQUIRE(e1.code == 0);
    const auto report = tree(root / "out/wiping/eval/full");
    const json summary = json::parse(report.at("summary.json"));
    for (const char* k : {"SR", "Score", "mean_Fn", "over", "under"}) CHECK(summary.contains(k));
    CHECK(summary["n_trials"] == 2);
    CHECK(report.at("trials.csv").rfind("trial,seed,success,score,mean_Fn,over,under", 0) == 0);
    CHECK(report.count("traces/trial_000.csv"));
    CHECK(report.count("traces/trial_001.f64"));
    REQUIRE(invoke({"eval", "--config", cfg, "--out", out}).code == 0);
    CHECK(tree(root / "out/wiping/eval/full") == report);

    // the no-Fast variant on the raised board needs no Fast checkpoint
    fs::remove_all(root / "out/wiping/models/fast");
    const auto nf = invoke({"eval", "--config", cfg, "--out", out, "--ood", "--ablate", "no_fast"});
    REQUIRE(nf.code == 0);
    const json s = json::parse(slurp(root / "out/wiping/eval/no_fast_ood/summary.json"));
    CHECK(s["variant"] == "no_fast");
    CHECK(s["ood"] == true);
    CHECK(invoke({"eval", "--config", cfg, "--out", out}).code == cli::kExitRuntime);

    // the ood dataset records the raised board
    REQUIRE(invoke({"gen", "--config", cfg, "--out", out, "--ood"}).code == 0);
    const json m = json::parse(slurp(root / "out/wiping/data_ood/manifest.json"));
    CHECK(m["config"]["board_height"].get<double>() == doctest::Approx(0.02));
    const json ep = json::parse(slurp(root / "out/wiping/data_ood/episode_0000/manifest.json"));
    CHECK(ep["geometry"]["board_height"].get<double>() == doctest::Approx(0.05));
    fs::remove_all(root);
}

TEST_CASE("cli: output root from the environment") {
    const fs::path root = fs::temp_directory_path() / "phaforce_cli_env";
    fs::remove_all(root);
    const auto cfg = write_config(root / "cfg", tiny_config("charger")).string();
    setenv(cli::kOutEnv, (root / "env_out").string().c_str(), 1);
    const auto r = invoke({"gen", "--config", cfg});
    unsetenv(cli::kOutEnv);
    CHECK(r.code == 0);
    CHECK(fs::exists(root / "env_out/charger/data/manifest.json"));
    fs::remove_all(root);
}
