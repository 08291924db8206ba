#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "phaforce/sim.hpp"
#include "sim_scenarios.hpp"

using namespace phaforce;
using namespace phaforce::sim;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("phaforce_test_sim_" + name);
    fs::remove_all(p);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

bool trees_identical(const fs::path& a, const fs::path& b) {
    std::vector<fs::path> fa, fb;
    for (const auto& e : fs::recursive_directory_iterator(a))
        if (e.is_regular_file()) fa.push_back(fs::relative(e.path(), a));
    for (const auto& e : fs::recursive_directory_iterator(b))
        if (e.is_regular_file()) fb.push_back(fs::relative(e.path(), b));
    std::sort(fa.begin(), fa.end());
    std::sort(fb.begin(), fb.end());
    if (fa != fb) return false;
    for (const auto& f : fa)
        if (slurp(a / f) != slurp(b / f)) return false;
    return true;
}

}  // namespace

TEST_CASE("free space: zero wrench and no contact") {
    for (const std::string task : {"charger", "wiping"}) {
        Env env(scenarios::noiseless(task), 3);
        Command cmd;
        cmd.pose = env.state().tcp;
        cmd.pose.position += Vec3(0.01, -0.005, 0.01);
        const auto r = env.step(cmd);
        CHECK_FALSE(r.contact);
        for (double v : r.true_wrench) CHECK(v == 0.0);
        for (double v : r.wrench) CHECK(v == 0.0);
    }
    // with sensor noise the reading is pure noise of the configured scale
    Env env(default_config("charger"), 3);
    double ss = 0;
    const int n = 400;
    for (int i = 0; i < n; ++i) {
        const auto r = env.step({env.state().tcp, 0.04});
        ss += r.wrench[0] * r.wrench[0];
        CHECK(r.true_wrench[0] == 0.0);
    }
    CHECK(std::sqrt(ss / n) == doctest::Approx(0.2).epsilon(0.15));
}

TEST_CASE("spring law: 1 mm static penetration of the plate gives 5 N") {
    Env env(scenarios::noiseless("charger"), 4);
    const Vec3 far = env.state().hole + Vec3(0.015, 0.0, 0.0);  // well outside the chamfer
    Command cmd{Pose(far + Vec3(0, 0, 0.004), geometry::Quat::Identity()), 0.04};
    scenarios::hold(env, cmd, 2);
    cmd.pose.position.z() = -0.001;
    scenarios::hold(env, cmd, 3);
    const auto& s = env.state();
    CHECK(s.contact);
    CHECK(s.normal_force == doctest::Approx(5.0).epsilon(1e-12));
    CHECK(s.true_wrench[2] == doctest::Approx(-5.0).epsilon(1e-12));
    CHECK(std::abs(s.true_wrench[0]) < 1e-12);
    CHECK(std::abs(s.true_wrench[1]) < 1e-12);
}

TEST_CASE("rim contact: chamfer reaction points toward the hole axis") {
    Rng rng(11);
    for (int i = 0; i < 50; ++i) {
        Env env(scenarios::noiseless("charger"), 100 + i);
        const auto& c = env.config();
        const double r = rng.uniform(c.clearance + 1e-4, c.clearance + c.rim_width - 1e-4);
        const double angle = rng.uniform(-3.14, 3.14), press = rng.uniform(2e-4, 1.5e-3);
        scenarios::peg_on_rim(env, r, angle, press);
        const auto& s = env.state();
        REQUIRE(s.contact);
        CHECK_FALSE(s.inside);
        // oracle: vertical load from the spring law, lateral = slope x load along -radial
        const double fn = c.k_n * press;
        CHECK(s.true_wrench[2] == doctest::Approx(-fn).epsilon(1e-9));
        const Vec3 radial(std::cos(angle), std::sin(angle), 0.0);
        const Vec3 reaction = -Vec3(s.true_wrench[0], s.true_wrench[1], 0.0);  // environment on the peg
        CHECK(reaction.dot(radial) < 0.0);
        CHECK((reaction + c.rim_slope * fn * radial).norm() < 1e-9);
    }
}

TEST_CASE("compression only and no wrench without commanded motion") {
    Env env(scenarios::noiseless("charger"), 5);
    auto cmd = scenarios::peg_on_rim(env, 0.005, 0.3, 0.001);
    const auto w0 = env.state().true_wrench;
    for (int i = 0; i < 10; ++i) {
        env.step(cmd);
        CHECK(env.state().normal_force >= 0.0);
        for (int k = 0; k < 6; ++k) CHECK(std::abs(env.state().true_wrench[k]) <= std::abs(w0[k]) + 1e-12);
    }
    // lifting clear releases the load completely
    cmd.pose.position.z() = 0.01;
    env.step(cmd);
    CHECK(env.state().normal_force == 0.0);
    CHECK_FALSE(env.state().contact);
}

TEST_CASE("misaligned peg jams at the bore entry and produces yaw torque") {
    auto cfg = scenarios::noiseless("charger");
    for (std::uint64_t seed = 0; seed < 200; ++seed) {
        Env env(cfg, seed);
        if (std::abs(env.state().grasp_yaw) < cfg.yaw_tol * 1.2) continue;
        Command cmd{Pose(env.state().hole + Vec3(0, 0, 0.005), geometry::Quat::Identity()), 0.04};
        scenarios::hold(env, cmd, 2);
        cmd.pose.position.z() = -0.010;
        scenarios::hold(env, cmd, 4);
        const auto& s = env.state();
        CHECK(s.inside);
        CHECK(s.jammed);
        CHECK_FALSE(env.seated());
        // torque opposes the misalignment, reported as the tool's torque on the environment
        CHECK(s.true_wrench[5] * env.yaw_error() > 0.0);
        return;
    }
    FAIL("no seed with a large grasp yaw");
}

TEST_CASE("workspace guard and config validation") {
    Env env(default_config("charger"), 1);
    Command cmd{Pose(Vec3(0.5, 0, 0.05), geometry::Quat::Identity()), 0.04};
    CHECK_THROWS_AS(env.step(cmd), WorkspaceViolation);
    CHECK_THROWS_AS(default_config("drawer"), ConfigError);
    CHECK_THROWS_AS(sim_config_from_json({{"bogus", 1}}, default_config("charger")), ConfigError);
    CHECK_THROWS_AS(sim_config_from_json({{"k_n", -1.0}}, default_config("charger")), ConfigError);
    const auto c = sim_config_from_json({{"mu", 0.7}}, default_config("usb"));
    CHECK(c.mu == 0.7);
    CHECK(c.clearance == default_config("usb").clearance);
    CHECK(to_json(sim_config_from_json(to_json(c), default_config("charger"))) == to_json(c));
}

TEST_CASE("renderer: views, determinism and response to the tool") {
    Env a(default_config("charger"), 9), b(default_config("charger"), 9);
    const auto img = a.render();
    CHECK(img.size() == 3u * 32 * 32);
    CHECK(img == b.render());
    Command cmd{a.state().tcp, 0.04};
    cmd.pose.position.x() += 0.004;
    a.step(cmd);
    CHECK(a.render() != img);
    Env w(default_config("wiping"), 9);
    const auto wi = w.render();
    CHECK(*std::max_element(wi.begin(), wi.end()) >= 200);  // dirt and sponge are bright
}

TEST_CASE("expert completes at least 95 of 100 peg-in-hole episodes") {
    for (const std::string task : {"charger", "usb"}) {
        const auto cfg = default_config(task);
        int ok = 0;
        for (int i = 0; i < 100; ++i) ok += episode_succeeded(cfg, record_episode(cfg, mix_seed(2024, i)));
        INFO(task);
        CHECK(ok >= 95);
    }
}

TEST_CASE("expert wiping holds the mean normal force near 18.7 N") {
    const auto cfg = default_config("wiping");
    double sum = 0;
    std::size_t n = 0;
    int ok = 0;
    for (int i = 0; i < 20; ++i) {
        const auto ep = record_episode(cfg, mix_seed(77, i));
        ok += episode_succeeded(cfg, ep);
        for (std::size_t t = 0; t < ep.length; ++t)
            if (ep.phase[t] == 2 && ep.contact[t]) {
                sum += -ep.wrenches[t * 6 + 2];
                ++n;
            }
    }
    CHECK(ok == 20);
    const double mean = sum / n;
    CHECK(mean > 18.7 - 1.5);
    CHECK(mean < 18.7 + 1.5);
}

TEST_CASE("expert rollouts are deterministic per seed") {
    for (double jitter : {0.0, 1.0}) {
        auto cfg = default_config("charger");
        cfg.jitter = jitter;
        const auto a = record_episode(cfg, 31), b = record_episode(cfg, 31);
        CHECK(a.actions == b.actions);
        CHECK(a.wrenches == b.wrenches);
        CHECK(a.images == b.images);
    }
    auto cfg = default_config("charger");
    CHECK(record_episode(cfg, 31).actions != record_episode(cfg, 32).actions);
}

TEST_CASE("labels: lengths, free-space prefix and phase graph order") {
    auto cfg = default_config("charger");
    cfg.max_steps = 6;  // stops while still in free space
    const auto early = record_episode(cfg, 3);
    CHECK(early.length == 6);
    for (std::size_t t = 0; t < early.length; ++t) {
        CHECK(early.contact[t] == 0);
        CHECK(early.phase[t] == 0);
    }

    for (const std::string task : {"charger", "wiping"}) {
        const auto c = default_config(task);
        const auto phases = task_by_id(task).phases;
        for (int i = 0; i < 10; ++i) {
            const auto ep = record_episode(c, mix_seed(5, i));
            CHECK(ep.contact.size() == ep.length);
            CHECK(ep.phase.size() == ep.length);
            CHECK(ep.actions.size() == 8 * ep.length);
            CHECK(ep.images.size() == 3 * 32 * 32 * ep.length);
            CHECK(ep.phase.front() == 0);
            CHECK(ep.phase.back() == phases.size() - 1);
            for (auto p : ep.phase) CHECK(p < phases.size());
            // contact is never labeled while the expert is still approaching in free space from the start
            CHECK(ep.contact.front() == 0);
        }
    }
}

TEST_CASE("injected jam produces a recovery segment between search and insert") {
    auto cfg = default_config("charger");
    const auto phases = plug_in_phases();
    const auto search = phases.index("search"), recovery = phases.index("recovery"), insert = phases.index("insert");
    int found = 0;
    for (std::uint64_t seed = 0; seed < 300 && found < 3; ++seed) {
        Env env(cfg, seed);
        if (std::abs(env.state().grasp_yaw) < cfg.yaw_tol * 1.3) continue;
        ScriptedExpert expert(env, seed);
        expert.set_yaw_relief(0.0);  // no compliance in yaw: the peg jams
        std::vector<std::size_t> labels;
        for (int t = 0; t < cfg.max_steps && !expert.finished(); ++t) {
            env.step(expert.act(env));
            labels.push_back(expert.phase());
        }
        auto first = [&](std::size_t p, std::size_t from = 0) {
            return std::size_t(std::find(labels.begin() + from, labels.end(), p) - labels.begin());
        };
        const auto s = first(search), r = first(recovery, s);
        if (s == labels.size() || r == labels.size()) continue;  // fell straight into the bore
        const auto i = first(insert, r);
        CHECK(s < r);
        CHECK(r < i);
        CHECK(i < labels.size());
        CHECK(env.seated());
        ++found;
    }
    CHECK(found >= 1);
}

TEST_CASE("dataset: counts, manifest, byte-identical regeneration and round trip") {
    auto cfg = default_config("charger");
    std::vector<std::string> log;
    const auto ds = generate_dataset(cfg, 4, 99, [&](const std::string& m) { log.push_back(m); });
    CHECK(ds.episodes.size() == 4);
    CHECK(log.size() == ds.discarded);

    const auto a = scratch("a"), b = scratch("b");
    save_dataset(ds, a);
    save_dataset(generate_dataset(cfg, 4, 99), b);
    CHECK(trees_identical(a, b));

    const auto manifest = nlohmann::json::parse(slurp(a / "manifest.json"));
    CHECK(manifest["episodes"].size() == 4);
    for (std::size_t i = 0; i < 4; ++i) CHECK(manifest["episodes"][i]["seed"] == ds.episodes[i].seed);

    const auto back = load_dataset(a);
    REQUIRE(back.episodes.size() == 4);
    for (std::size_t i = 0; i < 4; ++i) {
        CHECK(back.episodes[i].actions == ds.episodes[i].actions);
        CHECK(back.episodes[i].images == ds.episodes[i].images);
        CHECK(back.episodes[i].phase == ds.episodes[i].phase);
        CHECK(back.episodes[i].contact == ds.episodes[i].contact);
    }
    CHECK(to_json(back.config) == to_json(cfg));

    const auto c = scratch("c");
    save_dataset(generate_dataset(cfg, 4, 100), c);
    CHECK_FALSE(trees_identical(a, c));
    fs::remove_all(a);
    fs::remove_all(b);
    fs::remove_all(c);
}

TEST_CASE("OOD wiping raises the board by 3 cm in the manifest") {
    auto cfg = default_config("wiping");
    const auto in = scratch("in"), out = scratch("ood");
    save_dataset(generate_dataset(cfg, 1, 5), in);
    cfg.ood = true;
    save_dataset(generate_dataset(cfg, 1, 5), out);
    const auto mi = nlohmann::json::parse(slurp(in / "manifest.json"));
    const auto mo = nlohmann::json::parse(slurp(out / "manifest.json"));
    CHECK(mo["board_height"].get<double>() - mi["board_height"].get<double>() == doctest::Approx(0.03).epsilon(1e-12));
    fs::remove_all(in);
    fs::remove_all(out);
}

TEST_CASE("episode accessors pad at the boundaries") {
    const auto ep = record_episode(default_config("charger"), 8);
    const auto obs = ep.observation(0, 36);
    CHECK(obs.wrench.size() == 36 * 6);
    for (std::size_t i = 0; i < 35 * 6; ++i) CHECK(obs.wrench[i] == 0.0);
    const auto w0 = ep.wrench(0);
    for (int k = 0; k < 6; ++k) CHECK(obs.wrench[35 * 6 + k] == w0[k]);
    const auto chunk = ep.chunk(ep.length - 2, 16);
    CHECK(chunk.size() == 16);
    CHECK(chunk.back() == ep.action(ep.length - 1));
    const auto hist = ep.history(1, 4);
    CHECK(hist[0] == ep.action(0));
    CHECK(hist[3] == ep.action(1));
}

TEST_CASE("closed loop: wiping teacher regulates F_z to the target") {
    Rng rng(21);
    for (int i = 0; i < 10; ++i) {
        Env env(scenarios::noiseless("wiping"), 300 + i);
        const double start = 12.0 + (i % 2 ? 10.0 : -10.0) * rng.uniform(0.8, 1.0);
        const auto cmd = scenarios::pressed_sponge(env, start);
        REQUIRE(env.state().held);
        const auto fz = scenarios::wiping_teacher_rollout(env, cmd, 100);
        CHECK(std::abs(fz.back() + 12.0) <= 1.0);
    }
}

TEST_CASE("closed loop: search teacher monotonically relieves tangential force from rim contact") {
    Rng rng(22);
    for (int i = 0; i < 40; ++i) {
        Env env(scenarios::noiseless("charger"), 400 + i);
        const auto& c = env.config();
        const auto cmd = scenarios::peg_on_rim(env, rng.uniform(c.clearance + 1e-4, c.clearance + c.rim_width - 1e-4),
                                               rng.uniform(-3.14, 3.14), rng.uniform(2e-4, 1.5e-3));
        const auto ft = scenarios::search_teacher_rollout(env, cmd, 50);
        CHECK(ft.front() > 0.0);
        for (std::size_t t = 1; t < ft.size(); ++t) CHECK(ft[t] <= ft[t - 1] + 1e-12);
        CHECK(ft.back() < ft.front());
    }
}
