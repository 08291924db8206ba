#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <filesystem>
#include <fstream>

#include "phaforce/models.hpp"
#include "phaforce/nn/checkpoint.hpp"
#include "phaforce/train.hpp"

using namespace phaforce;
using namespace phaforce::train;
namespace fs = std::filesystem;

namespace {

ForceEncoderConfig enc_cfg() {
    ForceEncoderConfig c;
    c.hidden = 8;
    c.token_dim = 24;
    c.pooled_dim = 8;
    return c;
}

CapConfig cap_cfg(const sim::SimConfig& sc) {
    CapConfig c;
    c.layout = sc.layout;
    c.channels = {4, 8};
    c.view_embed = 8;
    c.hidden = 16;
    return c;
}

SlowConfig slow_cfg(const sim::SimConfig& sc) {
    SlowConfig c;
    c.layout = sc.layout;
    c.channels = {4, 8};
    c.view_embed = 8;
    c.heads = 4;
    c.cond_dim = 16;
    c.denoiser_hidden = 32;
    return c;
}

StageConfig stage(std::size_t steps) {
    StageConfig s;
    s.steps = steps;
    s.batch = 8;
    s.seed = 5;
    s.log_every = 1000;
    return s;
}

const sim::Dataset& dataset() {
    static const sim::Dataset ds = sim::generate_dataset(sim::default_config("wiping"), 6, 3);
    return ds;
}

std::vector<double> values(const nn::ParamStore& ps) {
    std::vector<double> out;
    for (const auto& [name, t] : ps.items()) out.insert(out.end(), t.node()->value.begin(), t.node()->value.end());
    return out;
}

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("phaforce_train_" + name);
    fs::remove_all(p);
    return p;
}

}  // namespace

TEST_CASE("split_episodes: disjoint, covering, sorted, seeded") {
    const auto s = split_episodes(80, 0.2, 1);
    CHECK(s.held_out.size() == 16);
    CHECK(s.train.size() == 64);
    std::vector<std::size_t> all = s.train;
    all.insert(all.end(), s.held_out.begin(), s.held_out.end());
    std::sort(all.begin(), all.end());
    for (std::size_t i = 0; i < 80; ++i) CHECK(all[i] == i);
    CHECK(std::is_sorted(s.train.begin(), s.train.end()));
    CHECK(std::is_sorted(s.held_out.begin(), s.held_out.end()));
    CHECK(split_episodes(80, 0.2, 1).held_out == s.held_out);
    CHECK(split_episodes(80, 0.2, 2).held_out != s.held_out);
    // at least one episode on each side
    CHECK(split_episodes(3, 0.01, 1).held_out.size() == 1);
    CHECK(split_episodes(3, 0.99, 1).train.size() == 1);
}

TEST_CASE("train_cap: loss falls, metrics are in range, runs are reproducible") {
    const auto& ds = dataset();
    const auto split = split_episodes(ds.episodes.size(), 0.34, 1);
    const auto sc = ds.config;
    const auto a = train_cap(ds, split, cap_cfg(sc), enc_cfg(), stage(60));
    const auto b = train_cap(ds, split, cap_cfg(sc), enc_cfg(), stage(60));
    REQUIRE(a.curve.size() == 60);
    double head = 0.0, tail = 0.0;
    for (std::size_t i = 0; i < 10; ++i) {
        head += a.curve[i].loss;
        tail += a.curve[50 + i].loss;
    }
    CHECK(tail < head);
    CHECK(values(a.cap->params()) == values(b.cap->params()));
    CHECK(values(a.cap->encoder()->params()) == values(b.cap->encoder()->params()));
    CHECK(a.held_out.contact_accuracy >= 0.0);
    CHECK(a.held_out.contact_accuracy <= 1.0);
    CHECK(a.held_out.phase_accuracy <= 1.0);
    CHECK(a.held_out.samples > 0);
    // learning rate follows the cosine from lr down to lr * final fraction
    CHECK(a.curve.front().lr == doctest::Approx(1e-3));
    CHECK(a.curve.back().lr == doctest::Approx(1e-4).epsilon(0.01));
}

TEST_CASE("train_slow and train_fast: frozen encoder, reproducible, Fast beats the zero predictor") {
    const auto& ds = dataset();
    const auto split = split_episodes(ds.episodes.size(), 0.34, 1);
    const auto sc = ds.config;
    const auto cap = train_cap(ds, split, cap_cfg(sc), enc_cfg(), stage(30));
    const auto enc_before = values(cap.cap->encoder()->params());

    auto st = stage(20);
    st.noise_draws = 2;
    const auto s1 = train_slow(ds, split, *cap.cap, slow_cfg(sc), st);
    const auto s2 = train_slow(ds, split, *cap.cap, slow_cfg(sc), st);
    CHECK(values(s1.slow->params()) == values(s2.slow->params()));
    CHECK(s1.slow->trained());
    CHECK(std::isfinite(s1.held_out_loss));

    FastConfig fc;
    fc.hidden = {32, 32};
    const auto f1 = train_fast(ds, split, *cap.cap, fc, TeacherGains{}, stage(300));
    const auto f2 = train_fast(ds, split, *cap.cap, fc, TeacherGains{}, stage(300));
    CHECK(values(f1.fast->params()) == values(f2.fast->params()));
    CHECK(f1.held_out_l1 < f1.zero_l1);
    CHECK(values(cap.cap->encoder()->params()) == enc_before);
}

TEST_CASE("teacher_for: no_pb replaces the belief with the uniform one") {
    const auto& ds = dataset();
    const auto& ep = ds.episodes[0];
    const auto phases = wiping_phases();
    std::size_t t = 0;
    while (t < ep.length && ep.phase[t] != phases.index("wiping")) ++t;
    REQUIRE(t < ep.length);
    const auto hard = PhaseSchedule::one_hot(phases.size(), phases.index("wiping"), 1.0);
    const Vec6 full = teacher_for(ep, t, hard, phases, TeacherGains{}, false);
    const Vec6 flat = teacher_for(ep, t, hard, phases, TeacherGains{}, true);
    CHECK(full[2] == doctest::Approx(5e-5 * (-12.0 - ep.wrench(t)[2])));
    CHECK(flat[2] == doctest::Approx(full[2] / double(phases.size())));
}

TEST_CASE("checkpoints: round trip reproduces predictions; bad inputs are rejected") {
    const auto& ds = dataset();
    const auto split = split_episodes(ds.episodes.size(), 0.34, 1);
    const auto sc = ds.config;
    const auto cap = train_cap(ds, split, cap_cfg(sc), enc_cfg(), stage(5));
    const auto slow = train_slow(ds, split, *cap.cap, slow_cfg(sc), stage(5));
    FastConfig fc;
    fc.hidden = {16};
    const auto fast = train_fast(ds, split, *cap.cap, fc, TeacherGains{}, stage(5));

    const fs::path dir = scratch("ckpt");
    models::save_cap(dir / "cap", *cap.cap);
    models::save_slow(dir / "slow", *slow.slow);
    models::save_fast(dir / "fast", *fast.fast);
    const auto cap2 = models::load_cap(dir / "cap");
    const auto slow2 = models::load_slow(dir / "slow", cap2->encoder());
    const auto fast2 = models::load_fast(dir / "fast", cap2->encoder());

    const auto obs = ds.episodes[0].observation(10, enc_cfg().window);
    const auto s = cap.cap->predict(obs), s2 = cap2->predict(obs);
    CHECK(s.contact_prob == s2.contact_prob);
    CHECK(s.belief == s2.belief);
    const auto c = slow.slow->sample(obs, s, 3), c2 = slow2->sample(obs, s2, 3);
    CHECK(c == c2);
    CorrectorObservation co{obs.wrench, obs.proprio, std::vector<Action>(fc.history, c[0]), s};
    CHECK(fast.fast->predict(co).twist.to_array() == fast2->predict(co).twist.to_array());

    // saving twice gives the same bytes
    models::save_cap(dir / "cap_again", *cap2);
    for (const auto& e : fs::recursive_directory_iterator(dir / "cap")) {
        if (!e.is_regular_file()) continue;
        const auto rel = fs::relative(e.path(), dir / "cap");
        std::ifstream x(e.path(), std::ios::binary), y(dir / "cap_again" / rel, std::ios::binary);
        CHECK(std::string(std::istreambuf_iterator<char>(x), {}) == std::string(std::istreambuf_iterator<char>(y), {}));
    }

    fs::remove_all(dir / "cap" / "cap" / "params");
    CHECK_THROWS_AS(models::load_cap(dir / "cap"), nn::CheckpointError);
    CHECK_THROWS_AS(models::cap_config_from_json({{"hiden", 3}}, CapConfig{}), models::ModelConfigError);
    CHECK_THROWS_AS(models::slow_config_from_json({{"heads", "eight"}}, SlowConfig{}), models::ModelConfigError);
    fs::remove_all(dir);
}
