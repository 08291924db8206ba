#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "phaforce/executor.hpp"

using namespace phaforce;
using namespace phaforce::exec;
namespace fs = std::filesystem;

namespace {

ForceEncoderPtr small_encoder(std::uint64_t seed) {
    ForceEncoderConfig c;
    c.window = 8;
    c.hidden = 8;
    c.token_dim = 24;
    c.pooled_dim = 8;
    c.dilations = {1, 2};
    return std::make_shared<ForceEncoder>(c, seed);
}

std::shared_ptr<Cap> small_cap(const sim::SimConfig& sc, ForceEncoderPtr enc) {
    CapConfig c;
    c.layout = sc.layout;
    c.channels = {4, 8};
    c.view_embed = 8;
    c.hidden = 16;
    return std::make_shared<Cap>(c, task_by_id(sc.task).phases.size(), std::move(enc), 3);
}

// Encodes (snapshot step, chunk index) into the x/y offsets of every action so a
// trace row identifies exactly which chunk entry it executed.
struct TaggedSource {
    geometry::Pose origin;
    std::vector<std::size_t>* snapshots;
    std::size_t horizon = 16;
    ActionChunk operator()(const Observation&, const PhaseSchedule&, std::uint64_t) const {
        const std::size_t m = snapshots->size();
        snapshots->push_back(m);
        ActionChunk c(horizon);
        for (std::size_t k = 0; k < horizon; ++k) {
            const auto p = origin.to_array();
            c[k] = {p[0] + 1e-4 * double(k), p[1] + 1e-4 * double(m), p[2], p[3], p[4], p[5], p[6], 0.04};
        }
        return c;
    }
};

// Which (chunk, index) the hand-spliced schedule executes at step t.
std::pair<std::size_t, std::size_t> oracle(std::size_t t, const RateConfig& r) {
    const std::size_t P = r.period(), d = r.inference_delay;
    if (t < P + d) return {0, t};
    const std::size_t m = (t - d) / P;  // latest snapshot whose chunk has arrived
    return {m, r.latency_discard + (t - (m * P + d))};
}

Trace run_tagged(const RateConfig& rates, const std::shared_ptr<const FastCorrector>& fast, std::uint64_t seed = 4) {
    const auto sc = sim::default_config("charger");
    sim::Env env(sc, seed);
    auto enc = small_encoder(1);
    Policy p{small_cap(sc, enc), nullptr, fast};
    std::vector<std::size_t> snaps;
    TaggedSource src{env.state().tcp, &snaps, rates.horizon};
    return run_episode(p, env, rates, seed, src);
}

TraceRow contact_row(double fn) {
    TraceRow r;
    r.contact = true;
    r.normal_force = fn;
    return r;
}

std::string slurp(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    std::stringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

}  // namespace

TEST_CASE("rate config: defaults, validation and JSON") {
    RateConfig r;
    CHECK(r.period() == 4);
    CHECK_NOTHROW(validate(r));
    auto bad = r;
    bad.f_c = 25.0;
    CHECK_THROWS_AS(validate(bad), RateError);
    bad = r;
    bad.latency_discard = 16;
    CHECK_THROWS_AS(validate(bad), RateError);
    bad = r;
    bad.interp_substeps = 0;
    CHECK_THROWS_AS(validate(bad), RateError);
    CHECK(to_json(rate_config_from_json(to_json(r), RateConfig{})) == to_json(r));
    CHECK_THROWS_AS(rate_config_from_json({{"f_z", 3}}, r), RateError);
    CHECK_THROWS_AS(rate_config_from_json({{"f_s", "fast"}}, r), RateError);
}

TEST_CASE("executor: four control steps per period, no starvation, hand-spliced schedule") {
    const RateConfig rates;
    const Trace tr = run_tagged(rates, nullptr);
    REQUIRE(tr.rows.size() == 240);
    CHECK(tr.starvations == 0);
    std::map<std::size_t, std::size_t> per_chunk;
    for (const auto& row : tr.rows) {
        const auto [m, k] = oracle(row.t, rates);
        CHECK(row.chunk_id == m);
        CHECK(row.chunk_index == k);
        CHECK_FALSE(row.starved);
        ++per_chunk[row.chunk_id];
        // base pose is exactly the tagged entry
        const auto b = row.base.to_array();
        const auto o = tr.rows.front().base.to_array();
        CHECK(b[0] == o[0] + 1e-4 * double(k));
        CHECK(b[1] == o[1] + 1e-4 * double(m));
    }
    // the first chunk also covers the wait for the second; every later one owns exactly one period
    CHECK(per_chunk[0] == rates.period() + rates.inference_delay);
    for (std::size_t m = 1; m + 1 < per_chunk.size(); ++m) CHECK(per_chunk[m] == rates.period());
}

TEST_CASE("executor: zero latency reproduces ideal chunking") {
    RateConfig rates;
    rates.inference_delay = 0;
    rates.latency_discard = 0;
    const Trace tr = run_tagged(rates, nullptr);
    for (const auto& row : tr.rows) {
        CHECK(row.chunk_id == row.t / 4);
        CHECK(row.chunk_index == row.t % 4);
    }
}

TEST_CASE("executor: starvation holds the last base pose") {
    RateConfig rates;
    rates.horizon = 6;
    rates.inference_delay = 5;
    rates.latency_discard = 3;
    const Trace tr = run_tagged(rates, nullptr);
    CHECK(tr.starvations > 0);
    for (std::size_t i = 1; i < tr.rows.size(); ++i) {
        const auto& r = tr.rows[i];
        CHECK(r.starved == (r.chunk_index >= rates.horizon));
        if (r.starved) CHECK(r.base.to_array() == tr.rows[i - 1].base.to_array());
    }
}

TEST_CASE("executor: without Fast, or with a zero residual, the executed pose is the base pose bit for bit") {
    const RateConfig rates;
    const Trace none = run_tagged(rates, nullptr);
    for (const auto& r : none.rows) {
        CHECK(r.executed.to_array() == r.base.to_array());
        CHECK(r.residual == Vec6{});
    }

    auto enc = small_encoder(1);
    auto fast = std::make_shared<FastCorrector>(FastConfig{}, plug_in_phases(), enc, 9);
    const auto& items = fast->params().items();
    for (std::size_t i = items.size() - 2; i < items.size(); ++i)
        std::fill(items[i].second.node()->value.begin(), items[i].second.node()->value.end(), 0.0);
    const Trace zero = run_tagged(rates, fast);
    REQUIRE(zero.rows.size() == none.rows.size());
    for (std::size_t i = 0; i < zero.rows.size(); ++i) {
        CHECK(zero.rows[i].executed.to_array() == zero.rows[i].base.to_array());
        CHECK(zero.rows[i].executed.to_array() == none.rows[i].executed.to_array());
    }
}

TEST_CASE("executor: residuals stay inside the per-step caps") {
    auto enc = small_encoder(1);
    FastConfig fc;
    fc.linear_cap = 0.001;
    auto fast = std::make_shared<FastCorrector>(fc, plug_in_phases(), enc, 10);
    const Trace tr = run_tagged(RateConfig{}, fast);
    for (const auto& r : tr.rows) {
        for (int i = 0; i < 3; ++i) CHECK(std::abs(r.residual[i]) <= fc.linear_cap + 1e-15);
        for (int i = 3; i < 6; ++i) CHECK(std::abs(r.residual[i]) <= fc.angular_cap + 1e-15);
    }
}

TEST_CASE("compute_metrics: force statistics") {
    Trace t;
    t.task = "wiping";
    SUBCASE("constant 30 N is all over-pressure") {
        for (int i = 0; i < 5; ++i) t.rows.push_back(contact_row(30.0));
        const auto m = compute_metrics(t, "wiping");
        CHECK(m.over_ratio == 1.0);
        CHECK(m.under_ratio == 0.0);
    }
    SUBCASE("(10, 30, 1) over three contact steps") {
        for (double f : {10.0, 30.0, 1.0}) t.rows.push_back(contact_row(f));
        t.rows.push_back(TraceRow{});  // free-space steps do not count
        const auto m = compute_metrics(t, "wiping");
        REQUIRE(m.mean_fn);
        CHECK(*m.mean_fn == doctest::Approx(41.0 / 3.0).epsilon(1e-12));
        CHECK(m.over_ratio == doctest::Approx(1.0 / 3.0));
        CHECK(m.under_ratio == doctest::Approx(1.0 / 3.0));
        CHECK(m.contact_steps == 3);
    }
    SUBCASE("no contact leaves the force metrics undefined") {
        t.rows.resize(4);
        const auto m = compute_metrics(t, "wiping");
        CHECK_FALSE(m.mean_fn);
        Summary s;
        s.task = "wiping";
        s.n_trials = 1;
        s.trials.push_back({1, m, 4, 0});
        CHECK(to_json(s)["mean_Fn"] == kNotApplicable);
        CHECK(to_json(s)["over"] == kNotApplicable);
    }
}

TEST_CASE("compute_metrics: success rules") {
    Trace t;
    t.wiped_fraction = 1.0;
    CHECK(compute_metrics(t, "wiping").wiping_score == 1.0);
    t.wiped_fraction = 0.4;
    CHECK(compute_metrics(t, "wiping").wiping_score == 0.5);
    CHECK(compute_metrics(t, "wiping").success);
    t.wiped_fraction = 0.0;
    CHECK(compute_metrics(t, "wiping").wiping_score == 0.0);
    CHECK_FALSE(compute_metrics(t, "wiping").success);

    Trace p;
    p.seat_depth = 0.012;
    p.clearance = 0.0015;
    p.depth = 0.0125;
    p.lateral = 0.001;
    CHECK(compute_metrics(p, "charger").success);
    p.depth = 0.008;  // partial insertion is a failure
    CHECK_FALSE(compute_metrics(p, "charger").success);
    p.depth = 0.0125;
    p.lateral = 0.002;
    CHECK_FALSE(compute_metrics(p, "charger").success);
    p.lateral = 0.001;
    p.workspace_violation = true;
    CHECK_FALSE(compute_metrics(p, "charger").success);
}

TEST_CASE("trace files: columns and binary layout agree") {
    const Trace tr = run_tagged(RateConfig{}, nullptr);
    const fs::path dir = fs::temp_directory_path() / "phaforce_trace_test";
    fs::create_directories(dir);
    write_trace_csv(tr, dir / "t.csv");
    write_trace_binary(tr, dir / "t.f64");
    const auto cols = trace_columns(5);
    std::ifstream is(dir / "t.csv");
    std::string header;
    std::getline(is, header);
    CHECK(std::count(header.begin(), header.end(), ',') + 1 == static_cast<long>(cols.size()));
    CHECK(fs::file_size(dir / "t.f64") == tr.rows.size() * cols.size() * sizeof(double));
    fs::remove_all(dir);
}

TEST_CASE("batch_eval: SR is successes over trials and identical inputs give identical outputs") {
    const auto sc = sim::default_config("charger");
    auto enc = small_encoder(2);
    auto cap = small_cap(sc, enc);
    SlowConfig cfg;
    cfg.layout = sc.layout;
    cfg.channels = {4, 8};
    cfg.view_embed = 8;
    cfg.heads = 4;
    cfg.cond_dim = 16;
    cfg.denoiser_hidden = 32;
    auto slow = std::make_shared<SlowPlanner>(cfg, 5, enc, 3);
    slow->set_trained(true);
    slow->action_scaler() = {{-0.002, -0.002, -0.002, 0.99, -0.01, -0.01, -0.01, 0.99, -0.01, 0.03},
                             {0.002, 0.002, 0.002, 1.0, 0.01, 0.01, 0.01, 1.0, 0.01, 0.04}};
    Policy p{cap, slow, nullptr};
    const fs::path d1 = fs::temp_directory_path() / "phaforce_batch_a", d2 = fs::temp_directory_path() / "phaforce_batch_b";
    const auto a = batch_eval(p, sc, RateConfig{}, 3, 11, "no_fast", d1);
    const auto b = batch_eval(p, sc, RateConfig{}, 3, 11, "no_fast", d2);
    CHECK(to_json(a) == to_json(b));
    std::size_t wins = 0;
    for (const auto& t : a.trials) wins += t.metrics.success;
    CHECK(a.sr == double(wins) / 3.0);
    for (const char* f : {"trial_000.csv", "trial_001.f64", "trial_002.csv"}) CHECK(slurp(d1 / f) == slurp(d2 / f));
    CHECK(kDefaultTrials == 20);
    fs::remove_all(d1);
    fs::remove_all(d2);
}
