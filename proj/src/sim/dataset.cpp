#include <algorithm>
#include <fstream>

#include "phaforce/nn/checkpoint.hpp"
#include "phaforce/sim.hpp"

namespace phaforce::sim {

namespace fs = std::filesystem;
using nlohmann::json;

Observation Episode::observation(std::size_t t, std::size_t window) const {
    Observation o;
    const std::size_t px = layout.views * layout.pixels();
    o.images.assign(images.begin() + t * px, images.begin() + (t + 1) * px);
    o.wrench.assign(window * 6, 0.0);
    for (std::size_t k = 0; k < window; ++k) {
        const std::ptrdiff_t src = std::ptrdiff_t(t) - std::ptrdiff_t(window - 1 - k);
        if (src < 0) continue;
        std::copy_n(wrenches.begin() + src * 6, 6, o.wrench.begin() + k * 6);
    }
    o.proprio.assign(proprio.begin() + t * kProprioDim, proprio.begin() + (t + 1) * kProprioDim);
    return o;
}

Action Episode::action(std::size_t t) const {
    Action a;
    std::copy_n(actions.begin() + t * a.size(), a.size(), a.begin());
    return a;
}

Vec6 Episode::wrench(std::size_t t) const {
    Vec6 w;
    std::copy_n(wrenches.begin() + t * 6, 6, w.begin());
    return w;
}

std::vector<Action> Episode::chunk(std::size_t t, std::size_t horizon) const {
    std::vector<Action> out;
    for (std::size_t k = 0; k < horizon; ++k) out.push_back(action(std::min(t + k, length - 1)));
    return out;
}

std::vector<Action> Episode::history(std::size_t t, std::size_t n) const {
    std::vector<Action> out;
    for (std::size_t k = 0; k < n; ++k) {
        const std::ptrdiff_t src = std::ptrdiff_t(t) - std::ptrdiff_t(n - 1 - k);
        out.push_back(action(std::size_t(std::max<std::ptrdiff_t>(src, 0))));
    }
    return out;
}

Episode record_episode(const SimConfig& cfg, std::uint64_t seed) {
    Env env(cfg, seed);
    ScriptedExpert expert(env, mix_seed(seed, 3));
    Episode ep;
    ep.task = cfg.task;
    ep.seed = seed;
    ep.layout = cfg.layout;
    const auto& s = env.state();
    json geo = {{"board_height", s.board_z}, {"ood", cfg.ood}};
    if (cfg.wiping()) {
        geo["sponge"] = {s.sponge.x(), s.sponge.y(), s.sponge.z()};
        geo["patch"] = {s.patch.x(), s.patch.y(), s.patch.z()};
    } else {
        geo["hole"] = {s.hole.x(), s.hole.y(), s.hole.z()};
        geo["clearance"] = cfg.clearance;
        geo["hole_depth"] = cfg.hole_depth;
        geo["grasp_yaw"] = s.grasp_yaw;
    }

    for (int t = 0; t < cfg.max_steps && !expert.finished(); ++t) {
        const auto img = env.render();
        ep.images.insert(ep.images.end(), img.begin(), img.end());
        ep.wrenches.insert(ep.wrenches.end(), s.wrench.begin(), s.wrench.end());
        const auto prop = env.proprio();
        ep.proprio.insert(ep.proprio.end(), prop.begin(), prop.end());
        ep.contact.push_back(s.contact ? 1 : 0);

        const Command cmd = expert.act(env);
        ep.phase.push_back(static_cast<std::uint8_t>(expert.phase()));
        const auto pose = cmd.pose.to_array();
        ep.actions.insert(ep.actions.end(), pose.begin(), pose.end());
        ep.actions.push_back(cmd.gripper);
        env.step(cmd);
        ++ep.length;
    }

    const bool ok = expert.finished() && (cfg.wiping() ? env.wiped_fraction() >= 0.9 : env.seated());
    geo["success"] = ok;
    if (cfg.wiping()) geo["wiped_fraction"] = env.wiped_fraction();
    ep.geometry = std::move(geo);
    return ep;
}

bool episode_succeeded(const SimConfig&, const Episode& ep) { return ep.geometry.value("success", false); }

Dataset generate_dataset(const SimConfig& cfg, std::size_t n, std::uint64_t seed,
                         const std::function<void(const std::string&)>& log) {
    validate(cfg);
    Dataset ds;
    ds.config = cfg;
    ds.seed = seed;
    std::uint64_t draw = 0;
    while (ds.episodes.size() < n) {
        if (ds.discarded > 4 * n + 10)
            throw ExpertFailure("expert failed " + std::to_string(ds.discarded) + " episodes; check the task config");
        const std::uint64_t ep_seed = mix_seed(seed, draw++);
        Episode ep = record_episode(cfg, ep_seed);
        if (!episode_succeeded(cfg, ep)) {
            ++ds.discarded;
            if (log) log("discarded episode seed " + std::to_string(ep_seed) + " (expert failure), re-seeding");
            continue;
        }
        ds.episodes.push_back(std::move(ep));
    }
    return ds;
}

namespace {

template <typename T>
void write_blob(const fs::path& file, const std::vector<T>& v) {
    std::ofstream os(file, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("cannot write " + file.string());
    os.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(T)));
}

std::vector<std::uint8_t> read_bytes(const fs::path& file) {
    std::ifstream is(file, std::ios::binary);
    if (!is) throw std::runtime_error("cannot read " + file.string());
    return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

void write_json(const fs::path& file, const json& j) {
    std::ofstream os(file, std::ios::trunc);
    if (!os) throw std::runtime_error("cannot write " + file.string());
    os << j.dump(2) << "\n";
}

json read_json(const fs::path& file) {
    std::ifstream is(file);
    if (!is) throw std::runtime_error("cannot read " + file.string());
    return json::parse(is);
}

std::string episode_dir(std::size_t i) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "episode_%04zu", i);
    return buf;
}

}  // namespace

void save_dataset(const Dataset& ds, const fs::path& dir) {
    fs::create_directories(dir);
    json top = {{"format", "phaforce-dataset-v1"},
                {"task", ds.config.task},
                {"seed", ds.seed},
                {"board_height", ds.config.effective_board_height()},
                {"ood", ds.config.ood},
                {"discarded", ds.discarded},
                {"config", to_json(ds.config)}};
    auto& list = top["episodes"] = json::array();
    for (std::size_t i = 0; i < ds.episodes.size(); ++i) {
        const Episode& ep = ds.episodes[i];
        const fs::path d = dir / episode_dir(i);
        fs::create_directories(d);
        write_json(d / "manifest.json", {{"task", ep.task},
                                         {"seed", ep.seed},
                                         {"length", ep.length},
                                         {"views", ep.layout.views},
                                         {"image_side", ep.layout.side},
                                         {"geometry", ep.geometry},
                                         {"arrays",
                                          {{"observations", "observations.u8"},
                                           {"actions", "actions.f64"},
                                           {"wrenches", "wrenches.f64"},
                                           {"proprio", "proprio.f64"},
                                           {"labels", "labels.u8"}}}});
        write_blob(d / "observations.u8", ep.images);
        write_blob(d / "actions.f64", ep.actions);
        write_blob(d / "wrenches.f64", ep.wrenches);
        write_blob(d / "proprio.f64", ep.proprio);
        std::vector<std::uint8_t> labels;
        for (std::size_t t = 0; t < ep.length; ++t) {
            labels.push_back(ep.contact[t]);
            labels.push_back(ep.phase[t]);
        }
        write_blob(d / "labels.u8", labels);
        list.push_back({{"dir", episode_dir(i)}, {"seed", ep.seed}, {"length", ep.length}});
    }
    write_json(dir / "manifest.json", top);
}

Dataset load_dataset(const fs::path& dir) {
    const json top = read_json(dir / "manifest.json");
    if (top.value("format", "") != "phaforce-dataset-v1") throw std::runtime_error(dir.string() + " is not a dataset");
    Dataset ds;
    ds.config = sim_config_from_json(top.at("config"), default_config(top.at("task").get<std::string>()));
    ds.seed = top.at("seed").get<std::uint64_t>();
    ds.discarded = top.value("discarded", std::size_t{0});
    for (const auto& entry : top.at("episodes")) {
        const fs::path d = dir / entry.at("dir").get<std::string>();
        const json m = read_json(d / "manifest.json");
        Episode ep;
        ep.task = m.at("task");
        ep.seed = m.at("seed");
        ep.length = m.at("length");
        ep.layout.views = m.at("views");
        ep.layout.side = m.at("image_side");
        ep.geometry = m.at("geometry");
        ep.images = read_bytes(d / "observations.u8");
        ep.actions = nn::read_f64(d / "actions.f64");
        ep.wrenches = nn::read_f64(d / "wrenches.f64");
        ep.proprio = nn::read_f64(d / "proprio.f64");
        const auto labels = read_bytes(d / "labels.u8");
        const std::size_t T = ep.length;
        if (ep.images.size() != T * ep.layout.views * ep.layout.pixels() || ep.actions.size() != T * 8 ||
            ep.wrenches.size() != T * 6 || ep.proprio.size() != T * kProprioDim || labels.size() != 2 * T)
            throw std::runtime_error("array lengths in " + d.string() + " disagree with the manifest");
        for (std::size_t t = 0; t < T; ++t) {
            ep.contact.push_back(labels[2 * t]);
            ep.phase.push_back(labels[2 * t + 1]);
        }
        ds.episodes.push_back(std::move(ep));
    }
    return ds;
}

}  // namespace phaforce::sim
