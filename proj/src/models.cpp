#include "phaforce/models.hpp"

#include <functional>
#include <map>

#include "phaforce/nn/checkpoint.hpp"

namespace phaforce::models {

using nlohmann::json;

namespace {

// Applies each key of `j` through the matching setter; unknown keys throw.
template <class Setters>
void apply_keys(const json& j, const char* what, const Setters& setters) {
    if (!j.is_object()) throw ModelConfigError(std::string(what) + " must be an object");
    for (const auto& [k, v] : j.items()) {
        const auto it = setters.find(k);
        if (it == setters.end()) throw ModelConfigError(std::string("unknown ") + what + " key '" + k + "'");
        try {
            it->second(v);
        } catch (const json::exception& e) {
            throw ModelConfigError(std::string("bad value for ") + what + "." + k + ": " + e.what());
        }
    }
}

using SetterMap = std::map<std::string, std::function<void(const json&)>>;

json layout_json(const ImageLayout& l) { return {{"views", l.views}, {"side", l.side}}; }
ImageLayout layout_from(const json& j, ImageLayout l) {
    apply_keys(j, "layout", SetterMap{{"views", [&](const json& v) { l.views = v.get<std::size_t>(); }},
                                      {"side", [&](const json& v) { l.side = v.get<std::size_t>(); }}});
    if (l.views == 0 || l.side < 8) throw ModelConfigError("layout needs at least one view of side >= 8");
    return l;
}

void check_channels(const std::vector<std::size_t>& ch, std::size_t side, const char* what) {
    if (ch.empty()) throw ModelConfigError(std::string(what) + ".channels must not be empty");
    for (auto c : ch)
        if (c == 0) throw ModelConfigError(std::string(what) + ".channels must be positive");
    if ((side >> ch.size()) == 0) throw ModelConfigError(std::string(what) + ": too many stride-2 stages for the image side");
}

json phases_json(const PhaseSet& p) {
    json masks = json::array();
    for (const auto& m : p.masks) masks.push_back(m);
    return {{"kind", static_cast<int>(p.kind)}, {"names", p.names}, {"masks", masks}};
}

PhaseSet phases_from(const json& j) {
    PhaseSet p;
    p.kind = static_cast<TaskKind>(j.at("kind").get<int>());
    p.names = j.at("names").get<std::vector<std::string>>();
    for (const auto& m : j.at("masks")) p.masks.push_back(m.get<Mask>());
    if (p.masks.size() != p.names.size()) throw nn::CheckpointError("phase names and masks differ in length");
    return p;
}

}  // namespace

json to_json(const ForceEncoderConfig& c) {
    return {{"window", c.window},       {"hidden", c.hidden},         {"kernel", c.kernel},
            {"dilations", c.dilations}, {"token_dim", c.token_dim}, {"pooled_dim", c.pooled_dim}};
}

json to_json(const CapConfig& c) {
    return {{"layout", layout_json(c.layout)}, {"channels", c.channels}, {"view_embed", c.view_embed}, {"hidden", c.hidden}};
}

json to_json(const SlowConfig& c) {
    return {{"layout", layout_json(c.layout)},
            {"channels", c.channels},
            {"view_embed", c.view_embed},
            {"heads", c.heads},
            {"gate_hidden", c.gate_hidden},
            {"cond_dim", c.cond_dim},
            {"denoiser_hidden", c.denoiser_hidden},
            {"time_embed", c.time_embed},
            {"horizon", c.horizon},
            {"train_timesteps", c.train_timesteps},
            {"infer_timesteps", c.infer_timesteps},
            {"alpha_init", c.alpha_init},
            {"alpha_min", c.alpha_min},
            {"alpha_max", c.alpha_max},
            {"clip_sample", c.clip_sample},
            {"no_ori", c.no_ori},
            {"no_pb", c.no_pb},
            {"relative", c.relative}};
}

json to_json(const FastConfig& c) {
    return {{"history", c.history},
            {"hidden", c.hidden},
            {"linear_cap", c.linear_cap},
            {"angular_cap", c.angular_cap},
            {"no_pb", c.no_pb}};
}

json to_json(const TeacherGains& g) {
    return {{"lin", g.lin}, {"ang", g.ang}, {"target_fz", g.target_fz}, {"insert_fz", g.insert_fz}};
}

void validate(const ForceEncoderConfig& c) {
    if (c.window == 0 || c.hidden == 0 || c.token_dim == 0 || c.pooled_dim == 0 || c.kernel == 0)
        throw ModelConfigError("encoder sizes must be positive");
    if (c.dilations.empty()) throw ModelConfigError("encoder needs at least one dilation");
    for (auto d : c.dilations)
        if (d == 0) throw ModelConfigError("encoder dilations must be positive");
}

void validate(const SlowConfig& c, const ForceEncoderConfig& enc) {
    check_channels(c.channels, c.layout.side, "slow");
    if (c.heads == 0 || c.token_dim() % c.heads != 0)
        throw ModelConfigError("slow: token dim " + std::to_string(c.token_dim()) + " is not divisible by " +
                               std::to_string(c.heads) + " heads");
    if (enc.token_dim != c.token_dim())
        throw ModelConfigError("slow: force token dim " + std::to_string(enc.token_dim) + " differs from visual token dim " +
                               std::to_string(c.token_dim()));
    if (c.horizon == 0 || c.cond_dim == 0 || c.denoiser_hidden == 0 || c.time_embed == 0 || c.gate_hidden == 0)
        throw ModelConfigError("slow sizes must be positive");
    if (c.train_timesteps < 2 || c.infer_timesteps == 0 || c.infer_timesteps > c.train_timesteps)
        throw ModelConfigError("slow: need 0 < infer_timesteps <= train_timesteps");
    if (!(c.alpha_min <= c.alpha_init && c.alpha_init <= c.alpha_max)) throw ModelConfigError("slow: alpha_init outside its range");
}

ForceEncoderConfig encoder_config_from_json(const json& j, const ForceEncoderConfig& base) {
    ForceEncoderConfig c = base;
    apply_keys(j, "encoder",
               SetterMap{{"window", [&](const json& v) { c.window = v.get<std::size_t>(); }},
                         {"hidden", [&](const json& v) { c.hidden = v.get<std::size_t>(); }},
                         {"kernel", [&](const json& v) { c.kernel = v.get<std::size_t>(); }},
                         {"dilations", [&](const json& v) { c.dilations = v.get<std::vector<std::size_t>>(); }},
                         {"token_dim", [&](const json& v) { c.token_dim = v.get<std::size_t>(); }},
                         {"pooled_dim", [&](const json& v) { c.pooled_dim = v.get<std::size_t>(); }}});
    validate(c);
    return c;
}

CapConfig cap_config_from_json(const json& j, const CapConfig& base) {
    CapConfig c = base;
    apply_keys(j, "cap",
               SetterMap{{"layout", [&](const json& v) { c.layout = layout_from(v, c.layout); }},
                         {"channels", [&](const json& v) { c.channels = v.get<std::vector<std::size_t>>(); }},
                         {"view_embed", [&](const json& v) { c.view_embed = v.get<std::size_t>(); }},
                         {"hidden", [&](const json& v) { c.hidden = v.get<std::size_t>(); }}});
    check_channels(c.channels, c.layout.side, "cap");
    if (c.view_embed == 0 || c.hidden == 0) throw ModelConfigError("cap sizes must be positive");
    return c;
}

SlowConfig slow_config_from_json(const json& j, const SlowConfig& base) {
    SlowConfig c = base;
    apply_keys(j, "slow",
               SetterMap{{"layout", [&](const json& v) { c.layout = layout_from(v, c.layout); }},
                         {"channels", [&](const json& v) { c.channels = v.get<std::vector<std::size_t>>(); }},
                         {"view_embed", [&](const json& v) { c.view_embed = v.get<std::size_t>(); }},
                         {"heads", [&](const json& v) { c.heads = v.get<std::size_t>(); }},
                         {"gate_hidden", [&](const json& v) { c.gate_hidden = v.get<std::size_t>(); }},
                         {"cond_dim", [&](const json& v) { c.cond_dim = v.get<std::size_t>(); }},
                         {"denoiser_hidden", [&](const json& v) { c.denoiser_hidden = v.get<std::size_t>(); }},
                         {"time_embed", [&](const json& v) { c.time_embed = v.get<std::size_t>(); }},
                         {"horizon", [&](const json& v) { c.horizon = v.get<std::size_t>(); }},
                         {"train_timesteps", [&](const json& v) { c.train_timesteps = v.get<std::size_t>(); }},
                         {"infer_timesteps", [&](const json& v) { c.infer_timesteps = v.get<std::size_t>(); }},
                         {"alpha_init", [&](const json& v) { c.alpha_init = v.get<double>(); }},
                         {"alpha_min", [&](const json& v) { c.alpha_min = v.get<double>(); }},
                         {"alpha_max", [&](const json& v) { c.alpha_max = v.get<double>(); }},
                         {"clip_sample", [&](const json& v) { c.clip_sample = v.get<bool>(); }},
                         {"no_ori", [&](const json& v) { c.no_ori = v.get<bool>(); }},
                         {"no_pb", [&](const json& v) { c.no_pb = v.get<bool>(); }},
                         {"relative", [&](const json& v) { c.relative = v.get<bool>(); }}});
    return c;
}

FastConfig fast_config_from_json(const json& j, const FastConfig& base) {
    FastConfig c = base;
    apply_keys(j, "fast",
               SetterMap{{"history", [&](const json& v) { c.history = v.get<std::size_t>(); }},
                         {"hidden", [&](const json& v) { c.hidden = v.get<std::vector<std::size_t>>(); }},
                         {"linear_cap", [&](const json& v) { c.linear_cap = v.get<double>(); }},
                         {"angular_cap", [&](const json& v) { c.angular_cap = v.get<double>(); }},
                         {"no_pb", [&](const json& v) { c.no_pb = v.get<bool>(); }}});
    if (c.history == 0) throw ModelConfigError("fast.history must be positive");
    if (!(c.linear_cap > 0.0) || !(c.angular_cap > 0.0)) throw ModelConfigError("fast caps must be positive");
    return c;
}

TeacherGains teacher_gains_from_json(const json& j, const TeacherGains& base) {
    TeacherGains g = base;
    apply_keys(j, "teacher",
               SetterMap{{"lin", [&](const json& v) { g.lin = v.get<std::array<double, 3>>(); }},
                         {"ang", [&](const json& v) { g.ang = v.get<std::array<double, 3>>(); }},
                         {"target_fz", [&](const json& v) { g.target_fz = v.get<double>(); }},
                         {"insert_fz", [&](const json& v) { g.insert_fz = v.get<double>(); }}});
    for (double v : g.lin)
        if (!(v >= 0.0)) throw ModelConfigError("teacher gains must be non-negative");
    for (double v : g.ang)
        if (!(v >= 0.0)) throw ModelConfigError("teacher gains must be non-negative");
    return g;
}

void save_cap(const std::filesystem::path& dir, const Cap& cap) {
    const auto& enc = *cap.encoder();
    nn::save_checkpoint(dir / "encoder", enc.params(),
                        {{"kind", "force_encoder"}, {"config", to_json(enc.config())}, {"normalizer", enc.normalizer().to_json()}});
    nn::save_checkpoint(dir / "cap", cap.params(),
                        {{"kind", "cap"},
                         {"config", to_json(cap.config())},
                         {"phases", cap.phases()},
                         {"proprio_norm", cap.proprio_norm().to_json()}});
}

std::shared_ptr<Cap> load_cap(const std::filesystem::path& dir) {
    try {
        const json em = nn::read_manifest(dir / "encoder").at("meta");
        auto enc = std::make_shared<ForceEncoder>(encoder_config_from_json(em.at("config"), {}), 0);
        nn::load_checkpoint(dir / "encoder", enc->params());
        enc->normalizer() = Standardizer::from_json(em.at("normalizer"));
        const json cm = nn::read_manifest(dir / "cap").at("meta");
        auto cap = std::make_shared<Cap>(cap_config_from_json(cm.at("config"), {}), cm.at("phases").get<std::size_t>(), enc, 0);
        nn::load_checkpoint(dir / "cap", cap->params());
        cap->proprio_norm() = Standardizer::from_json(cm.at("proprio_norm"));
        return cap;
    } catch (const json::exception& e) {
        throw nn::CheckpointError("malformed CAP checkpoint in " + dir.string() + ": " + e.what());
    }
}

void save_slow(const std::filesystem::path& dir, const SlowPlanner& slow) {
    nn::save_checkpoint(dir, slow.params(),
                        {{"kind", "slow"},
                         {"config", to_json(slow.config())},
                         {"phases", slow.phases()},
                         {"trained", slow.trained()},
                         {"proprio_norm", slow.proprio_norm().to_json()},
                         {"action_scaler", slow.action_scaler().to_json()}});
}

std::shared_ptr<SlowPlanner> load_slow(const std::filesystem::path& dir, ForceEncoderPtr encoder) {
    try {
        const json m = nn::read_manifest(dir).at("meta");
        const SlowConfig cfg = slow_config_from_json(m.at("config"), {});
        validate(cfg, encoder->config());
        auto slow = std::make_shared<SlowPlanner>(cfg, m.at("phases").get<std::size_t>(), std::move(encoder), 0);
        nn::load_checkpoint(dir, slow->params());
        slow->proprio_norm() = Standardizer::from_json(m.at("proprio_norm"));
        slow->action_scaler() = MinMaxScaler::from_json(m.at("action_scaler"));
        slow->set_trained(m.at("trained").get<bool>());
        return slow;
    } catch (const json::exception& e) {
        throw nn::CheckpointError("malformed Slow checkpoint in " + dir.string() + ": " + e.what());
    }
}

void save_fast(const std::filesystem::path& dir, const FastCorrector& fast) {
    nn::save_checkpoint(dir, fast.params(),
                        {{"kind", "fast"},
                         {"config", to_json(fast.config())},
                         {"phases", phases_json(fast.phases())},
                         {"proprio_norm", fast.proprio_norm().to_json()},
                         {"history_norm", fast.history_norm().to_json()}});
}

std::shared_ptr<FastCorrector> load_fast(const std::filesystem::path& dir, ForceEncoderPtr encoder) {
    try {
        const json m = nn::read_manifest(dir).at("meta");
        auto fast = std::make_shared<FastCorrector>(fast_config_from_json(m.at("config"), {}), phases_from(m.at("phases")),
                                                    std::move(encoder), 0);
        nn::load_checkpoint(dir, fast->params());
        fast->proprio_norm() = Standardizer::from_json(m.at("proprio_norm"));
        fast->history_norm() = Standardizer::from_json(m.at("history_norm"));
        return fast;
    } catch (const json::exception& e) {
        throw nn::CheckpointError("malformed Fast checkpoint in " + dir.string() + ": " + e.what());
    }
}

}  // namespace phaforce::models
