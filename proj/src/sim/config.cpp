#include <cmath>

#include "phaforce/sim.hpp"

namespace phaforce::sim {

using nlohmann::json;

SimConfig default_config(const std::string& task) {
    SimConfig c;
    c.task = task;
    if (task == "usb") {
        c.clearance = 0.0008;
        c.mu = 0.5;
    } else if (task == "wiping") {
        c.max_steps = 260;
    } else if (task != "charger") {
        throw ConfigError("unknown task id '" + task + "' (expected charger, usb or wiping)");
    }
    return c;
}

json to_json(const SimConfig& c) {
    return {{"task", c.task},
            {"k_n", c.k_n},
            {"c_n", c.c_n},
            {"mu", c.mu},
            {"c_t", c.c_t},
            {"sigma_f", c.sigma_f},
            {"sigma_tau", c.sigma_tau},
            {"control_rate", c.control_rate},
            {"substeps", c.substeps},
            {"max_steps", c.max_steps},
            {"clearance", c.clearance},
            {"hole_depth", c.hole_depth},
            {"seat_depth", c.seat_depth},
            {"rim_width", c.rim_width},
            {"rim_slope", c.rim_slope},
            {"jam_depth", c.jam_depth},
            {"yaw_tol", c.yaw_tol},
            {"k_tau", c.k_tau},
            {"hole_jitter", c.hole_jitter},
            {"grasp_yaw_max", c.grasp_yaw_max},
            {"start_spread", c.start_spread},
            {"board_height", c.board_height},
            {"ood", c.ood},
            {"ood_offset", c.ood_offset},
            {"target_force", c.target_force},
            {"target_force_sigma", c.target_force_sigma},
            {"cell", c.cell},
            {"cells_x", c.cells_x},
            {"cells_y", c.cells_y},
            {"sponge_radius", c.sponge_radius},
            {"force_band_lo", c.force_band_lo},
            {"force_band_hi", c.force_band_hi},
            {"wipe_dwell", c.wipe_dwell},
            {"recovery_force", c.recovery_force},
            {"recovery_torque", c.recovery_torque},
            {"recovery_steps", c.recovery_steps},
            {"jitter", c.jitter},
            {"workspace_lo", c.workspace_lo},
            {"workspace_hi", c.workspace_hi},
            {"views", c.layout.views},
            {"image_side", c.layout.side}};
}

SimConfig sim_config_from_json(const json& j, const SimConfig& base) {
    if (!j.is_object()) throw ConfigError("sim config must be an object");
    SimConfig c = base;
    const json known = to_json(base);
    for (const auto& [key, value] : j.items())
        if (!known.contains(key)) throw ConfigError("unknown sim config key '" + key + "'");
    try {
        auto get = [&](const char* key, auto& field) {
            if (j.contains(key)) j.at(key).get_to(field);
        };
        get("task", c.task);
        get("k_n", c.k_n);
        get("c_n", c.c_n);
        get("mu", c.mu);
        get("c_t", c.c_t);
        get("sigma_f", c.sigma_f);
        get("sigma_tau", c.sigma_tau);
        get("control_rate", c.control_rate);
        get("substeps", c.substeps);
        get("max_steps", c.max_steps);
        get("clearance", c.clearance);
        get("hole_depth", c.hole_depth);
        get("seat_depth", c.seat_depth);
        get("rim_width", c.rim_width);
        get("rim_slope", c.rim_slope);
        get("jam_depth", c.jam_depth);
        get("yaw_tol", c.yaw_tol);
        get("k_tau", c.k_tau);
        get("hole_jitter", c.hole_jitter);
        get("grasp_yaw_max", c.grasp_yaw_max);
        get("start_spread", c.start_spread);
        get("board_height", c.board_height);
        get("ood", c.ood);
        get("ood_offset", c.ood_offset);
        get("target_force", c.target_force);
        get("target_force_sigma", c.target_force_sigma);
        get("cell", c.cell);
        get("cells_x", c.cells_x);
        get("cells_y", c.cells_y);
        get("sponge_radius", c.sponge_radius);
        get("force_band_lo", c.force_band_lo);
        get("force_band_hi", c.force_band_hi);
        get("wipe_dwell", c.wipe_dwell);
        get("recovery_force", c.recovery_force);
        get("recovery_torque", c.recovery_torque);
        get("recovery_steps", c.recovery_steps);
        get("jitter", c.jitter);
        get("workspace_lo", c.workspace_lo);
        get("workspace_hi", c.workspace_hi);
        get("views", c.layout.views);
        get("image_side", c.layout.side);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("sim config: ") + e.what());
    }
    validate(c);
    return c;
}

void validate(const SimConfig& c) {
    auto require = [](bool ok, const std::string& msg) {
        if (!ok) throw ConfigError("sim config: " + msg);
    };
    require(c.task == "charger" || c.task == "usb" || c.task == "wiping", "unknown task id '" + c.task + "'");
    require(c.k_n > 0 && c.c_n >= 0 && c.mu >= 0 && c.c_t >= 0, "contact gains must be non-negative");
    require(c.sigma_f >= 0 && c.sigma_tau >= 0, "noise levels must be non-negative");
    require(c.control_rate > 0 && c.substeps >= 1 && c.max_steps >= 1, "rates and step counts must be positive");
    require(c.clearance > 0 && c.rim_width > 0 && c.rim_slope > 0 && c.hole_depth > c.seat_depth &&
                c.seat_depth > c.rim_slope * c.rim_width + c.jam_depth,
            "plug-in geometry must satisfy hole_depth > seat_depth > chamfer depth + jam_depth");
    require(c.cells_x > 0 && c.cells_y > 0 && c.cell > 0 && c.sponge_radius > 0, "wiping patch must be non-empty");
    require(c.force_band_lo < c.force_band_hi, "force band is empty");
    require(c.wipe_dwell >= 0, "wipe_dwell must be non-negative");
    require(c.layout.views == 3 && c.layout.side >= 8, "renderer draws exactly 3 views of side >= 8");
    for (int i = 0; i < 3; ++i) require(c.workspace_lo[i] < c.workspace_hi[i], "workspace box is empty");
}

}  // namespace phaforce::sim
