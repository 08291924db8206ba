#pragma once

#include <cmath>
#include <vector>

#include "phaforce/fast.hpp"
#include "phaforce/sim.hpp"

// Closed-loop scenarios shared by the sim tests and the acceptance gate.
namespace scenarios {

using namespace phaforce;
using sim::Command;
using sim::Env;

inline sim::SimConfig noiseless(const std::string& task) {
    auto cfg = sim::default_config(task);
    cfg.sigma_f = 0.0;
    cfg.sigma_tau = 0.0;
    cfg.jitter = 0.0;
    return cfg;
}

inline void hold(Env& env, const Command& cmd, int steps) {
    for (int i = 0; i < steps; ++i) env.step(cmd);
}

// Sponge held and pressed into the board with a static normal force `force`.
inline Command pressed_sponge(Env& env, double force) {
    const auto& s = env.state();
    Command cmd;
    cmd.pose = geometry::Pose(s.sponge + geometry::Vec3(0, 0, 0.002), geometry::Quat::Identity());
    hold(env, cmd, 2);
    cmd.gripper = 0.01;
    hold(env, cmd, 2);
    cmd.pose.position = geometry::Vec3(0.04, 0.0, s.board_z + 0.01);
    hold(env, cmd, 3);
    cmd.pose.position.z() = s.board_z - force / env.config().k_n;
    hold(env, cmd, 3);
    return cmd;
}

// Runs the wiping teacher as the only controller; returns F_z after each step.
inline std::vector<double> wiping_teacher_rollout(Env& env, Command cmd, int steps, const TeacherGains& g = {}) {
    std::vector<double> fz;
    for (int t = 0; t < steps; ++t) {
        const auto twist = *phase_teacher("wiping", env.state().wrench, g);
        cmd.pose = geometry::compose(cmd.pose, geometry::twist_to_delta_pose(geometry::Twist::from_array(twist)));
        env.step(cmd);
        fz.push_back(env.state().wrench[2]);
    }
    return fz;
}

// Peg pressed onto the chamfer at radial offset `r` from the bore axis along
// direction `angle`, `press` metres below the chamfer surface.
inline Command peg_on_rim(Env& env, double r, double angle, double press) {
    const auto& c = env.config();
    const auto h = env.state().hole;
    const double surface = -c.rim_slope * (c.clearance + c.rim_width - r);
    Command cmd;
    cmd.pose = geometry::Pose(h + geometry::Vec3(r * std::cos(angle), r * std::sin(angle), 0.005),
                              geometry::Quat::Identity());
    hold(env, cmd, 2);
    cmd.pose.position.z() = surface - press;
    hold(env, cmd, 3);
    return cmd;
}

inline double tangential(const sim::Vec6& w) { return std::hypot(w[0], w[1]); }

// Runs the search teacher as the only controller at fixed height; returns |F_t| before and after each step.
inline std::vector<double> search_teacher_rollout(Env& env, Command cmd, int steps, const TeacherGains& g = {}) {
    std::vector<double> ft{tangential(env.state().wrench)};
    for (int t = 0; t < steps; ++t) {
        const auto twist = *phase_teacher("search", env.state().wrench, g);
        cmd.pose = geometry::compose(cmd.pose, geometry::twist_to_delta_pose(geometry::Twist::from_array(twist)));
        env.step(cmd);
        ft.push_back(tangential(env.state().wrench));
    }
    return ft;
}

}  // namespace scenarios
