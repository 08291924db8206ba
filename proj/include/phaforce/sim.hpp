#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "phaforce/geometry.hpp"
#include "phaforce/observation.hpp"
#include "phaforce/rng.hpp"
#include "phaforce/slow.hpp"
#include "phaforce/task.hpp"

namespace phaforce::sim {

using geometry::Pose;
using geometry::Vec3;
using Vec6 = std::array<double, 6>;

struct ConfigError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct WorkspaceViolation : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ExpertFailure : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct SimConfig {
    std::string task = "charger";

    // contact
    double k_n = 5000.0;   // N/m
    double c_n = 50.0;     // N s/m
    double mu = 0.4;
    double c_t = 100.0;    // N s/m, viscous slope of tangential friction before it saturates at mu F_n
    double sigma_f = 0.2;  // N
    double sigma_tau = 0.01;
    double control_rate = 24.0;
    int substeps = 4;
    int max_steps = 240;

    // plug-in
    double clearance = 0.0015;
    double hole_depth = 0.015;
    double seat_depth = 0.012;
    double rim_width = 0.006;  // radial extent of the conical chamfer around the bore
    double rim_slope = 0.5;    // chamfer depth per unit radius
    double jam_depth = 0.002;
    double yaw_tol = 0.05235987755982988;  // 3 deg
    double k_tau = 10.0;                   // N m / rad
    double hole_jitter = 0.008;
    double grasp_yaw_max = 0.10471975511965977;  // 6 deg
    double start_spread = 0.012;

    // wiping
    double board_height = 0.02;
    bool ood = false;
    double ood_offset = 0.03;
    double target_force = 18.7;
    double target_force_sigma = 1.0;
    double cell = 0.008;
    int cells_x = 5;
    int cells_y = 2;
    double sponge_radius = 0.012;
    double force_band_lo = 2.5;
    double force_band_hi = 25.0;
    double wipe_dwell = 0.25;  // s of in-band contact a cell needs before it counts as wiped

    // recovery trigger
    double recovery_force = 20.0;
    double recovery_torque = 1.0;
    int recovery_steps = 3;

    // expert
    double jitter = 1.0;  // scale of teleoperation-like noise, 0 disables it

    std::array<double, 3> workspace_lo{-0.15, -0.15, -0.03};
    std::array<double, 3> workspace_hi{0.15, 0.15, 0.25};

    ImageLayout layout;

    double dt() const { return 1.0 / control_rate; }
    double effective_board_height() const { return board_height + (ood ? ood_offset : 0.0); }
    bool wiping() const { return task == "wiping"; }
};

/// Task defaults: charger, usb (tighter clearance, more friction) or wiping.
SimConfig default_config(const std::string& task);
nlohmann::json to_json(const SimConfig& c);
/// Missing keys keep the defaults of `base`; unknown keys or invalid values throw ConfigError.
SimConfig sim_config_from_json(const nlohmann::json& j, const SimConfig& base);
void validate(const SimConfig& c);

struct Command {
    Pose pose;
    double gripper = 0.04;
};

struct EnvState {
    Pose tcp;
    double gripper = 0.04;
    std::size_t step = 0;
    bool contact = false;
    double normal_force = 0.0;  // total compressive force on the tool
    Vec6 true_wrench{};         // force/torque applied by the tool, TCP frame
    Vec6 wrench{};              // true_wrench + sensor noise

    // plug-in
    Vec3 hole = Vec3::Zero();
    double grasp_yaw = 0.0;
    bool inside = false;
    bool jammed = false;
    double prev_pen = 0.0;
    double prev_wall = 0.0;

    // wiping
    double board_z = 0.0;
    bool held = false;
    Vec3 sponge = Vec3::Zero();
    Vec3 patch = Vec3::Zero();  // lower corner of the dirt patch
    std::vector<std::uint8_t> wiped;
    std::vector<double> dwell;  // in-band contact time per cell
};

struct StepResult {
    Vec6 wrench{};
    Vec6 true_wrench{};
    bool contact = false;
    double normal_force = 0.0;
};

/// Deterministic quasi-static contact simulator. The TCP follows commands
/// exactly; contact forces come from the commanded penetration.
class Env {
public:
    Env(const SimConfig& cfg, std::uint64_t seed);

    const SimConfig& config() const { return cfg_; }
    const EnvState& state() const { return s_; }
    const TaskSpec& task() const { return task_; }

    /// Moves toward `cmd` over the configured substeps (lerp/slerp) and returns
    /// the wrench at the end of the control period.
    StepResult step(const Command& cmd);
    /// One quasi-static update at a single pose.
    void substep(const Pose& pose, double gripper, double dt);

    std::vector<std::uint8_t> render() const;
    std::vector<double> proprio() const;

    // plug-in quantities
    double yaw_error() const;
    double lateral_offset() const;
    double depth() const { return -s_.tcp.position.z(); }
    bool seated() const;
    // wiping quantities
    std::vector<Vec3> cell_centers() const;
    double wiped_fraction() const;
    double surface_height(double x, double y) const;

    /// Phase implied by the geometry (used for traces of policy rollouts).
    std::size_t geometric_phase() const;

private:
    void substep_peg(const Pose& p, double dt, Vec3& f_env, double& tau_env);
    void substep_wipe(const Pose& p, double gripper, double dt, Vec3& f_env);

    SimConfig cfg_;
    TaskSpec task_;
    EnvState s_;
    Rng noise_;
};

/// Phase-graph expert with privileged access to the environment state.
class ScriptedExpert {
public:
    ScriptedExpert(const Env& env, std::uint64_t seed);

    Command act(const Env& env);
    std::size_t phase() const { return phase_; }
    bool finished() const { return finished_; }
    /// Disables the expert's own yaw relief (used to provoke jams).
    void set_yaw_relief(double gain) { yaw_gain_ = gain; }

private:
    Command act_peg(const Env& env);
    Command act_wipe(const Env& env);
    Vec3 step_toward(const Vec3& from, const Vec3& to, double max_lateral, double max_vertical) const;

    Rng rng_;
    std::size_t phase_ = 0;
    bool finished_ = false;
    Command cmd_;
    double jitter_x_ = 0.0, jitter_y_ = 0.0, jitter_z_ = 0.0;
    // plug-in
    Vec3 aim = Vec3::Zero();
    double spiral_angle_ = 0.0;
    int over_limit_ = 0;
    int hold_ = 0;
    double yaw_gain_ = 0.01;
    double retreat_yaw_ = 0.0;
    // wiping
    double target_force_ = 18.7;
    std::vector<Vec3> waypoints_;
    std::size_t waypoint_ = 0;
    int grip_steps_ = 0;
};

/// One recorded demonstration.
struct Episode {
    std::string task;
    std::uint64_t seed = 0;
    std::size_t length = 0;
    ImageLayout layout;
    std::vector<std::uint8_t> images;  // T x views x side x side
    std::vector<double> actions;       // T x 8
    std::vector<double> wrenches;      // T x 6
    std::vector<double> proprio;       // T x 8
    std::vector<std::uint8_t> contact, phase;
    nlohmann::json geometry;

    /// Observation at step t with a wrench window ending at t (zero-padded).
    Observation observation(std::size_t t, std::size_t window) const;
    Action action(std::size_t t) const;
    Vec6 wrench(std::size_t t) const;
    /// H actions starting at t, padded with the last action.
    std::vector<Action> chunk(std::size_t t, std::size_t horizon) const;
    /// The n actions ending at t (inclusive), padded with the first action.
    std::vector<Action> history(std::size_t t, std::size_t n) const;
};

/// Rolls out the expert once. Labels come from the expert's phase graph.
Episode record_episode(const SimConfig& cfg, std::uint64_t seed);
/// True when the episode reached the task's success condition.
bool episode_succeeded(const SimConfig& cfg, const Episode& ep);

struct Dataset {
    SimConfig config;
    std::uint64_t seed = 0;
    std::vector<Episode> episodes;
    std::size_t discarded = 0;
};

/// n expert demos; failed episodes are discarded and re-seeded.
Dataset generate_dataset(const SimConfig& cfg, std::size_t n, std::uint64_t seed,
                         const std::function<void(const std::string&)>& log = {});
void save_dataset(const Dataset& ds, const std::filesystem::path& dir);
Dataset load_dataset(const std::filesystem::path& dir);

}  // namespace phaforce::sim
