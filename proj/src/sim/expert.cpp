#include <algorithm>
#include <cmath>

#include "phaforce/sim.hpp"

namespace phaforce::sim {

namespace {

// plug-in phases
enum PegPhase : std::size_t { kApproach = 0, kSearch = 1, kRecovery = 2, kInsert = 3, kPegDone = 4 };
// wiping phases
enum WipePhase : std::size_t { kPick = 0, kWipeApproach = 1, kWiping = 2, kWipeDone = 3 };

constexpr double kHover = 0.005;       // height above the plate before descending
constexpr double kPressForce = 6.0;    // N, normal load held while searching
constexpr double kPressGain = 5e-5;    // m per N of normal-force error
constexpr double kSearchGain = 1.5e-4;  // m per N of lateral force
constexpr double kGripClosed = 0.0;
constexpr double kGripOpen = 0.04;
constexpr int kHoldSteps = 6;

Vec3 clip_norm(Vec3 v, double cap) {
    const double n = v.norm();
    return n > cap ? Vec3(v * (cap / n)) : v;
}

}  // namespace

ScriptedExpert::ScriptedExpert(const Env& env, std::uint64_t seed) : rng_(seed) {
    const auto& s = env.state();
    cmd_.pose = s.tcp;
    cmd_.gripper = s.gripper;
    if (env.config().wiping()) {
        const auto& c = env.config();
        target_force_ = rng_.normal(c.target_force, c.target_force_sigma);
        const auto centers = env.cell_centers();
        const double x0 = centers.front().x(), x1 = centers[c.cells_x - 1].x();
        for (int pass = 0; pass < 2; ++pass)
            for (int j = 0; j < c.cells_y; ++j) {
                const int row = pass == 0 ? j : c.cells_y - 1 - j;
                const double y = centers[row * c.cells_x].y();
                const bool forward = (pass * c.cells_y + j) % 2 == 0;
                waypoints_.emplace_back(forward ? x0 : x1, y, 0.0);
                waypoints_.emplace_back(forward ? x1 : x0, y, 0.0);
            }
    } else {
        // noisy privileged estimate of the hole, like a vision prior
        aim = s.hole + Vec3(rng_.normal(0.0, 0.0015), rng_.normal(0.0, 0.0015), 0.0);
    }
}

Vec3 ScriptedExpert::step_toward(const Vec3& from, const Vec3& to, double max_lateral, double max_vertical) const {
    Vec3 d = to - from;
    Vec3 lat(d.x(), d.y(), 0.0);
    lat = clip_norm(lat, max_lateral);
    return from + Vec3(lat.x(), lat.y(), std::clamp(d.z(), -max_vertical, max_vertical));
}

Command ScriptedExpert::act(const Env& env) {
    const double j = env.config().jitter;
    jitter_x_ = 0.8 * jitter_x_ + 0.6 * j * rng_.normal(0.0, 1e-4);
    jitter_y_ = 0.8 * jitter_y_ + 0.6 * j * rng_.normal(0.0, 1e-4);
    jitter_z_ = 0.8 * jitter_z_ + 0.6 * j * rng_.normal(0.0, 1e-4);
    return env.config().wiping() ? act_wipe(env) : act_peg(env);
}

Command ScriptedExpert::act_peg(const Env& env) {
    const auto& s = env.state();
    const auto& c = env.config();
    const Vec3 tcp = s.tcp.position;
    Vec3 p = cmd_.pose.position;
    double yaw = cmd_.pose.yaw();
    const Vec3 f_lat(s.wrench[0], s.wrench[1], 0.0);
    const double torque = s.wrench[5];

    // transitions driven by the state reached after the previous command
    if (phase_ == kApproach && s.contact) phase_ = kSearch;
    // the tip has entered the bore (a lucky approach can skip the search)
    if ((phase_ == kApproach || phase_ == kSearch) && s.inside) phase_ = kInsert;
    if (phase_ == kInsert) {
        const double f = std::sqrt(s.wrench[0] * s.wrench[0] + s.wrench[1] * s.wrench[1] + s.wrench[2] * s.wrench[2]);
        over_limit_ = (f > c.recovery_force || std::abs(torque) > c.recovery_torque) ? over_limit_ + 1 : 0;
        if (over_limit_ >= c.recovery_steps) {
            phase_ = kRecovery;
            over_limit_ = 0;
            retreat_yaw_ = -torque / c.k_tau;
        } else if (-tcp.z() >= c.seat_depth + 0.0005 && -s.wrench[2] < c.recovery_force) {
            phase_ = kPegDone;
        }
    }
    if (phase_ == kRecovery && tcp.z() >= 0.003) phase_ = kSearch;

    switch (phase_) {
    case kApproach: {
        const double off = std::hypot(p.x() - aim.x(), p.y() - aim.y());
        if (off > 5e-4)
            p = step_toward(p, Vec3(aim.x(), aim.y(), std::max(kHover, std::min(p.z(), 0.02))), 0.003, 0.003);
        else
            p.z() -= 0.0015;
        break;
    }
    case kSearch: {
        // hold a light press with a force admittance on z
        p.z() += std::clamp(kPressGain * (-s.wrench[2] - kPressForce), -0.001, 0.001);
        Vec3 move;
        if (f_lat.norm() > 0.5) {
            move = clip_norm(-kSearchGain * f_lat, 0.0008);
        } else {
            // blind spiral around the estimate
            spiral_angle_ += std::numbers::pi / 4;
            const double rad = 0.00075 * spiral_angle_ / (2 * std::numbers::pi);
            const Vec3 target = aim + rad * Vec3(std::cos(spiral_angle_), std::sin(spiral_angle_), 0.0);
            move = clip_norm(Vec3(target.x() - p.x(), target.y() - p.y(), 0.0), 0.001);
        }
        p.x() += move.x();
        p.y() += move.y();
        yaw -= yaw_gain_ * torque;
        break;
    }
    case kInsert: {
        p.z() = std::max(p.z() - 0.0015, -(c.seat_depth + 0.001));
        const Vec3 move = clip_norm(-kSearchGain * f_lat, 0.0003);
        p.x() += move.x();
        p.y() += move.y();
        yaw -= yaw_gain_ * torque;
        break;
    }
    case kRecovery:
        p.z() += 0.003;
        yaw += retreat_yaw_;
        retreat_yaw_ = 0.0;
        break;
    case kPegDone:
        if (++hold_ >= kHoldSteps) finished_ = true;
        break;
    }
    cmd_.pose = Pose(p, geometry::yaw_quat(yaw));
    if (phase_ != kApproach && phase_ != kSearch) return cmd_;
    Command out = cmd_;
    out.pose.position += Vec3(jitter_x_, jitter_y_, phase_ == kSearch ? jitter_z_ : 0.0);
    return out;
}

Command ScriptedExpert::act_wipe(const Env& env) {
    const auto& s = env.state();
    Vec3 p = cmd_.pose.position;
    const double board = s.board_z;
    const double cruise = board + 0.03;

    switch (phase_) {
    case kPick: {
        const Vec3 grasp(s.sponge.x(), s.sponge.y(), s.sponge.z() + 0.002);
        if (s.held && cmd_.gripper > kGripClosed) {
            // finish closing before lifting so the grasp is not marginal
            cmd_.gripper = std::max(kGripClosed, cmd_.gripper - 0.01);
            break;
        } else if (s.held) {
            phase_ = kWipeApproach;
        } else if ((p - grasp).norm() < 5e-4) {
            cmd_.gripper = std::max(kGripClosed, cmd_.gripper - 0.01);
            ++grip_steps_;
            break;
        } else {
            const double off = std::hypot(p.x() - grasp.x(), p.y() - grasp.y());
            const Vec3 target = off > 0.002 ? Vec3(grasp.x(), grasp.y(), std::max(p.z(), 0.02)) : grasp;
            p = step_toward(p, target, 0.004, 0.004);
            break;
        }
        [[fallthrough]];
    }
    case kWipeApproach: {
        if (s.contact && env.surface_height(s.tcp.position.x(), s.tcp.position.y()) == board) {
            phase_ = kWiping;
        } else {
            const Vec3 start = waypoints_.front();
            const double off = std::hypot(p.x() - start.x(), p.y() - start.y());
            if (off > 5e-4) {
                const Vec3 target(start.x(), start.y(), cruise);
                // clear the board edge before travelling sideways
                p = p.z() < board + 0.015 ? Vec3(p.x(), p.y(), std::min(p.z() + 0.004, cruise))
                                          : step_toward(p, target, 0.004, 0.004);
            } else {
                p.z() -= 0.002;
            }
            break;
        }
        [[fallthrough]];
    }
    case kWiping: {
        if (waypoint_ >= waypoints_.size()) {
            phase_ = kWipeDone;
            break;
        }
        const double fn = -s.wrench[2];
        p.z() += 1e-4 * (fn - target_force_);
        const Vec3 wp = waypoints_[waypoint_];
        const Vec3 lat = clip_norm(Vec3(wp.x() - p.x(), wp.y() - p.y(), 0.0), 0.003);
        p.x() += lat.x();
        p.y() += lat.y();
        if (std::hypot(wp.x() - p.x(), wp.y() - p.y()) < 5e-4) ++waypoint_;
        break;
    }
    case kWipeDone:
        p.z() = std::min(p.z() + 0.003, cruise);
        if (++hold_ >= kHoldSteps) finished_ = true;
        break;
    }
    cmd_.pose = Pose(p, cmd_.pose.orientation);
    if (phase_ != kWiping) return cmd_;
    Command out = cmd_;
    out.pose.position += Vec3(0.5 * jitter_x_, 0.5 * jitter_y_, 0.3 * jitter_z_);
    return out;
}

}  // namespace phaforce::sim
