#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "phaforce/sim.hpp"

namespace phaforce::sim {

namespace {

constexpr double kPegRadius = 0.004;
constexpr double kPegLength = 0.03;
constexpr double kSpongeThickness = 0.01;
constexpr double kGraspDistance = 0.006;

double wrap_angle(double a) {
    while (a > std::numbers::pi) a -= 2.0 * std::numbers::pi;
    while (a < -std::numbers::pi) a += 2.0 * std::numbers::pi;
    return a;
}

// Grayscale raster with area-weighted shape coverage.
class Canvas {
public:
    // world window [u0, u1] x [w0, w1]; rows run from w1 (top) down to w0
    Canvas(std::uint8_t* px, std::size_t side, double u0, double u1, double w0, double w1)
        : px_(px), side_(side), u0_(u0), w1_(w1), du_((u1 - u0) / side), dw_((w1 - w0) / side) {}

    void fill(double value) { std::fill(px_, px_ + side_ * side_, static_cast<std::uint8_t>(value)); }

    void rect(double ua, double ub, double wa, double wb, double value) {
        if (ua > ub) std::swap(ua, ub);
        if (wa > wb) std::swap(wa, wb);
        for (std::size_t r = 0; r < side_; ++r) {
            const double top = w1_ - r * dw_, bot = top - dw_;
            const double oh = std::min(top, wb) - std::max(bot, wa);
            if (oh <= 0) continue;
            for (std::size_t c = 0; c < side_; ++c) {
                const double left = u0_ + c * du_, right = left + du_;
                const double ow = std::min(right, ub) - std::max(left, ua);
                if (ow <= 0) continue;
                blend(r, c, (oh * ow) / (du_ * dw_), value);
            }
        }
    }

    void disc(double uc, double wc, double radius, double value) {
        constexpr int kSuper = 4;
        for (std::size_t r = 0; r < side_; ++r) {
            const double top = w1_ - r * dw_;
            if (top < wc - radius || top - dw_ > wc + radius) continue;
            for (std::size_t c = 0; c < side_; ++c) {
                const double left = u0_ + c * du_;
                if (left > uc + radius || left + du_ < uc - radius) continue;
                int hits = 0;
                for (int i = 0; i < kSuper; ++i)
                    for (int j = 0; j < kSuper; ++j) {
                        const double u = left + (j + 0.5) * du_ / kSuper - uc;
                        const double w = top - (i + 0.5) * dw_ / kSuper - wc;
                        hits += (u * u + w * w <= radius * radius);
                    }
                if (hits) blend(r, c, hits / double(kSuper * kSuper), value);
            }
        }
    }

private:
    void blend(std::size_t r, std::size_t c, double cover, double value) {
        cover = std::min(1.0, cover);
        auto& p = px_[r * side_ + c];
        p = static_cast<std::uint8_t>(std::lround(p * (1.0 - cover) + value * cover));
    }

    std::uint8_t* px_;
    std::size_t side_;
    double u0_, w1_, du_, dw_;
};

}  // namespace

Env::Env(const SimConfig& cfg, std::uint64_t seed)
    : cfg_(cfg), task_(task_by_id(cfg.task)), noise_(mix_seed(seed, 2)) {
    validate(cfg_);
    Rng init(mix_seed(seed, 1));
    if (cfg_.wiping()) {
        s_.board_z = cfg_.effective_board_height();
        s_.sponge = Vec3(-0.06 + init.uniform(-0.004, 0.004), init.uniform(-0.004, 0.004), 0.0);
        s_.patch = Vec3(init.uniform(0.01, 0.03), init.uniform(-0.02, 0.0), s_.board_z);
        s_.wiped.assign(static_cast<std::size_t>(cfg_.cells_x * cfg_.cells_y), 0);
        s_.dwell.assign(s_.wiped.size(), 0.0);
        s_.tcp = Pose(Vec3(-0.06 + init.uniform(-0.01, 0.01), init.uniform(-0.01, 0.01), 0.07 + init.uniform(-0.01, 0.01)),
                      geometry::Quat::Identity());
    } else {
        s_.hole = Vec3(init.uniform(-cfg_.hole_jitter, cfg_.hole_jitter), init.uniform(-cfg_.hole_jitter, cfg_.hole_jitter), 0.0);
        s_.grasp_yaw = init.uniform(-cfg_.grasp_yaw_max, cfg_.grasp_yaw_max);
        const double sp = cfg_.start_spread;
        s_.tcp = Pose(Vec3(s_.hole.x() + init.uniform(-sp, sp), s_.hole.y() + init.uniform(-sp, sp), init.uniform(0.03, 0.045)),
                      geometry::Quat::Identity());
    }
}

StepResult Env::step(const Command& cmd) {
    const Vec3& p = cmd.pose.position;
    for (int i = 0; i < 3; ++i)
        if (!(p[i] >= cfg_.workspace_lo[i] && p[i] <= cfg_.workspace_hi[i]))
            throw WorkspaceViolation("commanded position leaves the workspace on axis " + std::to_string(i));
    const Pose start = s_.tcp;
    const double g0 = s_.gripper;
    const double sub_dt = cfg_.dt() / cfg_.substeps;
    for (int k = 1; k <= cfg_.substeps; ++k) {
        const double s = double(k) / cfg_.substeps;
        substep(geometry::interpolate(start, cmd.pose, s), g0 + s * (cmd.gripper - g0), sub_dt);
    }
    ++s_.step;
    // sensor noise once per control period
    for (int i = 0; i < 3; ++i) s_.wrench[i] = s_.true_wrench[i] + noise_.normal(0.0, cfg_.sigma_f);
    for (int i = 3; i < 6; ++i) s_.wrench[i] = s_.true_wrench[i] + noise_.normal(0.0, cfg_.sigma_tau);
    return {s_.wrench, s_.true_wrench, s_.contact, s_.normal_force};
}

void Env::substep(const Pose& pose, double gripper, double dt) {
    Vec3 f_env = Vec3::Zero();  // force the environment applies to the tool, world frame
    double tau_env = 0.0;       // about world z
    if (cfg_.wiping())
        substep_wipe(pose, gripper, dt, f_env);
    else
        substep_peg(pose, dt, f_env, tau_env);
    s_.tcp = pose;
    s_.gripper = gripper;
    // report what the tool applies to the environment, in the TCP frame
    const Vec3 f_tcp = pose.rotation().transpose() * (-f_env);
    s_.true_wrench = {f_tcp.x(), f_tcp.y(), f_tcp.z(), 0.0, 0.0, -tau_env};
}

void Env::substep_peg(const Pose& p, double dt, Vec3& f, double& tau) {
    const Vec3 tip = p.position, prev = s_.tcp.position;
    const double dx = tip.x() - s_.hole.x(), dy = tip.y() - s_.hole.y();
    const double r = std::hypot(dx, dy);
    const double c = cfg_.clearance, w = cfg_.rim_width;
    const double bore_top = -cfg_.rim_slope * w;  // the chamfer ends where the bore begins
    const double err = wrap_angle(p.yaw() + s_.grasp_yaw);

    if (tip.z() >= bore_top) {
        s_.inside = false;
        s_.jammed = false;
    } else if (!s_.inside && r < c) {
        s_.inside = true;
    }
    // a misaligned peg catches just below the bore entry
    if (s_.inside && (s_.jammed || bore_top - prev.z() <= cfg_.jam_depth)) s_.jammed = std::abs(err) >= cfg_.yaw_tol;

    // surface under the tip: plate, conical chamfer, open bore, or bore floor
    double surface = 0.0;
    double lateral_per_normal = 0.0;
    if (s_.inside)
        surface = s_.jammed ? bore_top - cfg_.jam_depth : -cfg_.hole_depth;
    else if (r < c)
        surface = -std::numeric_limits<double>::infinity();
    else if (r < c + w) {
        surface = -cfg_.rim_slope * (c + w - r);
        lateral_per_normal = cfg_.rim_slope;
    }
    const double pen = std::max(0.0, surface - tip.z());
    double fn = 0.0;
    if (pen > 0.0) fn = std::max(0.0, cfg_.k_n * pen + cfg_.c_n * (pen - s_.prev_pen) / dt);
    s_.prev_pen = pen;
    f.z() += fn;
    if (fn > 0.0 && lateral_per_normal > 0.0) {
        // the chamfer normal tilts toward the hole axis
        f.x() -= fn * lateral_per_normal * dx / r;
        f.y() -= fn * lateral_per_normal * dy / r;
    }

    double fw = 0.0;
    if (s_.inside) {
        const double pw = std::max(0.0, r - c);
        if (pw > 0.0) fw = std::max(0.0, cfg_.k_n * pw + cfg_.c_n * (pw - s_.prev_wall) / dt);
        s_.prev_wall = pw;
        if (fw > 0.0) {
            f.x() -= fw * dx / r;
            f.y() -= fw * dy / r;
            const double vz = (tip.z() - prev.z()) / dt;
            if (vz != 0.0) f.z() -= std::copysign(std::min(cfg_.mu * fw, cfg_.c_t * std::abs(vz)), vz);
        }
    } else {
        s_.prev_wall = 0.0;
    }

    if (fn > 0.0) {
        const double vx = (tip.x() - prev.x()) / dt, vy = (tip.y() - prev.y()) / dt;
        const double v = std::hypot(vx, vy);
        if (v > 0.0) {
            const double fr = std::min(cfg_.mu * fn, cfg_.c_t * v);
            f.x() -= fr * vx / v;
            f.y() -= fr * vy / v;
        }
    }

    if (s_.inside) tau = -cfg_.k_tau * err * std::min(1.0, (fn + fw) / 5.0);
    s_.normal_force = fn;
    s_.contact = fn > 0.0 || fw > 0.0;
}

void Env::substep_wipe(const Pose& p, double gripper, double dt, Vec3& f) {
    const Vec3 tip = p.position;
    if (!s_.held) {
        if (gripper <= 0.02 && (tip - s_.sponge).norm() < kGraspDistance) s_.held = true;
    } else if (gripper > 0.03) {
        s_.held = false;
        s_.sponge = Vec3(tip.x(), tip.y(), surface_height(tip.x(), tip.y()));
    }
    if (!s_.held) {
        s_.prev_pen = 0.0;
        s_.normal_force = 0.0;
        s_.contact = false;
        return;
    }

    const double surf = surface_height(tip.x(), tip.y());
    const double pen = std::max(0.0, surf - tip.z());
    double fn = 0.0;
    if (pen > 0.0) fn = std::max(0.0, cfg_.k_n * pen + cfg_.c_n * (pen - s_.prev_pen) / dt);
    s_.prev_pen = pen;
    f.z() += fn;
    if (fn > 0.0) {
        const Vec3 prev = s_.tcp.position;
        const double vx = (tip.x() - prev.x()) / dt, vy = (tip.y() - prev.y()) / dt;
        const double v = std::hypot(vx, vy);
        if (v > 0.0) {
            const double fr = std::min(cfg_.mu * fn, cfg_.c_t * v);
            f.x() -= fr * vx / v;
            f.y() -= fr * vy / v;
        }
    }
    s_.sponge = tip;
    s_.normal_force = fn;
    s_.contact = fn > 0.0;

    if (fn >= cfg_.force_band_lo && fn <= cfg_.force_band_hi && surf == s_.board_z) {
        const auto centers = cell_centers();
        for (std::size_t i = 0; i < centers.size(); ++i)
            if (std::hypot(centers[i].x() - tip.x(), centers[i].y() - tip.y()) <= cfg_.sponge_radius &&
                (s_.dwell[i] += dt) >= cfg_.wipe_dwell - 1e-12)
                s_.wiped[i] = 1;
    }
}

double Env::surface_height(double x, double y) const {
    const bool on_board = x >= -0.01 && x <= 0.09 && y >= -0.04 && y <= 0.04;
    return on_board ? s_.board_z : 0.0;
}

std::vector<Vec3> Env::cell_centers() const {
    std::vector<Vec3> out;
    for (int j = 0; j < cfg_.cells_y; ++j)
        for (int i = 0; i < cfg_.cells_x; ++i)
            out.emplace_back(s_.patch.x() + (i + 0.5) * cfg_.cell, s_.patch.y() + (j + 0.5) * cfg_.cell, s_.board_z);
    return out;
}

double Env::wiped_fraction() const {
    if (s_.wiped.empty()) return 0.0;
    return double(std::count(s_.wiped.begin(), s_.wiped.end(), 1)) / s_.wiped.size();
}

double Env::yaw_error() const { return wrap_angle(s_.tcp.yaw() + s_.grasp_yaw); }

double Env::lateral_offset() const {
    return std::hypot(s_.tcp.position.x() - s_.hole.x(), s_.tcp.position.y() - s_.hole.y());
}

// a light wall load (0.2 mm of wall penetration) still counts as seated
bool Env::seated() const {
    return s_.inside && !s_.jammed && depth() >= cfg_.seat_depth && lateral_offset() <= cfg_.clearance + 2e-4;
}

std::size_t Env::geometric_phase() const {
    const auto& names = task_.phases.names;
    auto idx = [&](const char* n) { return std::size_t(std::find(names.begin(), names.end(), n) - names.begin()); };
    if (cfg_.wiping()) {
        if (!s_.held) return idx("pick");
        if (wiped_fraction() >= 1.0) return idx("done");
        return s_.contact && surface_height(s_.tcp.position.x(), s_.tcp.position.y()) == s_.board_z ? idx("wiping")
                                                                                                 : idx("approach");
    }
    if (seated()) return idx("done");
    if (s_.inside) return s_.jammed ? idx("recovery") : idx("insert");
    return s_.contact ? idx("search") : idx("approach");
}

std::vector<double> Env::proprio() const {
    const auto a = s_.tcp.to_array();
    std::vector<double> out(a.begin(), a.end());
    out.push_back(s_.gripper);
    return out;
}

std::vector<std::uint8_t> Env::render() const {
    const std::size_t side = cfg_.layout.side, n = side * side;
    std::vector<std::uint8_t> img(cfg_.layout.views * n);
    const Vec3 t = s_.tcp.position;
    if (!cfg_.wiping()) {
        const double span = 0.028, hole_r = kPegRadius + cfg_.clearance;
        const double zlo = -0.02, zhi = 0.06;
        const Vec3 h = s_.hole;
        const double peg_value = 150.0 + 100.0 * std::clamp(1.0 - t.z() / 0.05, 0.0, 1.0);

        Canvas top(img.data(), side, -span, span, -span, span);
        top.fill(70);
        top.disc(h.x(), h.y(), hole_r + cfg_.rim_width, 35);
        top.disc(h.x(), h.y(), hole_r, 0);
        top.disc(t.x(), t.y(), kPegRadius, peg_value);

        for (int axis = 0; axis < 2; ++axis) {
            Canvas v(img.data() + (axis + 1) * n, side, -span, span, zlo, zhi);
            v.fill(20);
            v.rect(-span, span, zlo, 0.0, 70);
            v.rect(h[axis] - hole_r - cfg_.rim_width, h[axis] + hole_r + cfg_.rim_width, -cfg_.rim_slope * cfg_.rim_width,
                   0.0, 35);
            v.rect(h[axis] - hole_r, h[axis] + hole_r, -cfg_.hole_depth, 0.0, 0);
            v.rect(t[axis] - kPegRadius, t[axis] + kPegRadius, t.z(), t.z() + kPegLength, 230);
        }
        return img;
    }

    const double u0 = -0.09, u1 = 0.11;
    const Vec3 sp = s_.held ? t : s_.sponge;
    const auto centers = cell_centers();
    const double half = cfg_.cell / 2;

    Canvas top(img.data(), side, u0, u1, -0.1, 0.1);
    top.fill(30);
    top.rect(-0.08, -0.04, -0.02, 0.02, 90);
    top.rect(-0.01, 0.09, -0.04, 0.04, 60);
    for (std::size_t i = 0; i < centers.size(); ++i)
        if (!s_.wiped[i]) top.rect(centers[i].x() - half, centers[i].x() + half, centers[i].y() - half, centers[i].y() + half, 200);
    top.disc(t.x(), t.y(), 0.004, 140);
    top.disc(sp.x(), sp.y(), cfg_.sponge_radius, 250);

    // side views ride with the tool (wrist-style) and only see a 2 cm slab around it along the view axis
    const std::array<std::array<double, 2>, 2> board{{{-0.01, 0.09}, {-0.04, 0.04}}};
    constexpr double kSlab = 0.02;
    for (int axis = 0; axis < 2; ++axis) {
        const int depth = 1 - axis;
        Canvas v(img.data() + (axis + 1) * n, side, t[axis] - 0.035, t[axis] + 0.035, t.z() - 0.06, t.z() + 0.02);
        v.fill(10);
        v.rect(t[axis] - 0.2, t[axis] + 0.2, t.z() - 0.2, 0.0, 30);
        if (board[depth][1] > t[depth] - kSlab && board[depth][0] < t[depth] + kSlab)
            v.rect(board[axis][0], board[axis][1], 0.0, s_.board_z, 60);
        v.rect(sp[axis] - cfg_.sponge_radius, sp[axis] + cfg_.sponge_radius, sp.z(), sp.z() + kSpongeThickness, 250);
        v.rect(t[axis] - 0.003, t[axis] + 0.003, t.z() + kSpongeThickness, t.z() + 0.04, 140);
    }
    return img;
}

}  // namespace phaforce::sim
