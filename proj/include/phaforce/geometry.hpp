#pragma once

#include <array>
#include <stdexcept>

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace phaforce::geometry {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Quat = Eigen::Quaterniond;

struct DegenerateRotation : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Unit quaternion with the sign convention w >= 0 (ties broken by the first
/// nonzero of x, y, z being positive).
Quat canonical(const Quat& q);

/// Rigid transform stored as position + unit quaternion.
struct Pose {
    Vec3 position = Vec3::Zero();
    Quat orientation = Quat::Identity();

    Pose() = default;
    Pose(const Vec3& p, const Quat& q);

    static Pose identity() { return {}; }
    static Pose translation(double x, double y, double z);

    /// Wire layout [px, py, pz, qw, qx, qy, qz].
    std::array<double, 7> to_array() const;
    static Pose from_array(const std::array<double, 7>& a);
    static Pose from_array(const double* a);

    Mat3 rotation() const { return orientation.toRotationMatrix(); }
    double yaw() const;

    bool operator==(const Pose& o) const {
        return position == o.position && orientation.coeffs() == o.orientation.coeffs();
    }
};

/// 6-vector in [x, y, z, roll, pitch, yaw] order, expressed in the TCP frame.
struct Twist {
    Vec3 linear = Vec3::Zero();
    Vec3 angular = Vec3::Zero();

    static Twist from_array(const std::array<double, 6>& a);
    std::array<double, 6> to_array() const;
    double operator[](int i) const { return i < 3 ? linear[i] : angular[i - 3]; }
};

/// First two rotation-matrix columns, column-major.
struct Rot6d {
    std::array<double, 6> v{};
};

/// base ∘ delta, with delta expressed in the base frame.
Pose compose(const Pose& base, const Pose& delta);
Pose inverse(const Pose& p);

/// SE(3) exponential map.
Pose twist_to_delta_pose(const Twist& xi);

/// Scales the linear and angular parts independently so that their norms do
/// not exceed the given caps.
Twist clamp_twist(const Twist& xi, double linear_cap, double angular_cap);

Rot6d rot6d_encode(const Quat& q);
Quat rot6d_decode(const Rot6d& r);

/// Linear interpolation in position, slerp in orientation; s in [0, 1].
Pose interpolate(const Pose& a, const Pose& b, double s);

Quat yaw_quat(double yaw);

}  // namespace phaforce::geometry
