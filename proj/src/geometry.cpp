#include "phaforce/geometry.hpp"

#include <cmath>

namespace phaforce::geometry {

namespace {

// Renormalize only when the norm has drifted; keeps exact unit inputs bit-stable.
Quat renormalized(const Quat& q) {
    const double n2 = q.squaredNorm();
    if (std::abs(n2 - 1.0) <= 1e-15) return q;
    const double n = std::sqrt(n2);
    return Quat(q.w() / n, q.x() / n, q.y() / n, q.z() / n);
}

}  // namespace

Quat canonical(const Quat& q_in) {
    Quat q = renormalized(q_in);
    bool flip = false;
    if (q.w() < 0.0) {
        flip = true;
    } else if (q.w() == 0.0) {
        for (double c : {q.x(), q.y(), q.z()}) {
            if (c != 0.0) {
                flip = c < 0.0;
                break;
            }
        }
    }
    if (flip) q.coeffs() = -q.coeffs();
    // -0.0 in w would compare equal but serialize differently
    if (q.w() == 0.0) q.w() = 0.0;
    return q;
}

Pose::Pose(const Vec3& p, const Quat& q) : position(p), orientation(canonical(q)) {}

Pose Pose::translation(double x, double y, double z) { return Pose(Vec3(x, y, z), Quat::Identity()); }

std::array<double, 7> Pose::to_array() const {
    return {position.x(), position.y(), position.z(),
            orientation.w(), orientation.x(), orientation.y(), orientation.z()};
}

Pose Pose::from_array(const std::array<double, 7>& a) { return from_array(a.data()); }

Pose Pose::from_array(const double* a) {
    return Pose(Vec3(a[0], a[1], a[2]), Quat(a[3], a[4], a[5], a[6]));
}

double Pose::yaw() const {
    const Quat& q = orientation;
    return std::atan2(2.0 * (q.w() * q.z() + q.x() * q.y()), 1.0 - 2.0 * (q.y() * q.y() + q.z() * q.z()));
}

Twist Twist::from_array(const std::array<double, 6>& a) {
    Twist t;
    t.linear = Vec3(a[0], a[1], a[2]);
    t.angular = Vec3(a[3], a[4], a[5]);
    return t;
}

std::array<double, 6> Twist::to_array() const {
    return {linear.x(), linear.y(), linear.z(), angular.x(), angular.y(), angular.z()};
}

Pose compose(const Pose& base, const Pose& delta) {
    Pose out;
    out.position = base.position + base.orientation * delta.position;
    out.orientation = canonical(base.orientation * delta.orientation);
    return out;
}

Pose inverse(const Pose& p) {
    const Quat qi = p.orientation.conjugate();
    return Pose(-(qi * p.position), qi);
}

Pose twist_to_delta_pose(const Twist& xi) {
    const Vec3& w = xi.angular;
    const double theta2 = w.squaredNorm();
    const double theta = std::sqrt(theta2);
    Mat3 W;
    W << 0.0, -w.z(), w.y(),
         w.z(), 0.0, -w.x(),
         -w.y(), w.x(), 0.0;

    double b, c, half_sinc;
    if (theta < 1e-5) {
        // Taylor expansions; truncation error below 1e-20 at this radius
        b = 0.5 - theta2 / 24.0;
        c = 1.0 / 6.0 - theta2 / 120.0;
        half_sinc = 0.5 - theta2 / 48.0;
    } else {
        b = (1.0 - std::cos(theta)) / theta2;
        c = (theta - std::sin(theta)) / (theta2 * theta);
        half_sinc = std::sin(0.5 * theta) / theta;
    }
    const Mat3 V = Mat3::Identity() + b * W + c * W * W;
    const Quat q(std::cos(0.5 * theta), half_sinc * w.x(), half_sinc * w.y(), half_sinc * w.z());
    return Pose(V * xi.linear, q);
}

Twist clamp_twist(const Twist& xi, double linear_cap, double angular_cap) {
    Twist out = xi;
    const double ln = xi.linear.norm();
    if (ln > linear_cap && ln > 0.0) out.linear *= linear_cap / ln;
    const double an = xi.angular.norm();
    if (an > angular_cap && an > 0.0) out.angular *= angular_cap / an;
    return out;
}

Rot6d rot6d_encode(const Quat& q) {
    const Mat3 R = q.normalized().toRotationMatrix();
    Rot6d r;
    for (int i = 0; i < 3; ++i) {
        r.v[i] = R(i, 0);
        r.v[3 + i] = R(i, 1);
    }
    return r;
}

Quat rot6d_decode(const Rot6d& r) {
    const Vec3 a1(r.v[0], r.v[1], r.v[2]);
    const Vec3 a2(r.v[3], r.v[4], r.v[5]);
    const double n1 = a1.norm();
    if (!(n1 >= 1e-8)) throw DegenerateRotation("rot6d: first column norm below 1e-8");
    const Vec3 b1 = a1 / n1;
    const Vec3 u2 = a2 - b1.dot(a2) * b1;
    const double n2 = u2.norm();
    if (!(n2 >= 1e-8)) throw DegenerateRotation("rot6d: columns are parallel");
    const Vec3 b2 = u2 / n2;
    const Vec3 b3 = b1.cross(b2);
    Mat3 R;
    R.col(0) = b1;
    R.col(1) = b2;
    R.col(2) = b3;
    return canonical(Quat(R));
}

Pose interpolate(const Pose& a, const Pose& b, double s) {
    if (s <= 0.0) return a;
    if (s >= 1.0) return b;
    const Vec3 p = (1.0 - s) * a.position + s * b.position;
    return Pose(p, a.orientation.slerp(s, b.orientation));
}

Quat yaw_quat(double yaw) { return canonical(Quat(std::cos(0.5 * yaw), 0.0, 0.0, std::sin(0.5 * yaw))); }

}  // namespace phaforce::geometry
