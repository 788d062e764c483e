#pragma once

#include <Eigen/Dense>
#include <Eigen/Geometry>

// 3-D geometry kernel: Hamilton scalar-first quaternions, rigid transforms,
// and the SO(3) tangent-space maps used by the optimizers.

namespace mml {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Quat = Eigen::Quaterniond;

inline Mat3 skew(const Vec3& v) {
  Mat3 m;
  m << 0, -v.z(), v.y(), v.z(), 0, -v.x(), -v.y(), v.x(), 0;
  return m;
}

// exp: so(3) -> SO(3), Rodrigues with Taylor fallback below 1e-6 rad.
Quat exp_so3(const Vec3& theta);

// log: SO(3) -> so(3). For rotations at pi the axis is chosen so the
// largest-index nonzero component is positive (deterministic antipode).
Vec3 log_so3(const Quat& q);

// Right Jacobian of SO(3) and its inverse.
Mat3 right_jacobian(const Vec3& theta);
Mat3 right_jacobian_inv(const Vec3& theta);

// Local (right) retraction on the quaternion manifold.
inline Quat quat_boxplus(const Quat& q, const Vec3& dtheta) {
  return (q * exp_so3(dtheta)).normalized();
}
inline Vec3 quat_boxminus(const Quat& qa, const Quat& qb) {
  return log_so3(qb.conjugate() * qa);
}

// Angle of the relative rotation between two quaternions, in [0, pi].
inline double rotation_angle(const Quat& a, const Quat& b) {
  return log_so3(a.conjugate() * b).norm();
}

struct Pose {
  Quat q{1, 0, 0, 0};
  Vec3 t{0, 0, 0};

  Pose() = default;
  Pose(const Quat& q_, const Vec3& t_) : q(q_.normalized()), t(t_) {}

  static Pose identity() { return {}; }

  Vec3 apply(const Vec3& p) const { return q * p + t; }

  Pose inverse() const {
    Quat qi = q.conjugate();
    return {qi, qi * (-t)};
  }

  // Result applies rhs first, then *this.
  Pose compose(const Pose& rhs) const {
    return {(q * rhs.q).normalized(), q * rhs.t + t};
  }

  Pose operator*(const Pose& rhs) const { return compose(rhs); }
  Vec3 operator*(const Vec3& p) const { return apply(p); }
};

// log on SE(3) used by the pose graph: [rot tangent, translation residual].
// Decoupled (not the twist exponential); standard for pose-graph residuals.
inline Eigen::Matrix<double, 6, 1> pose_log(const Pose& T) {
  Eigen::Matrix<double, 6, 1> x;
  x.head<3>() = log_so3(T.q);
  x.tail<3>() = T.t;
  return x;
}

struct NavState {
  Vec3 p{0, 0, 0};
  Quat q{1, 0, 0, 0};
  Vec3 v{0, 0, 0};
  Vec3 ba{0, 0, 0};
  Vec3 bg{0, 0, 0};

  Pose pose() const { return {q, p}; }
};

}  // namespace mml
