#include "mml/geom.hpp"

#include <cmath>

namespace mml {

namespace {
constexpr double kSmallAngle = 1e-6;
}

Quat exp_so3(const Vec3& theta) {
  const double angle = theta.norm();
  double half_sinc;  // sin(angle/2) / angle
  if (angle < kSmallAngle) {
    half_sinc = 0.5 - angle * angle / 48.0;
  } else {
    half_sinc = std::sin(0.5 * angle) / angle;
  }
  Quat q(std::cos(0.5 * angle), half_sinc * theta.x(), half_sinc * theta.y(),
         half_sinc * theta.z());
  return q.normalized();
}

Vec3 log_so3(const Quat& q_in) {
  Quat q = q_in.normalized();
  if (q.w() < 0) q.coeffs() = -q.coeffs();
  Vec3 vec(q.x(), q.y(), q.z());
  const double sin_half = vec.norm();
  const double cos_half = q.w();
  if (sin_half < kSmallAngle) {
    // angle ~ 0: log(q) ~ 2*vec/w
    return 2.0 * vec / cos_half;
  }
  const double angle = 2.0 * std::atan2(sin_half, cos_half);
  Vec3 axis = vec / sin_half;
  if (angle > M_PI - 1e-9) {
    // Antipodal representative: largest-index nonzero component positive.
    for (int i = 2; i >= 0; --i) {
      if (std::abs(axis[i]) > 1e-12) {
        if (axis[i] < 0) axis = -axis;
        break;
      }
    }
    return M_PI * axis;
  }
  return angle * axis;
}

Mat3 right_jacobian(const Vec3& theta) {
  const double angle = theta.norm();
  const Mat3 w = skew(theta);
  if (angle < kSmallAngle) {
    return Mat3::Identity() - 0.5 * w + w * w / 6.0;
  }
  const double a2 = angle * angle;
  return Mat3::Identity() - (1.0 - std::cos(angle)) / a2 * w +
         (angle - std::sin(angle)) / (a2 * angle) * w * w;
}

Mat3 right_jacobian_inv(const Vec3& theta) {
  const double angle = theta.norm();
  const Mat3 w = skew(theta);
  if (angle < kSmallAngle) {
    return Mat3::Identity() + 0.5 * w + w * w / 12.0;
  }
  const double a2 = angle * angle;
  const double c = 1.0 / a2 - (1.0 + std::cos(angle)) / (2.0 * angle * std::sin(angle));
  return Mat3::Identity() + 0.5 * w + c * w * w;
}

}  // namespace mml
