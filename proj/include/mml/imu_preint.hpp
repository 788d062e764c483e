#pragma once

#include <vector>

#include "mml/types.hpp"

namespace mml {

struct ImuNoiseParams {
  double sigma_g = 1e-3;       // rad/s/sqrt(Hz)
  double sigma_a = 1e-2;       // m/s^2/sqrt(Hz)
  double sigma_bg_walk = 1e-5; // rad/s^2/sqrt(Hz)
  double sigma_ba_walk = 1e-4; // m/s^3/sqrt(Hz)
};

// Relative motion between two keyframe times, gravity-free, expressed in
// the body frame at the start time. First-order bias Jacobians let a bias
// update apply without re-integration.
struct PreintegratedImu {
  double t_start = 0;
  double t_end = 0;
  double dt_total = 0;

  Vec3 delta_p{0, 0, 0};
  Vec3 delta_v{0, 0, 0};
  Quat delta_q{1, 0, 0, 0};

  Vec3 ba_lin{0, 0, 0};
  Vec3 bg_lin{0, 0, 0};

  Mat3 J_p_ba = Mat3::Zero();
  Mat3 J_p_bg = Mat3::Zero();
  Mat3 J_v_ba = Mat3::Zero();
  Mat3 J_v_bg = Mat3::Zero();
  Mat3 J_q_bg = Mat3::Zero();

  // Error order (rot, vel, pos).
  Eigen::Matrix<double, 9, 9> covariance = Eigen::Matrix<double, 9, 9>::Zero();

  static PreintegratedImu identity(double t0, double t1);

  // Deltas corrected to biases (ba, bg) via the first-order Jacobians.
  Vec3 corrected_p(const Vec3& ba, const Vec3& bg) const;
  Vec3 corrected_v(const Vec3& ba, const Vec3& bg) const;
  Quat corrected_q(const Vec3& bg) const;
};

// Midpoint integration of the body-frame motion deltas over the sample
// span; gravity is excluded from the deltas and reintroduced at prediction.
PreintegratedImu preintegrate(const std::vector<ImuSample>& samples,
                              const Vec3& ba, const Vec3& bg,
                              const ImuNoiseParams& noise = {});

NavState predict_state(const NavState& prev, const PreintegratedImu& delta,
                       const Vec3& gravity);

// Maps every point into the sweep-end frame by interpolating the delta
// over the point's fractional time in the interval.
Scan undistort_scan(const Scan& scan, const PreintegratedImu& delta);

}  // namespace mml
