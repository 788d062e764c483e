#include "mml/imu_preint.hpp"

#include <cstdio>
#include <stdexcept>

namespace mml {

PreintegratedImu PreintegratedImu::identity(double t0, double t1) {
  PreintegratedImu d;
  d.t_start = t0;
  d.t_end = t1;
  d.dt_total = t1 - t0;
  return d;
}

Vec3 PreintegratedImu::corrected_p(const Vec3& ba, const Vec3& bg) const {
  return delta_p + J_p_ba * (ba - ba_lin) + J_p_bg * (bg - bg_lin);
}

Vec3 PreintegratedImu::corrected_v(const Vec3& ba, const Vec3& bg) const {
  return delta_v + J_v_ba * (ba - ba_lin) + J_v_bg * (bg - bg_lin);
}

Quat PreintegratedImu::corrected_q(const Vec3& bg) const {
  return (delta_q * exp_so3(J_q_bg * (bg - bg_lin))).normalized();
}

PreintegratedImu preintegrate(const std::vector<ImuSample>& samples,
                              const Vec3& ba, const Vec3& bg,
                              const ImuNoiseParams& noise) {
  if (samples.size() < 2) {
    throw std::invalid_argument("preintegration needs >= 2 IMU samples");
  }
  for (size_t i = 1; i < samples.size(); ++i) {
    if (samples[i].t <= samples[i - 1].t) {
      throw std::invalid_argument("IMU sample times must be strictly increasing");
    }
  }

  PreintegratedImu d = PreintegratedImu::identity(samples.front().t, samples.back().t);
  d.ba_lin = ba;
  d.bg_lin = bg;

  // Accumulated Jacobian of (δθ, δv, δp) wrt (δb_a, δb_g).
  Eigen::Matrix<double, 9, 6> J = Eigen::Matrix<double, 9, 6>::Zero();
  Eigen::Matrix<double, 9, 9>& P = d.covariance;

  for (size_t i = 0; i + 1 < samples.size(); ++i) {
    const double dt = samples[i + 1].t - samples[i].t;
    const Vec3 w_mid = 0.5 * (samples[i].gyro + samples[i + 1].gyro) - bg;
    const Vec3 a0 = samples[i].accel - ba;
    const Vec3 a1 = samples[i + 1].accel - ba;

    const Mat3 R0 = d.delta_q.toRotationMatrix();
    const Quat q1 = (d.delta_q * exp_so3(w_mid * dt)).normalized();
    const Mat3 R1 = q1.toRotationMatrix();

    const Vec3 a_mid = 0.5 * (R0 * a0 + R1 * a1);  // start-frame, gravity-free

    // Error-state transition, order (θ, v, p).
    const Mat3 Ftt = exp_so3(-w_mid * dt).toRotationMatrix();  // ≈ I − [ω]×dt
    const Mat3 G = -0.5 * (R0 * skew(a0) + R1 * skew(a1) * Ftt);

    Eigen::Matrix<double, 9, 9> A = Eigen::Matrix<double, 9, 9>::Identity();
    A.block<3, 3>(0, 0) = Ftt;
    A.block<3, 3>(3, 0) = dt * G;
    A.block<3, 3>(6, 0) = 0.5 * dt * dt * G;
    A.block<3, 3>(6, 3) = dt * Mat3::Identity();

    // Direct bias feed-through per step (δbg also enters the accel error
    // through δθ_{k+1} = Fθθ δθ_k − dt δbg).
    Eigen::Matrix<double, 9, 6> B = Eigen::Matrix<double, 9, 6>::Zero();
    B.block<3, 3>(0, 3) = -dt * right_jacobian(w_mid * dt);
    const Mat3 Bv_ba = -0.5 * dt * (R0 + R1);
    const Mat3 Bv_bg = 0.5 * dt * dt * R1 * skew(a1);
    B.block<3, 3>(3, 0) = Bv_ba;
    B.block<3, 3>(3, 3) = Bv_bg;
    B.block<3, 3>(6, 0) = 0.5 * dt * Bv_ba;
    B.block<3, 3>(6, 3) = 0.5 * dt * Bv_bg;

    J = A * J + B;

    // Discrete-time measurement noise (white densities divided by dt).
    const double qg = noise.sigma_g * noise.sigma_g / dt;
    const double qa = noise.sigma_a * noise.sigma_a / dt;
    Eigen::Matrix<double, 9, 6> Bn = Eigen::Matrix<double, 9, 6>::Zero();
    Bn.block<3, 3>(0, 0) = dt * right_jacobian(w_mid * dt);
    const Mat3 Bn_v = 0.5 * dt * (R0 + R1);
    Bn.block<3, 3>(3, 3) = Bn_v;
    Bn.block<3, 3>(6, 3) = 0.5 * dt * Bn_v;
    Eigen::Matrix<double, 6, 6> Q = Eigen::Matrix<double, 6, 6>::Zero();
    Q.diagonal() << qg, qg, qg, qa, qa, qa;
    P = A * P * A.transpose() + Bn * Q * Bn.transpose();
    P = 0.5 * (P + P.transpose()).eval();

    d.delta_p += d.delta_v * dt + 0.5 * a_mid * dt * dt;
    d.delta_v += a_mid * dt;
    d.delta_q = q1;
  }

  d.J_q_bg = J.block<3, 3>(0, 3);
  d.J_v_ba = J.block<3, 3>(3, 0);
  d.J_v_bg = J.block<3, 3>(3, 3);
  d.J_p_ba = J.block<3, 3>(6, 0);
  d.J_p_bg = J.block<3, 3>(6, 3);
  return d;
}

NavState predict_state(const NavState& prev, const PreintegratedImu& delta,
                       const Vec3& gravity) {
  const double dt = delta.dt_total;
  const Vec3 dp = delta.corrected_p(prev.ba, prev.bg);
  const Vec3 dv = delta.corrected_v(prev.ba, prev.bg);
  const Quat dq = delta.corrected_q(prev.bg);
  NavState out;
  out.p = prev.p + prev.v * dt + 0.5 * gravity * dt * dt + prev.q * dp;
  out.v = prev.v + gravity * dt + prev.q * dv;
  out.q = (prev.q * dq).normalized();
  out.ba = prev.ba;
  out.bg = prev.bg;
  return out;
}

Scan undistort_scan(const Scan& scan, const PreintegratedImu& delta) {
  const double t0 = delta.t_start;
  const double span = delta.t_end - delta.t_start;
  const Quat q_end_inv = delta.delta_q.conjugate();
  Scan out = scan;
  for (size_t i = 0; i < out.points.size(); ++i) {
    TimedPoint& pt = out.points[i];
    if (pt.t < t0 - 1e-3 || pt.t > delta.t_end + 1e-3) {
      char buf[160];
      std::snprintf(buf, sizeof(buf),
                    "point %zu at t=%.6f outside undistortion interval [%.6f, %.6f]",
                    i, pt.t, t0, delta.t_end);
      throw std::runtime_error(buf);
    }
    const double s = (pt.t - t0) / span;
    const Quat q_s = Quat::Identity().slerp(s, delta.delta_q);
    const Vec3 p_s = s * delta.delta_p;
    // body@s -> start frame -> end frame
    pt.p = q_end_inv * (q_s * pt.p + p_s - delta.delta_p);
  }
  return out;
}

}  // namespace mml
