#include "mml/trajectory.hpp"

#include <algorithm>
#include <stdexcept>

namespace mml {

namespace {
// Hermite basis and derivatives in the normalized coordinate u.
inline void hermite(double u, double* b) {
  const double u2 = u * u, u3 = u2 * u;
  b[0] = 2 * u3 - 3 * u2 + 1;  // h00
  b[1] = u3 - 2 * u2 + u;      // h10
  b[2] = -2 * u3 + 3 * u2;     // h01
  b[3] = u3 - u2;              // h11
}
inline void hermite_d(double u, double* b) {
  const double u2 = u * u;
  b[0] = 6 * u2 - 6 * u;
  b[1] = 3 * u2 - 4 * u + 1;
  b[2] = -6 * u2 + 6 * u;
  b[3] = 3 * u2 - 2 * u;
}
}  // namespace

Trajectory::Trajectory(std::vector<double> times, std::vector<Pose> poses)
    : times_(std::move(times)), poses_(std::move(poses)) {
  if (times_.size() != poses_.size() || times_.size() < 2) {
    throw std::invalid_argument("trajectory needs >= 2 control poses");
  }
  for (size_t i = 1; i < times_.size(); ++i) {
    if (times_[i] <= times_[i - 1]) {
      throw std::invalid_argument("trajectory control times must be strictly increasing");
    }
  }
  const size_t n = times_.size();
  omega_.assign(n, Vec3::Zero());
  for (size_t i = 1; i + 1 < n; ++i) {
    const double span = times_[i + 1] - times_[i - 1];
    omega_[i] = log_so3(poses_[i - 1].q.conjugate() * poses_[i + 1].q) / span;
  }

  // Clamped cubic spline: tridiagonal solve for knot second derivatives
  // with zero boundary velocity.
  trans_accel_.assign(n, Vec3::Zero());
  {
    std::vector<double> diag(n), upper(n), lower(n);
    std::vector<Vec3> rhs(n);
    auto h = [&](size_t i) { return times_[i + 1] - times_[i]; };
    auto slope = [&](size_t i) { return (poses_[i + 1].t - poses_[i].t) / h(i); };
    diag[0] = 2 * h(0);
    upper[0] = h(0);
    rhs[0] = 6.0 * slope(0);
    for (size_t i = 1; i + 1 < n; ++i) {
      lower[i] = h(i - 1);
      diag[i] = 2 * (h(i - 1) + h(i));
      upper[i] = h(i);
      rhs[i] = 6.0 * (slope(i) - slope(i - 1));
    }
    lower[n - 1] = h(n - 2);
    diag[n - 1] = 2 * h(n - 2);
    rhs[n - 1] = -6.0 * slope(n - 2);
    // Thomas algorithm
    for (size_t i = 1; i < n; ++i) {
      const double m = lower[i] / diag[i - 1];
      diag[i] -= m * upper[i - 1];
      rhs[i] -= m * rhs[i - 1];
    }
    trans_accel_[n - 1] = rhs[n - 1] / diag[n - 1];
    for (size_t i = n - 1; i-- > 0;) {
      trans_accel_[i] = (rhs[i] - upper[i] * trans_accel_[i + 1]) / diag[i];
    }
  }
  theta_seg_.resize(n - 1);
  for (size_t i = 0; i + 1 < n; ++i) {
    theta_seg_[i] = log_so3(poses_[i].q.conjugate() * poses_[i + 1].q);
  }
}

Trajectory::Eval Trajectory::locate(double t) const {
  if (t < times_.front() - 1e-9 || t > times_.back() + 1e-9) {
    throw std::out_of_range("trajectory query outside time span");
  }
  t = std::clamp(t, times_.front(), times_.back());
  auto it = std::upper_bound(times_.begin(), times_.end(), t);
  int seg = static_cast<int>(std::distance(times_.begin(), it)) - 1;
  seg = std::clamp(seg, 0, static_cast<int>(times_.size()) - 2);
  const double h = times_[seg + 1] - times_[seg];
  return {seg, (t - times_[seg]) / h, h};
}

void Trajectory::theta_poly(int seg, double u, Vec3* th, Vec3* dth) const {
  const double h = times_[seg + 1] - times_[seg];
  const Vec3 d0 = h * omega_[seg];
  const Vec3 d1 = h * (right_jacobian_inv(theta_seg_[seg]) * omega_[seg + 1]);
  double b[4];
  if (th) {
    hermite(u, b);
    *th = b[1] * d0 + b[2] * theta_seg_[seg] + b[3] * d1;
  }
  if (dth) {
    hermite_d(u, b);
    *dth = b[1] * d0 + b[2] * theta_seg_[seg] + b[3] * d1;
  }
}

Pose Trajectory::pose(double t) const {
  const Eval e = locate(t);
  const double A = 1.0 - e.u, B = e.u;
  const Vec3 p = A * poses_[e.seg].t + B * poses_[e.seg + 1].t +
                 e.h * e.h / 6.0 *
                     ((A * A * A - A) * trans_accel_[e.seg] +
                      (B * B * B - B) * trans_accel_[e.seg + 1]);
  Vec3 th;
  theta_poly(e.seg, e.u, &th, nullptr);
  return {(poses_[e.seg].q * exp_so3(th)).normalized(), p};
}

Vec3 Trajectory::velocity(double t) const {
  const Eval e = locate(t);
  const double A = 1.0 - e.u, B = e.u;
  return (poses_[e.seg + 1].t - poses_[e.seg].t) / e.h +
         e.h / 6.0 *
             (-(3 * A * A - 1) * trans_accel_[e.seg] +
              (3 * B * B - 1) * trans_accel_[e.seg + 1]);
}

Vec3 Trajectory::acceleration(double t) const {
  const Eval e = locate(t);
  return (1.0 - e.u) * trans_accel_[e.seg] + e.u * trans_accel_[e.seg + 1];
}

Vec3 Trajectory::angular_velocity(double t) const {
  const Eval e = locate(t);
  Vec3 th, dth;
  theta_poly(e.seg, e.u, &th, &dth);
  return right_jacobian(th) * dth / e.h;
}

}  // namespace mml
