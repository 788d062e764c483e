#pragma once

#include <utility>
#include <vector>

#include "mml/geom.hpp"

namespace mml {

// Twice-differentiable rigid trajectory through control poses.
// Translation: clamped C2 cubic spline (zero endpoint velocity, so
// sequences start and end at rest); acceleration is continuous, which the
// IMU synthesis relies on.
// Rotation: per-segment cubic Hermite in the so(3) tangent, with knot
// angular velocities shared between segments so the body rate is continuous.
class Trajectory {
 public:
  Trajectory(std::vector<double> times, std::vector<Pose> poses);

  double t_begin() const { return times_.front(); }
  double t_end() const { return times_.back(); }

  Pose pose(double t) const;
  Vec3 velocity(double t) const;        // world frame, m/s
  Vec3 acceleration(double t) const;    // world frame, m/s^2
  Vec3 angular_velocity(double t) const;  // body frame, rad/s

 private:
  struct Eval {
    int seg;
    double u;   // normalized position in segment
    double h;   // segment duration
  };
  Eval locate(double t) const;
  void theta_poly(int seg, double u, Vec3* th, Vec3* dth) const;

  std::vector<double> times_;
  std::vector<Pose> poses_;
  std::vector<Vec3> trans_accel_;  // spline second derivatives at knots
  std::vector<Vec3> omega_;        // body angular velocity at knots
  std::vector<Vec3> theta_seg_;    // log(q_i^-1 q_{i+1}) per segment
};

}  // namespace mml
