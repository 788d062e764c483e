#pragma once

#include <string>

#include "mml/simulator.hpp"

namespace mml {

// Canned environments for dataset synthesis. All sensors start at rest
// (the trajectory spline clamps endpoint velocities to zero).

// Rectangular hall circuit: 24 x 16 m path (80 m per lap) inside a walled
// corridor with boxes for edge features. The trajectory drives one full
// counter-clockwise lap and returns to the start pose.
World hall_world();
Trajectory hall_trajectory(double duration_s = 50.0);

// Straight corridor along +x with side walls only 1.2 m away, so a
// sideways-looking narrow-FoV sensor sees nothing beyond the near wall.
World corridor_world();
Trajectory corridor_trajectory(double duration_s = 15.0);

// Closed 8 x 6 x 3 m room with interior boxes; gentle in-place motion.
World room_world();
Trajectory room_trajectory(double duration_s = 6.0);

struct DatasetSpec {
  bool spinning = true;
  bool solid_state = true;
  double lidar_rate_hz = 10.0;
  double solid_state_offset_s = 0.017;  // sweep-start offset vs spinning
  double imu_rate_hz = 200.0;
  double range_sigma = 0.0;       // m
  double imu_sigma_g = 0.0;       // rad/s per sample
  double imu_sigma_a = 0.0;       // m/s^2 per sample
  Vec3 bias_g{0, 0, 0};
  Vec3 bias_a{0, 0, 0};
  uint64_t seed = 0;
  Pose T_h_to_i;  // solid-state mount (sensor -> body)
  Vec3 gravity{0, 0, -9.81};
};

// Simulate both sensor streams, IMU, and ground truth over the trajectory
// span and write them in the on-disk dataset layout.
void build_dataset(const World& world, const Trajectory& traj,
                   const std::string& dir, const DatasetSpec& spec);

}  // namespace mml
