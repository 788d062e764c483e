#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "mml/trajectory.hpp"
#include "mml/types.hpp"

namespace mml {

// Finite parallelogram patch: corner + a*e1 + b*e2, a,b in [0,1].
struct PlanePatch {
  Vec3 corner;
  Vec3 e1;
  Vec3 e2;
  Vec3 normal() const { return e1.cross(e2).normalized(); }
};

struct World {
  std::vector<PlanePatch> patches;

  void add_patch(const Vec3& corner, const Vec3& e1, const Vec3& e2);
  // Axis-aligned box as 6 patches (for clutter / edge features).
  void add_box(const Vec3& min_corner, const Vec3& size);
  // Closest hit distance along the ray, if any, within range_max.
  // Grazing ties within 1e-9 resolve to the lowest patch index.
  std::optional<double> ray_cast(const Vec3& origin, const Vec3& dir,
                                 double range_max) const;
};

struct SensorModel {
  SensorKind kind = SensorKind::Spinning;
  double h_fov_deg = 360.0;
  double v_fov_deg = 30.0;
  int channels_or_lines = 16;
  double rate_hz = 10.0;
  int points_per_sweep = 16 * 600;
  double range_max = 100.0;
  double range_noise_sigma = 0.0;
  uint64_t pattern_seed = 0;

  static SensorModel spinning_preset();     // VLP-16-like: 360 x 30, 16 ch
  static SensorModel solid_state_preset();  // Horizon-like: 81.7 x 25.1
};

struct ImuNoise {
  double sigma_g = 0.0;  // rad/s per sample
  double sigma_a = 0.0;  // m/s^2 per sample
};

// One sweep starting at sweep_start; each point is expressed in the sensor
// frame at its own emission time, so motion distortion is physically present.
// mount is the sensor-to-body extrinsic; traj is the body trajectory.
Scan simulate_scan(const World& world, const SensorModel& model,
                   const Trajectory& traj, double sweep_start,
                   const Pose& mount = Pose::identity());

std::vector<ImuSample> simulate_imu(const Trajectory& traj, double rate_hz,
                                    const Vec3& bias_a, const Vec3& bias_g,
                                    const ImuNoise& noise, const Vec3& gravity,
                                    uint64_t seed = 0);

}  // namespace mml
