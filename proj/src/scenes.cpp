#include "mml/scenes.hpp"

#include <cmath>

#include "mml/dataset.hpp"

namespace mml {

namespace {

// Control poses along a piecewise-linear 2-D path, yaw following the path
// tangent (accumulated, never wrapped), times proportional to arclength.
Trajectory path_trajectory(const std::vector<Vec3>& waypoints,
                           const std::vector<double>& yaw, double duration_s) {
  std::vector<double> arc(waypoints.size(), 0.0);
  for (size_t i = 1; i < waypoints.size(); ++i) {
    arc[i] = arc[i - 1] + (waypoints[i] - waypoints[i - 1]).norm();
  }
  std::vector<double> times;
  std::vector<Pose> poses;
  for (size_t i = 0; i < waypoints.size(); ++i) {
    times.push_back(duration_s * arc[i] / arc.back());
    poses.emplace_back(exp_so3(Vec3(0, 0, yaw[i])), waypoints[i]);
  }
  return Trajectory(std::move(times), std::move(poses));
}

}  // namespace

World hall_world() {
  World w;
  const double z0 = -1.5, h = 4.0;
  // Outer shell: 30 x 22 footprint, path rectangle 24 x 16 centered inside.
  w.add_patch({-3, -3, z0}, {30, 0, 0}, {0, 0, h});   // south wall
  w.add_patch({-3, 19, z0}, {30, 0, 0}, {0, 0, h});   // north wall
  w.add_patch({-3, -3, z0}, {0, 22, 0}, {0, 0, h});   // west wall
  w.add_patch({27, -3, z0}, {0, 22, 0}, {0, 0, h});   // east wall
  w.add_patch({-3, -3, z0}, {30, 0, 0}, {0, 22, 0});  // floor
  w.add_patch({-3, -3, z0 + h}, {30, 0, 0}, {0, 22, 0});  // ceiling
  // Inner block leaves a 6 m wide corridor loop.
  w.add_box({3, 3, z0}, {18, 10, h});
  // Clutter boxes along each leg for corner/edge structure.
  w.add_box({7, -2.4, z0}, {1.0, 1.0, 1.4});
  w.add_box({16, -2.2, z0}, {0.8, 0.8, 2.0});
  w.add_box({25.6, 4, z0}, {1.0, 1.2, 1.6});
  w.add_box({25.8, 11, z0}, {0.8, 0.9, 1.2});
  w.add_box({15, 17.5, z0}, {1.2, 0.9, 1.8});
  w.add_box({6, 17.8, z0}, {0.9, 0.9, 1.3});
  w.add_box({-2.6, 10, z0}, {1.0, 1.0, 1.5});
  w.add_box({-2.4, 5, z0}, {0.8, 1.1, 2.0});
  return w;
}

Trajectory hall_trajectory(double duration_s) {
  // 24 x 16 rectangle, waypoints every 2 m, one CCW lap back to the start.
  std::vector<Vec3> pts;
  std::vector<double> yaw;
  auto leg = [&](const Vec3& from, const Vec3& to, double heading) {
    const double len = (to - from).norm();
    const int n = static_cast<int>(std::round(len / 2.0));
    for (int i = 0; i < n; ++i) {
      pts.push_back(from + (to - from) * (double(i) / n));
      yaw.push_back(heading);
    }
  };
  leg({0, 0, 0}, {24, 0, 0}, 0);
  leg({24, 0, 0}, {24, 16, 0}, M_PI / 2);
  leg({24, 16, 0}, {0, 16, 0}, M_PI);
  leg({0, 16, 0}, {0, 0, 0}, 1.5 * M_PI);
  pts.push_back({0, 0, 0});
  yaw.push_back(2 * M_PI);
  return path_trajectory(pts, yaw, duration_s);
}

World corridor_world() {
  World w;
  const double z0 = -1.5, h = 3.0;
  w.add_patch({-2, -1.2, z0}, {22, 0, 0}, {0, 0, h});  // near right wall
  w.add_patch({-2, 1.2, z0}, {22, 0, 0}, {0, 0, h});   // near left wall
  w.add_patch({-2, -1.2, z0}, {0, 2.4, 0}, {0, 0, h});  // back end
  w.add_patch({20, -1.2, z0}, {0, 2.4, 0}, {0, 0, h});  // far end
  w.add_patch({-2, -1.2, z0}, {22, 0, 0}, {0, 2.4, 0});      // floor
  w.add_patch({-2, -1.2, z0 + h}, {22, 0, 0}, {0, 2.4, 0});  // ceiling
  w.add_box({4, -1.1, z0}, {0.5, 0.4, 1.0});
  w.add_box({9, 0.7, z0}, {0.5, 0.4, 1.4});
  w.add_box({14, -1.1, z0}, {0.4, 0.4, 1.8});
  return w;
}

Trajectory corridor_trajectory(double duration_s) {
  std::vector<Vec3> pts;
  std::vector<double> yaw;
  // Runs up to 1.5 m from the far end wall so the forward-looking
  // solid-state sensor finishes staring at a single close wall.
  for (int i = 0; i <= 18; ++i) {
    pts.emplace_back(std::min(i * 1.0, 18.5), 0, 0);
    yaw.push_back(0);
  }
  return path_trajectory(pts, yaw, duration_s);
}

World room_world() {
  World w;
  const double z0 = -1.5, h = 3.0;
  w.add_patch({-4, -3, z0}, {8, 0, 0}, {0, 0, h});
  w.add_patch({-4, 3, z0}, {8, 0, 0}, {0, 0, h});
  w.add_patch({-4, -3, z0}, {0, 6, 0}, {0, 0, h});
  w.add_patch({4, -3, z0}, {0, 6, 0}, {0, 0, h});
  w.add_patch({-4, -3, z0}, {8, 0, 0}, {0, 6, 0});
  w.add_patch({-4, -3, z0 + h}, {8, 0, 0}, {0, 6, 0});
  w.add_box({-3, -2.5, z0}, {0.8, 0.8, 1.2});
  w.add_box({2.2, 1.6, z0}, {1.0, 0.9, 1.6});
  w.add_box({-1.0, 2.1, z0}, {0.7, 0.6, 2.0});
  return w;
}

Trajectory room_trajectory(double duration_s) {
  std::vector<double> times;
  std::vector<Pose> poses;
  const int n = 6;
  for (int i = 0; i <= n; ++i) {
    const double s = double(i) / n;
    times.push_back(s * duration_s);
    poses.emplace_back(exp_so3(Vec3(0, 0, 0.4 * std::sin(2 * M_PI * s))),
                       Vec3(0.6 * std::sin(2 * M_PI * s),
                            0.4 * std::sin(4 * M_PI * s), 0));
  }
  return Trajectory(std::move(times), std::move(poses));
}

void build_dataset(const World& world, const Trajectory& traj,
                   const std::string& dir, const DatasetSpec& spec) {
  SensorModel spin = SensorModel::spinning_preset();
  SensorModel ss = SensorModel::solid_state_preset();
  spin.rate_hz = ss.rate_hz = spec.lidar_rate_hz;
  spin.range_noise_sigma = ss.range_noise_sigma = spec.range_sigma;
  spin.pattern_seed = spec.seed;
  ss.pattern_seed = spec.seed + 1;

  const double period = 1.0 / spec.lidar_rate_hz;
  std::vector<Scan> spin_scans, ss_scans;
  if (spec.spinning) {
    for (double t = traj.t_begin(); t + period <= traj.t_end() + 1e-9;
         t += period) {
      spin_scans.push_back(simulate_scan(world, spin, traj, t));
    }
  }
  if (spec.solid_state) {
    for (double t = traj.t_begin() + spec.solid_state_offset_s;
         t + period <= traj.t_end() + 1e-9; t += period) {
      ss_scans.push_back(simulate_scan(world, ss, traj, t, spec.T_h_to_i));
    }
  }

  ImuNoise noise{spec.imu_sigma_g, spec.imu_sigma_a};
  const auto imu = simulate_imu(traj, spec.imu_rate_hz, spec.bias_a,
                                spec.bias_g, noise, spec.gravity,
                                spec.seed + 7);

  std::vector<TimedPose> gt;
  for (double t = traj.t_begin(); t <= traj.t_end() + 1e-9; t += 0.01) {
    gt.push_back({t, traj.pose(t)});
  }

  write_dataset(dir, spec.spinning ? &spin : nullptr, spin_scans,
                spec.solid_state ? &ss : nullptr, ss_scans, imu, gt,
                spec.T_h_to_i, spec.T_h_to_i.inverse() /* T_v_to_h */,
                spec.gravity);
}

}  // namespace mml
