#include "mml/simulator.hpp"

#include <cmath>
#include <cstring>
#include <random>
#include <stdexcept>

namespace mml {

void World::add_patch(const Vec3& corner, const Vec3& e1, const Vec3& e2) {
  if (e1.cross(e2).norm() <= 1e-9) {
    throw std::invalid_argument("degenerate patch: edge vectors are parallel");
  }
  patches.push_back({corner, e1, e2});
}

void World::add_box(const Vec3& c, const Vec3& s) {
  const Vec3 ex(s.x(), 0, 0), ey(0, s.y(), 0), ez(0, 0, s.z());
  add_patch(c, ex, ey);                    // bottom
  add_patch(c + ez, ex, ey);               // top
  add_patch(c, ex, ez);                    // front
  add_patch(c + ey, ex, ez);               // back
  add_patch(c, ey, ez);                    // left
  add_patch(c + ex, ey, ez);               // right
}

std::optional<double> World::ray_cast(const Vec3& origin, const Vec3& dir,
                                      double range_max) const {
  double best = range_max;
  bool hit = false;
  Mat3 A;
  for (const auto& patch : patches) {
    // origin + s*dir = corner + a*e1 + b*e2
    A.col(0) = dir;
    A.col(1) = -patch.e1;
    A.col(2) = -patch.e2;
    const double det = A.determinant();
    if (std::abs(det) < 1e-12) continue;  // ray parallel to patch
    const Vec3 sol = A.inverse() * (patch.corner - origin);
    const double s = sol[0], a = sol[1], b = sol[2];
    if (s < 1e-6 || a < 0 || a > 1 || b < 0 || b > 1) continue;
    if (s > range_max) continue;
    // Strict improvement keeps equal-depth ties on the lowest patch index.
    if (!hit || s < best - 1e-9) {
      best = s;
      hit = true;
    }
  }
  if (!hit) return std::nullopt;
  return best;
}

SensorModel SensorModel::spinning_preset() {
  SensorModel m;
  m.kind = SensorKind::Spinning;
  m.h_fov_deg = 360.0;
  m.v_fov_deg = 30.0;
  m.channels_or_lines = 16;
  m.rate_hz = 10.0;
  m.points_per_sweep = 16 * 600;
  m.range_max = 100.0;
  return m;
}

SensorModel SensorModel::solid_state_preset() {
  SensorModel m;
  m.kind = SensorKind::SolidState;
  m.h_fov_deg = 81.7;
  m.v_fov_deg = 25.1;
  m.channels_or_lines = 6;
  m.rate_hz = 10.0;
  m.points_per_sweep = 6 * 1200;
  m.range_max = 100.0;
  return m;
}

namespace {

constexpr double kDeg = M_PI / 180.0;

inline Vec3 spherical_dir(double az, double el) {
  return {std::cos(el) * std::cos(az), std::cos(el) * std::sin(az), std::sin(el)};
}

inline uint64_t mix_seed(uint64_t seed, double sweep_start) {
  uint64_t bits;
  static_assert(sizeof(bits) == sizeof(sweep_start));
  std::memcpy(&bits, &sweep_start, sizeof(bits));
  bits *= 0x9e3779b97f4a7c15ull;
  return seed ^ (bits ^ (bits >> 31));
}

}  // namespace

Scan simulate_scan(const World& world, const SensorModel& model,
                   const Trajectory& traj, double sweep_start, const Pose& mount) {
  const double period = 1.0 / model.rate_hz;
  if (sweep_start < traj.t_begin() - 1e-9 ||
      sweep_start + period > traj.t_end() + 1e-9) {
    throw std::out_of_range("sweep does not fit inside the trajectory span");
  }
  Scan scan;
  scan.t_start = sweep_start;
  scan.t_end = sweep_start + period;

  std::mt19937_64 rng(mix_seed(model.pattern_seed, sweep_start));
  std::normal_distribution<double> noise(0.0, 1.0);

  const int lanes = model.channels_or_lines;
  const int steps = model.points_per_sweep / lanes;
  scan.points.reserve(static_cast<size_t>(model.points_per_sweep));

  // Rosette frequencies for the solid-state pattern; the ratio is
  // incommensurate so consecutive sweeps sample different directions.
  const double f1 = 23.0;
  const double f2 = 23.0 * 0.5 * (1.0 + std::sqrt(5.0));
  const double line_pitch = 1.2 * kDeg;
  const double el_span = (lanes - 1) * line_pitch;

  for (int j = 0; j < steps; ++j) {
    const double frac = (j + 0.5) / steps;
    const double t = sweep_start + frac * period;
    const Pose T_wb = traj.pose(t);
    const Pose T_ws = T_wb * mount;
    for (int c = 0; c < lanes; ++c) {
      double az, el;
      if (model.kind == SensorKind::Spinning) {
        az = frac * model.h_fov_deg * kDeg;
        el = (-0.5 * model.v_fov_deg +
              c * model.v_fov_deg / std::max(1, lanes - 1)) *
             kDeg;
      } else {
        // Phase continues across sweeps via absolute time.
        const double u = t * model.rate_hz;
        az = 0.5 * model.h_fov_deg * kDeg * std::sin(2 * M_PI * f1 * u);
        const double amp = 0.5 * (model.v_fov_deg * kDeg - el_span);
        el = amp * std::sin(2 * M_PI * f2 * u) +
             (c - 0.5 * (lanes - 1)) * line_pitch;
      }
      const Vec3 dir_s = spherical_dir(az, el);
      const Vec3 dir_w = T_ws.q * dir_s;
      auto range = world.ray_cast(T_ws.t, dir_w, model.range_max);
      // Draw noise regardless of hit so the stream stays aligned across
      // worlds with identical seeds.
      const double eps = noise(rng);
      if (!range) continue;
      double r = *range;
      if (model.range_noise_sigma > 0) r += model.range_noise_sigma * eps;
      TimedPoint pt;
      pt.t = t;
      pt.p = r * dir_s;
      pt.ring = static_cast<uint8_t>(c);
      scan.points.push_back(pt);
    }
  }
  return scan;
}

std::vector<ImuSample> simulate_imu(const Trajectory& traj, double rate_hz,
                                    const Vec3& bias_a, const Vec3& bias_g,
                                    const ImuNoise& noise, const Vec3& gravity,
                                    uint64_t seed) {
  if (rate_hz < 100.0) {
    throw std::invalid_argument("IMU rate must be >= 100 Hz");
  }
  std::mt19937_64 rng(seed ^ 0xabcdef12345ull);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<ImuSample> out;
  const double dt = 1.0 / rate_hz;
  for (double t = traj.t_begin(); t <= traj.t_end() + 1e-12; t += dt) {
    const double tc = std::min(t, traj.t_end());
    const Pose T = traj.pose(tc);
    ImuSample s;
    s.t = tc;
    s.gyro = traj.angular_velocity(tc) + bias_g;
    s.accel = T.q.conjugate() * (traj.acceleration(tc) - gravity) + bias_a;
    if (noise.sigma_g > 0) {
      s.gyro += noise.sigma_g * Vec3(gauss(rng), gauss(rng), gauss(rng));
    }
    if (noise.sigma_a > 0) {
      s.accel += noise.sigma_a * Vec3(gauss(rng), gauss(rng), gauss(rng));
    }
    out.push_back(s);
  }
  return out;
}

}  // namespace mml
