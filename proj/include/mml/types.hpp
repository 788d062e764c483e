#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mml/geom.hpp"

namespace mml {

struct TimedPoint {
  double t = 0;  // absolute emission time, s
  Vec3 p{0, 0, 0};
  uint8_t ring = 0;
};

// One LiDAR sweep; points in the sensor frame at their own emission time.
struct Scan {
  double t_start = 0;
  double t_end = 0;
  std::vector<TimedPoint> points;
};

struct ImuSample {
  double t = 0;
  Vec3 gyro{0, 0, 0};
  Vec3 accel{0, 0, 0};
};

enum class SensorKind : uint8_t { Spinning, SolidState };

enum class FrameId : uint8_t { Spinning, SolidState, Imu, World };

enum class EdgeKind : uint8_t { Line, Break };

struct FeaturePoint {
  double t = 0;
  Vec3 p{0, 0, 0};
  EdgeKind kind = EdgeKind::Line;  // meaningful for edge points only
};

struct FeatureCloud {
  FrameId frame = FrameId::Imu;
  std::vector<FeaturePoint> edges;
  std::vector<FeaturePoint> planes;

  size_t size() const { return edges.size() + planes.size(); }
};

struct ExtrinsicSet {
  Pose T_h_to_i;  // solid-state -> IMU, factory-given
  Pose T_v_to_h;  // spinning -> solid-state, estimated
  Pose T_v_to_i() const { return T_h_to_i * T_v_to_h; }
};

}  // namespace mml
