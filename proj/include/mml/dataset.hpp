#pragma once

#include <optional>
#include <string>
#include <vector>

#include "mml/simulator.hpp"
#include "mml/types.hpp"

namespace mml {

struct TimedPose {
  double t = 0;
  Pose pose;
};

struct ScanMeta {
  std::string file;
  double t_start = 0;
  double t_end = 0;
};

struct SensorStream {
  SensorModel model;
  std::vector<ScanMeta> scans;
};

// On-disk layout: manifest.json + binary scan files (per point: float64 t,
// float32 x,y,z, uint8 ring, little-endian, 21 bytes) + imu.csv +
// optional groundtruth.csv.
struct Dataset {
  std::string dir;
  std::optional<SensorStream> spinning;
  std::optional<SensorStream> solid_state;
  std::vector<ImuSample> imu;
  std::vector<TimedPose> ground_truth;
  std::optional<Pose> T_h_to_i;   // factory extrinsic when known
  std::optional<Pose> T_v_to_h;   // simulator ground-truth extrinsic
  Vec3 gravity{0, 0, -9.81};

  Scan load_scan(const SensorStream& stream, size_t index) const;
};

Dataset read_dataset(const std::string& dir);

void write_dataset(const std::string& dir, const SensorModel* spin_model,
                   const std::vector<Scan>& spin_scans,
                   const SensorModel* ss_model,
                   const std::vector<Scan>& ss_scans,
                   const std::vector<ImuSample>& imu,
                   const std::vector<TimedPose>& ground_truth,
                   const std::optional<Pose>& T_h_to_i,
                   const std::optional<Pose>& T_v_to_h, const Vec3& gravity);

// Trajectory CSV (t,px,py,pz,qw,qx,qy,qz), shared by ground truth and
// estimated trajectories.
std::vector<TimedPose> read_trajectory_csv(const std::string& path);
void write_trajectory_csv(const std::string& path,
                          const std::vector<TimedPose>& traj);

}  // namespace mml
