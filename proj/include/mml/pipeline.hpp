#pragma once

#include <string>
#include <vector>

#include "mml/calib.hpp"
#include "mml/dataset.hpp"
#include "mml/features.hpp"
#include "mml/pose_graph.hpp"
#include "mml/window_optimizer.hpp"

namespace mml {

enum class RunMode : uint8_t { HVI, VI, HI };

RunMode parse_mode(const std::string& s);  // "hvi" | "vi" | "hi"

struct PipelineConfig {
  RunMode mode = RunMode::HVI;
  bool serial = false;        // force single-thread execution
  bool loop_closure = true;
  bool build_map = false;     // accumulate a world-frame feature map
  int calib_frames = 0;       // 0 = use dataset extrinsics, >0 = GICP
  double voxel_leaf = 0.2;    // m, per-frame feature downsampling
  double edge_max_range = 8.0;  // m, edge features beyond this are dropped
  double map_leaf = 0.4;      // m, loop-closure cloud downsampling
  double divergence_norm = 1e6;
  FeatureParams features;
  SwoConfig swo;
  LoopParams loop;
  GicpParams gicp;
  Vec3 gravity{0, 0, -9.81};
};

// Flat key=value file ('#' comments, blank lines ignored). Unknown keys and
// unparseable values raise std::runtime_error naming the key.
PipelineConfig load_config(const std::string& path);
void apply_config_entry(PipelineConfig& cfg, const std::string& key,
                        const std::string& value);

struct FrameTiming {
  double pre_ms = 0;   // alignment + preintegration + undistortion
  double feat_ms = 0;  // extraction + merge + downsampling
  double opt_ms = 0;   // window optimization (0 on non-keyframes)
};

struct FrameCounts {
  size_t raw_v = 0, raw_h = 0;
  size_t edges = 0, planes = 0;  // merged, post-downsampling
};

struct LabeledPoint {
  Vec3 p;
  uint8_t label = 0;  // 0 = plane, 1 = edge
};

struct RunReport {
  std::vector<TimedPose> trajectory;  // one pose per processed frame
  double end_to_end_error_m = -1;     // -1 when not evaluable
  double ate_rmse_m = -1;
  std::vector<FrameTiming> timing;
  std::vector<FrameCounts> counts;
  size_t bad_frames = 0;
  size_t loop_closures = 0;
  size_t keyframes = 0;
  bool diverged = false;
  double last_good_time = 0;  // end of the last healthy frame when diverged
  std::vector<LabeledPoint> map;  // world frame, when build_map is set
};

RunReport run_pipeline(const Dataset& ds, const PipelineConfig& cfg);

struct EvalMetrics {
  double end_to_end_error_m = 0;
  double ate_rmse_m = 0;
  size_t pairs = 0;  // associated pose pairs
};

// End-to-end error: closure displacement of the estimate minus that of the
// ground truth. ATE: RMSE of positions after nearest-timestamp association
// (10 ms gate) and rigid alignment at the first associated pose.
EvalMetrics evaluate(const std::vector<TimedPose>& traj,
                     const std::vector<TimedPose>& ground_truth);

// Binary little-endian point cloud: x,y,z float32 + label uint8 per vertex.
void export_map(const std::vector<LabeledPoint>& map, const std::string& path);
std::vector<LabeledPoint> read_map(const std::string& path);

}  // namespace mml
