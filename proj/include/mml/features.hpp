#pragma once

#include <vector>

#include "mml/types.hpp"

namespace mml {

struct RingSet {
  std::vector<std::vector<TimedPoint>> rings;
  size_t out_of_span = 0;  // points clamped to a boundary channel
};

enum class PointLabel : uint8_t { None, Plane, Corner, Break };

struct FeatureParams {
  double d_th = 0.3;             // continuity depth threshold, m
  int k_neigh = 5;               // window half-size along the ring
  double near_range = 2.0;       // bad-frame near filter, m
  int tau_e = 100;               // bad-frame edge-count threshold
  double plane_ratio = 0.1;      // max lambda2/lambda1 for a smooth segment
  double plane_residual = 0.02;  // max rms distance to the local line, m
  double corner_angle_deg = 30;  // min angle between adjacent line fits
};

// Bucket points into per-ring lists sorted by timestamp. With ring IDs
// (either sensor) groups by ID; spinning scans without IDs fall back to
// 2-degree elevation buckets over 16 channels.
RingSet organize_scan(const Scan& scan, SensorKind kind, bool use_ring_ids = true);

// True = continuous: both neighbor depth gaps below d_th (endpoints use
// their single neighbor).
std::vector<bool> mark_continuity(const std::vector<TimedPoint>& ring, double d_th);

// Per-point labels for one ring. Precedence break > corner > plane; only
// continuous points are classified.
std::vector<PointLabel> classify_points(const std::vector<TimedPoint>& ring,
                                        const std::vector<bool>& continuous,
                                        const FeatureParams& params);

// Full per-scan extraction; output sorted by (ring, timestamp).
FeatureCloud extract_features(const Scan& scan, SensorKind kind,
                              const FeatureParams& params = {},
                              bool use_ring_ids = true);

// Removes points closer than near_range (in place), then reports whether
// the frame is degenerate: remaining edge count < tau_e.
bool detect_bad_frame(FeatureCloud& f, const FeatureParams& params = {});

// Fused clouds in the IMU frame; a bad solid-state frame contributes nothing.
FeatureCloud merge_features(const FeatureCloud& f_v, const FeatureCloud& f_h,
                            const ExtrinsicSet& extr, bool bad_h);

// One centroid per occupied voxel, edges and planes independently.
FeatureCloud voxel_downsample(const FeatureCloud& cloud, double leaf);
std::vector<Vec3> voxel_downsample(const std::vector<Vec3>& pts, double leaf);

}  // namespace mml
