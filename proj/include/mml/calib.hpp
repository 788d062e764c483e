#pragma once

#include <deque>
#include <stdexcept>
#include <vector>

#include "mml/types.hpp"

namespace mml {

// Concatenation of the first n stationary scans, sensor frame.
std::vector<Vec3> accumulate_frames(const std::vector<Scan>& scans, size_t n);

struct GicpParams {
  int k_neighbors = 20;
  double cov_epsilon = 1e-3;     // smallest regularized eigenvalue
  double max_corr_dist = 1.0;    // m
  int max_iter = 50;
  double tol = 1e-6;             // parameter update norm
  size_t min_points = 50;
};

struct GicpResult {
  Pose transform;                // maps source -> target
  double fitness = 0;            // mean squared correspondence distance, m^2
  int iterations = 0;
};

// Thrown when no correspondences survive the distance gate; carries the
// last iterate so callers can inspect how far alignment got.
struct GicpNoOverlap : std::runtime_error {
  Pose last_iterate;
  explicit GicpNoOverlap(const Pose& T)
      : std::runtime_error("gicp: no correspondences within max_corr_dist"),
        last_iterate(T) {}
};

// Plane-to-plane GICP: per-point covariances from k nearest neighbors with
// eigenvalues regularized to (1, 1, epsilon), Gauss-Newton on SE(3).
GicpResult gicp_align(const std::vector<Vec3>& source,
                      const std::vector<Vec3>& target, const Pose& init,
                      const GicpParams& params = {});

// Composed extrinsic spinning -> IMU.
Pose chain_extrinsics(const Pose& T_v_to_h, const Pose& T_h_to_i);

// For spinning scans without per-point times: t by unwrapped azimuth
// fraction of the sweep.
void synthesize_spin_timestamps(Scan& scan);

// Buffer of solid-state points ordered by timestamp; align() cuts out the
// slice overlapping a spinning sweep so both streams share a time domain.
class AlignmentQueue {
 public:
  void push(const Scan& scan);

  // Points with t < sweep start are dropped, points inside [t_start, t_end]
  // are emitted, later points stay queued.
  Scan align(const Scan& v_scan);

  size_t size() const { return buffer_.size(); }

 private:
  std::deque<TimedPoint> buffer_;
};

}  // namespace mml
