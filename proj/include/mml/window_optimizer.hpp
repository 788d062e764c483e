#pragma once

#include <optional>

#include "mml/residuals.hpp"

namespace mml {

struct SwoConfig {
  int tau = 4;                 // window size, keyframes
  double key_angle_deg = 30;   // keyframe gate on IMU drift angle
  double key_dt = 2.0;         // keyframe gate on elapsed time, s
  int max_outer_iters = 4;     // correspondence re-association rounds
  int max_inner_iters = 10;    // LM iterations per association
  double param_tol = 1e-6;
  double huber_delta = 0.1;    // m, on LiDAR residuals; <=0 disables
  double lidar_sigma = 0.05;   // m, whitening of LiDAR residuals
  CorrespondenceParams corr;
  ImuNoiseParams imu_noise;    // bias random-walk blocks of the IMU weight
};

// Quadratic prior on the retained states from Schur-complement
// marginalization: cost = 1/2 d'Hd + g'd, d = state [-] lin (per-state
// tangent order theta, v, p, ba, bg).
struct MarginalPrior {
  std::vector<NavState> lin;
  Eigen::MatrixXd H;  // 15n x 15n, symmetric PSD
  Eigen::VectorXd g;

  bool empty() const { return lin.empty(); }
};

struct SwoReport {
  int outer_iters = 0;
  int lm_iters = 0;
  double final_cost = 0;
  size_t edge_residuals = 0;
  size_t plane_residuals = 0;
  size_t skipped = 0;
  bool imu_only_fallback = false;
};

bool select_keyframe(double imu_drift_angle_rad, double dt_since_last,
                     const SwoConfig& cfg);

// Levenberg-Marquardt over all window states: marginal prior + LiDAR
// (Huber) + preintegration terms. The prior (if present) covers the first
// prior.lin.size() window states.
std::vector<NavState> optimize_window(const std::vector<Keyframe>& window,
                                      const LocalFeatureMap& map,
                                      const MarginalPrior& prior,
                                      const Vec3& gravity, const SwoConfig& cfg,
                                      SwoReport* report = nullptr);

// Schur complement of the oldest state out of the Gauss-Newton system built
// at `states`, leaving a prior on the remaining window states.
MarginalPrior marginalize_oldest(const std::vector<Keyframe>& window,
                                 const std::vector<NavState>& states,
                                 const LocalFeatureMap& map,
                                 const MarginalPrior& prior, const Vec3& gravity,
                                 const SwoConfig& cfg);

}  // namespace mml
