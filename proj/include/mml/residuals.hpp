#pragma once

#include <optional>
#include <utility>

#include "mml/imu_preint.hpp"
#include "mml/local_map.hpp"

namespace mml {

// Scalar LiDAR residual with Jacobian wrt the pose tangent [dtheta, dp]
// (right perturbation on rotation, additive on translation).
struct LidarResidual {
  bool valid = false;
  double r = 0;
  Eigen::Matrix<double, 1, 6> J = Eigen::Matrix<double, 1, 6>::Zero();
};

struct CorrespondenceParams {
  double radius = 1.0;       // m
  int edge_neighbors = 2;
  int plane_neighbors = 5;
  double plane_fit_tol = 0.05;  // m, max neighbor off-plane distance
};

// Association step (world-frame query point) and fixed-geometry
// evaluation are split so the optimizer can re-associate per outer
// iteration while inner iterations keep correspondences fixed.
std::optional<std::pair<Vec3, Vec3>> associate_edge(
    const LocalFeatureMap& map, const Vec3& p_w,
    const CorrespondenceParams& params = {});
std::optional<Vec3> associate_plane(const LocalFeatureMap& map, const Vec3& p_w,
                                    const CorrespondenceParams& params = {});

LidarResidual edge_residual_line(const NavState& X, const Vec3& p_i,
                                 const Vec3& a, const Vec3& b);
LidarResidual plane_residual_normal(const NavState& X, const Vec3& p_i,
                                    const Vec3& n);

// Point-to-line distance against the two nearest map edge points.
LidarResidual edge_residual(const NavState& X, const Vec3& p_i,
                            const LocalFeatureMap& map,
                            const CorrespondenceParams& params = {});

// Hesse-normalized distance to the plane fitted (n.x + 1 = 0) through the
// nearest map plane points.
LidarResidual plane_residual(const NavState& X, const Vec3& p_i,
                             const LocalFeatureMap& map,
                             const CorrespondenceParams& params = {});

// 15-dim preintegration residual between consecutive keyframe states,
// order (dtheta, dv, dp, dba, dbg); Jacobians wrt both state tangents in
// the same ordering.
struct ImuResidual {
  Eigen::Matrix<double, 15, 1> r;
  Eigen::Matrix<double, 15, 15> J_prev;
  Eigen::Matrix<double, 15, 15> J_next;
};

ImuResidual imu_residual(const NavState& X_k, const NavState& X_k1,
                         const PreintegratedImu& delta, const Vec3& gravity);

// 15x15 measurement covariance for the residual: preintegration block plus
// bias random-walk blocks.
Eigen::Matrix<double, 15, 15> imu_residual_covariance(
    const PreintegratedImu& delta, const ImuNoiseParams& noise = {});

}  // namespace mml
