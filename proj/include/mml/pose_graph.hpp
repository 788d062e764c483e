#pragma once

#include <map>
#include <optional>
#include <ostream>
#include <vector>

#include "mml/geom.hpp"
#include "mml/types.hpp"

namespace mml {

enum class EdgeType : uint8_t { Odometry, Loop };

struct GraphEdge {
  int i = 0, j = 0;
  Pose rel;  // T_i^-1 T_j measurement
  Eigen::Matrix<double, 6, 6> info = Eigen::Matrix<double, 6, 6>::Identity();
  EdgeType type = EdgeType::Odometry;
};

// Default odometry information when no solver marginal is available:
// rotation block 1e4, translation block 1e2.
Eigen::Matrix<double, 6, 6> default_odom_information();

struct PoseGraph {
  std::map<int, Pose> nodes;
  std::vector<GraphEdge> edges;
};

// Insert a node at the keyframe's optimized pose; if the graph already has
// nodes, link it to the highest existing id with an odometry edge measuring
// the relative pose. Throws std::invalid_argument on duplicate id.
void add_keyframe_node(PoseGraph& graph, int kf_id, const NavState& state,
                       const Eigen::Matrix<double, 6, 6>& info =
                           default_odom_information());

struct IcpParams {
  double max_corr_dist = 1.0;  // m
  int max_iter = 30;
  double tol = 1e-6;
};

struct IcpResult {
  Pose transform;  // maps src points into the tgt frame
  double fitness = 0;  // mean squared correspondence distance, m^2
  size_t inliers = 0;
  int iterations = 0;
};

// Point-to-point ICP, src onto tgt, starting from `init`.
IcpResult icp_point2point(const std::vector<Vec3>& src,
                          const std::vector<Vec3>& tgt, const Pose& init,
                          const IcpParams& params = {});

struct LoopParams {
  double search_radius = 3.0;  // m, candidate gating on node position
  int min_gap = 10;            // keyframes between candidate and current
  double max_fitness = 0.05;   // m^2
  size_t min_inliers = 100;
  IcpParams icp;
};

// Verify a loop closure between the current node and the nearest prior node
// within the search radius. `clouds` holds body-frame feature points per
// node id. Returns the accepted loop edge, or nullopt.
std::optional<GraphEdge> detect_loop(
    const PoseGraph& graph, const std::map<int, std::vector<Vec3>>& clouds,
    int current_id, const LoopParams& params = {});

// Levenberg-Marquardt on all node poses with node 0 held fixed, minimizing
// sum ||log(rel^-1 T_i^-1 T_j)||^2_info. Throws std::runtime_error listing
// orphan node ids if the graph is not connected from node 0.
std::map<int, Pose> optimize_graph(const PoseGraph& graph, int max_iter = 50,
                                   double tol = 1e-6);

// Plain-text export: NODE id tx ty tz qw qx qy qz and
// EDGE i j tx ty tz qw qx qy qz followed by 21 upper-triangular info values.
void export_pose_graph(const PoseGraph& graph, std::ostream& os);

}  // namespace mml
