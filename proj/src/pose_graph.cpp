#include "mml/pose_graph.hpp"

#include <algorithm>
#include <deque>
#include <set>
#include <stdexcept>
#include <string>

#include "mml/kdtree.hpp"

namespace mml {

Eigen::Matrix<double, 6, 6> default_odom_information() {
  Eigen::Matrix<double, 6, 6> info = Eigen::Matrix<double, 6, 6>::Zero();
  info.topLeftCorner<3, 3>() = 1e4 * Mat3::Identity();
  info.bottomRightCorner<3, 3>() = 1e2 * Mat3::Identity();
  return info;
}

void add_keyframe_node(PoseGraph& graph, int kf_id, const NavState& state,
                       const Eigen::Matrix<double, 6, 6>& info) {
  if (graph.nodes.count(kf_id)) {
    throw std::invalid_argument("duplicate pose graph node id " +
                                std::to_string(kf_id));
  }
  const Pose pose = state.pose();
  if (!graph.nodes.empty()) {
    const auto& [prev_id, prev_pose] = *graph.nodes.rbegin();
    GraphEdge e;
    e.i = prev_id;
    e.j = kf_id;
    e.rel = prev_pose.inverse() * pose;
    e.info = info;
    e.type = EdgeType::Odometry;
    graph.edges.push_back(e);
  }
  graph.nodes.emplace(kf_id, pose);
}

IcpResult icp_point2point(const std::vector<Vec3>& src,
                          const std::vector<Vec3>& tgt, const Pose& init,
                          const IcpParams& params) {
  IcpResult out;
  out.transform = init;
  const KdTree tree(tgt);
  for (int iter = 0; iter < params.max_iter; ++iter) {
    out.iterations = iter + 1;
    // Correspondences under the current transform.
    Vec3 mu_s = Vec3::Zero(), mu_t = Vec3::Zero();
    std::vector<std::pair<Vec3, Vec3>> pairs;
    double sq_sum = 0;
    for (const auto& p : src) {
      const Vec3 q = out.transform * p;
      const int idx = tree.nearest(q);
      if (idx < 0) continue;
      const Vec3& m = tgt[idx];
      const double d2 = (q - m).squaredNorm();
      if (d2 > params.max_corr_dist * params.max_corr_dist) continue;
      pairs.emplace_back(p, m);
      mu_s += p;
      mu_t += m;
      sq_sum += d2;
    }
    out.inliers = pairs.size();
    out.fitness = pairs.empty() ? std::numeric_limits<double>::infinity()
                                : sq_sum / pairs.size();
    if (pairs.size() < 3) break;
    mu_s /= pairs.size();
    mu_t /= pairs.size();
    // Closed-form alignment (Umeyama / Kabsch).
    Mat3 W = Mat3::Zero();
    for (const auto& [p, m] : pairs) W += (m - mu_t) * (p - mu_s).transpose();
    Eigen::JacobiSVD<Mat3> svd(W, Eigen::ComputeFullU | Eigen::ComputeFullV);
    Mat3 R = svd.matrixU() * svd.matrixV().transpose();
    if (R.determinant() < 0) {
      Mat3 D = Mat3::Identity();
      D(2, 2) = -1;
      R = svd.matrixU() * D * svd.matrixV().transpose();
    }
    const Pose next(Quat(R), mu_t - R * mu_s);
    const Pose delta = out.transform.inverse() * next;
    out.transform = next;
    if (log_so3(delta.q).norm() + delta.t.norm() < params.tol) break;
  }
  return out;
}

std::optional<GraphEdge> detect_loop(
    const PoseGraph& graph, const std::map<int, std::vector<Vec3>>& clouds,
    int current_id, const LoopParams& params) {
  const auto cur_node = graph.nodes.find(current_id);
  const auto cur_cloud = clouds.find(current_id);
  if (cur_node == graph.nodes.end() || cur_cloud == clouds.end()) {
    return std::nullopt;
  }
  // Nearest eligible candidate by node position.
  int best = -1;
  double best_d = params.search_radius;
  for (const auto& [id, pose] : graph.nodes) {
    if (current_id - id < params.min_gap) continue;
    if (!clouds.count(id)) continue;
    const double d = (pose.t - cur_node->second.t).norm();
    if (d <= best_d) {
      best_d = d;
      best = id;
    }
  }
  if (best < 0) return std::nullopt;

  const Pose& T_i = graph.nodes.at(best);
  const Pose init = T_i.inverse() * cur_node->second;
  const IcpResult icp =
      icp_point2point(cur_cloud->second, clouds.at(best), init, params.icp);
  if (icp.fitness >= params.max_fitness || icp.inliers < params.min_inliers) {
    return std::nullopt;
  }
  GraphEdge e;
  e.i = best;
  e.j = current_id;
  e.rel = icp.transform;
  e.info = default_odom_information();
  e.type = EdgeType::Loop;
  return e;
}

namespace {

Eigen::Matrix<double, 6, 1> edge_residual_se3(const Pose& Ti, const Pose& Tj,
                                              const Pose& rel) {
  return pose_log(rel.inverse() * Ti.inverse() * Tj);
}

Pose pose_boxplus(const Pose& T, const Eigen::Matrix<double, 6, 1>& d) {
  return Pose(quat_boxplus(T.q, d.head<3>()), T.t + d.tail<3>());
}

}  // namespace

std::map<int, Pose> optimize_graph(const PoseGraph& graph, int max_iter,
                                   double tol) {
  if (graph.nodes.empty()) return {};
  for (const auto& e : graph.edges) {
    if (!graph.nodes.count(e.i) || !graph.nodes.count(e.j)) {
      throw std::invalid_argument("edge references missing node");
    }
  }
  // Connectivity from node 0.
  std::set<int> reached;
  std::deque<int> frontier{graph.nodes.begin()->first};
  reached.insert(frontier.front());
  while (!frontier.empty()) {
    const int u = frontier.front();
    frontier.pop_front();
    for (const auto& e : graph.edges) {
      const int v = e.i == u ? e.j : e.j == u ? e.i : -1;
      if (v >= 0 && reached.insert(v).second) frontier.push_back(v);
    }
  }
  if (reached.size() != graph.nodes.size()) {
    std::string orphans;
    for (const auto& [id, _] : graph.nodes) {
      if (!reached.count(id)) orphans += " " + std::to_string(id);
    }
    throw std::runtime_error("pose graph disconnected; orphan nodes:" + orphans);
  }

  // Dense index for free nodes (all but the first, which fixes the gauge).
  std::vector<int> ids;
  std::map<int, int> col;
  for (const auto& [id, _] : graph.nodes) {
    if (id != graph.nodes.begin()->first) {
      col[id] = static_cast<int>(ids.size()) * 6;
      ids.push_back(id);
    }
  }
  std::map<int, Pose> poses = graph.nodes;
  const int dim = static_cast<int>(ids.size()) * 6;
  if (dim == 0) return poses;

  auto total_cost = [&](const std::map<int, Pose>& ps) {
    double c = 0;
    for (const auto& e : graph.edges) {
      const auto r = edge_residual_se3(ps.at(e.i), ps.at(e.j), e.rel);
      c += 0.5 * r.dot(e.info * r);
    }
    return c;
  };

  double lambda = 1e-6;
  double cost = total_cost(poses);
  for (int iter = 0; iter < max_iter; ++iter) {
    Eigen::MatrixXd H = Eigen::MatrixXd::Zero(dim, dim);
    Eigen::VectorXd g = Eigen::VectorXd::Zero(dim);
    const double h = 1e-7;
    for (const auto& e : graph.edges) {
      const Pose& Ti = poses.at(e.i);
      const Pose& Tj = poses.at(e.j);
      const auto r = edge_residual_se3(Ti, Tj, e.rel);
      Eigen::Matrix<double, 6, 6> Ji, Jj;
      for (int d = 0; d < 6; ++d) {
        Eigen::Matrix<double, 6, 1> dv = Eigen::Matrix<double, 6, 1>::Zero();
        dv(d) = h;
        Ji.col(d) =
            (edge_residual_se3(pose_boxplus(Ti, dv), Tj, e.rel) -
             edge_residual_se3(pose_boxplus(Ti, -dv), Tj, e.rel)) /
            (2 * h);
        Jj.col(d) =
            (edge_residual_se3(Ti, pose_boxplus(Tj, dv), e.rel) -
             edge_residual_se3(Ti, pose_boxplus(Tj, -dv), e.rel)) /
            (2 * h);
      }
      const bool fi = col.count(e.i), fj = col.count(e.j);
      if (fi) {
        H.block<6, 6>(col[e.i], col[e.i]) += Ji.transpose() * e.info * Ji;
        g.segment<6>(col[e.i]) += Ji.transpose() * e.info * r;
      }
      if (fj) {
        H.block<6, 6>(col[e.j], col[e.j]) += Jj.transpose() * e.info * Jj;
        g.segment<6>(col[e.j]) += Jj.transpose() * e.info * r;
      }
      if (fi && fj) {
        H.block<6, 6>(col[e.i], col[e.j]) += Ji.transpose() * e.info * Jj;
        H.block<6, 6>(col[e.j], col[e.i]) += Jj.transpose() * e.info * Ji;
      }
    }
    bool stepped = false;
    for (int inner = 0; inner < 10; ++inner) {
      Eigen::MatrixXd Hd = H;
      for (int d = 0; d < dim; ++d) Hd(d, d) += lambda * std::max(Hd(d, d), 1e-9);
      const Eigen::VectorXd dx = Hd.ldlt().solve(-g);
      if (!dx.allFinite()) break;
      std::map<int, Pose> trial = poses;
      for (size_t k = 0; k < ids.size(); ++k) {
        trial[ids[k]] =
            pose_boxplus(poses.at(ids[k]), dx.segment<6>(6 * k));
      }
      const double trial_cost = total_cost(trial);
      if (trial_cost <= cost) {
        poses = std::move(trial);
        cost = trial_cost;
        lambda = std::max(lambda * 0.3, 1e-9);
        stepped = true;
        if (dx.norm() < tol) return poses;
        break;
      }
      lambda *= 10;
    }
    if (!stepped) break;
  }
  return poses;
}

void export_pose_graph(const PoseGraph& graph, std::ostream& os) {
  char buf[256];
  for (const auto& [id, T] : graph.nodes) {
    std::snprintf(buf, sizeof(buf), "NODE %d %.9f %.9f %.9f %.9f %.9f %.9f %.9f\n",
                  id, T.t.x(), T.t.y(), T.t.z(), T.q.w(), T.q.x(), T.q.y(),
                  T.q.z());
    os << buf;
  }
  for (const auto& e : graph.edges) {
    std::snprintf(buf, sizeof(buf), "EDGE %d %d %.9f %.9f %.9f %.9f %.9f %.9f %.9f",
                  e.i, e.j, e.rel.t.x(), e.rel.t.y(), e.rel.t.z(), e.rel.q.w(),
                  e.rel.q.x(), e.rel.q.y(), e.rel.q.z());
    os << buf;
    for (int r = 0; r < 6; ++r) {
      for (int c = r; c < 6; ++c) {
        std::snprintf(buf, sizeof(buf), " %.9g", e.info(r, c));
        os << buf;
      }
    }
    os << "\n";
  }
}

}  // namespace mml
