#include "mml/calib.hpp"

#include <cmath>

#include "mml/kdtree.hpp"

namespace mml {

std::vector<Vec3> accumulate_frames(const std::vector<Scan>& scans, size_t n) {
  if (n < 1 || scans.size() < n) {
    throw std::out_of_range("accumulate_frames: fewer scans than requested");
  }
  std::vector<Vec3> out;
  for (size_t i = 0; i < n; ++i) {
    for (const auto& pt : scans[i].points) out.push_back(pt.p);
  }
  return out;
}

namespace {

// Regularized neighborhood covariances: eigenvalues forced to (eps, 1, 1).
std::vector<Mat3> gicp_covariances(const KdTree& tree, int k, double eps) {
  const auto& pts = tree.points();
  std::vector<Mat3> covs(pts.size());
  for (size_t i = 0; i < pts.size(); ++i) {
    const auto nn = tree.knn(pts[i], k);
    Vec3 mean = Vec3::Zero();
    for (int j : nn) mean += pts[j];
    mean /= double(nn.size());
    Mat3 c = Mat3::Zero();
    for (int j : nn) {
      const Vec3 d = pts[j] - mean;
      c += d * d.transpose();
    }
    c /= double(nn.size());
    Eigen::SelfAdjointEigenSolver<Mat3> es(c);
    Mat3 U = es.eigenvectors();  // ascending eigenvalues
    covs[i] = U * Vec3(eps, 1.0, 1.0).asDiagonal() * U.transpose();
  }
  return covs;
}

}  // namespace

GicpResult gicp_align(const std::vector<Vec3>& source,
                      const std::vector<Vec3>& target, const Pose& init,
                      const GicpParams& params) {
  if (source.size() < params.min_points || target.size() < params.min_points) {
    throw std::invalid_argument("gicp: cloud below min_points");
  }
  KdTree src_tree(source);
  KdTree tgt_tree(target);
  const auto src_cov = gicp_covariances(src_tree, params.k_neighbors, params.cov_epsilon);
  const auto tgt_cov = gicp_covariances(tgt_tree, params.k_neighbors, params.cov_epsilon);

  Pose T = init;
  const double gate2 = params.max_corr_dist * params.max_corr_dist;
  GicpResult res;
  for (int it = 0; it < params.max_iter; ++it) {
    res.iterations = it + 1;
    const Mat3 R = T.q.toRotationMatrix();
    Eigen::Matrix<double, 6, 6> H = Eigen::Matrix<double, 6, 6>::Zero();
    Eigen::Matrix<double, 6, 1> g = Eigen::Matrix<double, 6, 1>::Zero();
    size_t n_corr = 0;
    double sq_sum = 0;
    for (size_t i = 0; i < source.size(); ++i) {
      const Vec3 p = T * source[i];
      const int j = tgt_tree.nearest(p);
      const Vec3 r = p - target[j];
      const double d2 = r.squaredNorm();
      if (d2 > gate2) continue;
      ++n_corr;
      sq_sum += d2;
      const Mat3 M = (tgt_cov[j] + R * src_cov[i] * R.transpose()).inverse();
      Eigen::Matrix<double, 3, 6> J;
      J.leftCols<3>() = -R * skew(source[i]);
      J.rightCols<3>() = Mat3::Identity();
      H += J.transpose() * M * J;
      g += J.transpose() * M * r;
    }
    if (n_corr == 0) throw GicpNoOverlap(T);
    const Eigen::Matrix<double, 6, 1> dx = H.ldlt().solve(-g);
    T.q = quat_boxplus(T.q, dx.head<3>());
    T.t += dx.tail<3>();
    res.fitness = sq_sum / double(n_corr);
    if (dx.norm() < params.tol) break;
  }
  res.transform = T;
  return res;
}

Pose chain_extrinsics(const Pose& T_v_to_h, const Pose& T_h_to_i) {
  return T_h_to_i * T_v_to_h;
}

void synthesize_spin_timestamps(Scan& scan) {
  if (scan.points.empty()) return;
  const double span = scan.t_end - scan.t_start;
  double prev_az = std::atan2(scan.points.front().p.y(), scan.points.front().p.x());
  double unwrapped = 0;
  for (auto& pt : scan.points) {
    double az = std::atan2(pt.p.y(), pt.p.x());
    double d = az - prev_az;
    while (d < -M_PI) d += 2 * M_PI;
    while (d > M_PI) d -= 2 * M_PI;
    unwrapped += std::abs(d);
    prev_az = az;
    pt.t = scan.t_start + span * std::min(1.0, unwrapped / (2 * M_PI));
  }
}

void AlignmentQueue::push(const Scan& scan) {
  for (const auto& pt : scan.points) {
    if (!buffer_.empty() && pt.t < buffer_.back().t) {
      throw std::logic_error("alignment queue: out-of-order insertion");
    }
    buffer_.push_back(pt);
  }
}

Scan AlignmentQueue::align(const Scan& v_scan) {
  Scan out;
  out.t_start = v_scan.t_start;
  out.t_end = v_scan.t_end;
  while (!buffer_.empty() && buffer_.front().t < v_scan.t_start) {
    buffer_.pop_front();
  }
  while (!buffer_.empty() && buffer_.front().t <= v_scan.t_end) {
    out.points.push_back(buffer_.front());
    buffer_.pop_front();
  }
  return out;
}

}  // namespace mml
