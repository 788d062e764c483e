#include "mml/residuals.hpp"

namespace mml {

namespace {

// d p_w / d [dtheta, dp] for p_w = R Exp(dtheta) p_i + t + dp.
Eigen::Matrix<double, 3, 6> point_jacobian(const NavState& X, const Vec3& p_i) {
  Eigen::Matrix<double, 3, 6> J;
  J.leftCols<3>() = -X.q.toRotationMatrix() * skew(p_i);
  J.rightCols<3>() = Mat3::Identity();
  return J;
}

}  // namespace

std::optional<std::pair<Vec3, Vec3>> associate_edge(
    const LocalFeatureMap& map, const Vec3& p_w,
    const CorrespondenceParams& params) {
  if (params.edge_neighbors < 2) return std::nullopt;
  const auto nn = map.edge_index().knn(p_w, params.edge_neighbors);
  std::vector<Vec3> pts;
  for (int idx : nn) {
    const Vec3& x = map.edge_index().points()[idx];
    if ((p_w - x).norm() <= params.radius) pts.push_back(x);
  }
  if (pts.size() < 2) return std::nullopt;
  Vec3 mu = Vec3::Zero();
  for (const auto& x : pts) mu += x;
  mu /= double(pts.size());
  Mat3 S = Mat3::Zero();
  for (const auto& x : pts) S += (x - mu) * (x - mu).transpose();
  Eigen::SelfAdjointEigenSolver<Mat3> es(S);  // ascending eigenvalues
  const Vec3 dir = es.eigenvectors().col(2);
  if (dir.norm() < 1e-9) return std::nullopt;
  return std::make_pair(Vec3(mu - 0.5 * dir), Vec3(mu + 0.5 * dir));
}

std::optional<Vec3> associate_plane(const LocalFeatureMap& map, const Vec3& p_w,
                                    const CorrespondenceParams& params) {
  const auto nn = map.plane_index().knn(p_w, params.plane_neighbors);
  if (static_cast<int>(nn.size()) < params.plane_neighbors) return std::nullopt;
  Eigen::Matrix<double, Eigen::Dynamic, 3> A(nn.size(), 3);
  for (size_t i = 0; i < nn.size(); ++i) {
    const Vec3& x = map.plane_index().points()[nn[i]];
    if ((p_w - x).norm() > params.radius) return std::nullopt;
    A.row(i) = x.transpose();
  }
  const Eigen::VectorXd rhs = -Eigen::VectorXd::Ones(nn.size());
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(A, Eigen::ComputeThinU | Eigen::ComputeThinV);
  if (svd.singularValues()(2) < 1e-8 * svd.singularValues()(0)) return std::nullopt;
  const Vec3 n = svd.solve(rhs);
  const double n_norm = n.norm();
  if (n_norm < 1e-12) return std::nullopt;
  for (size_t i = 0; i < nn.size(); ++i) {
    const double d = std::abs(n.dot(A.row(i).transpose()) + 1.0) / n_norm;
    if (d > params.plane_fit_tol) return std::nullopt;
  }
  return n;
}

LidarResidual edge_residual_line(const NavState& X, const Vec3& p_i,
                                 const Vec3& a, const Vec3& b) {
  LidarResidual out;
  const Vec3 p = X.q * p_i + X.p;
  const Vec3 c = b - a;
  const double cn = c.norm();
  if (cn < 1e-6) return out;
  const Vec3 u = (p - b).cross(c) / cn;
  out.r = u.norm();
  if (out.r > 1e-12) {
    const Eigen::Matrix<double, 1, 3> dr_dp = (u.transpose() / out.r) * (-skew(c) / cn);
    out.J = dr_dp * point_jacobian(X, p_i);
  }
  out.valid = true;
  return out;
}

LidarResidual plane_residual_normal(const NavState& X, const Vec3& p_i,
                                    const Vec3& n) {
  LidarResidual out;
  const Vec3 p = X.q * p_i + X.p;
  const double n_norm = n.norm();
  if (n_norm < 1e-12) return out;
  const double signed_d = (n.dot(p) + 1.0) / n_norm;
  out.r = std::abs(signed_d);
  const double sgn = signed_d >= 0 ? 1.0 : -1.0;
  const Eigen::Matrix<double, 1, 3> dr_dp = sgn * n.transpose() / n_norm;
  out.J = dr_dp * point_jacobian(X, p_i);
  out.valid = true;
  return out;
}

LidarResidual edge_residual(const NavState& X, const Vec3& p_i,
                            const LocalFeatureMap& map,
                            const CorrespondenceParams& params) {
  const Vec3 p_w = X.q * p_i + X.p;
  const auto line = associate_edge(map, p_w, params);
  if (!line) return {};
  return edge_residual_line(X, p_i, line->first, line->second);
}

LidarResidual plane_residual(const NavState& X, const Vec3& p_i,
                             const LocalFeatureMap& map,
                             const CorrespondenceParams& params) {
  const Vec3 p_w = X.q * p_i + X.p;
  const auto n = associate_plane(map, p_w, params);
  if (!n) return {};
  return plane_residual_normal(X, p_i, *n);
}

ImuResidual imu_residual(const NavState& X_k, const NavState& X_k1,
                         const PreintegratedImu& delta, const Vec3& gravity) {
  const double dt = delta.dt_total;
  const Mat3 Rk_t = X_k.q.toRotationMatrix().transpose();
  const Vec3 dp_corr = delta.corrected_p(X_k.ba, X_k.bg);
  const Vec3 dv_corr = delta.corrected_v(X_k.ba, X_k.bg);
  const Quat dq_corr = delta.corrected_q(X_k.bg);

  const Vec3 alpha = Rk_t * (X_k1.p - X_k.p - X_k.v * dt - 0.5 * gravity * dt * dt);
  const Vec3 beta = Rk_t * (X_k1.v - X_k.v - gravity * dt);
  const Quat E = dq_corr.conjugate() * X_k.q.conjugate() * X_k1.q;

  ImuResidual out;
  out.r.segment<3>(0) = log_so3(E);
  out.r.segment<3>(3) = beta - dv_corr;
  out.r.segment<3>(6) = alpha - dp_corr;
  out.r.segment<3>(9) = X_k1.ba - X_k.ba;
  out.r.segment<3>(12) = X_k1.bg - X_k.bg;

  const Vec3 r_th = out.r.segment<3>(0);
  const Mat3 Jr_inv = right_jacobian_inv(r_th);
  const Mat3 R_E = E.toRotationMatrix();
  const Mat3 R_rel = (X_k1.q.conjugate() * X_k.q).toRotationMatrix();
  // Sensitivity of the corrected delta rotation to the gyro bias.
  const Vec3 corr = delta.J_q_bg * (X_k.bg - delta.bg_lin);
  const Mat3 W = right_jacobian(corr) * delta.J_q_bg;

  out.J_prev.setZero();
  out.J_next.setZero();

  // Rotation rows.
  out.J_prev.block<3, 3>(0, 0) = -Jr_inv * R_rel;
  out.J_prev.block<3, 3>(0, 12) = -Jr_inv * R_E.transpose() * W;
  out.J_next.block<3, 3>(0, 0) = Jr_inv;
  // Velocity rows.
  out.J_prev.block<3, 3>(3, 0) = skew(beta);
  out.J_prev.block<3, 3>(3, 3) = -Rk_t;
  out.J_prev.block<3, 3>(3, 9) = -delta.J_v_ba;
  out.J_prev.block<3, 3>(3, 12) = -delta.J_v_bg;
  out.J_next.block<3, 3>(3, 3) = Rk_t;
  // Position rows.
  out.J_prev.block<3, 3>(6, 0) = skew(alpha);
  out.J_prev.block<3, 3>(6, 3) = -Rk_t * dt;
  out.J_prev.block<3, 3>(6, 6) = -Rk_t;
  out.J_prev.block<3, 3>(6, 9) = -delta.J_p_ba;
  out.J_prev.block<3, 3>(6, 12) = -delta.J_p_bg;
  out.J_next.block<3, 3>(6, 6) = Rk_t;
  // Bias rows.
  out.J_prev.block<3, 3>(9, 9) = -Mat3::Identity();
  out.J_prev.block<3, 3>(12, 12) = -Mat3::Identity();
  out.J_next.block<3, 3>(9, 9) = Mat3::Identity();
  out.J_next.block<3, 3>(12, 12) = Mat3::Identity();
  return out;
}

Eigen::Matrix<double, 15, 15> imu_residual_covariance(
    const PreintegratedImu& delta, const ImuNoiseParams& noise) {
  Eigen::Matrix<double, 15, 15> cov = Eigen::Matrix<double, 15, 15>::Zero();
  cov.topLeftCorner<9, 9>() = delta.covariance;
  const double dt = std::max(delta.dt_total, 1e-6);
  cov.block<3, 3>(9, 9) =
      noise.sigma_ba_walk * noise.sigma_ba_walk * dt * Mat3::Identity();
  cov.block<3, 3>(12, 12) =
      noise.sigma_bg_walk * noise.sigma_bg_walk * dt * Mat3::Identity();
  cov += 1e-12 * Eigen::Matrix<double, 15, 15>::Identity();
  return cov;
}

}  // namespace mml
