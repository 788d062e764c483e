#include "mml/window_optimizer.hpp"

#include <cmath>
#include <cstdio>
#include <stdexcept>

namespace mml {

bool select_keyframe(double imu_drift_angle_rad, double dt_since_last,
                     const SwoConfig& cfg) {
  return imu_drift_angle_rad > cfg.key_angle_deg * M_PI / 180.0 ||
         dt_since_last > cfg.key_dt;
}

namespace {

constexpr int kStateDim = 15;

NavState state_boxplus(const NavState& x, const Eigen::Ref<const Eigen::VectorXd>& d) {
  NavState out = x;
  out.q = quat_boxplus(x.q, d.segment<3>(0));
  out.v += d.segment<3>(3);
  out.p += d.segment<3>(6);
  out.ba += d.segment<3>(9);
  out.bg += d.segment<3>(12);
  return out;
}

Eigen::Matrix<double, kStateDim, 1> state_boxminus(const NavState& x,
                                                   const NavState& lin) {
  Eigen::Matrix<double, kStateDim, 1> d;
  d.segment<3>(0) = quat_boxminus(x.q, lin.q);
  d.segment<3>(3) = x.v - lin.v;
  d.segment<3>(6) = x.p - lin.p;
  d.segment<3>(9) = x.ba - lin.ba;
  d.segment<3>(12) = x.bg - lin.bg;
  return d;
}

struct Assoc {
  int kf;
  Vec3 p_i;
  bool is_edge;
  Vec3 a, b;  // edge line endpoints
  Vec3 n;     // plane normal (n.x + 1 = 0)
};

struct Assembled {
  Eigen::MatrixXd H;
  Eigen::VectorXd g;
  double cost = 0;
};

std::vector<Assoc> associate_window(const std::vector<Keyframe>& window,
                                    const std::vector<NavState>& states,
                                    const LocalFeatureMap& map,
                                    const SwoConfig& cfg, size_t* skipped) {
  std::vector<Assoc> assocs;
  for (size_t i = 0; i < window.size(); ++i) {
    const Pose T = states[i].pose();
    for (const auto& fp : window[i].features.edges) {
      if (auto line = associate_edge(map, T * fp.p, cfg.corr)) {
        assocs.push_back({int(i), fp.p, true, line->first, line->second, Vec3::Zero()});
      } else if (skipped) {
        ++*skipped;
      }
    }
    for (const auto& fp : window[i].features.planes) {
      if (auto n = associate_plane(map, T * fp.p, cfg.corr)) {
        assocs.push_back({int(i), fp.p, false, Vec3::Zero(), Vec3::Zero(), *n});
      } else if (skipped) {
        ++*skipped;
      }
    }
  }
  return assocs;
}

// Gauss-Newton normal equations for the full window at `states` with fixed
// LiDAR associations. Cost uses the true Huber loss.
Assembled assemble(const std::vector<Keyframe>& window,
                   const std::vector<NavState>& states,
                   const std::vector<Assoc>& assocs, const MarginalPrior& prior,
                   const Vec3& gravity, const SwoConfig& cfg) {
  const int n = static_cast<int>(states.size());
  Assembled out;
  out.H = Eigen::MatrixXd::Zero(n * kStateDim, n * kStateDim);
  out.g = Eigen::VectorXd::Zero(n * kStateDim);

  if (!prior.empty()) {
    const int m = static_cast<int>(prior.lin.size());
    Eigen::VectorXd d0(m * kStateDim);
    for (int i = 0; i < m; ++i) {
      d0.segment<kStateDim>(i * kStateDim) = state_boxminus(states[i], prior.lin[i]);
    }
    out.H.topLeftCorner(m * kStateDim, m * kStateDim) += prior.H;
    out.g.head(m * kStateDim) += prior.H * d0 + prior.g;
    out.cost += 0.5 * d0.dot(prior.H * d0) + prior.g.dot(d0);
  }

  const double inv_sigma = 1.0 / cfg.lidar_sigma;
  for (const auto& a : assocs) {
    const LidarResidual res =
        a.is_edge ? edge_residual_line(states[a.kf], a.p_i, a.a, a.b)
                  : plane_residual_normal(states[a.kf], a.p_i, a.n);
    if (!res.valid) continue;
    double w = 1.0;
    if (cfg.huber_delta > 0 && std::abs(res.r) > cfg.huber_delta) {
      w = cfg.huber_delta / std::abs(res.r);
      out.cost += (cfg.huber_delta * std::abs(res.r) -
                   0.5 * cfg.huber_delta * cfg.huber_delta) *
                  inv_sigma * inv_sigma;
    } else {
      out.cost += 0.5 * res.r * res.r * inv_sigma * inv_sigma;
    }
    const double scale = w * inv_sigma * inv_sigma;
    Eigen::Matrix<double, 1, kStateDim> J = Eigen::Matrix<double, 1, kStateDim>::Zero();
    J.segment<3>(0) = res.J.leftCols<3>();
    J.segment<3>(6) = res.J.rightCols<3>();
    const int off = a.kf * kStateDim;
    out.H.block<kStateDim, kStateDim>(off, off) += scale * J.transpose() * J;
    out.g.segment<kStateDim>(off) += scale * J.transpose() * res.r;
  }

  for (int i = 1; i < n; ++i) {
    const ImuResidual res =
        imu_residual(states[i - 1], states[i], window[i].delta, gravity);
    const auto cov = imu_residual_covariance(window[i].delta, cfg.imu_noise);
    const Eigen::Matrix<double, 15, 15> info =
        cov.llt().solve(Eigen::Matrix<double, 15, 15>::Identity());
    out.cost += 0.5 * res.r.dot(info * res.r);
    const int o0 = (i - 1) * kStateDim, o1 = i * kStateDim;
    out.H.block<15, 15>(o0, o0) += res.J_prev.transpose() * info * res.J_prev;
    out.H.block<15, 15>(o0, o1) += res.J_prev.transpose() * info * res.J_next;
    out.H.block<15, 15>(o1, o0) += res.J_next.transpose() * info * res.J_prev;
    out.H.block<15, 15>(o1, o1) += res.J_next.transpose() * info * res.J_next;
    out.g.segment<15>(o0) += res.J_prev.transpose() * info * res.r;
    out.g.segment<15>(o1) += res.J_next.transpose() * info * res.r;
  }
  return out;
}

double cost_only(const std::vector<Keyframe>& window,
                 const std::vector<NavState>& states,
                 const std::vector<Assoc>& assocs, const MarginalPrior& prior,
                 const Vec3& gravity, const SwoConfig& cfg) {
  // The Hessian assembly is cheap relative to association; reuse it.
  return assemble(window, states, assocs, prior, gravity, cfg).cost;
}

}  // namespace

std::vector<NavState> optimize_window(const std::vector<Keyframe>& window,
                                      const LocalFeatureMap& map,
                                      const MarginalPrior& prior,
                                      const Vec3& gravity, const SwoConfig& cfg,
                                      SwoReport* report) {
  if (window.empty()) return {};
  if (static_cast<int>(window.size()) > cfg.tau) {
    throw std::invalid_argument("window exceeds configured size");
  }
  SwoReport rep;
  std::vector<NavState> states;
  for (const auto& kf : window) states.push_back(kf.guess);

  const int dim = static_cast<int>(states.size()) * kStateDim;
  for (int outer = 0; outer < cfg.max_outer_iters; ++outer) {
    rep.outer_iters = outer + 1;
    size_t skipped = 0;
    const auto assocs = associate_window(window, states, map, cfg, &skipped);
    rep.skipped = skipped;
    rep.edge_residuals = rep.plane_residuals = 0;
    for (const auto& a : assocs) (a.is_edge ? rep.edge_residuals : rep.plane_residuals)++;
    if (assocs.empty()) {
      // Nothing constrains the window laterally: keep the IMU prediction.
      rep.imu_only_fallback = true;
      if (report) *report = rep;
      return states;
    }

    Assembled sys = assemble(window, states, assocs, prior, gravity, cfg);
    double cost = sys.cost;
    if (!std::isfinite(cost)) {
      char buf[96];
      std::snprintf(buf, sizeof(buf), "window cost diverged (outer iter %d)", outer);
      throw std::runtime_error(buf);
    }
    double lambda = 1e-4;
    bool converged = false;
    for (int inner = 0; inner < cfg.max_inner_iters; ++inner) {
      ++rep.lm_iters;
      Eigen::MatrixXd Hd = sys.H;
      for (int d = 0; d < dim; ++d) {
        Hd(d, d) += lambda * std::max(Hd(d, d), 1e-9);
      }
      const Eigen::VectorXd dx = Hd.ldlt().solve(-sys.g);
      if (!dx.allFinite()) {
        char buf[96];
        std::snprintf(buf, sizeof(buf), "window step diverged (outer %d inner %d)",
                      outer, inner);
        throw std::runtime_error(buf);
      }
      std::vector<NavState> trial(states.size());
      for (size_t i = 0; i < states.size(); ++i) {
        trial[i] = state_boxplus(states[i], dx.segment<kStateDim>(i * kStateDim));
      }
      const Assembled trial_sys = assemble(window, trial, assocs, prior, gravity, cfg);
      if (trial_sys.cost <= cost) {
        states = std::move(trial);
        cost = trial_sys.cost;
        sys = trial_sys;
        lambda = std::max(lambda * 0.3, 1e-9);
        if (dx.norm() < cfg.param_tol) {
          converged = true;
          break;
        }
      } else {
        lambda *= 10;
        if (lambda > 1e8) break;
      }
    }
    rep.final_cost = cost;
    if (converged) break;
  }
  if (report) *report = rep;
  return states;
}

MarginalPrior marginalize_oldest(const std::vector<Keyframe>& window,
                                 const std::vector<NavState>& states,
                                 const LocalFeatureMap& map,
                                 const MarginalPrior& prior, const Vec3& gravity,
                                 const SwoConfig& cfg) {
  if (window.size() < 2 || states.size() != window.size()) {
    throw std::invalid_argument("marginalization needs >= 2 aligned states");
  }
  const auto assocs = associate_window(window, states, map, cfg, nullptr);
  const Assembled sys = assemble(window, states, assocs, prior, gravity, cfg);
  const int rest = static_cast<int>(states.size() - 1) * kStateDim;

  const Eigen::MatrixXd Hoo = sys.H.topLeftCorner(kStateDim, kStateDim);
  const Eigen::MatrixXd Hor = sys.H.topRightCorner(kStateDim, rest);
  const Eigen::MatrixXd Hro = sys.H.bottomLeftCorner(rest, kStateDim);
  const Eigen::MatrixXd Hrr = sys.H.bottomRightCorner(rest, rest);
  const Eigen::VectorXd go = sys.g.head(kStateDim);
  const Eigen::VectorXd gr = sys.g.tail(rest);

  Eigen::LDLT<Eigen::MatrixXd> ldlt(Hoo);
  Eigen::MatrixXd Hoo_inv_Hor;
  Eigen::VectorXd Hoo_inv_go;
  if (ldlt.info() == Eigen::Success && ldlt.isPositive()) {
    Hoo_inv_Hor = ldlt.solve(Hor);
    Hoo_inv_go = ldlt.solve(go);
  } else {
    const Eigen::MatrixXd damped =
        Hoo + 1e-9 * Eigen::MatrixXd::Identity(kStateDim, kStateDim);
    Hoo_inv_Hor = damped.ldlt().solve(Hor);
    Hoo_inv_go = damped.ldlt().solve(go);
  }

  MarginalPrior out;
  out.lin.assign(states.begin() + 1, states.end());
  out.H = Hrr - Hro * Hoo_inv_Hor;
  out.H = 0.5 * (out.H + out.H.transpose()).eval();
  out.g = gr - Hro * Hoo_inv_go;

  // Clamp tiny negative eigenvalues so the prior stays PSD.
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(out.H);
  if (es.eigenvalues().minCoeff() < 0) {
    Eigen::VectorXd ev = es.eigenvalues().cwiseMax(0.0);
    out.H = es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
  }
  return out;
}

}  // namespace mml
