#include <random>

#include "doctest.h"
#include "mml/simulator.hpp"
#include "mml/window_optimizer.hpp"

using namespace mml;

namespace {

std::mt19937 rng_global(123);

NavState random_state(std::mt19937& rng) {
  std::normal_distribution<double> g;
  NavState x;
  x.p = Vec3(g(rng), g(rng), g(rng));
  x.q = exp_so3(Vec3(g(rng), g(rng), g(rng)));
  x.v = 0.5 * Vec3(g(rng), g(rng), g(rng));
  x.ba = 0.02 * Vec3(g(rng), g(rng), g(rng));
  x.bg = 0.005 * Vec3(g(rng), g(rng), g(rng));
  return x;
}

NavState perturb(const NavState& x, int dim, double h) {
  NavState out = x;
  Eigen::Matrix<double, 15, 1> d = Eigen::Matrix<double, 15, 1>::Zero();
  d(dim) = h;
  out.q = quat_boxplus(x.q, d.segment<3>(0));
  out.v += d.segment<3>(3);
  out.p += d.segment<3>(6);
  out.ba += d.segment<3>(9);
  out.bg += d.segment<3>(12);
  return out;
}

// Pose-only perturbation matching the 6-dim LiDAR Jacobian [dtheta, dp].
NavState perturb_pose(const NavState& x, int dim, double h) {
  NavState out = x;
  if (dim < 3) {
    Vec3 d = Vec3::Zero();
    d(dim) = h;
    out.q = quat_boxplus(x.q, d);
  } else {
    out.p(dim - 3) += h;
  }
  return out;
}

PreintegratedImu random_delta(std::mt19937& rng) {
  std::normal_distribution<double> g;
  std::vector<ImuSample> samples;
  const int n = 40;
  Vec3 w(0.3 * g(rng), 0.3 * g(rng), 0.3 * g(rng));
  Vec3 a(g(rng), g(rng), 9.0 + g(rng));
  for (int i = 0; i <= n; ++i) {
    const double t = 0.01 * i;
    samples.push_back({t, w + 0.1 * Vec3(std::sin(3 * t), std::cos(2 * t), 0),
                       a + 0.2 * Vec3(std::cos(4 * t), 0, std::sin(5 * t))});
  }
  return preintegrate(samples, Vec3(0.01, 0, -0.02), Vec3(0.002, -0.001, 0.003));
}

// A feature-rich scene: three orthogonal planes and two edge lines.
struct Scene {
  FeatureCloud features;  // body-frame features for a keyframe at `truth`
  LocalFeatureMap map{20};
  NavState truth;
};

Scene make_scene(const Pose& truth_pose) {
  Scene s;
  s.truth.p = truth_pose.t;
  s.truth.q = truth_pose.q;
  Keyframe seed;
  seed.k = 0;
  // World-frame features.
  FeatureCloud world;
  world.frame = FrameId::Imu;
  for (int i = 0; i < 220; ++i) {
    const double u = 0.05 * i;
    world.edges.push_back({0, Vec3(1.0, 2.0, -3.0 + u), EdgeKind::Line});   // vertical line
    world.edges.push_back({0, Vec3(-2.0 + u, -1.0, 1.5), EdgeKind::Line});  // horizontal line
  }
  for (int ix = 0; ix < 24; ++ix) {
    for (int iy = 0; iy < 24; ++iy) {
      const double a = -3.0 + 0.25 * ix, b = -3.0 + 0.25 * iy;
      world.planes.push_back({0, Vec3(a, b, -1.0), EdgeKind::Line});  // floor z=-1
      world.planes.push_back({0, Vec3(a, 3.0, b), EdgeKind::Line});   // wall y=3
      world.planes.push_back({0, Vec3(4.0, a, b), EdgeKind::Line});   // wall x=4
    }
  }
  seed.features = world;
  NavState origin;
  s.map.insert(seed, origin);  // map holds world-frame points verbatim
  // Keyframe observations: world features seen from the truth pose.
  const Pose inv = truth_pose.inverse();
  s.features.frame = FrameId::Imu;
  for (const auto& fp : world.edges) s.features.edges.push_back({fp.t, inv * fp.p, fp.kind});
  for (const auto& fp : world.planes) s.features.planes.push_back({fp.t, inv * fp.p, fp.kind});
  return s;
}

}  // namespace

TEST_CASE("keyframe gate") {
  SwoConfig cfg;
  CHECK(select_keyframe(35.0 * M_PI / 180.0, 0.5, cfg));
  CHECK(!select_keyframe(0.0, 0.0, cfg));
  CHECK(select_keyframe(10.0 * M_PI / 180.0, 2.5, cfg));
}

TEST_CASE("edge residual geometry") {
  NavState id;
  const Vec3 a(0, 0, 0), b(0, 0, 1);
  CHECK(edge_residual_line(id, Vec3(0, 0, 0.3), a, b).r == doctest::Approx(0.0));
  CHECK(edge_residual_line(id, Vec3(1, 0, 0.5), a, b).r == doctest::Approx(1.0));
  // Swap invariance.
  std::mt19937 rng(1);
  std::normal_distribution<double> g;
  for (int i = 0; i < 20; ++i) {
    const NavState X = random_state(rng);
    const Vec3 p(g(rng), g(rng), g(rng));
    const Vec3 u(g(rng), g(rng), g(rng)), v(g(rng), g(rng), g(rng));
    const double r1 = edge_residual_line(X, p, u, v).r;
    const double r2 = edge_residual_line(X, p, v, u).r;
    CHECK(r1 == doctest::Approx(r2).epsilon(1e-12));
  }
}

TEST_CASE("plane residual geometry") {
  // Plane z=2 encoded as n=(0,0,-0.5): n.x + 1 = 0.
  const Vec3 n(0, 0, -0.5);
  NavState id;
  CHECK(plane_residual_normal(id, Vec3(4, 7, 2), n).r == doctest::Approx(0.0));
  CHECK(plane_residual_normal(id, Vec3(0, 0, 3), n).r == doctest::Approx(1.0));
  // Equals Euclidean point-plane distance for a fitted plane.
  std::mt19937 rng(2);
  std::normal_distribution<double> g;
  for (int i = 0; i < 20; ++i) {
    Vec3 nr(g(rng), g(rng), g(rng));
    if (nr.norm() < 0.1) continue;
    const Vec3 p(g(rng), g(rng), g(rng));
    const double expected = std::abs(nr.dot(p) + 1.0) / nr.norm();
    CHECK(plane_residual_normal(id, p, nr).r == doctest::Approx(expected).epsilon(1e-12));
  }
}

TEST_CASE("LiDAR Jacobians match finite differences") {
  std::mt19937 rng(3);
  std::normal_distribution<double> g;
  const double h = 1e-6;
  int checked = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const NavState X = random_state(rng);
    const Vec3 p(g(rng), g(rng), g(rng));
    const Vec3 a(g(rng), g(rng), g(rng)), b(g(rng), g(rng), g(rng));
    Vec3 n(g(rng), g(rng), g(rng));
    if ((b - a).norm() < 0.1 || n.norm() < 0.1) continue;
    const auto er = edge_residual_line(X, p, a, b);
    const auto pr = plane_residual_normal(X, p, n);
    if (er.r < 1e-3) continue;  // gradient degenerate at the line itself
    for (int d = 0; d < 6; ++d) {
      const double e_fd = (edge_residual_line(perturb_pose(X, d, h), p, a, b).r -
                           edge_residual_line(perturb_pose(X, d, -h), p, a, b).r) /
                          (2 * h);
      CHECK(std::abs(er.J(d) - e_fd) / (std::abs(e_fd) + 1.0) < 1e-5);
      const double p_fd = (plane_residual_normal(perturb_pose(X, d, h), p, n).r -
                           plane_residual_normal(perturb_pose(X, d, -h), p, n).r) /
                          (2 * h);
      if (pr.r > 1e-3) {
        CHECK(std::abs(pr.J(d) - p_fd) / (std::abs(p_fd) + 1.0) < 1e-5);
      }
    }
    ++checked;
  }
  CHECK(checked > 80);
}

TEST_CASE("IMU residual vanishes on consistent propagation") {
  std::mt19937 rng(4);
  const auto delta = random_delta(rng);
  NavState x0 = random_state(rng);
  x0.ba = delta.ba_lin;
  x0.bg = delta.bg_lin;
  const Vec3 g(0, 0, -9.81);
  const NavState x1 = predict_state(x0, delta, g);
  const auto res = imu_residual(x0, x1, delta, g);
  CHECK(res.r.norm() < 1e-8);

  // Position perturbation maps through R_k^T.
  NavState x1p = x1;
  x1p.p += Vec3(0.1, 0, 0);
  const auto res2 = imu_residual(x0, x1p, delta, g);
  const Vec3 expected = x0.q.toRotationMatrix().transpose() * Vec3(0.1, 0, 0);
  CHECK((res2.r.segment<3>(6) - res.r.segment<3>(6) - expected).norm() < 1e-12);
}

TEST_CASE("IMU residual Jacobians match finite differences") {
  std::mt19937 rng(5);
  const Vec3 g(0, 0, -9.81);
  const double h = 1e-6;
  for (int trial = 0; trial < 100; ++trial) {
    const auto delta = random_delta(rng);
    const NavState x0 = random_state(rng);
    const NavState x1 = random_state(rng);
    const auto res = imu_residual(x0, x1, delta, g);
    for (int d = 0; d < 15; ++d) {
      const Eigen::Matrix<double, 15, 1> fd0 =
          (imu_residual(perturb(x0, d, h), x1, delta, g).r -
           imu_residual(perturb(x0, d, -h), x1, delta, g).r) /
          (2 * h);
      const Eigen::Matrix<double, 15, 1> fd1 =
          (imu_residual(x0, perturb(x1, d, h), delta, g).r -
           imu_residual(x0, perturb(x1, d, -h), delta, g).r) /
          (2 * h);
      for (int r = 0; r < 15; ++r) {
        CHECK(std::abs(res.J_prev(r, d) - fd0(r)) / (std::abs(fd0(r)) + 1.0) < 1e-5);
        CHECK(std::abs(res.J_next(r, d) - fd1(r)) / (std::abs(fd1(r)) + 1.0) < 1e-5);
      }
    }
  }
}

TEST_CASE("optimizer holds a zero-residual window fixed") {
  Scene s = make_scene(Pose(exp_so3(Vec3(0, 0, 0.3)), Vec3(0.5, -0.2, 0.1)));
  Keyframe kf;
  kf.k = 0;
  kf.features = s.features;
  kf.guess = s.truth;
  SwoConfig cfg;
  SwoReport rep;
  auto states = optimize_window({kf}, s.map, {}, Vec3(0, 0, -9.81), cfg, &rep);
  REQUIRE(states.size() == 1);
  CHECK((states[0].p - s.truth.p).norm() < 1e-8);
  CHECK(rotation_angle(states[0].q, s.truth.q) < 1e-8);
  CHECK(!rep.imu_only_fallback);
  CHECK(rep.edge_residuals > 0);
  CHECK(rep.plane_residuals > 0);
}

TEST_CASE("optimizer recovers a perturbed pose against a perfect map") {
  Scene s = make_scene(Pose(exp_so3(Vec3(0.05, -0.1, 0.2)), Vec3(0.3, 0.4, -0.1)));
  Keyframe kf;
  kf.k = 0;
  kf.features = s.features;
  kf.guess = s.truth;
  kf.guess.p += Vec3(0.03, -0.03, 0.02);  // 0.05 m
  kf.guess.q = quat_boxplus(s.truth.q, Vec3(0.02, 0.02, 0.015));  // ~2 deg
  SwoConfig cfg;
  SwoReport rep;
  auto states = optimize_window({kf}, s.map, {}, Vec3(0, 0, -9.81), cfg, &rep);
  REQUIRE(states.size() == 1);
  CHECK((states[0].p - s.truth.p).norm() < 1e-3);
  CHECK(rotation_angle(states[0].q, s.truth.q) < 0.05 * M_PI / 180.0);
}

TEST_CASE("optimizer flags a fully unconstrained window") {
  LocalFeatureMap empty(20);
  Keyframe kf;
  kf.k = 0;
  kf.guess = random_state(rng_global);
  SwoConfig cfg;
  SwoReport rep;
  auto states = optimize_window({kf}, empty, {}, Vec3(0, 0, -9.81), cfg, &rep);
  CHECK(rep.imu_only_fallback);
  CHECK((states[0].p - kf.guess.p).norm() == 0);
}

TEST_CASE("marginalization: Schur complement against a dense oracle") {
  // Window of two states, negligible IMU information, prior carries a known
  // dense H: the marginal must equal H22 - H21 H11^-1 H12.
  std::mt19937 rng(6);
  std::normal_distribution<double> g;
  Eigen::MatrixXd A = Eigen::MatrixXd::Random(30, 30);
  Eigen::MatrixXd H = A * A.transpose() + 30.0 * Eigen::MatrixXd::Identity(30, 30);
  Eigen::VectorXd gv = Eigen::VectorXd::Random(30);

  std::vector<Keyframe> window(2);
  std::vector<NavState> states(2);
  states[0] = random_state(rng);
  states[1] = random_state(rng);
  window[0].k = 0;
  window[1].k = 1;
  window[1].delta = PreintegratedImu::identity(0, 1);
  window[1].delta.covariance = 1e9 * Eigen::Matrix<double, 9, 9>::Identity();

  MarginalPrior prior;
  prior.lin = states;  // zero offset: gradient = prior.g exactly
  prior.H = H;
  prior.g = gv;

  SwoConfig cfg;
  cfg.imu_noise.sigma_ba_walk = 1e4;
  cfg.imu_noise.sigma_bg_walk = 1e4;
  LocalFeatureMap empty(20);
  MarginalPrior out =
      marginalize_oldest(window, states, empty, prior, Vec3(0, 0, -9.81), cfg);

  const Eigen::MatrixXd H11 = H.topLeftCorner(15, 15);
  const Eigen::MatrixXd H12 = H.topRightCorner(15, 15);
  const Eigen::MatrixXd H21 = H.bottomLeftCorner(15, 15);
  const Eigen::MatrixXd H22 = H.bottomRightCorner(15, 15);
  const Eigen::MatrixXd schur = H22 - H21 * H11.ldlt().solve(H12);
  const Eigen::VectorXd gs =
      gv.tail(15) - H21 * H11.ldlt().solve(Eigen::VectorXd(gv.head(15)));
  CHECK((out.H - schur).norm() / schur.norm() < 1e-6);
  CHECK((out.g - gs).norm() / gs.norm() < 1e-6);

  // PSD invariant.
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(out.H);
  CHECK(es.eigenvalues().minCoeff() > -1e-9);

  // Minimizing the marginal prior reproduces the retained part of the full
  // quadratic solution.
  const Eigen::VectorXd full = H.ldlt().solve(-gv);
  const Eigen::VectorXd marg = out.H.ldlt().solve(-out.g);
  CHECK((full.tail(15) - marg).norm() < 1e-4);
}

TEST_CASE("marginalization of a decoupled system keeps retained blocks") {
  std::mt19937 rng(7);
  Eigen::MatrixXd H = Eigen::MatrixXd::Zero(30, 30);
  Eigen::MatrixXd A1 = Eigen::MatrixXd::Random(15, 15);
  Eigen::MatrixXd A2 = Eigen::MatrixXd::Random(15, 15);
  H.topLeftCorner(15, 15) = A1 * A1.transpose() + Eigen::MatrixXd::Identity(15, 15);
  H.bottomRightCorner(15, 15) =
      A2 * A2.transpose() + Eigen::MatrixXd::Identity(15, 15);

  std::vector<Keyframe> window(2);
  std::vector<NavState> states(2);
  states[0] = random_state(rng);
  states[1] = random_state(rng);
  window[1].delta = PreintegratedImu::identity(0, 1);
  window[1].delta.covariance = 1e9 * Eigen::Matrix<double, 9, 9>::Identity();

  MarginalPrior prior;
  prior.lin = states;
  prior.H = H;
  prior.g = Eigen::VectorXd::Zero(30);

  SwoConfig cfg;
  cfg.imu_noise.sigma_ba_walk = 1e4;
  cfg.imu_noise.sigma_bg_walk = 1e4;
  LocalFeatureMap empty(20);
  MarginalPrior out =
      marginalize_oldest(window, states, empty, prior, Vec3(0, 0, -9.81), cfg);
  CHECK((out.H - H.bottomRightCorner(15, 15)).norm() / H.bottomRightCorner(15, 15).norm() <
        1e-6);
}

TEST_CASE("local map insertion, eviction, and brute-force k-NN parity") {
  Keyframe kf;
  kf.k = 0;
  kf.features.frame = FrameId::Imu;
  for (int i = 0; i < 50; ++i) {
    kf.features.edges.push_back({0, Vec3(i * 0.1, 0, 0), EdgeKind::Line});
    kf.features.planes.push_back({0, Vec3(0, i * 0.1, 0), EdgeKind::Line});
  }
  LocalFeatureMap map(20);
  NavState origin;
  update_local_map(map, kf, origin);
  CHECK(map.edge_count() == 50);
  CHECK(map.plane_count() == 50);
  CHECK(map.edge_index().points()[7] == kf.features.edges[7].p);

  // W=1: only the newer keyframe survives.
  LocalFeatureMap tight(1);
  update_local_map(tight, kf, origin);
  Keyframe kf2 = kf;
  kf2.k = 1;
  for (auto& e : kf2.features.edges) e.p += Vec3(0, 0, 5);
  update_local_map(tight, kf2, origin);
  CHECK(tight.edge_count() == 50);
  for (const auto& p : tight.edge_index().points()) CHECK(p.z() == 5.0);

  // k-NN parity with brute force.
  std::mt19937 rng(8);
  std::uniform_real_distribution<double> u(-2, 7);
  LocalFeatureMap big(20);
  Keyframe kf3;
  kf3.k = 0;
  for (int i = 0; i < 3000; ++i) {
    kf3.features.edges.push_back({0, Vec3(u(rng), u(rng), u(rng)), EdgeKind::Line});
  }
  update_local_map(big, kf3, origin);
  const auto& pts = big.edge_index().points();
  for (int trial = 0; trial < 1000; ++trial) {
    const Vec3 q(u(rng), u(rng), u(rng));
    const auto nn = big.edge_index().knn(q, 5);
    std::vector<std::pair<double, int>> brute;
    for (size_t i = 0; i < pts.size(); ++i) {
      brute.emplace_back((pts[i] - q).squaredNorm(), int(i));
    }
    std::partial_sort(brute.begin(), brute.begin() + 5, brute.end());
    for (int k = 0; k < 5; ++k) CHECK(nn[k] == brute[k].second);
  }
}

TEST_CASE("two-keyframe window: IMU link plus LiDAR stays consistent") {
  // Keyframe 0 at truth, keyframe 1 predicted by a consistent delta; the
  // optimizer should keep both near truth with residuals near zero.
  const Pose pose0(exp_so3(Vec3(0, 0, 0.1)), Vec3(0.2, 0.1, 0));
  Scene s0 = make_scene(pose0);
  NavState x0 = s0.truth;
  x0.v = Vec3(0.1, 0, 0);

  auto delta = [&] {
    std::vector<ImuSample> samples;
    // Static rotation, constant velocity: accel measures -g in body frame.
    const Vec3 g(0, 0, -9.81);
    for (int i = 0; i <= 50; ++i) {
      const double t = 0.01 * i;
      samples.push_back({t, Vec3::Zero(), x0.q.conjugate() * (-g)});
    }
    return preintegrate(samples, Vec3::Zero(), Vec3::Zero());
  }();
  const Vec3 g(0, 0, -9.81);
  NavState x1 = predict_state(x0, delta, g);
  Scene s1 = make_scene(Pose(x1.q, x1.p));

  std::vector<Keyframe> window(2);
  window[0].k = 0;
  window[0].features = s0.features;
  window[0].guess = x0;
  window[1].k = 1;
  window[1].features = s1.features;
  window[1].delta = delta;
  window[1].guess = x1;
  window[1].guess.p += Vec3(0.02, -0.02, 0.01);

  SwoConfig cfg;
  SwoReport rep;
  auto states = optimize_window(window, s0.map, {}, g, cfg, &rep);
  CHECK((states[0].p - x0.p).norm() < 1e-3);
  CHECK((states[1].p - x1.p).norm() < 1e-3);
  CHECK(rotation_angle(states[1].q, x1.q) < 1e-3);
  CHECK(std::isfinite(rep.final_cost));
}
