#include "mml/features.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>
#include <tuple>

namespace mml {

RingSet organize_scan(const Scan& scan, SensorKind kind, bool use_ring_ids) {
  RingSet out;
  if (scan.points.empty()) return out;
  if (use_ring_ids) {
    uint8_t max_ring = 0;
    for (const auto& pt : scan.points) max_ring = std::max(max_ring, pt.ring);
    out.rings.resize(max_ring + 1);
    for (const auto& pt : scan.points) out.rings[pt.ring].push_back(pt);
  } else {
    if (kind != SensorKind::Spinning) {
      throw std::invalid_argument("elevation bucketing is spinning-only");
    }
    // 16 channels, 2-degree spacing, -15..+15 deg; floor boundary rule.
    out.rings.resize(16);
    for (const auto& pt : scan.points) {
      const double elev =
          std::atan2(pt.p.z(), std::hypot(pt.p.x(), pt.p.y())) * 180.0 / M_PI;
      int idx = static_cast<int>(std::floor((elev + 15.0) / 2.0));
      if (idx < 0 || idx > 15) {
        idx = std::clamp(idx, 0, 15);
        ++out.out_of_span;
      }
      out.rings[idx].push_back(pt);
    }
  }
  for (auto& ring : out.rings) {
    std::stable_sort(ring.begin(), ring.end(),
                     [](const TimedPoint& a, const TimedPoint& b) { return a.t < b.t; });
  }
  return out;
}

std::vector<bool> mark_continuity(const std::vector<TimedPoint>& ring, double d_th) {
  const size_t n = ring.size();
  std::vector<bool> cont(n, true);
  if (n == 0) return cont;
  std::vector<double> depth(n);
  for (size_t i = 0; i < n; ++i) depth[i] = ring[i].p.norm();
  for (size_t i = 0; i < n; ++i) {
    bool ok = true;
    if (i > 0 && std::abs(depth[i] - depth[i - 1]) >= d_th) ok = false;
    if (i + 1 < n && std::abs(depth[i] - depth[i + 1]) >= d_th) ok = false;
    cont[i] = ok;
  }
  return cont;
}

namespace {

struct Scatter {
  Vec3 centroid = Vec3::Zero();
  Vec3 eigval = Vec3::Zero();  // descending
  Mat3 eigvec = Mat3::Zero();  // columns match eigval order
  int count = 0;
};

Scatter window_scatter(const std::vector<TimedPoint>& ring, int lo, int hi) {
  Scatter s;
  s.count = hi - lo + 1;
  for (int j = lo; j <= hi; ++j) s.centroid += ring[j].p;
  s.centroid /= double(s.count);
  Mat3 cov = Mat3::Zero();
  for (int j = lo; j <= hi; ++j) {
    const Vec3 d = ring[j].p - s.centroid;
    cov += d * d.transpose();
  }
  cov /= double(s.count);
  Eigen::SelfAdjointEigenSolver<Mat3> es(cov);  // ascending
  for (int a = 0; a < 3; ++a) {
    s.eigval[a] = es.eigenvalues()(2 - a);
    s.eigvec.col(a) = es.eigenvectors().col(2 - a);
  }
  return s;
}

}  // namespace

std::vector<PointLabel> classify_points(const std::vector<TimedPoint>& ring,
                                        const std::vector<bool>& continuous,
                                        const FeatureParams& params) {
  const int n = static_cast<int>(ring.size());
  std::vector<PointLabel> labels(n, PointLabel::None);
  if (static_cast<int>(continuous.size()) != n) {
    throw std::invalid_argument("continuity labels do not match ring size");
  }
  std::vector<double> depth(n);
  for (int i = 0; i < n; ++i) depth[i] = ring[i].p.norm();
  const double corner_cos = std::cos(params.corner_angle_deg * M_PI / 180.0);
  std::vector<double> bend(n, 1.0);  // |cos| between half-window line fits
  for (int i = 0; i < n; ++i) {
    if (!continuous[i]) continue;

    // Break: nearer-side neighbor of a depth jump.
    bool is_break = false;
    for (int dir : {-1, 1}) {
      const int j = i + dir;
      if (j < 0 || j >= n || continuous[j]) continue;
      const int l = j + dir;  // far side of the jump
      const double far_depth = (l >= 0 && l < n) ? depth[l] : depth[j];
      if (depth[j] <= far_depth && depth[i] <= far_depth) is_break = true;
    }
    if (is_break) {
      labels[i] = PointLabel::Break;
      continue;
    }

    const int lo = std::max(0, i - params.k_neigh);
    const int hi = std::min(n - 1, i + params.k_neigh);
    if (hi - lo + 1 < 3) continue;

    // Corner: the two half-windows fit lines meeting at a wide angle.
    if (i - lo >= 2 && hi - i >= 2) {
      const Scatter left = window_scatter(ring, lo, i);
      const Scatter right = window_scatter(ring, i, hi);
      const double c = std::abs(left.eigvec.col(0).dot(right.eigvec.col(0)));
      if (c < corner_cos) {
        labels[i] = PointLabel::Corner;
        bend[i] = c;
        continue;
      }
    }

    const Scatter s = window_scatter(ring, lo, hi);
    if (s.eigval[0] <= 0) continue;
    const double ratio = s.eigval[1] / s.eigval[0];
    const double residual = std::sqrt(std::max(0.0, s.eigval[1] + s.eigval[2]));
    if (ratio < params.plane_ratio && residual < params.plane_residual) {
      labels[i] = PointLabel::Plane;
    }
  }
  // A crease triggers the corner test on several consecutive samples; keep
  // only the sharpest bend per run so corner points hug the crease.
  for (int i = 0; i < n;) {
    if (labels[i] != PointLabel::Corner) { ++i; continue; }
    int best = i, j = i;
    for (; j < n && labels[j] == PointLabel::Corner; ++j)
      if (bend[j] < bend[best]) best = j;
    for (int k = i; k < j; ++k)
      if (k != best) labels[k] = PointLabel::None;
    i = j;
  }
  return labels;
}

FeatureCloud extract_features(const Scan& scan, SensorKind kind,
                              const FeatureParams& params, bool use_ring_ids) {
  const RingSet rs = organize_scan(scan, kind, use_ring_ids);
  FeatureCloud out;
  out.frame = kind == SensorKind::Spinning ? FrameId::Spinning : FrameId::SolidState;
  for (const auto& ring : rs.rings) {
    const auto cont = mark_continuity(ring, params.d_th);
    const auto labels = classify_points(ring, cont, params);
    for (size_t i = 0; i < ring.size(); ++i) {
      FeaturePoint fp{ring[i].t, ring[i].p, EdgeKind::Line};
      switch (labels[i]) {
        case PointLabel::Plane:
          out.planes.push_back(fp);
          break;
        case PointLabel::Corner:
          out.edges.push_back(fp);
          break;
        case PointLabel::Break:
          fp.kind = EdgeKind::Break;
          out.edges.push_back(fp);
          break;
        case PointLabel::None:
          break;
      }
    }
  }
  return out;
}

bool detect_bad_frame(FeatureCloud& f, const FeatureParams& params) {
  auto filter = [&](std::vector<FeaturePoint>& pts) {
    pts.erase(std::remove_if(pts.begin(), pts.end(),
                             [&](const FeaturePoint& p) {
                               return p.p.norm() < params.near_range;
                             }),
              pts.end());
  };
  filter(f.edges);
  filter(f.planes);
  return static_cast<int>(f.edges.size()) < params.tau_e;
}

FeatureCloud merge_features(const FeatureCloud& f_v, const FeatureCloud& f_h,
                            const ExtrinsicSet& extr, bool bad_h) {
  if (f_v.frame != FrameId::Spinning || f_h.frame != FrameId::SolidState) {
    throw std::invalid_argument("merge_features: unexpected frame tags");
  }
  const Pose T_v = extr.T_v_to_i();
  const Pose& T_h = extr.T_h_to_i;
  FeatureCloud out;
  out.frame = FrameId::Imu;
  auto add = [](std::vector<FeaturePoint>& dst, const std::vector<FeaturePoint>& src,
                const Pose& T) {
    for (FeaturePoint p : src) {
      p.p = T * p.p;
      dst.push_back(p);
    }
  };
  add(out.edges, f_v.edges, T_v);
  add(out.planes, f_v.planes, T_v);
  if (!bad_h) {
    add(out.edges, f_h.edges, T_h);
    add(out.planes, f_h.planes, T_h);
  }
  return out;
}

namespace {

using VoxelKey = std::tuple<int64_t, int64_t, int64_t>;

VoxelKey voxel_of(const Vec3& p, double leaf) {
  return {static_cast<int64_t>(std::floor(p.x() / leaf)),
          static_cast<int64_t>(std::floor(p.y() / leaf)),
          static_cast<int64_t>(std::floor(p.z() / leaf))};
}

std::vector<FeaturePoint> downsample_set(const std::vector<FeaturePoint>& pts,
                                         double leaf) {
  struct Accum {
    Vec3 sum = Vec3::Zero();
    double t_sum = 0;
    size_t n = 0;
    EdgeKind kind = EdgeKind::Line;
  };
  std::map<VoxelKey, Accum> cells;  // ordered: deterministic output
  for (const auto& p : pts) {
    Accum& a = cells[voxel_of(p.p, leaf)];
    if (a.n == 0) a.kind = p.kind;
    a.sum += p.p;
    a.t_sum += p.t;
    ++a.n;
  }
  std::vector<FeaturePoint> out;
  out.reserve(cells.size());
  for (const auto& [key, a] : cells) {
    out.push_back({a.t_sum / double(a.n), a.sum / double(a.n), a.kind});
  }
  return out;
}

}  // namespace

FeatureCloud voxel_downsample(const FeatureCloud& cloud, double leaf) {
  if (leaf <= 0) throw std::invalid_argument("voxel leaf must be positive");
  FeatureCloud out;
  out.frame = cloud.frame;
  out.edges = downsample_set(cloud.edges, leaf);
  out.planes = downsample_set(cloud.planes, leaf);
  return out;
}

std::vector<Vec3> voxel_downsample(const std::vector<Vec3>& pts, double leaf) {
  if (leaf <= 0) throw std::invalid_argument("voxel leaf must be positive");
  std::map<VoxelKey, std::pair<Vec3, size_t>> cells;
  for (const auto& p : pts) {
    auto& a = cells[voxel_of(p, leaf)];
    if (a.second == 0) a.first = Vec3::Zero();
    a.first += p;
    ++a.second;
  }
  std::vector<Vec3> out;
  out.reserve(cells.size());
  for (const auto& [key, a] : cells) out.push_back(a.first / double(a.second));
  return out;
}

}  // namespace mml
