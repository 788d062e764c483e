#include "mml/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <deque>
#include <fstream>
#include <map>
#include <stdexcept>

#include "mml/calib.hpp"
#include "mml/imu_preint.hpp"

namespace mml {

RunMode parse_mode(const std::string& s) {
  std::string lower(s);
  for (char& c : lower) c = static_cast<char>(std::tolower(c));
  if (lower == "hvi") return RunMode::HVI;
  if (lower == "vi") return RunMode::VI;
  if (lower == "hi") return RunMode::HI;
  throw std::runtime_error("unknown mode '" + s + "' (expected hvi|vi|hi)");
}

namespace {

double to_double(const std::string& key, const std::string& v) {
  try {
    size_t pos = 0;
    const double x = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw std::runtime_error("config key '" + key + "': bad number '" + v + "'");
  }
}

int to_int(const std::string& key, const std::string& v) {
  const double x = to_double(key, v);
  return static_cast<int>(x);
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "1" || v == "true" || v == "on") return true;
  if (v == "0" || v == "false" || v == "off") return false;
  throw std::runtime_error("config key '" + key + "': bad boolean '" + v + "'");
}

}  // namespace

void apply_config_entry(PipelineConfig& cfg, const std::string& key,
                        const std::string& value) {
  if (key == "mode") cfg.mode = parse_mode(value);
  else if (key == "serial") cfg.serial = to_bool(key, value);
  else if (key == "loop_closure") cfg.loop_closure = to_bool(key, value);
  else if (key == "build_map") cfg.build_map = to_bool(key, value);
  else if (key == "calib_frames") cfg.calib_frames = to_int(key, value);
  else if (key == "voxel_leaf") cfg.voxel_leaf = to_double(key, value);
  else if (key == "map_leaf") cfg.map_leaf = to_double(key, value);
  else if (key == "divergence_norm") cfg.divergence_norm = to_double(key, value);
  else if (key == "d_th") cfg.features.d_th = to_double(key, value);
  else if (key == "k_neigh") cfg.features.k_neigh = to_int(key, value);
  else if (key == "near_range") cfg.features.near_range = to_double(key, value);
  else if (key == "tau_e") cfg.features.tau_e = to_int(key, value);
  else if (key == "plane_ratio") cfg.features.plane_ratio = to_double(key, value);
  else if (key == "plane_residual") cfg.features.plane_residual = to_double(key, value);
  else if (key == "corner_angle_deg") cfg.features.corner_angle_deg = to_double(key, value);
  else if (key == "tau") cfg.swo.tau = to_int(key, value);
  else if (key == "key_angle_deg") cfg.swo.key_angle_deg = to_double(key, value);
  else if (key == "key_dt") cfg.swo.key_dt = to_double(key, value);
  else if (key == "max_outer_iters") cfg.swo.max_outer_iters = to_int(key, value);
  else if (key == "max_inner_iters") cfg.swo.max_inner_iters = to_int(key, value);
  else if (key == "huber_delta") cfg.swo.huber_delta = to_double(key, value);
  else if (key == "lidar_sigma") cfg.swo.lidar_sigma = to_double(key, value);
  else if (key == "corr_radius") cfg.swo.corr.radius = to_double(key, value);
  else if (key == "edge_neighbors") cfg.swo.corr.edge_neighbors = to_int(key, value);
  else if (key == "edge_max_range") cfg.edge_max_range = to_double(key, value);
  else if (key == "sigma_g") cfg.swo.imu_noise.sigma_g = to_double(key, value);
  else if (key == "sigma_a") cfg.swo.imu_noise.sigma_a = to_double(key, value);
  else if (key == "sigma_bg_walk") cfg.swo.imu_noise.sigma_bg_walk = to_double(key, value);
  else if (key == "sigma_ba_walk") cfg.swo.imu_noise.sigma_ba_walk = to_double(key, value);
  else if (key == "loop_radius") cfg.loop.search_radius = to_double(key, value);
  else if (key == "loop_min_gap") cfg.loop.min_gap = to_int(key, value);
  else if (key == "loop_max_fitness") cfg.loop.max_fitness = to_double(key, value);
  else if (key == "loop_min_inliers") cfg.loop.min_inliers = static_cast<size_t>(to_int(key, value));
  else if (key == "gravity_z") cfg.gravity = Vec3(0, 0, to_double(key, value));
  else throw std::runtime_error("unknown config key '" + key + "'");
}

PipelineConfig load_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open config file " + path);
  PipelineConfig cfg;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const size_t a = line.find_first_not_of(" \t\r");
    if (a == std::string::npos) continue;
    const size_t b = line.find_last_not_of(" \t\r");
    line = line.substr(a, b - a + 1);
    const size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw std::runtime_error(path + ":" + std::to_string(lineno) +
                               ": expected key=value");
    }
    auto trim = [](std::string s) {
      const size_t x = s.find_first_not_of(" \t");
      const size_t y = s.find_last_not_of(" \t");
      return x == std::string::npos ? std::string() : s.substr(x, y - x + 1);
    };
    apply_config_entry(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return cfg;
}

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

// Index of the last sample at or before t (clamped to the first sample).
size_t imu_floor(const std::vector<ImuSample>& imu, double t) {
  auto it = std::upper_bound(imu.begin(), imu.end(), t,
                             [](double x, const ImuSample& s) { return x < s.t; });
  if (it != imu.begin()) --it;
  return static_cast<size_t>(it - imu.begin());
}

// Index of the first sample at or after t (clamped to the last sample).
size_t imu_ceil(const std::vector<ImuSample>& imu, double t) {
  auto it = std::lower_bound(imu.begin(), imu.end(), t,
                             [](const ImuSample& s, double x) { return s.t < x; });
  if (it == imu.end()) --it;
  return static_cast<size_t>(it - imu.begin());
}

// Deskew feature points (IMU frame, own emission times) into the body frame
// at the sample just before t_end. The interpolated relative motion must be
// the true one — including carried velocity and gravity — so it is rebuilt
// from state predictions, not from the gravity-free preintegration deltas.
void undistort_features(FeatureCloud& cloud, const std::vector<ImuSample>& imu,
                        size_t kf_idx, const NavState& kf_state, double t_start,
                        double t_end, const Vec3& gravity,
                        const ImuNoiseParams& noise) {
  const size_t lo = std::max(imu_floor(imu, t_start), kf_idx);
  const size_t hi = std::max(imu_ceil(imu, t_end), lo + 1);
  const size_t tgt = std::min(std::max(imu_floor(imu, t_end), lo), hi);
  if (hi >= imu.size()) return;

  auto advance = [&](const NavState& from, size_t a, size_t b) {
    if (b <= a) return from;
    const std::vector<ImuSample> seg(imu.begin() + a, imu.begin() + b + 1);
    return predict_state(from, preintegrate(seg, from.ba, from.bg, noise),
                         gravity);
  };
  const NavState s_lo = advance(kf_state, kf_idx, lo);
  const NavState s_hi = advance(s_lo, lo, hi);
  const NavState s_tgt = advance(s_lo, lo, tgt);

  const std::vector<ImuSample> span(imu.begin() + lo, imu.begin() + hi + 1);
  PreintegratedImu motion =
      preintegrate(span, kf_state.ba, kf_state.bg, noise);
  motion.delta_q = (s_lo.q.conjugate() * s_hi.q).normalized();
  motion.delta_p = s_lo.q.conjugate() * (s_hi.p - s_lo.p);

  // Rigid change of frame from the interval end to the target sample.
  const Quat q_rel = s_tgt.q.conjugate() * s_hi.q;
  const Vec3 p_rel = s_tgt.q.conjugate() * (s_hi.p - s_tgt.p);

  auto deskew = [&](std::vector<FeaturePoint>& pts) {
    if (pts.empty()) return;
    Scan s;
    s.t_start = motion.t_start;
    s.t_end = motion.t_end;
    for (const auto& fp : pts) s.points.push_back({fp.t, fp.p, 0});
    s = undistort_scan(s, motion);
    for (size_t i = 0; i < pts.size(); ++i) {
      pts[i].p = q_rel * s.points[i].p + p_rel;
    }
  };
  deskew(cloud.edges);
  deskew(cloud.planes);
}

struct Frame {
  double t_start = 0;
  double t_end = 0;
  Scan v;  // spinning slice (empty in HI)
  Scan h;  // solid-state slice (empty in VI)
};

}  // namespace

EvalMetrics evaluate(const std::vector<TimedPose>& traj,
                     const std::vector<TimedPose>& ground_truth) {
  if (traj.empty() || ground_truth.empty()) {
    throw std::invalid_argument("evaluate: empty trajectory");
  }
  EvalMetrics m;
  const Vec3 est_closure = traj.back().pose.t - traj.front().pose.t;
  const Vec3 gt_closure = ground_truth.back().pose.t - ground_truth.front().pose.t;
  m.end_to_end_error_m = (est_closure - gt_closure).norm();

  // Nearest-timestamp association within 10 ms.
  std::vector<std::pair<const TimedPose*, const TimedPose*>> pairs;
  for (const auto& e : traj) {
    auto it = std::lower_bound(
        ground_truth.begin(), ground_truth.end(), e.t,
        [](const TimedPose& g, double t) { return g.t < t; });
    const TimedPose* best = nullptr;
    double best_dt = 0.01 + 1e-12;
    for (auto c : {it, it == ground_truth.begin() ? it : it - 1}) {
      if (c == ground_truth.end()) continue;
      const double dt = std::abs(c->t - e.t);
      if (dt < best_dt) {
        best_dt = dt;
        best = &*c;
      }
    }
    if (best) pairs.emplace_back(&e, best);
  }
  if (pairs.empty()) throw std::runtime_error("evaluate: no associable pairs");
  m.pairs = pairs.size();

  // Rigid alignment at the first associated pose.
  const Pose T_align = pairs.front().second->pose *
                       pairs.front().first->pose.inverse();
  double sq = 0;
  for (const auto& [e, g] : pairs) sq += (T_align * e->pose.t - g->pose.t).squaredNorm();
  m.ate_rmse_m = std::sqrt(sq / pairs.size());
  return m;
}

void export_map(const std::vector<LabeledPoint>& map, const std::string& path) {
  if (map.empty()) throw std::invalid_argument("export_map: empty map");
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("export_map: cannot open " + path);
  os << "ply\nformat binary_little_endian 1.0\nelement vertex " << map.size()
     << "\nproperty float x\nproperty float y\nproperty float z\n"
        "property uchar label\nend_header\n";
  for (const auto& lp : map) {
    const float xyz[3] = {static_cast<float>(lp.p.x()),
                          static_cast<float>(lp.p.y()),
                          static_cast<float>(lp.p.z())};
    os.write(reinterpret_cast<const char*>(xyz), sizeof(xyz));
    os.write(reinterpret_cast<const char*>(&lp.label), 1);
  }
  if (!os) throw std::runtime_error("export_map: write failed for " + path);
}

std::vector<LabeledPoint> read_map(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("read_map: cannot open " + path);
  std::string line;
  size_t n = 0;
  while (std::getline(is, line)) {
    if (line.rfind("element vertex ", 0) == 0) n = std::stoul(line.substr(15));
    if (line == "end_header") break;
  }
  std::vector<LabeledPoint> out(n);
  for (auto& lp : out) {
    float xyz[3];
    is.read(reinterpret_cast<char*>(xyz), sizeof(xyz));
    is.read(reinterpret_cast<char*>(&lp.label), 1);
    lp.p = Vec3(xyz[0], xyz[1], xyz[2]);
  }
  if (!is) throw std::runtime_error("read_map: truncated file " + path);
  return out;
}

RunReport run_pipeline(const Dataset& ds, const PipelineConfig& cfg) {
  RunReport rep;
  const bool use_v = cfg.mode != RunMode::HI;
  const bool use_h = cfg.mode != RunMode::VI;
  if (use_v && !ds.spinning) {
    throw std::runtime_error("mode requires a spinning stream");
  }
  if (use_h && !ds.solid_state) {
    throw std::runtime_error("mode requires a solid-state stream");
  }
  if (ds.imu.size() < 2) throw std::runtime_error("IMU stream too short");

  // --- Extrinsics: dataset-provided or GICP self-calibration. ---
  ExtrinsicSet extr;
  extr.T_h_to_i = ds.T_h_to_i.value_or(Pose::identity());
  if (use_v && use_h) {
    if (cfg.calib_frames > 0) {
      std::vector<Scan> v_scans, h_scans;
      const size_t n = static_cast<size_t>(cfg.calib_frames);
      for (size_t i = 0; i < n && i < ds.spinning->scans.size(); ++i) {
        v_scans.push_back(ds.load_scan(*ds.spinning, i));
      }
      for (size_t i = 0; i < n && i < ds.solid_state->scans.size(); ++i) {
        h_scans.push_back(ds.load_scan(*ds.solid_state, i));
      }
      const auto v_pts = accumulate_frames(v_scans, v_scans.size());
      const auto h_pts = accumulate_frames(h_scans, h_scans.size());
      extr.T_v_to_h = gicp_align(voxel_downsample(v_pts, 0.1),
                                 voxel_downsample(h_pts, 0.1),
                                 Pose::identity(), cfg.gicp)
                          .transform;
    } else {
      extr.T_v_to_h = ds.T_v_to_h.value_or(Pose::identity());
    }
  } else {
    extr.T_v_to_h = ds.T_v_to_h.value_or(Pose::identity());
  }

  // --- Frame stream: spinning-paced with aligned solid-state slices. ---
  // Frames ending after the last IMU sample cannot be undistorted.
  const double imu_end = ds.imu.empty() ? 0 : ds.imu.back().t;
  std::vector<Frame> frames;
  if (use_v) {
    AlignmentQueue queue;
    size_t h_next = 0;
    for (size_t i = 0; i < ds.spinning->scans.size(); ++i) {
      Frame f;
      f.v = ds.load_scan(*ds.spinning, i);
      f.t_start = f.v.t_start;
      f.t_end = f.v.t_end;
      if (f.t_end > imu_end) break;
      if (use_h) {
        while (h_next < ds.solid_state->scans.size() &&
               ds.solid_state->scans[h_next].t_start < f.t_end) {
          queue.push(ds.load_scan(*ds.solid_state, h_next));
          ++h_next;
        }
        f.h = queue.align(f.v);
      }
      frames.push_back(std::move(f));
    }
  } else {
    for (size_t i = 0; i < ds.solid_state->scans.size(); ++i) {
      Frame f;
      f.h = ds.load_scan(*ds.solid_state, i);
      f.t_start = f.h.t_start;
      f.t_end = f.h.t_end;
      if (f.t_end > imu_end) break;
      frames.push_back(std::move(f));
    }
  }

  // --- Odometry state. ---
  NavState kf_state;  // state at the last keyframe
  size_t kf_imu_idx = frames.empty() ? 0 : imu_floor(ds.imu, frames[0].t_start);
  double kf_time = ds.imu[kf_imu_idx].t;
  bool have_kf = false;

  std::deque<Keyframe> window;
  MarginalPrior prior;
  LocalFeatureMap local_map(20);
  PoseGraph graph;
  std::map<int, std::vector<Vec3>> kf_clouds;
  int kf_counter = 0;
  NavState cur;

  for (size_t fi = 0; fi < frames.size(); ++fi) {
    const Frame& f = frames[fi];
    FrameTiming timing;
    FrameCounts counts;
    counts.raw_v = f.v.points.size();
    counts.raw_h = f.h.points.size();

    // Pre-processing: preintegrate from the last keyframe and predict.
    const auto t_pre = Clock::now();
    const size_t cur_imu_idx =
        std::max(imu_floor(ds.imu, f.t_end), kf_imu_idx + 1);
    const std::vector<ImuSample> kf_samples(ds.imu.begin() + kf_imu_idx,
                                            ds.imu.begin() + cur_imu_idx + 1);
    PreintegratedImu delta =
        preintegrate(kf_samples, kf_state.ba, kf_state.bg, cfg.swo.imu_noise);
    // The dataset contract is that motion starts from rest, so predicting
    // from the zero initial state is valid before the first keyframe too.
    NavState pred = predict_state(kf_state, delta, cfg.gravity);
    timing.pre_ms = ms_since(t_pre);

    // Features: extract per sensor, merge into the IMU frame, deskew,
    // downsample.
    const auto t_feat = Clock::now();
    FeatureCloud f_v, f_h;
    f_v.frame = FrameId::Spinning;
    f_h.frame = FrameId::SolidState;
    if (use_v && !f.v.points.empty()) {
      f_v = extract_features(f.v, SensorKind::Spinning, cfg.features);
    }
    bool bad_h = true;
    if (use_h && !f.h.points.empty()) {
      f_h = extract_features(f.h, SensorKind::SolidState, cfg.features);
      bad_h = detect_bad_frame(f_h, cfg.features);
      if (bad_h) ++rep.bad_frames;
      // The rosette resamples creases differently every sweep, so its
      // corner points scatter around the true line; with the spinning
      // sensor supplying stable edges, fuse only solid-state planes.
      if (use_v) f_h.edges.clear();
    }
    FeatureCloud merged = merge_features(f_v, f_h, extr, bad_h);
    double deskew_ms = 0;
    {
      const auto t0 = Clock::now();
      undistort_features(merged, ds.imu, kf_imu_idx, kf_state, f.t_start,
                         f.t_end, cfg.gravity, cfg.swo.imu_noise);
      deskew_ms = ms_since(t0);
    }
    // Depth-discontinuity edges move with the viewpoint, and corner
    // localization degrades with range (ring sample spacing grows), so
    // keep only nearby corner edges for registration.
    std::erase_if(merged.edges, [&cfg](const FeaturePoint& p) {
      return p.kind == EdgeKind::Break || p.p.norm() > cfg.edge_max_range;
    });
    merged = voxel_downsample(merged, cfg.voxel_leaf);
    counts.edges = merged.edges.size();
    counts.planes = merged.planes.size();
    timing.pre_ms += deskew_ms;
    timing.feat_ms = ms_since(t_feat) - deskew_ms;

    // Keyframe gate.
    const double drift_angle =
        have_kf ? rotation_angle(kf_state.q, pred.q) : 0.0;
    const double dt_kf = ds.imu[cur_imu_idx].t - kf_time;
    const bool is_kf =
        !have_kf || select_keyframe(drift_angle, dt_kf, cfg.swo);

    if (is_kf) {
      const auto t_opt = Clock::now();
      Keyframe kf;
      kf.k = kf_counter;
      kf.t = ds.imu[cur_imu_idx].t;
      kf.features = merged;
      kf.delta = delta;
      kf.guess = pred;

      if (static_cast<int>(window.size()) >= cfg.swo.tau) {
        std::vector<Keyframe> wvec(window.begin(), window.end());
        std::vector<NavState> wstates;
        for (const auto& w : wvec) wstates.push_back(w.guess);
        prior = marginalize_oldest(wvec, wstates, local_map, prior,
                                   cfg.gravity, cfg.swo);
        window.pop_front();
      }
      window.push_back(kf);

      std::vector<Keyframe> wvec(window.begin(), window.end());
      SwoReport swo_rep;
      std::vector<NavState> states;
      try {
        states = optimize_window(wvec, local_map, prior, cfg.gravity,
                                 cfg.swo, &swo_rep);
      } catch (const std::runtime_error&) {
        rep.diverged = true;
        rep.last_good_time = have_kf ? kf_time : f.t_start;
        break;
      }
      for (size_t i = 0; i < window.size(); ++i) window[i].guess = states[i];
      cur = states.back();
      kf_state = cur;
      kf_imu_idx = cur_imu_idx;
      kf_time = ds.imu[cur_imu_idx].t;
      have_kf = true;
      ++rep.keyframes;

      local_map.insert(window.back(), cur);
      timing.opt_ms = ms_since(t_opt);

      // Global backend.
      add_keyframe_node(graph, kf_counter, cur);
      if (cfg.loop_closure) {
        std::vector<Vec3> cloud;
        for (const auto& p : merged.edges) cloud.push_back(p.p);
        for (const auto& p : merged.planes) cloud.push_back(p.p);
        kf_clouds[kf_counter] = voxel_downsample(cloud, cfg.map_leaf);
        if (auto loop = detect_loop(graph, kf_clouds, kf_counter, cfg.loop)) {
          graph.edges.push_back(*loop);
          const auto opt = optimize_graph(graph);
          const Pose old_last = graph.nodes.at(kf_counter);
          for (auto& [id, pose] : graph.nodes) pose = opt.at(id);
          const Pose corr = opt.at(kf_counter) * old_last.inverse();
          cur.p = opt.at(kf_counter).t;
          cur.q = opt.at(kf_counter).q;
          cur.v = corr.q * cur.v;
          kf_state = cur;
          for (auto& w : window) {
            const Pose fixed = corr * w.guess.pose();
            w.guess.p = fixed.t;
            w.guess.q = fixed.q;
            w.guess.v = corr.q * w.guess.v;
          }
          prior = MarginalPrior{};
          ++rep.loop_closures;
        }
      }

      if (cfg.build_map) {
        const Pose T = cur.pose();
        for (const auto& p : merged.edges) rep.map.push_back({T * p.p, 1});
        for (const auto& p : merged.planes) rep.map.push_back({T * p.p, 0});
      }
      ++kf_counter;
    } else {
      cur = pred;
    }

    // Health check.
    const bool finite = cur.p.allFinite() && cur.v.allFinite() &&
                        cur.q.coeffs().allFinite();
    if (!finite || cur.p.norm() > cfg.divergence_norm ||
        cur.v.norm() > cfg.divergence_norm) {
      rep.diverged = true;
      rep.last_good_time = rep.trajectory.empty() ? f.t_start
                                                  : rep.trajectory.back().t;
      break;
    }

    rep.trajectory.push_back({f.t_end, cur.pose()});
    rep.timing.push_back(timing);
    rep.counts.push_back(counts);
  }

  if (!rep.trajectory.empty() && !ds.ground_truth.empty()) {
    try {
      const EvalMetrics m = evaluate(rep.trajectory, ds.ground_truth);
      rep.end_to_end_error_m = m.end_to_end_error_m;
      rep.ate_rmse_m = m.ate_rmse_m;
    } catch (const std::runtime_error&) {
      // No associable pairs; leave metrics unset.
    }
  }
  return rep;
}

}  // namespace mml
