#include <cstdio>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "json.hpp"
#include "mml/pipeline.hpp"
#include "mml/scenes.hpp"

using namespace mml;

namespace {

void print_pose(const char* name, const Pose& T) {
  std::printf("%s t=(%.4f %.4f %.4f) q=(%.6f %.6f %.6f %.6f)\n", name,
              T.t.x(), T.t.y(), T.t.z(), T.q.w(), T.q.x(), T.q.y(), T.q.z());
}

nlohmann::json report_json(const RunReport& rep) {
  nlohmann::json j;
  j["frames"] = rep.trajectory.size();
  j["keyframes"] = rep.keyframes;
  j["bad_frames"] = rep.bad_frames;
  j["loop_closures"] = rep.loop_closures;
  j["diverged"] = rep.diverged;
  if (rep.diverged) j["last_good_time"] = rep.last_good_time;
  if (rep.end_to_end_error_m >= 0) {
    j["end_to_end_error_m"] = rep.end_to_end_error_m;
    j["ate_rmse_m"] = rep.ate_rmse_m;
  }
  double pre = 0, feat = 0, opt = 0;
  for (const auto& t : rep.timing) {
    pre += t.pre_ms;
    feat += t.feat_ms;
    opt += t.opt_ms;
  }
  const double n = std::max<size_t>(rep.timing.size(), 1);
  j["mean_pre_ms"] = pre / n;
  j["mean_feat_ms"] = feat / n;
  j["mean_opt_ms"] = opt / n;
  size_t edges = 0, planes = 0;
  for (const auto& c : rep.counts) {
    edges += c.edges;
    planes += c.planes;
  }
  j["mean_edges_per_frame"] = double(edges) / n;
  j["mean_planes_per_frame"] = double(planes) / n;
  return j;
}

PipelineConfig make_config(const std::string& config_path,
                           const std::string& mode,
                           const std::vector<std::string>& overrides,
                           bool serial) {
  PipelineConfig cfg;
  if (!config_path.empty()) cfg = load_config(config_path);
  if (!mode.empty()) cfg.mode = parse_mode(mode);
  for (const auto& kv : overrides) {
    const size_t eq = kv.find('=');
    if (eq == std::string::npos) {
      throw std::runtime_error("--set expects key=value, got '" + kv + "'");
    }
    apply_config_entry(cfg, kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (serial) cfg.serial = true;
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-modal LiDAR-inertial odometry and mapping"};
  app.require_subcommand(1);

  // simulate
  auto* sim = app.add_subcommand("simulate", "Synthesize a dataset");
  std::string scene = "hall", out_dir;
  DatasetSpec spec;
  double duration = 0;
  sim->add_option("--scene", scene, "hall|corridor|room");
  sim->add_option("--out", out_dir, "Output dataset directory")->required();
  sim->add_option("--duration", duration, "Trajectory duration, s");
  sim->add_option("--seed", spec.seed);
  sim->add_option("--range-sigma", spec.range_sigma, "LiDAR range noise, m");
  sim->add_option("--imu-sigma-g", spec.imu_sigma_g);
  sim->add_option("--imu-sigma-a", spec.imu_sigma_a);
  sim->add_option("--lidar-rate", spec.lidar_rate_hz);
  sim->add_option("--imu-rate", spec.imu_rate_hz);
  bool no_spin = false, no_ss = false;
  sim->add_flag("--no-spinning", no_spin);
  sim->add_flag("--no-solid-state", no_ss);

  // calibrate
  auto* cal = app.add_subcommand("calibrate", "Estimate the spinning-to-solid-state extrinsic");
  std::string cal_dir;
  int cal_frames = 5;
  cal->add_option("--data", cal_dir)->required();
  cal->add_option("--frames", cal_frames, "Stationary frames to accumulate");

  // run
  auto* run = app.add_subcommand("run", "Run odometry and mapping");
  std::string run_dir, config_path, mode, traj_out, map_out, report_out;
  std::vector<std::string> overrides;
  bool serial = false;
  run->add_option("--data", run_dir)->required();
  run->add_option("--config", config_path, "Flat key=value config file");
  run->add_option("--mode", mode, "hvi|vi|hi");
  run->add_option("--set", overrides, "Override config entries (key=value)");
  run->add_flag("--serial", serial, "Force single-thread execution");
  run->add_option("--traj-out", traj_out, "Trajectory CSV output");
  run->add_option("--map-out", map_out, "World map output (binary PLY)");
  run->add_option("--report-out", report_out, "Run report JSON output");

  // evaluate
  auto* ev = app.add_subcommand("evaluate", "Compare a trajectory against ground truth");
  std::string ev_traj, ev_gt;
  ev->add_option("--traj", ev_traj)->required();
  ev->add_option("--gt", ev_gt)->required();

  // export-map
  auto* ex = app.add_subcommand("export-map", "Run odometry and export the world map");
  std::string ex_dir, ex_out, ex_config, ex_mode;
  std::vector<std::string> ex_overrides;
  ex->add_option("--data", ex_dir)->required();
  ex->add_option("--out", ex_out)->required();
  ex->add_option("--config", ex_config);
  ex->add_option("--mode", ex_mode);
  ex->add_option("--set", ex_overrides);

  CLI11_PARSE(app, argc, argv);

  try {
    if (sim->parsed()) {
      spec.spinning = !no_spin;
      spec.solid_state = !no_ss;
      World world;
      if (scene == "hall") {
        world = hall_world();
        build_dataset(world, hall_trajectory(duration > 0 ? duration : 50),
                      out_dir, spec);
      } else if (scene == "corridor") {
        world = corridor_world();
        build_dataset(world, corridor_trajectory(duration > 0 ? duration : 15),
                      out_dir, spec);
      } else if (scene == "room") {
        world = room_world();
        build_dataset(world, room_trajectory(duration > 0 ? duration : 6),
                      out_dir, spec);
      } else {
        std::cerr << "unknown scene '" << scene << "'\n";
        return 1;
      }
      std::printf("dataset written to %s\n", out_dir.c_str());
    } else if (cal->parsed()) {
      const Dataset ds = read_dataset(cal_dir);
      if (!ds.spinning || !ds.solid_state) {
        std::cerr << "calibration needs both LiDAR streams\n";
        return 1;
      }
      std::vector<Scan> v_scans, h_scans;
      for (int i = 0; i < cal_frames && i < int(ds.spinning->scans.size()); ++i)
        v_scans.push_back(ds.load_scan(*ds.spinning, i));
      for (int i = 0; i < cal_frames && i < int(ds.solid_state->scans.size()); ++i)
        h_scans.push_back(ds.load_scan(*ds.solid_state, i));
      const auto res = gicp_align(accumulate_frames(v_scans, v_scans.size()),
                                  accumulate_frames(h_scans, h_scans.size()),
                                  Pose::identity());
      print_pose("T_v_to_h", res.transform);
      std::printf("fitness %.6g m^2, %d iterations\n", res.fitness,
                  res.iterations);
    } else if (run->parsed() || ex->parsed()) {
      const bool exporting = ex->parsed();
      PipelineConfig cfg =
          exporting ? make_config(ex_config, ex_mode, ex_overrides, false)
                    : make_config(config_path, mode, overrides, serial);
      if (exporting) cfg.build_map = true;
      const Dataset ds = read_dataset(exporting ? ex_dir : run_dir);
      const RunReport rep = run_pipeline(ds, cfg);
      if (exporting) {
        export_map(rep.map, ex_out);
        std::printf("map with %zu points written to %s\n", rep.map.size(),
                    ex_out.c_str());
      } else {
        if (!traj_out.empty()) write_trajectory_csv(traj_out, rep.trajectory);
        if (!map_out.empty() && !rep.map.empty()) export_map(rep.map, map_out);
        if (!report_out.empty()) {
          std::ofstream os(report_out);
          os << report_json(rep).dump(2) << "\n";
        }
        std::cout << report_json(rep).dump(2) << "\n";
      }
      if (rep.diverged) return 2;
    } else if (ev->parsed()) {
      const auto traj = read_trajectory_csv(ev_traj);
      const auto gt = read_trajectory_csv(ev_gt);
      const EvalMetrics m = evaluate(traj, gt);
      std::printf("end_to_end_error_m %.6f\nate_rmse_m %.6f\npairs %zu\n",
                  m.end_to_end_error_m, m.ate_rmse_m, m.pairs);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
