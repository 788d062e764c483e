#include "mml/dataset.hpp"

#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace mml {

namespace {

constexpr size_t kPointBytes = 21;  // f64 t + 3*f32 xyz + u8 ring

void pack_point(const TimedPoint& pt, char* buf) {
  std::memcpy(buf, &pt.t, 8);
  float xyz[3] = {static_cast<float>(pt.p.x()), static_cast<float>(pt.p.y()),
                  static_cast<float>(pt.p.z())};
  std::memcpy(buf + 8, xyz, 12);
  buf[20] = static_cast<char>(pt.ring);
}

TimedPoint unpack_point(const char* buf) {
  TimedPoint pt;
  std::memcpy(&pt.t, buf, 8);
  float xyz[3];
  std::memcpy(xyz, buf + 8, 12);
  pt.p = Vec3(xyz[0], xyz[1], xyz[2]);
  pt.ring = static_cast<uint8_t>(buf[20]);
  return pt;
}

void write_scan_file(const std::string& path, const Scan& scan) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open for writing: " + path);
  std::vector<char> buf(scan.points.size() * kPointBytes);
  for (size_t i = 0; i < scan.points.size(); ++i) {
    pack_point(scan.points[i], buf.data() + i * kPointBytes);
  }
  f.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!f) throw std::runtime_error("write failed: " + path);
}

json pose_to_json(const Pose& p) {
  return json::array({p.t.x(), p.t.y(), p.t.z(), p.q.w(), p.q.x(), p.q.y(), p.q.z()});
}

Pose pose_from_json(const json& j) {
  if (!j.is_array() || j.size() != 7) {
    throw std::runtime_error("pose record must have 7 values (tx ty tz qw qx qy qz)");
  }
  return {Quat(j[3], j[4], j[5], j[6]), Vec3(j[0], j[1], j[2])};
}

json model_to_json(const SensorModel& m) {
  return {{"kind", m.kind == SensorKind::Spinning ? "spinning" : "solid_state"},
          {"h_fov_deg", m.h_fov_deg},
          {"v_fov_deg", m.v_fov_deg},
          {"channels_or_lines", m.channels_or_lines},
          {"rate_hz", m.rate_hz},
          {"points_per_sweep", m.points_per_sweep},
          {"range_max", m.range_max},
          {"range_noise_sigma", m.range_noise_sigma},
          {"pattern_seed", m.pattern_seed}};
}

SensorModel model_from_json(const json& j) {
  SensorModel m;
  m.kind = j.at("kind") == "spinning" ? SensorKind::Spinning : SensorKind::SolidState;
  m.h_fov_deg = j.at("h_fov_deg");
  m.v_fov_deg = j.at("v_fov_deg");
  m.channels_or_lines = j.at("channels_or_lines");
  m.rate_hz = j.at("rate_hz");
  m.points_per_sweep = j.at("points_per_sweep");
  m.range_max = j.at("range_max");
  m.range_noise_sigma = j.at("range_noise_sigma");
  m.pattern_seed = j.at("pattern_seed");
  return m;
}

json stream_to_json(const SensorStream& s) {
  json scans = json::array();
  for (const auto& meta : s.scans) {
    scans.push_back({{"file", meta.file}, {"t_start", meta.t_start}, {"t_end", meta.t_end}});
  }
  return {{"model", model_to_json(s.model)}, {"scans", scans}};
}

SensorStream stream_from_json(const json& j) {
  SensorStream s;
  s.model = model_from_json(j.at("model"));
  double prev = -1e300;
  for (const auto& e : j.at("scans")) {
    ScanMeta meta{e.at("file"), e.at("t_start"), e.at("t_end")};
    if (meta.t_start <= prev) {
      throw std::runtime_error("non-monotone scan start times in manifest: " +
                               meta.file);
    }
    prev = meta.t_start;
    s.scans.push_back(std::move(meta));
  }
  return s;
}

void require_file(const fs::path& p) {
  if (!fs::exists(p)) {
    throw std::runtime_error("manifest references missing file: " + p.string());
  }
}

}  // namespace

Scan Dataset::load_scan(const SensorStream& stream, size_t index) const {
  const ScanMeta& meta = stream.scans.at(index);
  const fs::path path = fs::path(dir) / meta.file;
  std::ifstream f(path, std::ios::binary | std::ios::ate);
  if (!f) throw std::runtime_error("cannot open scan file: " + path.string());
  const auto bytes = static_cast<size_t>(f.tellg());
  if (bytes % kPointBytes != 0) {
    throw std::runtime_error("truncated scan file " + path.string() +
                             ": trailing record at byte offset " +
                             std::to_string(bytes - bytes % kPointBytes));
  }
  f.seekg(0);
  std::vector<char> buf(bytes);
  f.read(buf.data(), static_cast<std::streamsize>(bytes));
  if (!f) throw std::runtime_error("read failed: " + path.string());
  Scan scan;
  scan.t_start = meta.t_start;
  scan.t_end = meta.t_end;
  scan.points.resize(bytes / kPointBytes);
  for (size_t i = 0; i < scan.points.size(); ++i) {
    scan.points[i] = unpack_point(buf.data() + i * kPointBytes);
  }
  return scan;
}

Dataset read_dataset(const std::string& dir) {
  const fs::path root(dir);
  const fs::path manifest_path = root / "manifest.json";
  std::ifstream mf(manifest_path);
  if (!mf) throw std::runtime_error("cannot open manifest: " + manifest_path.string());
  json j;
  try {
    mf >> j;
  } catch (const json::exception& e) {
    throw std::runtime_error("corrupt manifest " + manifest_path.string() + ": " + e.what());
  }

  Dataset ds;
  ds.dir = dir;
  if (j.contains("spinning")) {
    ds.spinning = stream_from_json(j["spinning"]);
    for (const auto& m : ds.spinning->scans) require_file(root / m.file);
  }
  if (j.contains("solid_state")) {
    ds.solid_state = stream_from_json(j["solid_state"]);
    for (const auto& m : ds.solid_state->scans) require_file(root / m.file);
  }
  if (j.contains("extrinsics")) {
    const auto& e = j["extrinsics"];
    if (e.contains("T_h_to_i")) ds.T_h_to_i = pose_from_json(e["T_h_to_i"]);
    if (e.contains("T_v_to_h")) ds.T_v_to_h = pose_from_json(e["T_v_to_h"]);
  }
  if (j.contains("gravity")) {
    const auto& g = j["gravity"];
    ds.gravity = Vec3(g.at(0), g.at(1), g.at(2));
  }

  const std::string imu_file = j.value("imu", "imu.csv");
  const fs::path imu_path = root / imu_file;
  require_file(imu_path);
  std::ifstream imu(imu_path);
  std::string line;
  std::getline(imu, line);  // header
  size_t lineno = 1;
  double prev_t = -1e300;
  while (std::getline(imu, line)) {
    ++lineno;
    if (line.empty()) continue;
    ImuSample s;
    if (std::sscanf(line.c_str(), "%lf,%lf,%lf,%lf,%lf,%lf,%lf", &s.t,
                    &s.gyro.x(), &s.gyro.y(), &s.gyro.z(), &s.accel.x(),
                    &s.accel.y(), &s.accel.z()) != 7) {
      throw std::runtime_error("corrupt IMU record at " + imu_path.string() +
                               ":" + std::to_string(lineno));
    }
    if (s.t <= prev_t) {
      throw std::runtime_error("non-monotone IMU timestamps at " +
                               imu_path.string() + ":" + std::to_string(lineno));
    }
    prev_t = s.t;
    ds.imu.push_back(s);
  }

  if (j.contains("ground_truth")) {
    const fs::path gt_path = root / j["ground_truth"].get<std::string>();
    require_file(gt_path);
    ds.ground_truth = read_trajectory_csv(gt_path.string());
  }
  return ds;
}

void write_dataset(const std::string& dir, const SensorModel* spin_model,
                   const std::vector<Scan>& spin_scans,
                   const SensorModel* ss_model, const std::vector<Scan>& ss_scans,
                   const std::vector<ImuSample>& imu,
                   const std::vector<TimedPose>& ground_truth,
                   const std::optional<Pose>& T_h_to_i,
                   const std::optional<Pose>& T_v_to_h, const Vec3& gravity) {
  const fs::path root(dir);
  fs::create_directories(root);

  json j;
  j["version"] = 1;
  j["gravity"] = {gravity.x(), gravity.y(), gravity.z()};

  auto emit_stream = [&](const char* name, const SensorModel& model,
                         const std::vector<Scan>& scans) {
    SensorStream stream;
    stream.model = model;
    for (size_t i = 0; i < scans.size(); ++i) {
      char fname[64];
      std::snprintf(fname, sizeof(fname), "%s_%06zu.bin", name, i);
      write_scan_file((root / fname).string(), scans[i]);
      stream.scans.push_back({fname, scans[i].t_start, scans[i].t_end});
    }
    j[name] = stream_to_json(stream);
  };
  if (spin_model) emit_stream("spinning", *spin_model, spin_scans);
  if (ss_model) emit_stream("solid_state", *ss_model, ss_scans);

  if (T_h_to_i || T_v_to_h) {
    json e;
    if (T_h_to_i) e["T_h_to_i"] = pose_to_json(*T_h_to_i);
    if (T_v_to_h) e["T_v_to_h"] = pose_to_json(*T_v_to_h);
    j["extrinsics"] = e;
  }

  {
    std::ofstream f(root / "imu.csv");
    if (!f) throw std::runtime_error("cannot write " + (root / "imu.csv").string());
    f << "t,wx,wy,wz,ax,ay,az\n";
    char buf[256];
    for (const auto& s : imu) {
      std::snprintf(buf, sizeof(buf),
                    "%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", s.t,
                    s.gyro.x(), s.gyro.y(), s.gyro.z(), s.accel.x(),
                    s.accel.y(), s.accel.z());
      f << buf;
    }
  }
  j["imu"] = "imu.csv";

  if (!ground_truth.empty()) {
    write_trajectory_csv((root / "groundtruth.csv").string(), ground_truth);
    j["ground_truth"] = "groundtruth.csv";
  }

  std::ofstream mf(root / "manifest.json");
  if (!mf) throw std::runtime_error("cannot write manifest in " + dir);
  mf << j.dump(2) << "\n";
}

std::vector<TimedPose> read_trajectory_csv(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open trajectory file: " + path);
  std::vector<TimedPose> out;
  std::string line;
  std::getline(f, line);  // header
  size_t lineno = 1;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.empty()) continue;
    double t, px, py, pz, qw, qx, qy, qz;
    if (std::sscanf(line.c_str(), "%lf,%lf,%lf,%lf,%lf,%lf,%lf,%lf", &t, &px,
                    &py, &pz, &qw, &qx, &qy, &qz) != 8) {
      throw std::runtime_error("corrupt trajectory record at " + path + ":" +
                               std::to_string(lineno));
    }
    out.push_back({t, Pose(Quat(qw, qx, qy, qz), Vec3(px, py, pz))});
  }
  return out;
}

void write_trajectory_csv(const std::string& path,
                          const std::vector<TimedPose>& traj) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write trajectory file: " + path);
  f << "t,px,py,pz,qw,qx,qy,qz\n";
  char buf[320];
  for (const auto& tp : traj) {
    std::snprintf(buf, sizeof(buf),
                  "%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", tp.t,
                  tp.pose.t.x(), tp.pose.t.y(), tp.pose.t.z(), tp.pose.q.w(),
                  tp.pose.q.x(), tp.pose.q.y(), tp.pose.q.z());
    f << buf;
  }
}

}  // namespace mml
