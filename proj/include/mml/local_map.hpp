#pragma once

#include "mml/imu_preint.hpp"
#include "mml/kdtree.hpp"
#include "mml/types.hpp"

namespace mml {

// One admitted keyframe: deskewed IMU-frame features, the preintegrated
// link from the previous keyframe, and the propagated initial guess.
struct Keyframe {
  int k = 0;
  double t = 0;
  FeatureCloud features;   // frame = Imu, deskewed to the keyframe time
  PreintegratedImu delta;  // from the previous keyframe
  NavState guess;
};

// World-frame edge/plane points from the last W keyframes, kd-indexed.
class LocalFeatureMap {
 public:
  explicit LocalFeatureMap(int window_keyframes = 20) : w_(window_keyframes) {}

  // Transform kf features to world via the optimized state, insert, evict
  // contributions older than W keyframes, rebuild the indices.
  void insert(const Keyframe& kf, const NavState& optimized);

  const KdTree& edge_index() const { return edge_tree_; }
  const KdTree& plane_index() const { return plane_tree_; }
  size_t edge_count() const { return edge_tree_.size(); }
  size_t plane_count() const { return plane_tree_.size(); }

 private:
  struct Entry {
    Vec3 p;
    int k;
  };
  void rebuild();

  int w_;
  std::vector<Entry> edges_;
  std::vector<Entry> planes_;
  KdTree edge_tree_;
  KdTree plane_tree_;
};

inline LocalFeatureMap& update_local_map(LocalFeatureMap& map, const Keyframe& kf,
                                         const NavState& optimized) {
  map.insert(kf, optimized);
  return map;
}

}  // namespace mml
