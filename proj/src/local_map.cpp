#include "mml/local_map.hpp"

namespace mml {

void LocalFeatureMap::insert(const Keyframe& kf, const NavState& optimized) {
  const Pose T = optimized.pose();
  for (const auto& fp : kf.features.edges) edges_.push_back({T * fp.p, kf.k});
  for (const auto& fp : kf.features.planes) planes_.push_back({T * fp.p, kf.k});
  const int oldest = kf.k - w_ + 1;
  auto evict = [&](std::vector<Entry>& v) {
    v.erase(std::remove_if(v.begin(), v.end(),
                           [&](const Entry& e) { return e.k < oldest; }),
            v.end());
  };
  evict(edges_);
  evict(planes_);
  rebuild();
}

void LocalFeatureMap::rebuild() {
  std::vector<Vec3> e, p;
  e.reserve(edges_.size());
  p.reserve(planes_.size());
  for (const auto& en : edges_) e.push_back(en.p);
  for (const auto& en : planes_) p.push_back(en.p);
  edge_tree_.build(std::move(e));
  plane_tree_.build(std::move(p));
}

}  // namespace mml
