#pragma once

#include <algorithm>
#include <cstddef>
#include <queue>
#include <vector>

#include "mml/geom.hpp"

namespace mml {

// 3-D kd-tree over an owned copy of the points. Ties in distance break on
// the lower point index so queries are deterministic.
class KdTree {
 public:
  KdTree() = default;
  explicit KdTree(std::vector<Vec3> pts) { build(std::move(pts)); }

  void build(std::vector<Vec3> pts) {
    points_ = std::move(pts);
    nodes_.clear();
    std::vector<int> idx(points_.size());
    for (size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<int>(i);
    if (!idx.empty()) {
      nodes_.reserve(points_.size());
      root_ = build_rec(idx.data(), static_cast<int>(idx.size()), 0);
    } else {
      root_ = -1;
    }
  }

  size_t size() const { return points_.size(); }
  const std::vector<Vec3>& points() const { return points_; }

  // Indices of the k nearest points to query, closest first.
  std::vector<int> knn(const Vec3& query, int k) const {
    Heap heap;
    if (root_ >= 0) knn_rec(root_, query, k, heap);
    std::vector<int> out(heap.size());
    for (int i = static_cast<int>(heap.size()) - 1; i >= 0; --i) {
      out[i] = heap.top().second;
      heap.pop();
    }
    return out;
  }

  // All indices within radius, sorted by distance.
  std::vector<int> radius(const Vec3& query, double r) const {
    std::vector<std::pair<double, int>> found;
    if (root_ >= 0) radius_rec(root_, query, r * r, found);
    std::sort(found.begin(), found.end());
    std::vector<int> out;
    out.reserve(found.size());
    for (auto& f : found) out.push_back(f.second);
    return out;
  }

  int nearest(const Vec3& query) const {
    auto v = knn(query, 1);
    return v.empty() ? -1 : v[0];
  }

 private:
  struct Node {
    int index;
    int axis;
    int left = -1;
    int right = -1;
  };
  // (dist^2, index) max-heap; index tiebreak keeps results deterministic.
  using Heap =
      std::priority_queue<std::pair<double, int>, std::vector<std::pair<double, int>>>;

  int build_rec(int* idx, int n, int depth) {
    if (n <= 0) return -1;
    const int axis = depth % 3;
    const int mid = n / 2;
    std::nth_element(idx, idx + mid, idx + n, [&](int a, int b) {
      if (points_[a][axis] != points_[b][axis])
        return points_[a][axis] < points_[b][axis];
      return a < b;
    });
    Node node;
    node.index = idx[mid];
    node.axis = axis;
    const int self = static_cast<int>(nodes_.size());
    nodes_.push_back(node);
    const int left = build_rec(idx, mid, depth + 1);
    const int right = build_rec(idx + mid + 1, n - mid - 1, depth + 1);
    nodes_[self].left = left;
    nodes_[self].right = right;
    return self;
  }

  void knn_rec(int ni, const Vec3& q, int k, Heap& heap) const {
    const Node& node = nodes_[ni];
    const Vec3& p = points_[node.index];
    const double d2 = (p - q).squaredNorm();
    if (static_cast<int>(heap.size()) < k) {
      heap.emplace(d2, node.index);
    } else if (d2 < heap.top().first ||
               (d2 == heap.top().first && node.index < heap.top().second)) {
      heap.pop();
      heap.emplace(d2, node.index);
    }
    const double diff = q[node.axis] - p[node.axis];
    const int near = diff < 0 ? node.left : node.right;
    const int far = diff < 0 ? node.right : node.left;
    if (near >= 0) knn_rec(near, q, k, heap);
    if (far >= 0 &&
        (static_cast<int>(heap.size()) < k || diff * diff <= heap.top().first)) {
      knn_rec(far, q, k, heap);
    }
  }

  void radius_rec(int ni, const Vec3& q, double r2,
                  std::vector<std::pair<double, int>>& found) const {
    const Node& node = nodes_[ni];
    const Vec3& p = points_[node.index];
    const double d2 = (p - q).squaredNorm();
    if (d2 <= r2) found.emplace_back(d2, node.index);
    const double diff = q[node.axis] - p[node.axis];
    const int near = diff < 0 ? node.left : node.right;
    const int far = diff < 0 ? node.right : node.left;
    if (near >= 0) radius_rec(near, q, r2, found);
    if (far >= 0 && diff * diff <= r2) radius_rec(far, q, r2, found);
  }

  std::vector<Vec3> points_;
  std::vector<Node> nodes_;
  int root_ = -1;
};

}  // namespace mml
