#pragma once

#include <algorithm>
#include <numeric>
#include <queue>
#include <span>
#include <vector>

#include "lwsep/spatial/voxel_grid.hpp"

namespace lwsep::spatial {

/// Static 3-d tree for exact k-nearest-neighbor queries. Ties in distance
/// are broken by point index, so results are deterministic.
class KdTree {
 public:
  explicit KdTree(std::span<const Point3> points, std::size_t leaf_size = 12)
      : points_(points), leaf_size_(leaf_size), index_(points.size()) {
    std::iota(index_.begin(), index_.end(), 0u);
    if (!points.empty()) build(0, static_cast<std::uint32_t>(points.size()));
  }

  /// The k nearest points to `q` sorted by (distance, index). When
  /// `exclude` is a valid index that point is skipped.
  std::vector<Neighbor> knn(const Point3& q, std::size_t k,
                            std::uint32_t exclude = std::numeric_limits<std::uint32_t>::max()) const {
    std::priority_queue<Neighbor> heap;  // max-heap on (dist2, index)
    if (k > 0 && !nodes_.empty()) search(0, q, k, exclude, heap);
    std::vector<Neighbor> out;
    out.reserve(heap.size());
    while (!heap.empty()) {
      out.push_back(heap.top());
      heap.pop();
    }
    std::reverse(out.begin(), out.end());
    return out;
  }

 private:
  struct Node {
    std::uint32_t begin, end;
    int axis = -1;  // -1 for leaves
    double split = 0.0;
    std::uint32_t left = 0, right = 0;
  };

  std::uint32_t build(std::uint32_t begin, std::uint32_t end) {
    const auto id = static_cast<std::uint32_t>(nodes_.size());
    nodes_.push_back({begin, end});
    if (end - begin <= leaf_size_) return id;
    Eigen::Vector3d lo = Eigen::Vector3d::Constant(std::numeric_limits<double>::infinity());
    Eigen::Vector3d hi = -lo;
    for (auto i = begin; i < end; ++i) {
      lo = lo.cwiseMin(points_[index_[i]]);
      hi = hi.cwiseMax(points_[index_[i]]);
    }
    int axis = 0;
    (hi - lo).maxCoeff(&axis);
    const auto mid = begin + (end - begin) / 2;
    std::nth_element(index_.begin() + begin, index_.begin() + mid, index_.begin() + end,
                     [&](std::uint32_t a, std::uint32_t b) { return points_[a][axis] < points_[b][axis]; });
    const double split = points_[index_[mid]][axis];
    const auto left = build(begin, mid);
    const auto right = build(mid, end);
    nodes_[id].axis = axis;
    nodes_[id].split = split;
    nodes_[id].left = left;
    nodes_[id].right = right;
    return id;
  }

  void search(std::uint32_t node_id, const Point3& q, std::size_t k, std::uint32_t exclude,
              std::priority_queue<Neighbor>& heap) const {
    const Node& node = nodes_[node_id];
    if (node.axis < 0) {
      for (auto i = node.begin; i < node.end; ++i) {
        const auto idx = index_[i];
        if (idx == exclude) continue;
        const Neighbor cand{idx, (points_[idx] - q).squaredNorm()};
        if (heap.size() < k) {
          heap.push(cand);
        } else if (cand < heap.top()) {
          heap.pop();
          heap.push(cand);
        }
      }
      return;
    }
    const double diff = q[node.axis] - node.split;
    const auto near = diff < 0 ? node.left : node.right;
    const auto far = diff < 0 ? node.right : node.left;
    search(near, q, k, exclude, heap);
    // <= keeps equal-distance candidates reachable for index tie-breaking.
    if (heap.size() < k || diff * diff <= heap.top().dist2) search(far, q, k, exclude, heap);
  }

  std::span<const Point3> points_;
  std::size_t leaf_size_;
  std::vector<std::uint32_t> index_;
  std::vector<Node> nodes_;
};

}  // namespace lwsep::spatial
