#pragma once

#include <span>
#include <unordered_map>
#include <vector>

#include "lwsep/tile.hpp"

namespace lwsep {

/// Exhaustive, disjoint assignment of a tile's points to superpoints with
/// dense ids in [0, count()).
class SuperpointPartition {
 public:
  SuperpointPartition() = default;

  /// Builds a partition from arbitrary per-point labels. Ids are renumbered
  /// densely in order of first appearance.
  static SuperpointPartition from_labels(std::span<const std::uint32_t> labels,
                                         std::span<const Point3> points) {
    if (labels.size() != points.size()) throw Error("partition labels/points length mismatch");
    SuperpointPartition p;
    std::unordered_map<std::uint32_t, std::uint32_t> dense;
    p.ids_.resize(labels.size());
    for (std::size_t i = 0; i < labels.size(); ++i) {
      auto [it, inserted] = dense.try_emplace(labels[i], static_cast<std::uint32_t>(dense.size()));
      p.ids_[i] = it->second;
    }
    p.count_ = dense.size();
    p.recompute(points);
    return p;
  }

  std::size_t count() const { return count_; }
  std::size_t point_count() const { return ids_.size(); }
  std::uint32_t id(std::size_t point) const { return ids_[point]; }
  const std::vector<std::uint32_t>& ids() const { return ids_; }
  const std::vector<Point3>& centroids() const { return centroids_; }
  const std::vector<std::size_t>& sizes() const { return sizes_; }

  /// Point indices grouped by superpoint.
  std::vector<std::vector<std::uint32_t>> members() const {
    std::vector<std::vector<std::uint32_t>> m(count_);
    for (std::size_t s = 0; s < count_; ++s) m[s].reserve(sizes_[s]);
    for (std::uint32_t i = 0; i < ids_.size(); ++i) m[ids_[i]].push_back(i);
    return m;
  }

 private:
  void recompute(std::span<const Point3> points) {
    centroids_.assign(count_, Point3::Zero());
    sizes_.assign(count_, 0);
    for (std::size_t i = 0; i < ids_.size(); ++i) {
      centroids_[ids_[i]] += points[i];
      ++sizes_[ids_[i]];
    }
    for (std::size_t s = 0; s < count_; ++s) centroids_[s] /= static_cast<double>(sizes_[s]);
  }

  std::vector<std::uint32_t> ids_;
  std::size_t count_ = 0;
  std::vector<Point3> centroids_;
  std::vector<std::size_t> sizes_;
};

/// Checks that `p` is a valid partition of `n` points: ids dense in
/// [0, count), every superpoint non-empty, sizes summing to n.
inline bool is_valid_partition(const SuperpointPartition& p, std::size_t n) {
  if (p.point_count() != n) return false;
  std::vector<std::size_t> seen(p.count(), 0);
  for (auto id : p.ids()) {
    if (id >= p.count()) return false;
    ++seen[id];
  }
  std::size_t total = 0;
  for (std::size_t s = 0; s < p.count(); ++s) {
    if (seen[s] == 0 || seen[s] != p.sizes()[s]) return false;
    total += seen[s];
  }
  return total == n;
}

}  // namespace lwsep
