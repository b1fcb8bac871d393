#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <unordered_map>
#include <utility>
#include <vector>

#include "lwsep/tile.hpp"

namespace lwsep::spatial {

/// A neighbor returned by a spatial query: point index and squared distance.
struct Neighbor {
  std::uint32_t index;
  double dist2;

  friend bool operator<(const Neighbor& a, const Neighbor& b) {
    return a.dist2 < b.dist2 || (a.dist2 == b.dist2 && a.index < b.index);
  }
  friend bool operator==(const Neighbor&, const Neighbor&) = default;
};

struct CellKey {
  std::int64_t x, y, z;
  friend bool operator==(const CellKey&, const CellKey&) = default;
};

struct CellKeyHash {
  std::size_t operator()(const CellKey& k) const noexcept {
    std::uint64_t h = static_cast<std::uint64_t>(k.x) * 0x9E3779B97F4A7C15ULL;
    h ^= static_cast<std::uint64_t>(k.y) * 0xC2B2AE3D27D4EB4FULL + (h << 6) + (h >> 2);
    h ^= static_cast<std::uint64_t>(k.z) * 0x165667B19E3779F9ULL + (h << 6) + (h >> 2);
    return static_cast<std::size_t>(h);
  }
};

/// Regular hash grid over a point set. With the cell size equal to the query
/// radius, a radius query only visits the 27 cells around the query.
class VoxelGrid {
 public:
  VoxelGrid(std::span<const Point3> points, double cell_size) : points_(points), cell_(cell_size) {
    if (!(cell_size > 0.0)) throw Error("voxel grid cell size must be positive");
    std::vector<std::pair<CellKey, std::uint32_t>> keyed;
    keyed.reserve(points.size());
    for (std::uint32_t i = 0; i < points.size(); ++i) keyed.emplace_back(key_of(points[i]), i);
    for (const auto& [key, idx] : keyed) {
      auto [it, inserted] = cells_.try_emplace(key, static_cast<std::uint32_t>(buckets_.size()));
      if (inserted) buckets_.emplace_back();
      buckets_[it->second].push_back(idx);
    }
  }

  CellKey key_of(const Point3& p) const {
    return {static_cast<std::int64_t>(std::floor(p.x() / cell_)),
            static_cast<std::int64_t>(std::floor(p.y() / cell_)),
            static_cast<std::int64_t>(std::floor(p.z() / cell_))};
  }

  /// All points within `radius` (<= cell size) of `q`, unsorted.
  void radius_query(const Point3& q, double radius, std::vector<Neighbor>& out) const {
    out.clear();
    const double r2 = radius * radius;
    const int reach = static_cast<int>(std::ceil(radius / cell_));
    const CellKey c = key_of(q);
    for (std::int64_t dx = -reach; dx <= reach; ++dx)
      for (std::int64_t dy = -reach; dy <= reach; ++dy)
        for (std::int64_t dz = -reach; dz <= reach; ++dz) {
          auto it = cells_.find({c.x + dx, c.y + dy, c.z + dz});
          if (it == cells_.end()) continue;
          for (auto idx : buckets_[it->second]) {
            const double d2 = (points_[idx] - q).squaredNorm();
            if (d2 <= r2) out.push_back({idx, d2});
          }
        }
  }

  /// The min(k, count-in-ball) nearest points within `radius` of point
  /// `query` (itself included), sorted by distance then index.
  std::vector<Neighbor> hybrid_neighborhood(std::uint32_t query, double radius, std::size_t k) const {
    std::vector<Neighbor> out;
    radius_query(points_[query], radius, out);
    if (out.size() > k) {
      std::nth_element(out.begin(), out.begin() + static_cast<std::ptrdiff_t>(k), out.end());
      out.resize(k);
    }
    std::sort(out.begin(), out.end());
    return out;
  }

  double cell_size() const { return cell_; }

 private:
  std::span<const Point3> points_;
  double cell_;
  std::unordered_map<CellKey, std::uint32_t, CellKeyHash> cells_;
  std::vector<std::vector<std::uint32_t>> buckets_;
};

}  // namespace lwsep::spatial
