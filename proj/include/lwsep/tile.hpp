#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <limits>
#include <optional>
#include <string>
#include <unordered_set>
#include <vector>

#include <Eigen/Core>

#include "lwsep/common.hpp"

namespace lwsep {

inline constexpr std::uint8_t kFoliage = 0;
inline constexpr std::uint8_t kWood = 1;
inline constexpr std::uint8_t kUnlabeled = 255;
inline constexpr std::size_t kReflectanceChannels = 3;

/// Marker for a missing reflectance sample.
inline constexpr float kMissing = std::numeric_limits<float>::quiet_NaN();
inline bool is_missing(float v) { return std::isnan(v); }

using Point3 = Eigen::Vector3d;

/// One cylindrical multispectral point cloud. Per-point arrays are columnar
/// and share the same length.
struct Tile {
  std::vector<Point3> points;
  std::array<std::vector<float>, kReflectanceChannels> reflectance;
  std::optional<std::vector<std::uint8_t>> labels;
  std::optional<std::vector<std::uint32_t>> superpoint_ids;
  /// Index of each point in the plot it was extracted from; used to resolve
  /// tile overlaps at plot level.
  std::optional<std::vector<std::uint64_t>> source_index;
  std::string tile_id;
  Eigen::Vector2d center_xy = Eigen::Vector2d::Zero();
  double radius = 0.0;

  std::size_t size() const { return points.size(); }

  /// Appends point i of `other` (all present columns).
  void push_point_from(const Tile& other, std::size_t i) {
    points.push_back(other.points[i]);
    for (std::size_t c = 0; c < kReflectanceChannels; ++c) {
      reflectance[c].push_back(other.reflectance[c][i]);
    }
    if (other.labels) {
      if (!labels) labels.emplace();
      labels->push_back((*other.labels)[i]);
    }
    if (other.superpoint_ids) {
      if (!superpoint_ids) superpoint_ids.emplace();
      superpoint_ids->push_back((*other.superpoint_ids)[i]);
    }
  }
};

/// Throws lwsep::Error when a structural invariant of the tile is violated.
inline void validate(const Tile& t) {
  const std::size_t n = t.points.size();
  if (n == 0) throw Error("tile '" + t.tile_id + "' has no points");
  for (std::size_t c = 0; c < kReflectanceChannels; ++c) {
    if (t.reflectance[c].size() != n) {
      throw Error("tile '" + t.tile_id + "': reflectance channel " + std::to_string(c + 1) +
                  " length mismatch");
    }
  }
  if (t.labels) {
    if (t.labels->size() != n) throw Error("tile '" + t.tile_id + "': labels length mismatch");
    for (auto l : *t.labels) {
      if (l != kFoliage && l != kWood && l != kUnlabeled) {
        throw Error("tile '" + t.tile_id + "': invalid label " + std::to_string(l));
      }
    }
  }
  if (t.superpoint_ids && t.superpoint_ids->size() != n) {
    throw Error("tile '" + t.tile_id + "': superpoint_ids length mismatch");
  }
  if (t.source_index && t.source_index->size() != n) {
    throw Error("tile '" + t.tile_id + "': source_index length mismatch");
  }
}

/// Equality that compares floating-point columns by bit pattern, so NaN
/// missingness markers compare equal to themselves.
inline bool bitwise_equal(const Tile& a, const Tile& b) {
  auto same_bytes = [](const auto& x, const auto& y) {
    return x.size() == y.size() &&
           (x.empty() || std::memcmp(x.data(), y.data(), x.size() * sizeof(x[0])) == 0);
  };
  if (a.tile_id != b.tile_id || !same_bytes(a.points, b.points)) return false;
  if (std::memcmp(a.center_xy.data(), b.center_xy.data(), 2 * sizeof(double)) != 0) return false;
  if (std::memcmp(&a.radius, &b.radius, sizeof(double)) != 0) return false;
  for (std::size_t c = 0; c < kReflectanceChannels; ++c) {
    if (!same_bytes(a.reflectance[c], b.reflectance[c])) return false;
  }
  auto same_opt = [&](const auto& x, const auto& y) {
    if (x.has_value() != y.has_value()) return false;
    return !x || same_bytes(*x, *y);
  };
  return same_opt(a.labels, b.labels) && same_opt(a.superpoint_ids, b.superpoint_ids) &&
         same_opt(a.source_index, b.source_index);
}

enum class Split : std::uint8_t { kTrain, kTest, kUnlabeled };

/// Ordered collection of tiles with a split tag per tile.
class Dataset {
 public:
  void add(Tile tile, Split split = Split::kTrain) {
    if (!ids_.insert(tile.tile_id).second) {
      throw Error("duplicate tile id '" + tile.tile_id + "'");
    }
    tiles_.push_back(std::move(tile));
    splits_.push_back(split);
  }

  std::size_t size() const { return tiles_.size(); }
  bool empty() const { return tiles_.empty(); }
  const Tile& operator[](std::size_t i) const { return tiles_[i]; }
  Tile& operator[](std::size_t i) { return tiles_[i]; }
  Split split(std::size_t i) const { return splits_[i]; }
  const std::vector<Tile>& tiles() const { return tiles_; }

 private:
  std::vector<Tile> tiles_;
  std::vector<Split> splits_;
  std::unordered_set<std::string> ids_;
};

}  // namespace lwsep
