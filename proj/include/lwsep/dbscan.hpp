#pragma once

#include <span>
#include <vector>

#include "lwsep/spatial/voxel_grid.hpp"

namespace lwsep {

inline constexpr std::int32_t kDbscanNoise = -1;

/// Density-based clustering of 3-d points. Returns a cluster id per point
/// (dense from 0 in order of discovery) or kDbscanNoise. `min_samples`
/// counts the point itself.
inline std::vector<std::int32_t> dbscan(std::span<const Point3> points, double eps, std::size_t min_samples) {
  if (!(eps > 0.0)) throw Error("dbscan: eps must be positive");
  constexpr std::int32_t kUnvisited = -2;
  std::vector<std::int32_t> label(points.size(), kUnvisited);
  if (points.empty()) return {};
  const spatial::VoxelGrid grid(points, eps);
  std::vector<spatial::Neighbor> nb;
  std::vector<std::uint32_t> frontier;
  std::int32_t next = 0;
  for (std::uint32_t i = 0; i < points.size(); ++i) {
    if (label[i] != kUnvisited) continue;
    grid.radius_query(points[i], eps, nb);
    if (nb.size() < min_samples) {
      label[i] = kDbscanNoise;
      continue;
    }
    const std::int32_t c = next++;
    label[i] = c;
    frontier.clear();
    for (const auto& n : nb) frontier.push_back(n.index);
    while (!frontier.empty()) {
      const auto j = frontier.back();
      frontier.pop_back();
      if (label[j] == kDbscanNoise) label[j] = c;  // border point
      if (label[j] != kUnvisited) continue;
      label[j] = c;
      grid.radius_query(points[j], eps, nb);
      if (nb.size() >= min_samples) {
        for (const auto& n : nb) {
          if (label[n.index] == kUnvisited || label[n.index] == kDbscanNoise) frontier.push_back(n.index);
        }
      }
    }
  }
  return label;
}

}  // namespace lwsep
