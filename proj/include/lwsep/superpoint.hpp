#pragma once

#include <span>
#include <vector>

#include "lwsep/cut_pursuit.hpp"
#include "lwsep/dbscan.hpp"
#include "lwsep/geomfeat.hpp"
#include "lwsep/metrics.hpp"
#include "lwsep/partition.hpp"

namespace lwsep::superpoint {

/// Per-point descriptors fed to the graph solver: feature_weight times
/// (linearity, verticality, planarity, sphericity).
inline RowMatrixXd solver_features(const geomfeat::GeomFeatures& geom, double feature_weight) {
  using namespace geomfeat;
  RowMatrixXd f(static_cast<Eigen::Index>(geom.size()), 4);
  for (Eigen::Index i = 0; i < f.rows(); ++i) {
    f(i, 0) = geom.values(i, kLinearity);
    f(i, 1) = geom.values(i, kVerticality);
    f(i, 2) = geom.values(i, kPlanarity);
    f(i, 3) = geom.values(i, kSphericity);
  }
  return f * feature_weight;
}

/// Oversegmentation of a tile into the constant connected components of the
/// graph-regularized descriptor field.
inline SuperpointPartition initial_superpoints(const Tile& tile, const geomfeat::GeomFeatures& geom,
                                               const cp::CutPursuitConfig& cfg) {
  if (geom.size() != tile.size()) throw Error("initial_superpoints: feature count does not match tile");
  if (tile.size() == 0) throw Error("initial_superpoints: empty tile");
  if (tile.size() == 1) {
    const std::uint32_t zero = 0;
    return SuperpointPartition::from_labels(std::span(&zero, 1), tile.points);
  }
  const auto graph = cp::build_graph(tile.points);
  const auto res = cp::cut_pursuit(graph, solver_features(geom, cfg.feature_weight), cfg);
  return SuperpointPartition::from_labels(res.component, tile.points);
}

enum class NearestRule {
  kCentroid,      // centroid-to-centroid distance
  kClosestPoint,  // minimum point-to-point distance
};

struct MergeConfig {
  std::size_t sp_max = 2200;
  double dbscan_eps = 0.2;
  std::size_t dbscan_min_samples = 5;
  NearestRule nearest = NearestRule::kCentroid;
};

struct MergeResult {
  SuperpointPartition partition;
  std::size_t pts_min = 0;
  std::size_t admissible = 0;
  std::size_t singular_points = 0;
};

/// Smallest size threshold, starting at 5, such that no more than sp_max
/// superpoints have more points than it.
inline std::size_t size_threshold(std::span<const std::size_t> sizes, std::size_t sp_max) {
  std::size_t pts_min = 5;
  auto count_above = [&](std::size_t x) {
    return static_cast<std::size_t>(std::count_if(sizes.begin(), sizes.end(), [x](auto s) { return s > x; }));
  };
  while (count_above(pts_min) > sp_max) ++pts_min;
  return pts_min;
}

/// Reduces a partition to at most sp_max superpoints. Superpoints with more
/// than the size threshold points are kept; the points of superpoints with at
/// most 2 points are re-clustered with DBSCAN (noise points stay single);
/// every remaining small unit joins its nearest kept superpoint.
inline MergeResult merge_superpoints(const SuperpointPartition& partition, std::span<const Point3> points,
                                     const MergeConfig& cfg) {
  if (cfg.sp_max < 1) throw Error("merge_superpoints: sp_max must be at least 1");
  if (!is_valid_partition(partition, points.size())) throw Error("merge_superpoints: invalid partition");
  MergeResult out;
  const auto& sizes = partition.sizes();
  out.pts_min = size_threshold(sizes, cfg.sp_max);

  constexpr auto kNone = std::numeric_limits<std::uint32_t>::max();
  std::vector<std::uint32_t> kept_index(partition.count(), kNone);
  std::vector<Point3> kept_centroids;
  for (std::uint32_t s = 0; s < partition.count(); ++s) {
    if (sizes[s] > out.pts_min) {
      kept_index[s] = static_cast<std::uint32_t>(kept_centroids.size());
      kept_centroids.push_back(partition.centroids()[s]);
    }
  }
  out.admissible = kept_centroids.size();
  if (kept_centroids.empty()) {
    throw Error("merge_superpoints: no superpoint has more than " + std::to_string(out.pts_min) +
                " points; the tile is too fragmented for sp_max=" + std::to_string(cfg.sp_max));
  }

  // Units to absorb: medium non-admissible superpoints, DBSCAN clusters of
  // singular points, and DBSCAN noise points.
  const auto members = partition.members();
  std::vector<std::vector<std::uint32_t>> units;
  std::vector<std::uint32_t> singular;
  for (std::uint32_t s = 0; s < partition.count(); ++s) {
    if (kept_index[s] != kNone) continue;
    if (sizes[s] <= 2) {
      singular.insert(singular.end(), members[s].begin(), members[s].end());
    } else {
      units.push_back(members[s]);
    }
  }
  out.singular_points = singular.size();
  if (!singular.empty()) {
    std::sort(singular.begin(), singular.end());
    std::vector<Point3> pooled;
    pooled.reserve(singular.size());
    for (auto i : singular) pooled.push_back(points[i]);
    const auto cluster = dbscan(pooled, cfg.dbscan_eps, cfg.dbscan_min_samples);
    const auto n_clusters = cluster.empty() ? 0 : *std::max_element(cluster.begin(), cluster.end()) + 1;
    std::vector<std::vector<std::uint32_t>> grouped(static_cast<std::size_t>(std::max(n_clusters, 0)));
    for (std::size_t k = 0; k < singular.size(); ++k) {
      if (cluster[k] == kDbscanNoise) {
        units.push_back({singular[k]});
      } else {
        grouped[static_cast<std::size_t>(cluster[k])].push_back(singular[k]);
      }
    }
    for (auto& g : grouped) units.push_back(std::move(g));
  }

  std::vector<std::uint32_t> label(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) label[i] = kept_index[partition.id(i)];

  if (cfg.nearest == NearestRule::kCentroid) {
    const spatial::KdTree tree(kept_centroids);
    for (const auto& unit : units) {
      Point3 c = Point3::Zero();
      for (auto i : unit) c += points[i];
      c /= static_cast<double>(unit.size());
      const auto target = tree.knn(c, 1).front().index;
      for (auto i : unit) label[i] = target;
    }
  } else {
    std::vector<Point3> kept_points;
    std::vector<std::uint32_t> kept_owner;
    for (std::size_t i = 0; i < points.size(); ++i) {
      if (label[i] == kNone) continue;
      kept_points.push_back(points[i]);
      kept_owner.push_back(label[i]);
    }
    const spatial::KdTree tree(kept_points);
    for (const auto& unit : units) {
      spatial::Neighbor best{0, std::numeric_limits<double>::infinity()};
      for (auto i : unit) {
        const auto nb = tree.knn(points[i], 1).front();
        if (nb.dist2 < best.dist2) best = nb;
      }
      for (auto i : unit) label[i] = kept_owner[best.index];
    }
  }
  out.partition = SuperpointPartition::from_labels(label, points);
  return out;
}

/// Majority ground-truth class of each superpoint (ties to the lower class).
/// Superpoints without labeled points get kUnlabeled.
inline std::vector<std::uint8_t> majority_labels(const SuperpointPartition& partition,
                                                 std::span<const std::uint8_t> labels, int num_classes = 2) {
  std::vector<std::vector<std::size_t>> votes(partition.count(), std::vector<std::size_t>(num_classes, 0));
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] != kUnlabeled) ++votes[partition.id(i)][labels[i]];
  }
  std::vector<std::uint8_t> major(partition.count(), kUnlabeled);
  for (std::size_t s = 0; s < partition.count(); ++s) {
    std::size_t best = 0;
    for (int c = 0; c < num_classes; ++c) {
      if (votes[s][c] > best) {
        best = votes[s][c];
        major[s] = static_cast<std::uint8_t>(c);
      }
    }
  }
  return major;
}

/// Upper bound on segmentation quality given a partition: every point takes
/// its superpoint's majority class.
inline eval::MetricsReport superpoint_purity(const SuperpointPartition& partition,
                                             std::span<const std::uint8_t> labels) {
  if (labels.size() != partition.point_count()) throw Error("superpoint_purity: label count mismatch");
  const auto major = majority_labels(partition, labels);
  std::vector<std::uint8_t> pred(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) pred[i] = major[partition.id(i)];
  return eval::compute_metrics(labels, pred, 2, eval::Matching::kIdentity);
}

}  // namespace lwsep::superpoint
