#pragma once

#include <span>
#include <vector>

#include "lwsep/preprocess.hpp"
#include "lwsep/superpoint.hpp"
#include "lwsep/trainer.hpp"

namespace lwsep::pipeline {

struct ReflectanceConfig {
  preprocess::NormVariant variant = preprocess::NormVariant::kLiteral;
  bool normalize_before_impute = false;
};

struct SuperpointConfig {
  cp::CutPursuitConfig cut_pursuit;
  superpoint::MergeConfig merge;
};

struct PrepareStats {
  std::size_t cut_pursuit_superpoints = 0;
  superpoint::MergeResult merge;
};

/// Initial superpoints of a centered tile: cut pursuit, then the size-based
/// merge.
inline SuperpointPartition build_superpoints(const Tile& tile, const geomfeat::GeomFeatures& geom,
                                             const SuperpointConfig& cfg, PrepareStats* stats = nullptr) {
  const auto raw = superpoint::initial_superpoints(tile, geom, cfg.cut_pursuit);
  auto merged = superpoint::merge_superpoints(raw, tile.points, cfg.merge);
  if (stats) {
    stats->cut_pursuit_superpoints = raw.count();
    stats->merge = merged;
  }
  return std::move(merged.partition);
}

/// Fills and normalizes reflectance in the configured order.
inline Tile finalize_reflectance(Tile tile, const SuperpointPartition& partition, const ReflectanceConfig& cfg,
                                 Warnings* warnings = nullptr) {
  if (cfg.normalize_before_impute) {
    preprocess::normalize_tile_reflectance(tile, cfg.variant, warnings);
    return preprocess::impute_missing_reflectance(std::move(tile), partition);
  }
  tile = preprocess::impute_missing_reflectance(std::move(tile), partition);
  preprocess::normalize_tile_reflectance(tile, cfg.variant, warnings);
  return tile;
}

struct PrepareConfig {
  geomfeat::NeighborhoodConfig features;
  SuperpointConfig superpoints;
  ReflectanceConfig reflectance;
};

/// Raw extracted tile to training input: center, geometric features,
/// superpoints, reflectance imputation and normalization.
inline trainer::TrainingTile prepare_tile(Tile raw, const PrepareConfig& cfg, PrepareStats* stats = nullptr,
                                          Warnings* warnings = nullptr) {
  trainer::TrainingTile t;
  t.tile = preprocess::center_tile(std::move(raw));
  t.geom = geomfeat::multiscale_features(t.tile.points, cfg.features);
  t.initial = build_superpoints(t.tile, t.geom, cfg.superpoints, stats);
  t.tile = finalize_reflectance(std::move(t.tile), t.initial, cfg.reflectance, warnings);
  t.tile.superpoint_ids = t.initial.ids();
  return t;
}

/// Plot-level labels from overlapping tile predictions: each plot point
/// takes the label of the covering tile whose center is nearest in xy.
/// Points covered by no tile are kUnlabeled.
inline std::vector<std::uint8_t> resolve_overlaps(const Tile& plot, std::span<const Tile* const> tiles,
                                                  std::span<const std::vector<std::uint8_t>> labels) {
  if (tiles.size() != labels.size()) throw Error("resolve_overlaps: tile/label count mismatch");
  std::vector<std::uint8_t> out(plot.size(), kUnlabeled);
  std::vector<double> best(plot.size(), std::numeric_limits<double>::infinity());
  for (std::size_t t = 0; t < tiles.size(); ++t) {
    const Tile& tile = *tiles[t];
    if (!tile.source_index) throw Error("resolve_overlaps: tile '" + tile.tile_id + "' has no source index");
    if (labels[t].size() != tile.size()) throw Error("resolve_overlaps: label count mismatch");
    for (std::size_t i = 0; i < tile.size(); ++i) {
      const auto src = (*tile.source_index)[i];
      if (src >= plot.size()) throw Error("resolve_overlaps: source index outside the plot");
      const double d = (plot.points[src].head<2>() - tile.center_xy).squaredNorm();
      if (d < best[src]) {
        best[src] = d;
        out[src] = labels[t][i];
      }
    }
  }
  return out;
}

/// Ground truth restricted to the points covered by the tiles.
inline std::vector<std::uint8_t> covered_ground_truth(const Tile& plot, std::span<const Tile* const> tiles) {
  if (!plot.labels) throw Error("plot has no labels");
  std::vector<std::uint8_t> gt(plot.size(), kUnlabeled);
  for (const Tile* t : tiles) {
    for (auto src : *t->source_index) gt[src] = (*plot.labels)[src];
  }
  return gt;
}

}  // namespace lwsep::pipeline
