#pragma once

#include <cmath>
#include <limits>
#include <span>
#include <variant>
#include <vector>

#include "lwsep/partition.hpp"
#include "lwsep/tile.hpp"

namespace lwsep::preprocess {

struct TilingConfig {
  double r_c = 4.2;
  std::size_t min_points_per_tile = 100;
};

struct Rect {
  Eigen::Vector2d min, max;
};
struct Circle {
  Eigen::Vector2d center;
  double radius;
};
using Bounds = std::variant<Rect, Circle>;

/// Distance from `p` to the bounds region (0 inside).
inline double distance_to(const Bounds& b, const Eigen::Vector2d& p) {
  if (const auto* r = std::get_if<Rect>(&b)) {
    const double dx = std::max({r->min.x() - p.x(), 0.0, p.x() - r->max.x()});
    const double dy = std::max({r->min.y() - p.y(), 0.0, p.y() - r->max.y()});
    return std::hypot(dx, dy);
  }
  const auto& c = std::get<Circle>(b);
  return std::max(0.0, (p - c.center).norm() - c.radius);
}

inline Rect bounding_rect(const Bounds& b) {
  if (const auto* r = std::get_if<Rect>(&b)) return *r;
  const auto& c = std::get<Circle>(b);
  return {c.center.array() - c.radius, c.center.array() + c.radius};
}

/// Center spacing of a hexagonal circle covering with circle radius r_c.
inline double hex_spacing(double r_c) { return std::sqrt(3.0) * r_c; }

/// Centers of a hexagonal lattice of circles of radius r_c covering the
/// bounds. Rows run parallel to the x axis and the lattice is anchored at
/// the minimum corner of the bounds; odd rows are shifted by half a spacing.
inline std::vector<Eigen::Vector2d> hexagonal_centers(const Bounds& bounds, double r_c) {
  if (!(r_c > 0.0)) throw Error("hexagonal_centers: r_c must be positive");
  const Rect box = bounding_rect(bounds);
  if (!(box.max.x() >= box.min.x() && box.max.y() >= box.min.y())) {
    throw Error("hexagonal_centers: degenerate bounds");
  }
  const double dx = hex_spacing(r_c);
  const double dy = 1.5 * r_c;
  const auto j_lo = static_cast<long>(std::floor(-r_c / dy)) - 1;
  const auto j_hi = static_cast<long>(std::ceil((box.max.y() - box.min.y() + r_c) / dy)) + 1;
  const auto i_lo = static_cast<long>(std::floor(-r_c / dx)) - 2;
  const auto i_hi = static_cast<long>(std::ceil((box.max.x() - box.min.x() + r_c) / dx)) + 1;
  std::vector<Eigen::Vector2d> centers;
  for (long j = j_lo; j <= j_hi; ++j) {
    const double shift = (j & 1) ? 0.5 * dx : 0.0;
    for (long i = i_lo; i <= i_hi; ++i) {
      const Eigen::Vector2d c(box.min.x() + static_cast<double>(i) * dx + shift,
                              box.min.y() + static_cast<double>(j) * dy);
      if (distance_to(bounds, c) <= r_c) centers.push_back(c);
    }
  }
  return centers;
}

/// Splits a plot into overlapping cylindrical tiles on a hexagonal lattice.
/// Each tile keeps the plot index of its points in `source_index`.
inline Dataset extract_tiles(const Tile& plot, const TilingConfig& cfg) {
  Dataset out;
  if (plot.points.empty()) return out;
  Rect box{Eigen::Vector2d::Constant(std::numeric_limits<double>::infinity()),
           Eigen::Vector2d::Constant(-std::numeric_limits<double>::infinity())};
  for (const auto& p : plot.points) {
    box.min = box.min.cwiseMin(p.head<2>());
    box.max = box.max.cwiseMax(p.head<2>());
  }
  const auto centers = hexagonal_centers(box, cfg.r_c);

  // Bucket points on a 2-d grid with cell r_c so each tile visits 3x3 cells.
  std::unordered_map<std::int64_t, std::vector<std::uint32_t>> buckets;
  auto cell = [&](double v, double origin) { return static_cast<std::int64_t>(std::floor((v - origin) / cfg.r_c)); };
  auto key = [](std::int64_t cx, std::int64_t cy) { return (cx << 32) ^ (cy & 0xffffffff); };
  for (std::uint32_t i = 0; i < plot.size(); ++i) {
    buckets[key(cell(plot.points[i].x(), box.min.x()), cell(plot.points[i].y(), box.min.y()))].push_back(i);
  }
  const double r2 = cfg.r_c * cfg.r_c;
  for (std::size_t t = 0; t < centers.size(); ++t) {
    const auto& c = centers[t];
    const auto cx = cell(c.x(), box.min.x());
    const auto cy = cell(c.y(), box.min.y());
    std::vector<std::uint32_t> members;
    for (std::int64_t ox = -1; ox <= 1; ++ox)
      for (std::int64_t oy = -1; oy <= 1; ++oy) {
        auto it = buckets.find(key(cx + ox, cy + oy));
        if (it == buckets.end()) continue;
        for (auto i : it->second) {
          if ((plot.points[i].head<2>() - c).squaredNorm() <= r2) members.push_back(i);
        }
      }
    if (members.size() < std::max<std::size_t>(cfg.min_points_per_tile, 1)) continue;
    std::sort(members.begin(), members.end());
    Tile tile;
    tile.tile_id = plot.tile_id + "_" + std::to_string(t);
    tile.center_xy = c;
    tile.radius = cfg.r_c;
    tile.source_index.emplace();
    for (auto i : members) {
      tile.push_point_from(plot, i);
      tile.source_index->push_back(plot.source_index ? (*plot.source_index)[i] : i);
    }
    out.add(std::move(tile));
  }
  return out;
}

/// Subtracts the xy mean and the minimum z.
inline Tile center_tile(Tile tile) {
  if (tile.points.empty()) return tile;
  Eigen::Vector2d mean = Eigen::Vector2d::Zero();
  double zmin = std::numeric_limits<double>::infinity();
  for (const auto& p : tile.points) {
    mean += p.head<2>();
    zmin = std::min(zmin, p.z());
  }
  mean /= static_cast<double>(tile.size());
  for (auto& p : tile.points) {
    p.head<2>() -= mean;
    p.z() -= zmin;
  }
  return tile;
}

enum class NormVariant {
  kLiteral,    // subtract the minimum of the raw channel
  kScaledMin,  // subtract the minimum of the robust-scaled channel
};

/// Quantile with linear interpolation between order statistics of a sorted
/// sample.
inline double quantile_sorted(std::span<const double> sorted, double q) {
  if (sorted.empty()) throw Error("quantile of empty sample");
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

/// Robust reflectance normalization over the non-missing entries:
/// (x - median) / IQR - min. Missing entries stay missing. A channel with
/// zero IQR is divided by 1 and shifted to a zero minimum, with a warning.
inline std::vector<float> normalize_reflectance(std::span<const float> values,
                                                NormVariant variant = NormVariant::kLiteral,
                                                Warnings* warnings = nullptr) {
  std::vector<float> out(values.begin(), values.end());
  std::vector<double> sorted;
  sorted.reserve(values.size());
  for (float v : values) {
    if (!is_missing(v)) sorted.push_back(v);
  }
  if (sorted.empty()) return out;
  std::sort(sorted.begin(), sorted.end());
  const double median = quantile_sorted(sorted, 0.5);
  const double iqr = quantile_sorted(sorted, 0.75) - quantile_sorted(sorted, 0.25);
  const double raw_min = sorted.front();
  const bool degenerate = !(iqr > 0.0);
  if (degenerate && warnings) warnings->add("reflectance channel has zero IQR; dividing by 1");
  const double scale = degenerate ? 1.0 : iqr;
  double offset = raw_min;
  if (degenerate || variant == NormVariant::kScaledMin) offset = (raw_min - median) / scale;
  for (auto& v : out) {
    if (!is_missing(v)) v = static_cast<float>((v - median) / scale - offset);
  }
  return out;
}

inline void normalize_tile_reflectance(Tile& tile, NormVariant variant = NormVariant::kLiteral,
                                       Warnings* warnings = nullptr) {
  for (auto& ch : tile.reflectance) ch = normalize_reflectance(ch, variant, warnings);
}

/// Fills missing reflectance with the mean of the available values of the
/// same channel in the same superpoint, falling back to the mean of the
/// nearest superpoint (by centroid) that has data on that channel.
inline Tile impute_missing_reflectance(Tile tile, const SuperpointPartition& partition) {
  if (partition.point_count() != tile.size()) throw Error("impute: partition does not cover the tile");
  const std::size_t m = partition.count();
  for (std::size_t c = 0; c < kReflectanceChannels; ++c) {
    auto& ch = tile.reflectance[c];
    std::vector<double> sum(m, 0.0);
    std::vector<std::size_t> cnt(m, 0);
    for (std::size_t i = 0; i < ch.size(); ++i) {
      if (is_missing(ch[i])) continue;
      sum[partition.id(i)] += ch[i];
      ++cnt[partition.id(i)];
    }
    std::vector<std::uint32_t> with_data;
    for (std::uint32_t s = 0; s < m; ++s) {
      if (cnt[s]) with_data.push_back(s);
    }
    if (with_data.empty()) {
      throw Error("impute: reflectance channel " + std::to_string(c + 1) + " is missing in the whole tile '" +
                  tile.tile_id + "'");
    }
    std::vector<float> fill(m);
    for (std::size_t s = 0; s < m; ++s) {
      std::size_t src = s;
      if (!cnt[s]) {
        double best = std::numeric_limits<double>::infinity();
        for (auto o : with_data) {
          const double d = (partition.centroids()[o] - partition.centroids()[s]).squaredNorm();
          if (d < best) {
            best = d;
            src = o;
          }
        }
      }
      fill[s] = static_cast<float>(sum[src] / static_cast<double>(cnt[src]));
    }
    for (std::size_t i = 0; i < ch.size(); ++i) {
      if (is_missing(ch[i])) ch[i] = fill[partition.id(i)];
    }
  }
  return tile;
}

}  // namespace lwsep::preprocess
