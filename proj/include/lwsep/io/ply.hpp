#pragma once

#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>

#include "lwsep/io/binary.hpp"
#include "lwsep/tile.hpp"

namespace lwsep::io {

enum class PlyColoring { kLabels, kSuperpoints, kReflectance };
enum class PlyEncoding { kAscii, kBinaryLittleEndian };

using Rgb = std::array<std::uint8_t, 3>;

inline constexpr Rgb kWoodColor{255, 0, 0};
inline constexpr Rgb kFoliageColor{0, 255, 0};
inline constexpr Rgb kGray{128, 128, 128};

/// Deterministic color for a superpoint id. Adjacent ids get unrelated
/// colors; distinct ids map to distinct colors (the hash is a bijection on
/// 24 bits).
inline Rgb id_color(std::uint32_t id) {
  std::uint32_t h = (id & 0xFFFFFFu) * 0x9E3779u;  // odd multiplier: bijective mod 2^24
  h &= 0xFFFFFFu;
  h ^= h >> 12;  // xor-shift is bijective
  return {static_cast<std::uint8_t>(h >> 16), static_cast<std::uint8_t>(h >> 8),
          static_cast<std::uint8_t>(h)};
}

inline std::vector<Rgb> tile_colors(const Tile& tile, PlyColoring coloring) {
  const std::size_t n = tile.size();
  std::vector<Rgb> colors(n, kGray);
  switch (coloring) {
    case PlyColoring::kLabels:
      if (!tile.labels) throw Error("tile '" + tile.tile_id + "' has no labels to color by");
      for (std::size_t i = 0; i < n; ++i) {
        const auto l = (*tile.labels)[i];
        colors[i] = l == kWood ? kWoodColor : l == kFoliage ? kFoliageColor : kGray;
      }
      break;
    case PlyColoring::kSuperpoints:
      if (!tile.superpoint_ids) throw Error("tile '" + tile.tile_id + "' has no superpoint ids to color by");
      for (std::size_t i = 0; i < n; ++i) colors[i] = id_color((*tile.superpoint_ids)[i]);
      break;
    case PlyColoring::kReflectance:
      for (std::size_t c = 0; c < kReflectanceChannels; ++c) {
        float lo = std::numeric_limits<float>::infinity();
        float hi = -lo;
        for (float v : tile.reflectance[c]) {
          if (is_missing(v)) continue;
          lo = std::min(lo, v);
          hi = std::max(hi, v);
        }
        for (std::size_t i = 0; i < n; ++i) {
          const float v = tile.reflectance[c][i];
          if (is_missing(v)) continue;
          const double t = hi > lo ? (v - lo) / (hi - lo) : 0.5;
          colors[i][c] = static_cast<std::uint8_t>(std::lround(255.0 * t));
        }
      }
      break;
  }
  return colors;
}

/// Writes x,y,z (float64) and red,green,blue (uchar) vertices.
inline void export_ply(const Tile& tile, PlyColoring coloring, const std::filesystem::path& path,
                       PlyEncoding encoding = PlyEncoding::kBinaryLittleEndian) {
  const auto colors = tile_colors(tile, coloring);
  std::string header = "ply\n";
  header += encoding == PlyEncoding::kAscii ? "format ascii 1.0\n" : "format binary_little_endian 1.0\n";
  header += "element vertex " + std::to_string(tile.size()) + "\n";
  header +=
      "property double x\nproperty double y\nproperty double z\n"
      "property uchar red\nproperty uchar green\nproperty uchar blue\nend_header\n";
  ByteWriter w;
  w.put_bytes(header.data(), header.size());
  for (std::size_t i = 0; i < tile.size(); ++i) {
    const auto& p = tile.points[i];
    if (encoding == PlyEncoding::kAscii) {
      char line[160];
      const int len = std::snprintf(line, sizeof line, "%.17g %.17g %.17g %u %u %u\n", p.x(), p.y(), p.z(),
                                    colors[i][0], colors[i][1], colors[i][2]);
      w.put_bytes(line, static_cast<std::size_t>(len));
    } else {
      w.put(p.x());
      w.put(p.y());
      w.put(p.z());
      w.put_bytes(colors[i].data(), 3);
    }
  }
  write_file_atomic(path, w.bytes());
}

}  // namespace lwsep::io
