#pragma once

// MSPC tile file, little-endian:
//
//   "MSPC" | version u32 | N u64 | presence u32
//   center_x f64 | center_y f64 | radius f64 | tile_id (u32 length + bytes)
//   x[N] f64 | y[N] f64 | z[N] f64
//   refl1[N] f32 | refl2[N] f32 | refl3[N] f32      (NaN = missing)
//   labels[N] u8          if presence & 1
//   superpoint_ids[N] u32 if presence & 2
//   source_index[N] u64   if presence & 4

#include <filesystem>

#include "lwsep/io/binary.hpp"
#include "lwsep/tile.hpp"

namespace lwsep::io {

inline constexpr std::uint32_t kMspcVersion = 1;

enum MspcPresence : std::uint32_t {
  kHasLabels = 1u << 0,
  kHasSuperpoints = 1u << 1,
  kHasSourceIndex = 1u << 2,
};

inline std::vector<char> encode_tile(const Tile& tile) {
  validate(tile);
  ByteWriter w;
  w.put_bytes("MSPC", 4);
  w.put<std::uint32_t>(kMspcVersion);
  const std::uint64_t n = tile.size();
  w.put<std::uint64_t>(n);
  std::uint32_t presence = 0;
  if (tile.labels) presence |= kHasLabels;
  if (tile.superpoint_ids) presence |= kHasSuperpoints;
  if (tile.source_index) presence |= kHasSourceIndex;
  w.put<std::uint32_t>(presence);
  w.put<double>(tile.center_xy.x());
  w.put<double>(tile.center_xy.y());
  w.put<double>(tile.radius);
  w.put_string(tile.tile_id);
  std::vector<double> col(n);
  for (int d = 0; d < 3; ++d) {
    for (std::size_t i = 0; i < n; ++i) col[i] = tile.points[i][d];
    w.put_array(col);
  }
  for (const auto& ch : tile.reflectance) w.put_array(ch);
  if (tile.labels) w.put_array(*tile.labels);
  if (tile.superpoint_ids) w.put_array(*tile.superpoint_ids);
  if (tile.source_index) w.put_array(*tile.source_index);
  return w.bytes();
}

inline Tile decode_tile(std::vector<char> bytes) {
  ByteReader r(std::move(bytes));
  r.expect_magic("MSPC");
  const auto version_at = r.position();
  const auto version = r.get<std::uint32_t>("version");
  if (version != kMspcVersion) {
    throw ParseError("unsupported MSPC version " + std::to_string(version), version_at);
  }
  const auto n = r.get<std::uint64_t>("point count");
  const auto presence_at = r.position();
  const auto presence = r.get<std::uint32_t>("presence mask");
  if (presence & ~std::uint32_t{kHasLabels | kHasSuperpoints | kHasSourceIndex}) {
    throw ParseError("unknown bits in presence mask", presence_at);
  }
  Tile tile;
  const double cx = r.get<double>("center_x");
  const double cy = r.get<double>("center_y");
  tile.center_xy = {cx, cy};
  tile.radius = r.get<double>("radius");
  tile.tile_id = r.get_string("tile_id");
  if (n == 0) throw ParseError("tile with zero points", r.position());
  const auto xs = r.get_array<double>(n, "x column");
  const auto ys = r.get_array<double>(n, "y column");
  const auto zs = r.get_array<double>(n, "z column");
  tile.points.resize(n);
  for (std::size_t i = 0; i < n; ++i) tile.points[i] = {xs[i], ys[i], zs[i]};
  for (std::size_t c = 0; c < kReflectanceChannels; ++c) {
    tile.reflectance[c] = r.get_array<float>(n, "reflectance column");
  }
  if (presence & kHasLabels) {
    const auto at = r.position();
    tile.labels = r.get_array<std::uint8_t>(n, "labels column");
    for (std::size_t i = 0; i < n; ++i) {
      const auto l = (*tile.labels)[i];
      if (l != kFoliage && l != kWood && l != kUnlabeled) {
        throw ParseError("invalid label value " + std::to_string(l), at + i);
      }
    }
  }
  if (presence & kHasSuperpoints) tile.superpoint_ids = r.get_array<std::uint32_t>(n, "superpoint_ids column");
  if (presence & kHasSourceIndex) tile.source_index = r.get_array<std::uint64_t>(n, "source_index column");
  if (r.remaining() != 0) throw ParseError("trailing bytes after tile data", r.position());
  return tile;
}

inline void save_tile(const Tile& tile, const std::filesystem::path& path) {
  write_file_atomic(path, encode_tile(tile));
}

inline Tile load_tile(const std::filesystem::path& path) { return decode_tile(read_file(path)); }

}  // namespace lwsep::io
