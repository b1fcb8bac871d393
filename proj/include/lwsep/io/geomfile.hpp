#pragma once

// Geometric feature sidecar, little-endian:
//
//   "MSGF" | version u32 | N u64 | linearity[N] f32 | planarity[N] f32 |
//   sphericity[N] f32 | verticality[N] f32 | pca1[N] f32

#include <filesystem>

#include "lwsep/geomfeat.hpp"
#include "lwsep/io/binary.hpp"

namespace lwsep::io {

inline constexpr std::uint32_t kGeomFileVersion = 1;

inline void save_geom_features(const geomfeat::GeomFeatures& f, const std::filesystem::path& path) {
  ByteWriter w;
  w.put_bytes("MSGF", 4);
  w.put<std::uint32_t>(kGeomFileVersion);
  const std::uint64_t n = f.size();
  w.put<std::uint64_t>(n);
  std::vector<float> col(n);
  for (int c = 0; c < geomfeat::kDescriptorCount; ++c) {
    for (std::size_t i = 0; i < n; ++i) col[i] = f.values(static_cast<Eigen::Index>(i), c);
    w.put_array(col);
  }
  write_file_atomic(path, w.bytes());
}

inline geomfeat::GeomFeatures load_geom_features(const std::filesystem::path& path) {
  ByteReader r(read_file(path));
  r.expect_magic("MSGF");
  const auto at = r.position();
  const auto version = r.get<std::uint32_t>("version");
  if (version != kGeomFileVersion) throw ParseError("unsupported MSGF version", at);
  const auto n = r.get<std::uint64_t>("point count");
  geomfeat::GeomFeatures f;
  f.values.resize(static_cast<Eigen::Index>(n), geomfeat::kDescriptorCount);
  for (int c = 0; c < geomfeat::kDescriptorCount; ++c) {
    const auto col = r.get_array<float>(n, "feature column");
    for (std::size_t i = 0; i < n; ++i) f.values(static_cast<Eigen::Index>(i), c) = col[i];
  }
  if (r.remaining() != 0) throw ParseError("trailing bytes after feature data", r.position());
  return f;
}

}  // namespace lwsep::io
