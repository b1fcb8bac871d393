#pragma once

#include <charconv>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "lwsep/tile.hpp"

namespace lwsep::io {

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline double parse_double(std::string_view s, std::size_t line) {
  s = trim(s);
  // from_chars for floating point is available in libstdc++ 11.
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw Error("csv line " + std::to_string(line) + ": cannot parse number '" + std::string(s) + "'");
  }
  return v;
}

}  // namespace detail

/// Reads `x,y,z,r1,r2,r3[,label]` rows. Empty reflectance cells are missing
/// values; an empty or absent label cell is "unlabeled". A header row is
/// skipped when its first cell is not numeric.
inline Tile import_csv(const std::filesystem::path& path, std::string tile_id = {}) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open '" + path.string() + "'");
  Tile tile;
  tile.tile_id = tile_id.empty() ? path.stem().string() : std::move(tile_id);
  std::vector<std::uint8_t> labels;
  bool any_label_column = false;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    std::vector<std::string_view> cells;
    std::string_view rest(line);
    while (true) {
      const auto comma = rest.find(',');
      cells.push_back(rest.substr(0, comma));
      if (comma == std::string_view::npos) break;
      rest.remove_prefix(comma + 1);
    }
    if (line_no == 1) {
      const auto first = detail::trim(cells[0]);
      double probe;
      auto [ptr, ec] = std::from_chars(first.data(), first.data() + first.size(), probe);
      if (ec != std::errc()) continue;
    }
    if (cells.size() < 6 || cells.size() > 7) {
      throw Error("csv line " + std::to_string(line_no) + ": expected 6 or 7 columns");
    }
    tile.points.emplace_back(detail::parse_double(cells[0], line_no), detail::parse_double(cells[1], line_no),
                             detail::parse_double(cells[2], line_no));
    for (std::size_t c = 0; c < kReflectanceChannels; ++c) {
      const auto cell = detail::trim(cells[3 + c]);
      tile.reflectance[c].push_back(cell.empty() ? kMissing
                                                 : static_cast<float>(detail::parse_double(cell, line_no)));
    }
    std::uint8_t label = kUnlabeled;
    if (cells.size() == 7) {
      any_label_column = true;
      const auto cell = detail::trim(cells[6]);
      if (!cell.empty()) {
        const double v = detail::parse_double(cell, line_no);
        if (v != 0.0 && v != 1.0 && v != 255.0) {
          throw Error("csv line " + std::to_string(line_no) + ": label must be 0, 1 or 255");
        }
        label = static_cast<std::uint8_t>(v);
      }
    }
    labels.push_back(label);
  }
  if (tile.points.empty()) throw Error("csv '" + path.string() + "' contains no points");
  if (any_label_column) tile.labels = std::move(labels);
  return tile;
}

}  // namespace lwsep::io
