#pragma once

#include <array>
#include <cmath>
#include <numbers>
#include <vector>

#include <Eigen/Geometry>

#include "lwsep/tile.hpp"

namespace lwsep::synth {

struct Range {
  double lo, hi;
  double sample(std::mt19937_64& rng) const { return lo + (hi - lo) * uniform01(rng); }
};

enum class CrownShape { kEllipsoid, kCone };

struct SpeciesParams {
  double weight = 1.0;  // relative share of trees
  CrownShape crown = CrownShape::kEllipsoid;
  Range height{12.0, 20.0};
  Range trunk_radius{0.05, 0.12};   // at the base; tapers to 30% at the top
  Range crown_base{0.35, 0.55};     // fraction of tree height
  Range crown_width{0.25, 0.40};    // crown radius / crown length
  Range branch_count{6.0, 12.0};
  Range branch_length{0.4, 0.8};    // fraction of the crown radius
};

struct Normal {
  double mean, stddev;
};

/// Reflectance distribution per class and channel.
struct ReflectanceModel {
  std::array<Normal, kReflectanceChannels> foliage;
  std::array<Normal, kReflectanceChannels> wood;
};

/// Classes `separation` standard deviations apart on every channel.
inline ReflectanceModel reflectance_with_separation(double separation, double stddev = 0.1) {
  ReflectanceModel m;
  const std::array<double, kReflectanceChannels> base{0.45, 0.30, 0.60};
  for (std::size_t c = 0; c < kReflectanceChannels; ++c) {
    m.foliage[c] = {base[c], stddev};
    m.wood[c] = {base[c] + separation * stddev * (c == 1 ? -1.0 : 1.0), stddev};
  }
  return m;
}
inline ReflectanceModel easy_reflectance() { return reflectance_with_separation(3.0); }
inline ReflectanceModel hard_reflectance() { return reflectance_with_separation(0.5); }

struct ForestParams {
  double plot_radius = 12.0;
  std::size_t tree_count = 30;
  std::vector<SpeciesParams> species{SpeciesParams{}, SpeciesParams{0.5, CrownShape::kCone}};
  double trunk_density = 30.0;     // points per meter of stem
  double branch_density = 15.0;    // points per meter of branch
  double foliage_density = 80.0;   // points per cubic meter of crown
  std::size_t clump_points = 30;   // foliage points per leaf clump
  double clump_sigma = 0.12;       // clump spread, meters
  double crown_shell = 0.6;        // clump centers lie beyond this normalized radius
  double min_tree_spacing = 1.5;   // meters between stems
  ReflectanceModel reflectance = easy_reflectance();
  std::array<double, kReflectanceChannels> missing_rate{0.02, 0.05, 0.10};
  double noise = 0.01;  // coordinate noise stddev, meters
  std::uint64_t seed = 1;
};

inline void validate(const ForestParams& p) {
  auto positive_range = [](const Range& r, const char* what) {
    if (!(r.lo > 0.0 && r.hi >= r.lo)) throw Error(std::string("forest params: invalid range for ") + what);
  };
  if (p.tree_count == 0) throw Error("forest params: zero trees");
  if (!(p.plot_radius > 0.0)) throw Error("forest params: plot radius must be positive");
  if (p.species.empty()) throw Error("forest params: no species");
  for (const auto& s : p.species) {
    if (!(s.weight > 0.0)) throw Error("forest params: species weight must be positive");
    positive_range(s.height, "height");
    positive_range(s.trunk_radius, "trunk_radius");
    positive_range(s.crown_base, "crown_base");
    positive_range(s.crown_width, "crown_width");
    positive_range(s.branch_length, "branch_length");
    if (!(s.branch_count.lo >= 0.0 && s.branch_count.hi >= s.branch_count.lo)) {
      throw Error("forest params: invalid range for branch_count");
    }
    if (s.crown_base.hi >= 1.0) throw Error("forest params: crown base must be below the tree top");
  }
  if (p.trunk_density <= 0.0 || p.branch_density < 0.0 || p.foliage_density < 0.0) {
    throw Error("forest params: densities must be non-negative (trunk positive)");
  }
  for (double m : p.missing_rate) {
    if (!(m >= 0.0 && m < 1.0)) throw Error("forest params: missingness must be in [0, 1)");
  }
  if (p.noise < 0.0) throw Error("forest params: negative noise");
  if (!(p.clump_sigma > 0.0) || p.clump_points == 0) throw Error("forest params: invalid leaf clumps");
  if (!(p.crown_shell >= 0.0 && p.crown_shell < 1.0)) throw Error("forest params: crown shell must be in [0, 1)");
}

namespace detail {

struct TreePoints {
  std::vector<Point3> points;
  std::vector<std::uint8_t> labels;
};

inline std::size_t poisson_count(double expected, std::mt19937_64& rng) {
  // Expected counts here are large; a rounded normal approximation keeps
  // the stream portable.
  if (expected <= 0.0) return 0;
  const double v = normal_sample(rng, expected, std::sqrt(expected));
  return static_cast<std::size_t>(std::max(0.0, std::round(v)));
}

inline TreePoints grow_tree(const SpeciesParams& sp, const Eigen::Vector2d& base, const ForestParams& p,
                            std::mt19937_64& rng) {
  TreePoints out;
  const double h = sp.height.sample(rng);
  const double r0 = sp.trunk_radius.sample(rng);
  const double crown_base = sp.crown_base.sample(rng) * h;
  const double crown_len = h - crown_base;
  const double crown_r = sp.crown_width.sample(rng) * crown_len;
  const double lean = 0.03 * normal_sample(rng);
  auto stem_radius = [&](double z) { return r0 * (1.0 - 0.7 * z / h); };
  auto stem_axis = [&](double z) { return Point3(base.x() + lean * z, base.y(), z); };

  const std::size_t n_trunk = poisson_count(p.trunk_density * h, rng);
  for (std::size_t k = 0; k < n_trunk; ++k) {
    const double z = h * uniform01(rng);
    const double a = 2.0 * std::numbers::pi * uniform01(rng);
    const double r = stem_radius(z);
    out.points.push_back(stem_axis(z) + Point3(r * std::cos(a), r * std::sin(a), 0.0));
    out.labels.push_back(kWood);
  }

  const auto n_branches = static_cast<std::size_t>(std::round(sp.branch_count.sample(rng)));
  for (std::size_t b = 0; b < n_branches; ++b) {
    const double z0 = crown_base + (0.9 * h - crown_base) * uniform01(rng);
    const double az = 2.0 * std::numbers::pi * uniform01(rng);
    const double elev = (20.0 + 40.0 * uniform01(rng)) * std::numbers::pi / 180.0;
    const double len = sp.branch_length.sample(rng) * crown_r;
    const double rb = 0.3 * stem_radius(z0);
    const Point3 dir(std::cos(elev) * std::cos(az), std::cos(elev) * std::sin(az), std::sin(elev));
    // Orthonormal frame around the branch axis.
    const Point3 u = dir.cross(Point3::UnitZ()).normalized();
    const Point3 w = dir.cross(u);
    const std::size_t n = poisson_count(p.branch_density * len, rng);
    for (std::size_t k = 0; k < n; ++k) {
      const double t = len * uniform01(rng);
      const double a = 2.0 * std::numbers::pi * uniform01(rng);
      const double r = rb * (1.0 - 0.6 * t / len);
      out.points.push_back(stem_axis(z0) + t * dir + r * (std::cos(a) * u + std::sin(a) * w));
      out.labels.push_back(kWood);
    }
  }

  // Foliage: Gaussian leaf clumps whose centers lie in the outer shell of
  // the crown volume.
  const double semi_z = 0.5 * crown_len;
  const double volume = sp.crown == CrownShape::kEllipsoid
                            ? 4.0 / 3.0 * std::numbers::pi * crown_r * crown_r * semi_z
                            : std::numbers::pi * crown_r * crown_r * crown_len / 3.0;
  const Point3 crown_center = stem_axis(crown_base + semi_z);
  const std::size_t n_leaf = poisson_count(p.foliage_density * volume, rng);
  const std::size_t per_clump = std::max<std::size_t>(1, p.clump_points);
  std::size_t placed = 0;
  while (placed < n_leaf) {
    const Point3 d(2.0 * uniform01(rng) - 1.0, 2.0 * uniform01(rng) - 1.0, 2.0 * uniform01(rng) - 1.0);
    const double rho = d.norm();
    if (rho > 1.0 || rho < p.crown_shell) continue;
    Point3 center;
    if (sp.crown == CrownShape::kEllipsoid) {
      center = crown_center + Point3(crown_r * d.x(), crown_r * d.y(), semi_z * d.z());
    } else {
      const double zf = 0.5 * (d.z() + 1.0);  // 0 at crown base, 1 at apex
      center = stem_axis(crown_base + zf * crown_len) +
               Point3(crown_r * (1.0 - zf) * d.x(), crown_r * (1.0 - zf) * d.y(), 0.0);
    }
    const std::size_t n = std::min(per_clump, n_leaf - placed);
    for (std::size_t k = 0; k < n; ++k) {
      out.points.push_back(center + Point3(normal_sample(rng, 0.0, p.clump_sigma),
                                           normal_sample(rng, 0.0, p.clump_sigma),
                                           normal_sample(rng, 0.0, p.clump_sigma)));
      out.labels.push_back(kFoliage);
    }
    placed += n;
  }
  return out;
}

}  // namespace detail

/// Seeded synthetic plot: tapered stems and oblique branches (wood) under
/// ellipsoidal or conical crowns (foliage), with per-class reflectance,
/// per-channel missingness and coordinate noise. Ground is absent and z
/// starts at 0.
inline Tile generate_plot(const ForestParams& p) {
  validate(p);
  auto rng = make_rng(p.seed, {0x7265u});

  // Stem positions by rejection sampling with a minimum spacing.
  std::vector<Eigen::Vector2d> stems;
  std::vector<std::size_t> species_of;
  double weight_total = 0.0;
  for (const auto& s : p.species) weight_total += s.weight;
  const double stem_r = 0.9 * p.plot_radius;
  for (std::size_t attempt = 0; stems.size() < p.tree_count && attempt < 200 * p.tree_count; ++attempt) {
    const double a = 2.0 * std::numbers::pi * uniform01(rng);
    const double r = stem_r * std::sqrt(uniform01(rng));
    const Eigen::Vector2d c(r * std::cos(a), r * std::sin(a));
    bool ok = true;
    for (const auto& o : stems) ok &= (o - c).norm() >= p.min_tree_spacing;
    if (!ok) continue;
    stems.push_back(c);
    double pick = uniform01(rng) * weight_total;
    std::size_t k = 0;
    while (k + 1 < p.species.size() && pick >= p.species[k].weight) pick -= p.species[k++].weight;
    species_of.push_back(k);
  }
  if (stems.size() < p.tree_count) throw Error("forest params: cannot place trees with the requested spacing");

  std::vector<detail::TreePoints> trees(stems.size());
  parallel_for(stems.size(), [&](std::size_t t) {
    auto tree_rng = make_rng(p.seed, {0x7472u, t});
    trees[t] = detail::grow_tree(p.species[species_of[t]], stems[t], p, tree_rng);
  });

  Tile tile;
  tile.tile_id = "synth_" + std::to_string(p.seed);
  tile.radius = p.plot_radius;
  tile.labels.emplace();
  auto attr_rng = make_rng(p.seed, {0x6174u});
  const double r2 = p.plot_radius * p.plot_radius;
  for (const auto& tree : trees) {
    for (std::size_t k = 0; k < tree.points.size(); ++k) {
      Point3 q = tree.points[k];
      for (int d = 0; d < 3; ++d) q[d] += normal_sample(attr_rng, 0.0, p.noise);
      const auto label = tree.labels[k];
      // Attribute draws happen before the clip test so the stream does not
      // depend on which points are kept.
      std::array<float, kReflectanceChannels> refl;
      for (std::size_t c = 0; c < kReflectanceChannels; ++c) {
        const auto& dist = label == kWood ? p.reflectance.wood[c] : p.reflectance.foliage[c];
        const double v = normal_sample(attr_rng, dist.mean, dist.stddev);
        refl[c] = uniform01(attr_rng) < p.missing_rate[c] ? kMissing : static_cast<float>(v);
      }
      if (q.head<2>().squaredNorm() > r2 || q.z() < 0.0) continue;
      tile.points.push_back(q);
      tile.labels->push_back(label);
      for (std::size_t c = 0; c < kReflectanceChannels; ++c) tile.reflectance[c].push_back(refl[c]);
    }
  }
  return tile;
}

inline double wood_fraction(const Tile& t) {
  if (!t.labels || t.labels->empty()) return 0.0;
  std::size_t wood = 0;
  for (auto l : *t.labels) wood += l == kWood;
  return static_cast<double>(wood) / static_cast<double>(t.labels->size());
}

}  // namespace lwsep::synth
