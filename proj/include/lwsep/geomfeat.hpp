#pragma once

#include <array>
#include <span>
#include <vector>

#include <Eigen/Eigenvalues>

#include "lwsep/spatial/voxel_grid.hpp"

namespace lwsep::geomfeat {

enum Descriptor : int { kLinearity = 0, kPlanarity = 1, kSphericity = 2, kVerticality = 3, kPca1 = 4 };
inline constexpr int kDescriptorCount = 5;

/// Eigen descriptors of one neighborhood covariance.
struct EigenDescriptor {
  std::array<double, kDescriptorCount> values{};
  bool degenerate = false;

  double linearity() const { return values[kLinearity]; }
  double planarity() const { return values[kPlanarity]; }
  double sphericity() const { return values[kSphericity]; }
  double verticality() const { return values[kVerticality]; }
  double pca1() const { return values[kPca1]; }
};

struct NeighborhoodConfig {
  double r_n = 0.35;
  std::vector<std::size_t> scales{20, 50, 100, 150};
};

/// Per-point multi-scale descriptors, one row per point in Descriptor order.
/// Stored in single precision, matching the sidecar file format.
struct GeomFeatures {
  Eigen::Matrix<float, Eigen::Dynamic, kDescriptorCount, Eigen::RowMajor> values;
  std::size_t degenerate_points = 0;

  std::size_t size() const { return static_cast<std::size_t>(values.rows()); }
  double linearity(std::size_t i) const { return values(static_cast<Eigen::Index>(i), kLinearity); }
};

/// Index of the member minimizing the summed Euclidean distance to all
/// other members (lowest index on ties).
inline std::size_t medoid_index(std::span<const Point3> pts) {
  std::size_t best = 0;
  double best_sum = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < pts.size(); ++i) {
    double sum = 0.0;
    for (std::size_t j = 0; j < pts.size(); ++j) sum += (pts[i] - pts[j]).norm();
    if (sum < best_sum) {
      best_sum = sum;
      best = i;
    }
  }
  return best;
}

/// Neighborhood covariance about the medoid, normalized by the actual
/// neighborhood size.
inline Eigen::Matrix3d covariance_medoid(std::span<const Point3> pts) {
  Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
  if (pts.empty()) return cov;
  const Point3 med = pts[medoid_index(pts)];
  for (const auto& p : pts) {
    const Eigen::Vector3d d = p - med;
    cov.noalias() += d * d.transpose();
  }
  return cov / static_cast<double>(pts.size());
}

/// Linearity, planarity, sphericity, verticality and PCA1 of a symmetric
/// PSD tensor. Eigenvalues are clamped at 0. When the smallest eigenvalue is
/// repeated, e3 is taken as the unit vector of its eigenspace closest to the
/// z axis.
inline EigenDescriptor eigen_features(const Eigen::Matrix3d& cov) {
  EigenDescriptor out;
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> solver(cov);
  const Eigen::Vector3d ascending = solver.eigenvalues().cwiseMax(0.0);
  const double l1 = ascending[2], l2 = ascending[1], l3 = ascending[0];
  if (!(l1 > 0.0)) {
    out.degenerate = true;
    out.values = {0.0, 0.0, 0.0, 0.0, 1.0 / 3.0};
    return out;
  }
  const double tie_tol = 1e-12 * l1;
  const Eigen::Vector3d z = Eigen::Vector3d::UnitZ();
  double z_alignment;
  if (l1 - l3 <= tie_tol) {
    z_alignment = 1.0;  // isotropic: every direction is an eigenvector
  } else if (l2 - l3 <= tie_tol) {
    // Span of the two smallest eigenvectors; project z onto it.
    const Eigen::Vector3d e2 = solver.eigenvectors().col(1);
    const Eigen::Vector3d e3 = solver.eigenvectors().col(0);
    z_alignment = std::min(1.0, std::hypot(z.dot(e2), z.dot(e3)));
  } else {
    z_alignment = std::abs(z.dot(solver.eigenvectors().col(0)));
  }
  out.values[kLinearity] = (l1 - l2) / l1;
  out.values[kPlanarity] = (l2 - l3) / l1;
  out.values[kSphericity] = l3 / l1;
  out.values[kVerticality] = 1.0 - z_alignment;
  out.values[kPca1] = l1 / (l1 + l2 + l3);
  return out;
}

/// Multi-scale average of the eigen descriptors over hybrid (radius-capped
/// k-nearest) neighborhoods.
inline GeomFeatures multiscale_features(std::span<const Point3> cloud, const NeighborhoodConfig& cfg) {
  if (cfg.scales.empty()) throw Error("multiscale_features: no scales given");
  if (!(cfg.r_n > 0.0)) throw Error("multiscale_features: r_n must be positive");
  std::vector<std::size_t> scales = cfg.scales;
  std::sort(scales.begin(), scales.end());
  const std::size_t k_max = scales.back();

  GeomFeatures out;
  out.values.setZero(static_cast<Eigen::Index>(cloud.size()), kDescriptorCount);
  if (cloud.empty()) return out;
  const spatial::VoxelGrid grid(cloud, cfg.r_n);
  std::vector<std::uint8_t> degenerate(cloud.size(), 0);

  parallel_for(cloud.size(), [&](std::size_t i) {
    const auto nb = grid.hybrid_neighborhood(static_cast<std::uint32_t>(i), cfg.r_n, k_max);
    const std::size_t n = nb.size();
    // Pairwise distances once, reused by every scale's medoid search.
    Eigen::MatrixXd dist(n, n);
    for (std::size_t a = 0; a < n; ++a) {
      dist(a, a) = 0.0;
      for (std::size_t b = a + 1; b < n; ++b) {
        dist(a, b) = dist(b, a) = (cloud[nb[a].index] - cloud[nb[b].index]).norm();
      }
    }
    std::array<double, kDescriptorCount> acc{};
    bool any_degenerate = false;
    for (const auto k : scales) {
      const std::size_t m = std::min(k, n);
      std::size_t med = 0;
      double best = std::numeric_limits<double>::infinity();
      for (std::size_t a = 0; a < m; ++a) {
        const double s = dist.row(static_cast<Eigen::Index>(a)).head(static_cast<Eigen::Index>(m)).sum();
        if (s < best) {
          best = s;
          med = a;
        }
      }
      Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
      const Point3& pm = cloud[nb[med].index];
      for (std::size_t a = 0; a < m; ++a) {
        const Eigen::Vector3d d = cloud[nb[a].index] - pm;
        cov.noalias() += d * d.transpose();
      }
      cov /= static_cast<double>(m);
      const auto f = eigen_features(cov);
      any_degenerate |= f.degenerate;
      for (int c = 0; c < kDescriptorCount; ++c) acc[c] += f.values[c];
    }
    for (int c = 0; c < kDescriptorCount; ++c) {
      out.values(static_cast<Eigen::Index>(i), c) = static_cast<float>(acc[c] / static_cast<double>(scales.size()));
    }
    degenerate[i] = any_degenerate;
  });
  for (auto d : degenerate) out.degenerate_points += d;
  return out;
}

}  // namespace lwsep::geomfeat
