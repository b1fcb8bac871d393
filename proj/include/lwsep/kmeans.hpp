#pragma once

#include <limits>
#include <vector>

#include "lwsep/common.hpp"

namespace lwsep {

struct KMeansConfig {
  std::size_t max_iterations = 300;
  double relative_tolerance = 1e-6;
};

struct KMeansResult {
  std::vector<std::uint32_t> assignment;
  RowMatrixXd centroids;
  double objective = 0.0;
  std::vector<double> objective_history;  // after seeding, then after each Lloyd step
  std::size_t iterations = 0;
  std::size_t reseeded = 0;  // empty clusters re-seeded at the farthest point
};

namespace detail {

/// Nearest centroid per row (lowest index on ties) and the squared
/// distance to it. Distances are computed exactly, not via the expanded
/// dot-product form, so the objective is monotone under Lloyd steps.
inline void assign_nearest(const RowMatrixXd& x, const RowMatrixXd& c, std::vector<std::uint32_t>& assign,
                           std::vector<double>& dist2) {
  const Eigen::Index m = x.rows(), k = c.rows();
  assign.resize(static_cast<std::size_t>(m));
  dist2.resize(static_cast<std::size_t>(m));
  // Candidate ranking uses the fast expanded form; the winner's distance is
  // then recomputed exactly and near-ties are resolved exactly.
  const Eigen::VectorXd c_norm = c.rowwise().squaredNorm();
  constexpr Eigen::Index kBlock = 2048;
  for (Eigen::Index start = 0; start < m; start += kBlock) {
    const Eigen::Index rows = std::min(kBlock, m - start);
    const Eigen::MatrixXd dots = x.middleRows(start, rows) * c.transpose();
    parallel_for(static_cast<std::size_t>(rows), [&](std::size_t rr) {
      const auto r = static_cast<Eigen::Index>(rr);
      const Eigen::Index i = start + r;
      const double x_norm = x.row(i).squaredNorm();
      double best = std::numeric_limits<double>::infinity();
      for (Eigen::Index j = 0; j < k; ++j) best = std::min(best, x_norm - 2.0 * dots(r, j) + c_norm[j]);
      const double slack = 1e-9 * (x_norm + c_norm.maxCoeff()) + 1e-12;
      double exact_best = std::numeric_limits<double>::infinity();
      Eigen::Index arg = 0;
      for (Eigen::Index j = 0; j < k; ++j) {
        if (x_norm - 2.0 * dots(r, j) + c_norm[j] > best + slack) continue;
        const double d = (x.row(i) - c.row(j)).squaredNorm();
        if (d < exact_best) {
          exact_best = d;
          arg = j;
        }
      }
      assign[static_cast<std::size_t>(i)] = static_cast<std::uint32_t>(arg);
      dist2[static_cast<std::size_t>(i)] = exact_best;
    });
  }
}

}  // namespace detail

/// Lloyd's algorithm from k-means++ seeding. Deterministic for a given RNG
/// state. Empty clusters are re-seeded at the point farthest from its
/// centroid.
inline KMeansResult kmeans(const RowMatrixXd& x, std::size_t k, std::mt19937_64& rng,
                           const KMeansConfig& cfg = {}) {
  const auto m = static_cast<std::size_t>(x.rows());
  if (k == 0) throw Error("kmeans: k must be positive");
  if (m < k) throw Error("kmeans: " + std::to_string(m) + " rows cannot form " + std::to_string(k) + " clusters");
  if (!x.allFinite()) throw Error("kmeans: non-finite input");
  KMeansResult res;
  res.centroids.resize(static_cast<Eigen::Index>(k), x.cols());

  // k-means++ seeding.
  std::vector<double> d2(m, std::numeric_limits<double>::infinity());
  std::size_t pick = uniform_index(rng, m);
  for (std::size_t c = 0; c < k; ++c) {
    res.centroids.row(static_cast<Eigen::Index>(c)) = x.row(static_cast<Eigen::Index>(pick));
    double total = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      const double d = (x.row(static_cast<Eigen::Index>(i)) - x.row(static_cast<Eigen::Index>(pick))).squaredNorm();
      d2[i] = std::min(d2[i], d);
      total += d2[i];
    }
    if (c + 1 == k) break;
    if (total <= 0.0) {
      // Remaining rows coincide with chosen centers; take the first unused
      // row to keep centers distinct by index.
      pick = (pick + 1) % m;
      continue;
    }
    double target = uniform01(rng) * total;
    pick = m - 1;
    for (std::size_t i = 0; i < m; ++i) {
      target -= d2[i];
      if (target < 0.0 && d2[i] > 0.0) {
        pick = i;
        break;
      }
    }
  }

  std::vector<double> dist2;
  detail::assign_nearest(x, res.centroids, res.assignment, dist2);
  auto objective = [&] {
    double s = 0.0;
    for (double d : dist2) s += d;
    return s;
  };
  res.objective = objective();
  res.objective_history.push_back(res.objective);

  std::vector<std::size_t> counts(k);
  for (std::size_t it = 0; it < cfg.max_iterations; ++it) {
    // Update step.
    res.centroids.setZero();
    std::fill(counts.begin(), counts.end(), 0);
    for (std::size_t i = 0; i < m; ++i) {
      res.centroids.row(res.assignment[i]) += x.row(static_cast<Eigen::Index>(i));
      ++counts[res.assignment[i]];
    }
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] > 0) {
        res.centroids.row(static_cast<Eigen::Index>(c)) /= static_cast<double>(counts[c]);
        continue;
      }
      // Empty cluster: move it onto the point farthest from its centroid.
      const auto far = static_cast<std::size_t>(std::max_element(dist2.begin(), dist2.end()) - dist2.begin());
      res.centroids.row(static_cast<Eigen::Index>(c)) = x.row(static_cast<Eigen::Index>(far));
      dist2[far] = 0.0;
      ++res.reseeded;
    }
    const auto previous = res.assignment;
    detail::assign_nearest(x, res.centroids, res.assignment, dist2);
    const double obj = objective();
    res.objective_history.push_back(obj);
    ++res.iterations;
    const double change = std::abs(res.objective - obj);
    res.objective = obj;
    if (previous == res.assignment) break;
    if (change <= cfg.relative_tolerance * std::max(obj, std::numeric_limits<double>::min())) break;
  }
  return res;
}

}  // namespace lwsep
