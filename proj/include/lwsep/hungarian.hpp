#pragma once

#include <limits>
#include <vector>

#include <Eigen/Core>

namespace lwsep::eval {

/// Maximum-weight assignment between the rows and columns of a (possibly
/// rectangular) matrix using the Hungarian method; the matrix is padded with
/// zeros to square. Returns, for each row, its assigned column or -1 when
/// the row was matched to a padding column.
inline std::vector<int> hungarian_assign(const Eigen::MatrixXd& weights) {
  const int rows = static_cast<int>(weights.rows());
  const int cols = static_cast<int>(weights.cols());
  const int n = std::max(rows, cols);
  if (n == 0) return {};
  const double max_w = weights.size() ? std::max(0.0, weights.maxCoeff()) : 0.0;
  auto cost = [&](int i, int j) {
    const double w = (i < rows && j < cols) ? weights(i, j) : 0.0;
    return max_w - w;
  };
  // Shortest augmenting path formulation with potentials (1-based).
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<int> p(n + 1, 0), way(n + 1, 0);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<double> minv(n + 1, inf);
    std::vector<char> used(n + 1, false);
    do {
      used[j0] = true;
      const int i0 = p[j0];
      double delta = inf;
      int j1 = 0;
      for (int j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0);
  }
  std::vector<int> assignment(rows, -1);
  for (int j = 1; j <= n; ++j) {
    const int i = p[j] - 1;
    if (i < rows && j - 1 < cols) assignment[i] = j - 1;
  }
  return assignment;
}

/// Total weight of an assignment as returned by hungarian_assign.
inline double assignment_total(const Eigen::MatrixXd& weights, const std::vector<int>& assignment) {
  double s = 0.0;
  for (std::size_t i = 0; i < assignment.size(); ++i) {
    if (assignment[i] >= 0) s += weights(static_cast<Eigen::Index>(i), assignment[i]);
  }
  return s;
}

}  // namespace lwsep::eval
