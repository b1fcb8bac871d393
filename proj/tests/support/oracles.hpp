#pragma once

// Independent reference implementations used by unit and acceptance tests.
// Deliberately naive: brute force and enumeration only.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <vector>

#include <Eigen/Core>

namespace lwsep::oracle {

/// Exhaustive optimum of the l0 piecewise-constant energy on a chain
/// 0-1-2-...-(n-1): enumerates every subset of the n-1 chain edges to cut.
/// edge_weight[k] is the weight of edge (k, k+1).
inline double chain_optimum(const std::vector<std::vector<double>>& f, const std::vector<double>& edge_weight,
                            double lambda, std::uint64_t* best_mask = nullptr) {
  const std::size_t n = f.size();
  const std::size_t d = f[0].size();
  double best = std::numeric_limits<double>::infinity();
  const std::uint64_t masks = std::uint64_t{1} << (n - 1);
  for (std::uint64_t mask = 0; mask < masks; ++mask) {
    // Segment means.
    std::vector<std::vector<double>> seg_mean;
    std::vector<std::size_t> seg_of(n);
    std::size_t start = 0;
    std::size_t seg = 0;
    double fid = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const bool end = i == n - 1 || ((mask >> i) & 1);
      if (!end) continue;
      std::vector<double> mean(d, 0.0);
      for (std::size_t k = start; k <= i; ++k)
        for (std::size_t c = 0; c < d; ++c) mean[c] += f[k][c];
      for (auto& m : mean) m /= static_cast<double>(i - start + 1);
      for (std::size_t k = start; k <= i; ++k) {
        seg_of[k] = seg;
        for (std::size_t c = 0; c < d; ++c) fid += (f[k][c] - mean[c]) * (f[k][c] - mean[c]);
      }
      seg_mean.push_back(mean);
      ++seg;
      start = i + 1;
    }
    double pen = 0.0;
    for (std::size_t k = 0; k + 1 < n; ++k) {
      if ((mask >> k) & 1) {
        if (seg_mean[seg_of[k]] != seg_mean[seg_of[k + 1]]) pen += lambda * edge_weight[k];
      }
    }
    if (fid + pen < best) {
      best = fid + pen;
      if (best_mask) *best_mask = mask;
    }
  }
  return best;
}

/// Optimal assignment value by enumerating all permutations of a square
/// matrix (maximizing the sum).
inline double best_permutation_total(const std::vector<std::vector<double>>& m, std::vector<std::size_t>* perm = nullptr) {
  const std::size_t n = m.size();
  std::vector<std::size_t> p(n);
  std::iota(p.begin(), p.end(), 0);
  double best = -std::numeric_limits<double>::infinity();
  do {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += m[i][p[i]];
    if (s > best) {
      best = s;
      if (perm) *perm = p;
    }
  } while (std::next_permutation(p.begin(), p.end()));
  return best;
}

/// Naive per-class counting metrics, given a fixed prediction->truth map.
struct NaiveMetrics {
  double oacc = 0, macc = 0, miou = 0;
  std::vector<double> iou, acc;
};

inline NaiveMetrics naive_metrics(const std::vector<int>& gt, const std::vector<int>& pred_mapped, int classes) {
  NaiveMetrics out;
  std::size_t n = 0, correct = 0;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    if (gt[i] < 0) continue;
    ++n;
    if (gt[i] == pred_mapped[i]) ++correct;
  }
  out.oacc = static_cast<double>(correct) / static_cast<double>(n);
  int acc_classes = 0, iou_classes = 0;
  for (int c = 0; c < classes; ++c) {
    std::size_t nc = 0, tp = 0, pc = 0;
    for (std::size_t i = 0; i < gt.size(); ++i) {
      if (gt[i] < 0) continue;
      if (gt[i] == c) ++nc;
      if (pred_mapped[i] == c) ++pc;
      if (gt[i] == c && pred_mapped[i] == c) ++tp;
    }
    const double acc = nc ? static_cast<double>(tp) / nc : std::nan("");
    const double uni = static_cast<double>(nc + pc - tp);
    const double iou = uni > 0 ? tp / uni : std::nan("");
    out.acc.push_back(acc);
    out.iou.push_back(iou);
    if (nc) {
      out.macc += acc;
      ++acc_classes;
    }
    if (uni > 0) {
      out.miou += iou;
      ++iou_classes;
    }
  }
  out.macc /= acc_classes;
  out.miou /= iou_classes;
  return out;
}

/// Brute-force k nearest within radius (sorted by distance then index).
inline std::vector<std::uint32_t> brute_hybrid(const std::vector<Eigen::Vector3d>& pts, std::size_t q, double r,
                                               std::size_t k) {
  std::vector<std::pair<double, std::uint32_t>> all;
  for (std::uint32_t i = 0; i < pts.size(); ++i) {
    const double d2 = (pts[i] - pts[q]).squaredNorm();
    if (d2 <= r * r) all.emplace_back(d2, i);
  }
  std::sort(all.begin(), all.end());
  std::vector<std::uint32_t> out;
  for (std::size_t i = 0; i < std::min(k, all.size()); ++i) out.push_back(all[i].second);
  return out;
}

/// Linear-interpolation quantile computed directly from the definition
/// (rank-based), independent of any library routine.
inline double quantile_by_rank(std::vector<double> v, double q) {
  std::sort(v.begin(), v.end());
  const double h = (static_cast<double>(v.size()) - 1.0) * q;
  const double lo = std::floor(h);
  const auto i = static_cast<std::size_t>(lo);
  if (i + 1 >= v.size()) return v.back();
  return v[i] * (1.0 - (h - lo)) + v[i + 1] * (h - lo);
}

}  // namespace lwsep::oracle
