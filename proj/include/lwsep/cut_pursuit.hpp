#pragma once

// Working-set l0 cut pursuit for
//
//   min_g  sum_i ||g_i - f_i||^2 + lambda * sum_{(i,j) in E} w_ij [g_i != g_j]
//
// The solution is piecewise constant over connected components; each
// component's value is the mean of its features. Iterations alternate a
// split step (binary min-cut per component against two candidate values)
// and a greedy merge step over adjacent components.

#include <cmath>
#include <numeric>
#include <queue>
#include <span>
#include <unordered_map>
#include <vector>

#include "lwsep/common.hpp"
#include "lwsep/maxflow.hpp"
#include "lwsep/spatial/kdtree.hpp"

namespace lwsep::cp {

struct DirectedEdge {
  std::uint32_t from, to;
  double weight;
};

/// k-nearest-neighbor adjacency. `directed` holds the raw kNN arcs;
/// `edges` is their symmetrized union with each pair stored once (i < j).
struct AdjacencyGraph {
  std::size_t vertex_count = 0;
  std::vector<DirectedEdge> directed;
  std::vector<DirectedEdge> edges;

  /// CSR view: neighbors of v are adj[offsets[v] .. offsets[v+1]).
  std::vector<std::size_t> offsets;
  std::vector<std::uint32_t> adj;
  std::vector<double> adj_weight;

  void build_csr() {
    offsets.assign(vertex_count + 1, 0);
    for (const auto& e : edges) {
      ++offsets[e.from + 1];
      ++offsets[e.to + 1];
    }
    std::partial_sum(offsets.begin(), offsets.end(), offsets.begin());
    adj.resize(offsets.back());
    adj_weight.resize(offsets.back());
    std::vector<std::size_t> fill(offsets.begin(), offsets.end() - 1);
    for (const auto& e : edges) {
      adj[fill[e.from]] = e.to;
      adj_weight[fill[e.from]++] = e.weight;
      adj[fill[e.to]] = e.from;
      adj_weight[fill[e.to]++] = e.weight;
    }
  }
};

/// Builds an undirected graph from an explicit pair list (used for chains
/// and tests). Duplicate pairs keep the first weight.
inline AdjacencyGraph graph_from_edges(std::size_t n, std::span<const DirectedEdge> pairs) {
  AdjacencyGraph g;
  g.vertex_count = n;
  std::unordered_map<std::uint64_t, bool> seen;
  for (const auto& e : pairs) {
    if (e.from == e.to) continue;
    const auto a = std::min(e.from, e.to), b = std::max(e.from, e.to);
    if (!seen.emplace((std::uint64_t{a} << 32) | b, true).second) continue;
    g.directed.push_back(e);
    g.edges.push_back({a, b, e.weight});
  }
  g.build_csr();
  return g;
}

/// 10-nearest-neighbor graph with weights 1/distance. Coincident points are
/// clamped to a distance of `min_distance`.
inline AdjacencyGraph build_graph(std::span<const Point3> points, std::size_t k = 10,
                                  double min_distance = 1e-6) {
  AdjacencyGraph g;
  g.vertex_count = points.size();
  const spatial::KdTree tree(points);
  std::vector<std::vector<spatial::Neighbor>> knn(points.size());
  parallel_for(points.size(), [&](std::size_t i) {
    knn[i] = tree.knn(points[i], k, static_cast<std::uint32_t>(i));
  });
  std::vector<std::uint64_t> keys;
  keys.reserve(points.size() * k);
  for (std::uint32_t i = 0; i < points.size(); ++i) {
    for (const auto& nb : knn[i]) {
      const double w = 1.0 / std::max(std::sqrt(nb.dist2), min_distance);
      g.directed.push_back({i, nb.index, w});
      const auto a = std::min(i, nb.index), b = std::max(i, nb.index);
      keys.push_back((std::uint64_t{a} << 32) | b);
    }
  }
  std::vector<std::size_t> order(keys.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](auto x, auto y) { return keys[x] < keys[y]; });
  for (std::size_t r = 0; r < order.size(); ++r) {
    if (r > 0 && keys[order[r]] == keys[order[r - 1]]) continue;
    const auto& d = g.directed[order[r]];
    g.edges.push_back({std::min(d.from, d.to), std::max(d.from, d.to), d.weight});
  }
  g.build_csr();
  return g;
}

struct CutPursuitConfig {
  double lambda = 0.1;
  double feature_weight = 10.0;
  std::size_t max_iterations = 10;
  /// Relative energy decrease below which iterations stop.
  double flow_tolerance = 1e-4;
  /// Alternations between min-cut labeling and value updates per split.
  std::size_t flow_steps = 3;
};

struct CutPursuitResult {
  RowMatrixXd values;                    // g, one row per vertex
  std::vector<std::uint32_t> component;  // dense component id per vertex
  std::size_t component_count = 0;
  double energy = 0.0;
  std::vector<double> energy_history;  // after initialization and each iteration
};

/// Energy of an arbitrary candidate solution g.
inline double energy(const AdjacencyGraph& graph, const RowMatrixXd& features, const RowMatrixXd& g,
                     double lambda) {
  double e = (g - features).squaredNorm();
  for (const auto& edge : graph.edges) {
    if (g.row(edge.from) != g.row(edge.to)) e += lambda * edge.weight;
  }
  return e;
}

/// Connected components of the subgraph keeping only edges whose endpoints
/// share a label.
inline std::size_t label_components(const AdjacencyGraph& graph, std::span<const std::uint32_t> label,
                                    std::vector<std::uint32_t>& out) {
  constexpr auto kUnset = std::numeric_limits<std::uint32_t>::max();
  out.assign(graph.vertex_count, kUnset);
  std::uint32_t next = 0;
  std::vector<std::uint32_t> stack;
  for (std::uint32_t s = 0; s < graph.vertex_count; ++s) {
    if (out[s] != kUnset) continue;
    out[s] = next;
    stack.push_back(s);
    while (!stack.empty()) {
      const auto u = stack.back();
      stack.pop_back();
      for (auto e = graph.offsets[u]; e < graph.offsets[u + 1]; ++e) {
        const auto v = graph.adj[e];
        if (out[v] == kUnset && label[v] == label[u]) {
          out[v] = next;
          stack.push_back(v);
        }
      }
    }
    ++next;
  }
  return next;
}

namespace detail {

class Solver {
 public:
  Solver(const AdjacencyGraph& graph, const RowMatrixXd& f, const CutPursuitConfig& cfg)
      : g_(graph), f_(f), cfg_(cfg), n_(graph.vertex_count), dim_(f.cols()) {}

  CutPursuitResult run() {
    std::vector<std::uint32_t> zeros(n_, 0);
    count_ = label_components(g_, zeros, comp_);
    update_means();
    CutPursuitResult res;
    double e = current_energy();
    res.energy_history.push_back(e);
    for (std::size_t it = 0; it < cfg_.max_iterations; ++it) {
      const bool split_any = split_all();
      update_means();
      merge_pass();
      const double e_new = current_energy();
      res.energy_history.push_back(e_new);
      const double drop = e - e_new;
      e = e_new;
      if (!split_any || drop <= cfg_.flow_tolerance * std::max(std::abs(e), 1e-300)) break;
    }
    res.values.resize(static_cast<Eigen::Index>(n_), dim_);
    for (std::size_t i = 0; i < n_; ++i) res.values.row(static_cast<Eigen::Index>(i)) = means_.row(comp_[i]);
    res.component = comp_;
    res.component_count = count_;
    res.energy = e;
    return res;
  }

 private:
  double current_energy() const {
    double e = 0.0;
    for (std::size_t i = 0; i < n_; ++i) {
      e += (f_.row(static_cast<Eigen::Index>(i)) - means_.row(comp_[i])).squaredNorm();
    }
    for (const auto& edge : g_.edges) {
      if (comp_[edge.from] != comp_[edge.to] && means_.row(comp_[edge.from]) != means_.row(comp_[edge.to])) {
        e += cfg_.lambda * edge.weight;
      }
    }
    return e;
  }

  void update_means() {
    means_.setZero(static_cast<Eigen::Index>(count_), dim_);
    sizes_.assign(count_, 0);
    for (std::size_t i = 0; i < n_; ++i) {
      means_.row(comp_[i]) += f_.row(static_cast<Eigen::Index>(i));
      ++sizes_[comp_[i]];
    }
    for (std::size_t c = 0; c < count_; ++c) means_.row(static_cast<Eigen::Index>(c)) /= static_cast<double>(sizes_[c]);
  }

  // Binary min-cut labeling of one component against two candidate values.
  // Returns false when no non-trivial labeling is found.
  bool split_labels(const std::vector<std::uint32_t>& verts, std::vector<std::uint8_t>& side) {
    const std::size_t m = verts.size();
    auto feat = [&](std::size_t local) { return f_.row(verts[local]); };
    Eigen::RowVectorXd mean = Eigen::RowVectorXd::Zero(dim_);
    for (std::size_t a = 0; a < m; ++a) mean += feat(a);
    mean /= static_cast<double>(m);
    auto farthest_from = [&](const Eigen::RowVectorXd& x) {
      std::size_t best = 0;
      double bd = -1.0;
      for (std::size_t a = 0; a < m; ++a) {
        const double d = (feat(a) - x).squaredNorm();
        if (d > bd) {
          bd = d;
          best = a;
        }
      }
      return std::pair{best, bd};
    };
    const auto [ia, da] = farthest_from(mean);
    if (da <= 0.0) return false;
    Eigen::RowVectorXd h0 = feat(ia);
    Eigen::RowVectorXd h1 = feat(farthest_from(h0).first);
    side.assign(m, 0);
    // Unconstrained 2-means refinement of the candidate values.
    for (int lloyd = 0; lloyd < 3; ++lloyd) {
      Eigen::RowVectorXd s0 = Eigen::RowVectorXd::Zero(dim_), s1 = s0;
      std::size_t n0 = 0, n1 = 0;
      for (std::size_t a = 0; a < m; ++a) {
        if ((feat(a) - h0).squaredNorm() <= (feat(a) - h1).squaredNorm()) {
          s0 += feat(a);
          ++n0;
        } else {
          s1 += feat(a);
          ++n1;
        }
      }
      if (!n0 || !n1) break;
      h0 = s0 / static_cast<double>(n0);
      h1 = s1 / static_cast<double>(n1);
    }
    local_.assign(n_, std::numeric_limits<std::uint32_t>::max());
    for (std::size_t a = 0; a < m; ++a) local_[verts[a]] = static_cast<std::uint32_t>(a);
    const auto src = static_cast<std::uint32_t>(m), sink = static_cast<std::uint32_t>(m + 1);
    for (std::size_t step = 0; step < std::max<std::size_t>(cfg_.flow_steps, 1); ++step) {
      MaxFlow flow(m + 2);
      for (std::size_t a = 0; a < m; ++a) {
        const double c0 = (feat(a) - h0).squaredNorm();
        const double c1 = (feat(a) - h1).squaredNorm();
        // Source side = value h0: cutting a->sink pays c0, cutting src->a pays c1.
        const double base = std::min(c0, c1);
        if (c1 - base > 0.0) flow.add_edge(src, static_cast<std::uint32_t>(a), c1 - base);
        if (c0 - base > 0.0) flow.add_edge(static_cast<std::uint32_t>(a), sink, c0 - base);
        const auto u = verts[a];
        for (auto e = g_.offsets[u]; e < g_.offsets[u + 1]; ++e) {
          const auto v = g_.adj[e];
          if (v > u && comp_[v] == comp_[u]) {
            const double w = cfg_.lambda * g_.adj_weight[e];
            flow.add_edge(static_cast<std::uint32_t>(a), local_[v], w, w);
          }
        }
      }
      flow.max_flow(src, sink);
      Eigen::RowVectorXd s0 = Eigen::RowVectorXd::Zero(dim_), s1 = s0;
      std::size_t n0 = 0, n1 = 0;
      for (std::size_t a = 0; a < m; ++a) {
        side[a] = flow.in_source_set(static_cast<std::uint32_t>(a)) ? 0 : 1;
        if (side[a] == 0) {
          s0 += feat(a);
          ++n0;
        } else {
          s1 += feat(a);
          ++n1;
        }
      }
      if (!n0 || !n1) return false;
      h0 = s0 / static_cast<double>(n0);
      h1 = s1 / static_cast<double>(n1);
    }
    return true;
  }

  // Splits every component whose best binary split lowers the energy.
  bool split_all() {
    std::vector<std::vector<std::uint32_t>> members(count_);
    for (std::uint32_t i = 0; i < n_; ++i) members[comp_[i]].push_back(i);
    std::vector<std::uint32_t> label(n_);
    for (std::uint32_t i = 0; i < n_; ++i) label[i] = 2 * comp_[i];
    bool any = false;
    std::vector<std::uint8_t> side;
    for (std::size_t c = 0; c < count_; ++c) {
      const auto& verts = members[c];
      if (verts.size() < 2) continue;
      if (!split_labels(verts, side)) continue;
      // Evaluate the split with exact piece means (pieces = connected parts of each side).
      for (std::size_t a = 0; a < verts.size(); ++a) label[verts[a]] = 2 * static_cast<std::uint32_t>(c) + side[a];
      const double gain = split_gain(verts, label);
      if (gain > 0.0) {
        any = true;
      } else {
        for (auto v : verts) label[v] = 2 * static_cast<std::uint32_t>(c);
      }
    }
    if (!any) return false;
    count_ = label_components(g_, label, comp_);
    return true;
  }

  // Energy decrease obtained by replacing the component `verts` by the
  // connected pieces of `label` restricted to it.
  double split_gain(const std::vector<std::uint32_t>& verts, const std::vector<std::uint32_t>& label) {
    // Local connected components.
    constexpr auto kUnset = std::numeric_limits<std::uint32_t>::max();
    std::vector<std::uint32_t> piece(verts.size(), kUnset);
    std::uint32_t pieces = 0;
    std::vector<std::uint32_t> stack;
    for (std::size_t a = 0; a < verts.size(); ++a) {
      if (piece[a] != kUnset) continue;
      piece[a] = pieces;
      stack.push_back(static_cast<std::uint32_t>(a));
      while (!stack.empty()) {
        const auto la = stack.back();
        stack.pop_back();
        const auto u = verts[la];
        for (auto e = g_.offsets[u]; e < g_.offsets[u + 1]; ++e) {
          const auto v = g_.adj[e];
          if (comp_[v] != comp_[u] || label[v] != label[u]) continue;
          const auto lv = local_[v];
          if (piece[lv] == kUnset) {
            piece[lv] = pieces;
            stack.push_back(lv);
          }
        }
      }
      ++pieces;
    }
    RowMatrixXd pm = RowMatrixXd::Zero(pieces, dim_);
    std::vector<std::size_t> pn(pieces, 0);
    Eigen::RowVectorXd mean = Eigen::RowVectorXd::Zero(dim_);
    for (std::size_t a = 0; a < verts.size(); ++a) {
      pm.row(piece[a]) += f_.row(verts[a]);
      ++pn[piece[a]];
      mean += f_.row(verts[a]);
    }
    mean /= static_cast<double>(verts.size());
    for (std::uint32_t p = 0; p < pieces; ++p) pm.row(p) /= static_cast<double>(pn[p]);
    double old_fid = 0.0, new_fid = 0.0;
    for (std::size_t a = 0; a < verts.size(); ++a) {
      old_fid += (f_.row(verts[a]) - mean).squaredNorm();
      new_fid += (f_.row(verts[a]) - pm.row(piece[a])).squaredNorm();
    }
    double penalty = 0.0;
    for (std::size_t a = 0; a < verts.size(); ++a) {
      const auto u = verts[a];
      for (auto e = g_.offsets[u]; e < g_.offsets[u + 1]; ++e) {
        const auto v = g_.adj[e];
        if (v > u && comp_[v] == comp_[u] && piece[local_[v]] != piece[a] &&
            pm.row(piece[local_[v]]) != pm.row(piece[a])) {
          penalty += cfg_.lambda * g_.adj_weight[e];
        }
      }
    }
    return old_fid - new_fid - penalty;
  }

  // Greedy merging of adjacent components while merging lowers the energy.
  void merge_pass() {
    std::vector<std::unordered_map<std::uint32_t, double>> nb(count_);
    for (const auto& e : g_.edges) {
      const auto a = comp_[e.from], b = comp_[e.to];
      if (a == b) continue;
      nb[a][b] += e.weight;
      nb[b][a] += e.weight;
    }
    std::vector<Eigen::RowVectorXd> mu(count_);
    std::vector<double> size(count_);
    for (std::size_t c = 0; c < count_; ++c) {
      mu[c] = means_.row(static_cast<Eigen::Index>(c));
      size[c] = static_cast<double>(sizes_[c]);
    }
    std::vector<std::uint32_t> parent(count_);
    std::iota(parent.begin(), parent.end(), 0u);
    std::vector<std::uint32_t> version(count_, 0);
    struct Cand {
      double gain;
      std::uint32_t a, b, va, vb;
      bool operator<(const Cand& o) const {
        if (gain != o.gain) return gain < o.gain;
        if (a != o.a) return a > o.a;
        return b > o.b;
      }
    };
    auto gain_of = [&](std::uint32_t a, std::uint32_t b, double w) {
      const double na = size[a], nb_ = size[b];
      return cfg_.lambda * w - (na * nb_ / (na + nb_)) * (mu[a] - mu[b]).squaredNorm();
    };
    std::priority_queue<Cand> heap;
    for (std::uint32_t a = 0; a < count_; ++a) {
      for (const auto& [b, w] : nb[a]) {
        if (a < b) {
          const double gval = gain_of(a, b, w);
          if (gval > 0.0) heap.push({gval, a, b, 0, 0});
        }
      }
    }
    bool merged_any = false;
    while (!heap.empty()) {
      const Cand c = heap.top();
      heap.pop();
      if (parent[c.a] != c.a || parent[c.b] != c.b || version[c.a] != c.va || version[c.b] != c.vb) continue;
      // Merge b into a.
      const std::uint32_t a = c.a, b = c.b;
      mu[a] = (size[a] * mu[a] + size[b] * mu[b]) / (size[a] + size[b]);
      size[a] += size[b];
      parent[b] = a;
      nb[a].erase(b);
      for (const auto& [x, w] : nb[b]) {
        if (x == a) continue;
        nb[a][x] += w;
        nb[x].erase(b);
        nb[x][a] += w;
      }
      nb[b].clear();
      ++version[a];
      merged_any = true;
      // Only pairs touching `a` changed; stale ones fail the version check.
      for (const auto& [x, w] : nb[a]) {
        const double gval = gain_of(a, x, w);
        if (gval > 0.0) {
          const auto lo = std::min(a, x), hi = std::max(a, x);
          heap.push({gval, lo, hi, version[lo], version[hi]});
        }
      }
    }
    if (!merged_any) return;
    auto find = [&](std::uint32_t x) {
      while (parent[x] != x) x = parent[x] = parent[parent[x]];
      return x;
    };
    std::vector<std::uint32_t> dense(count_, std::numeric_limits<std::uint32_t>::max());
    std::uint32_t next = 0;
    for (std::size_t i = 0; i < n_; ++i) {
      const auto root = find(comp_[i]);
      if (dense[root] == std::numeric_limits<std::uint32_t>::max()) dense[root] = next++;
      comp_[i] = dense[root];
    }
    count_ = next;
    update_means();
  }

  const AdjacencyGraph& g_;
  const RowMatrixXd& f_;
  const CutPursuitConfig& cfg_;
  std::size_t n_;
  Eigen::Index dim_;
  std::vector<std::uint32_t> comp_;
  std::size_t count_ = 0;
  RowMatrixXd means_;
  std::vector<std::size_t> sizes_;
  std::vector<std::uint32_t> local_;
};

}  // namespace detail

/// Approximately minimizes the l0-regularized piecewise-constant energy.
/// The returned energy never exceeds that of the identity solution (every
/// vertex its own value) nor that of per-connected-region means.
inline CutPursuitResult cut_pursuit(const AdjacencyGraph& graph, const RowMatrixXd& features,
                                    const CutPursuitConfig& cfg) {
  if (static_cast<std::size_t>(features.rows()) != graph.vertex_count) {
    throw Error("cut_pursuit: feature rows do not match vertex count");
  }
  if (!features.allFinite()) throw Error("cut_pursuit: non-finite features");
  if (!(cfg.lambda > 0.0)) throw Error("cut_pursuit: lambda must be positive");
  if (graph.vertex_count == 0) return {};
  auto res = detail::Solver(graph, features, cfg).run();

  // The identity solution is a valid candidate too; keep it when the
  // working set did not reach its energy (tiny lambda).
  double identity_energy = 0.0;
  for (const auto& e : graph.edges) {
    if (features.row(e.from) != features.row(e.to)) identity_energy += cfg.lambda * e.weight;
  }
  if (identity_energy < res.energy) {
    std::vector<std::uint32_t> ids(graph.vertex_count);
    std::iota(ids.begin(), ids.end(), 0u);
    res.values = features;
    res.component_count = label_components(graph, ids, res.component);
    res.energy = identity_energy;
    res.energy_history.push_back(identity_energy);
  }
  return res;
}

}  // namespace lwsep::cp
