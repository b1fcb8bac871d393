#pragma once

#include <cstdint>
#include <limits>
#include <queue>
#include <vector>

namespace lwsep {

/// Dinic max-flow on a graph with real capacities. After max_flow(), the
/// source side of a minimum cut is available via in_source_set().
class MaxFlow {
 public:
  explicit MaxFlow(std::size_t nodes) : head_(nodes, -1), level_(nodes), iter_(nodes) {}

  /// Directed arc u->v with capacity `cap` and reverse capacity `rev_cap`.
  void add_edge(std::uint32_t u, std::uint32_t v, double cap, double rev_cap = 0.0) {
    arcs_.push_back({v, head_[u], cap});
    head_[u] = static_cast<std::int64_t>(arcs_.size() - 1);
    arcs_.push_back({u, head_[v], rev_cap});
    head_[v] = static_cast<std::int64_t>(arcs_.size() - 1);
  }

  double max_flow(std::uint32_t s, std::uint32_t t) {
    double flow = 0.0;
    while (bfs(s, t)) {
      for (std::size_t i = 0; i < head_.size(); ++i) iter_[i] = head_[i];
      while (true) {
        const double f = dfs(s, t, std::numeric_limits<double>::infinity());
        if (f <= 0.0) break;
        flow += f;
      }
    }
    // Final BFS leaves level_ >= 0 exactly on the residual source side.
    bfs(s, t);
    return flow;
  }

  bool in_source_set(std::uint32_t v) const { return level_[v] >= 0; }

 private:
  struct Arc {
    std::uint32_t to;
    std::int64_t next;
    double cap;
  };

  // Residual capacities below this are treated as saturated.
  static constexpr double kEps = 1e-12;

  bool bfs(std::uint32_t s, std::uint32_t t) {
    std::fill(level_.begin(), level_.end(), -1);
    std::queue<std::uint32_t> q;
    level_[s] = 0;
    q.push(s);
    while (!q.empty()) {
      const auto u = q.front();
      q.pop();
      for (auto e = head_[u]; e >= 0; e = arcs_[e].next) {
        const auto& a = arcs_[e];
        if (a.cap > kEps && level_[a.to] < 0) {
          level_[a.to] = level_[u] + 1;
          q.push(a.to);
        }
      }
    }
    return level_[t] >= 0;
  }

  // Iterative blocking-flow DFS (component graphs can be deep chains).
  double dfs(std::uint32_t s, std::uint32_t t, double limit) {
    std::vector<std::int64_t> path;  // arc indices
    std::uint32_t u = s;
    while (true) {
      if (u == t) {
        double f = limit;
        for (auto e : path) f = std::min(f, arcs_[e].cap);
        for (auto e : path) {
          arcs_[e].cap -= f;
          arcs_[e ^ 1].cap += f;
        }
        return f;
      }
      bool advanced = false;
      for (auto& e = iter_[u]; e >= 0; e = arcs_[e].next) {
        const auto& a = arcs_[e];
        if (a.cap > kEps && level_[a.to] == level_[u] + 1) {
          path.push_back(e);
          u = a.to;
          advanced = true;
          break;
        }
      }
      if (advanced) continue;
      if (path.empty()) return 0.0;
      level_[u] = -2;  // dead end for this phase
      const auto back = path.back();
      path.pop_back();
      u = arcs_[back ^ 1].to;
      iter_[u] = arcs_[iter_[u]].next;
    }
  }

  std::vector<Arc> arcs_;
  std::vector<std::int64_t> head_;
  std::vector<int> level_;
  std::vector<std::int64_t> iter_;
};

}  // namespace lwsep
