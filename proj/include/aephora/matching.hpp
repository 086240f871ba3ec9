#pragma once

#include <algorithm>
#include <functional>
#include <limits>
#include <optional>
#include <queue>
#include <utility>
#include <vector>

namespace aephora {

struct MatchingEdge {
  int left{0};
  int right{0};
  double cost{0.0};
};

struct Matching {
  std::vector<int> right_of_left;  // matched right vertex per left vertex
  double cost{0.0};
};

/// Minimum-cost matching that covers every left vertex, by successive
/// shortest augmenting paths with Johnson potentials. Returns nullopt when no
/// left-perfect matching exists. Edges are scanned in input order, so ties
/// resolve deterministically.
inline std::optional<Matching> min_cost_left_perfect_matching(int n_left, int n_right,
                                                              const std::vector<MatchingEdge>& edges) {
  if (n_left == 0) return Matching{};
  double shift = 0.0;
  for (const auto& e : edges) shift = std::min(shift, e.cost);

  // Nodes: source, left[0..n_left), right[0..n_right), sink.
  const int source = 0;
  const int sink = 1 + n_left + n_right;
  const int n_nodes = sink + 1;
  struct Arc {
    int to;
    int cap;
    double cost;
  };
  std::vector<Arc> arcs;
  std::vector<std::vector<int>> adj(n_nodes);
  auto add = [&](int from, int to, double cost) {
    adj[from].push_back(static_cast<int>(arcs.size()));
    arcs.push_back({to, 1, cost});
    adj[to].push_back(static_cast<int>(arcs.size()));
    arcs.push_back({from, 0, -cost});
  };
  for (int l = 0; l < n_left; ++l) add(source, 1 + l, 0.0);
  std::vector<int> edge_arc(edges.size());
  for (std::size_t k = 0; k < edges.size(); ++k) {
    edge_arc[k] = static_cast<int>(arcs.size());
    add(1 + edges[k].left, 1 + n_left + edges[k].right, edges[k].cost - shift);
  }
  for (int r = 0; r < n_right; ++r) add(1 + n_left + r, sink, 0.0);

  constexpr double kInf = std::numeric_limits<double>::infinity();
  std::vector<double> potential(n_nodes, 0.0);
  std::vector<double> dist(n_nodes);
  std::vector<int> via(n_nodes);
  using Item = std::pair<double, int>;
  for (int flow = 0; flow < n_left; ++flow) {
    std::fill(dist.begin(), dist.end(), kInf);
    std::fill(via.begin(), via.end(), -1);
    dist[source] = 0.0;
    std::priority_queue<Item, std::vector<Item>, std::greater<>> pq;
    pq.push({0.0, source});
    while (!pq.empty()) {
      auto [d, u] = pq.top();
      pq.pop();
      if (d > dist[u]) continue;
      for (int a : adj[u]) {
        const Arc& arc = arcs[a];
        if (arc.cap <= 0) continue;
        // Reduced costs are >= 0 up to rounding; clamp tiny negatives.
        const double rc = std::max(arc.cost + potential[u] - potential[arc.to], 0.0);
        if (dist[u] + rc < dist[arc.to]) {
          dist[arc.to] = dist[u] + rc;
          via[arc.to] = a;
          pq.push({dist[arc.to], arc.to});
        }
      }
    }
    if (dist[sink] == kInf) return std::nullopt;
    for (int v = 0; v < n_nodes; ++v)
      if (dist[v] < kInf) potential[v] += dist[v];
    for (int v = sink; v != source;) {
      const int a = via[v];
      arcs[a].cap -= 1;
      arcs[a ^ 1].cap += 1;
      v = arcs[a ^ 1].to;
    }
  }

  Matching result;
  result.right_of_left.assign(n_left, -1);
  for (std::size_t k = 0; k < edges.size(); ++k) {
    if (arcs[edge_arc[k]].cap == 0) {
      result.right_of_left[edges[k].left] = edges[k].right;
      result.cost += edges[k].cost;
    }
  }
  return result;
}

}  // namespace aephora
