#pragma once

#include <algorithm>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "jabberprobe/error.hpp"

namespace jabberprobe {

// Unordered edge over 1-based node ids, stored with first < second.
using Edge = std::pair<int, int>;

inline Edge make_edge(int a, int b) { return a < b ? Edge{a, b} : Edge{b, a}; }

// Undirected tree on nodes 1..n. Edges are normalized and sorted, so two
// trees with the same edge set compare equal regardless of orientation.
struct UndirectedTree {
  int n = 0;
  std::vector<Edge> edges;

  bool operator==(const UndirectedTree&) const = default;
};

namespace detail {

inline int find_root(std::vector<int>& parent, int x) {
  while (parent[x] != x) {
    parent[x] = parent[parent[x]];
    x = parent[x];
  }
  return x;
}

}  // namespace detail

// Normalizes and validates; throws DataError unless the edges span 1..n
// without cycles.
inline UndirectedTree make_tree(int n, std::vector<Edge> edges) {
  if (n < 0) throw DataError("tree with negative node count");
  for (auto& e : edges) {
    if (e.first < 1 || e.second < 1 || e.first > n || e.second > n || e.first == e.second)
      throw DataError("edge (" + std::to_string(e.first) + "," + std::to_string(e.second) +
                      ") out of range for n=" + std::to_string(n));
    e = make_edge(e.first, e.second);
  }
  std::sort(edges.begin(), edges.end());
  if (std::adjacent_find(edges.begin(), edges.end()) != edges.end()) throw DataError("duplicate tree edge");
  if (n > 0 && edges.size() != static_cast<std::size_t>(n - 1))
    throw DataError("tree on " + std::to_string(n) + " nodes needs n-1 edges, got " + std::to_string(edges.size()));
  std::vector<int> parent(static_cast<std::size_t>(n) + 1);
  std::iota(parent.begin(), parent.end(), 0);
  for (auto [a, b] : edges) {
    int ra = detail::find_root(parent, a), rb = detail::find_root(parent, b);
    if (ra == rb) throw DataError("edge set contains a cycle");
    parent[ra] = rb;
  }
  return UndirectedTree{n, std::move(edges)};
}

// Adjacency lists indexed 0..n-1.
inline std::vector<std::vector<int>> adjacency(const UndirectedTree& t) {
  std::vector<std::vector<int>> adj(static_cast<std::size_t>(t.n));
  for (auto [a, b] : t.edges) {
    adj[a - 1].push_back(b - 1);
    adj[b - 1].push_back(a - 1);
  }
  return adj;
}

}  // namespace jabberprobe
