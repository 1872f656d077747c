#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <tuple>
#include <vector>

#include <Eigen/Dense>
#include <boost/multiprecision/cpp_int.hpp>

#include "jabberprobe/error.hpp"
#include "jabberprobe/tree.hpp"
#include "jabberprobe/treebank.hpp"

namespace jabberprobe {

using BigInt = boost::multiprecision::cpp_int;

enum class Objective { minimize, maximize };

// Prim's algorithm on a dense symmetric weight matrix (0-based). Among
// crossing edges of equal weight the one with the smallest
// (min endpoint, max endpoint) wins, so the result is deterministic.
// Maximization runs the same search over negated weights.
inline UndirectedTree mst_prim(const Eigen::MatrixXd& weights, Objective objective = Objective::minimize) {
  const auto n = static_cast<int>(weights.rows());
  if (weights.cols() != n) throw DataError("mst_prim: weight matrix must be square");
  if (n == 0) return {};
  const double sign = objective == Objective::maximize ? -1.0 : 1.0;

  using Key = std::tuple<double, int, int>;  // (weight, min endpoint, max endpoint)
  const Key none{std::numeric_limits<double>::infinity(), n, n};
  std::vector<Key> best(static_cast<std::size_t>(n), none);
  std::vector<char> in_tree(static_cast<std::size_t>(n), 0);
  std::vector<Edge> edges;
  edges.reserve(static_cast<std::size_t>(n - 1));

  int added = 0;
  for (int step = 0; step < n; ++step) {
    added = -1;
    if (step == 0) {
      added = 0;
    } else {
      for (int v = 0; v < n; ++v)
        if (!in_tree[v] && (added < 0 || best[v] < best[added])) added = v;
      auto [w, a, b] = best[added];
      edges.push_back({a + 1, b + 1});
    }
    in_tree[added] = 1;
    for (int v = 0; v < n; ++v) {
      if (in_tree[v]) continue;
      Key k{sign * weights(added, v), std::min(added, v), std::max(added, v)};
      if (k < best[v]) best[v] = k;
    }
  }
  return make_tree(n, std::move(edges));
}

inline double tree_weight(const Eigen::MatrixXd& weights, const UndirectedTree& t) {
  double total = 0.0;
  for (auto [a, b] : t.edges) total += weights(a - 1, b - 1);
  return total;
}

// Tree encoded by a Pruefer sequence of length n-2 over labels 1..n.
inline UndirectedTree decode_pruefer(int n, std::span<const int> seq) {
  if (n < 1) throw DataError("decode_pruefer: n must be >= 1");
  if (n == 1) return UndirectedTree{1, {}};
  if (static_cast<int>(seq.size()) != n - 2) throw DataError("decode_pruefer: sequence length must be n-2");
  std::vector<int> degree(static_cast<std::size_t>(n) + 1, 1);
  for (int x : seq) {
    if (x < 1 || x > n) throw DataError("decode_pruefer: label " + std::to_string(x) + " out of range");
    ++degree[x];
  }
  std::vector<Edge> edges;
  edges.reserve(static_cast<std::size_t>(n - 1));
  for (int x : seq) {
    int leaf = 1;
    while (degree[leaf] != 1) ++leaf;
    edges.push_back(make_edge(leaf, x));
    --degree[leaf];
    --degree[x];
  }
  int u = 0, v = 0;
  for (int i = 1; i <= n; ++i)
    if (degree[i] == 1) (u == 0 ? u : v) = i;
  edges.push_back(make_edge(u, v));
  std::sort(edges.begin(), edges.end());
  return UndirectedTree{n, std::move(edges)};
}

// Calls `visit` once for every labeled tree on n nodes by decoding each
// Pruefer sequence of length n-2.
inline void for_each_tree(int n, const std::function<void(const UndirectedTree&)>& visit) {
  if (n < 1 || n > 8) throw DataError("enumerate_trees: n must be in [1, 8], got " + std::to_string(n));
  const int len = std::max(0, n - 2);
  std::vector<int> seq(static_cast<std::size_t>(len), 1);
  for (;;) {
    visit(decode_pruefer(n, seq));
    int pos = len - 1;
    while (pos >= 0 && seq[pos] == n) seq[pos--] = 1;
    if (pos < 0) return;
    ++seq[pos];
  }
}

inline std::vector<UndirectedTree> enumerate_trees(int n) {
  std::vector<UndirectedTree> out;
  for_each_tree(n, [&](const UndirectedTree& t) { out.push_back(t); });
  return out;
}

// n^(n-2) labeled undirected trees (Cayley); 1 for n = 1.
inline BigInt count_trees(unsigned n) {
  if (n == 0) throw DataError("count_trees: n must be >= 1");
  if (n <= 2) return 1;
  return boost::multiprecision::pow(BigInt(n), n - 2);
}

// Labeled directed trees: choose a root, a tree shape, and one of k labels
// per edge.
inline BigInt count_labeled_directed(unsigned n, unsigned k) {
  if (n == 0 || k == 0) throw DataError("count_labeled_directed: n and k must be >= 1");
  return BigInt(n) * count_trees(n) * boost::multiprecision::pow(BigInt(k), n - 1);
}

// ---------------------------------------------------------------------------
// UUAS

struct EdgeCount {
  std::size_t correct = 0;
  std::size_t gold = 0;

  double score() const { return gold == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(gold); }
};

inline EdgeCount attachment_count(const UndirectedTree& pred, const UndirectedTree& gold) {
  if (pred.n != gold.n)
    throw DataError("uuas: node count mismatch (" + std::to_string(pred.n) + " vs " + std::to_string(gold.n) + ")");
  EdgeCount c;
  c.gold = gold.edges.size();
  auto p = pred.edges.begin();
  for (const auto& e : gold.edges) {
    while (p != pred.edges.end() && *p < e) ++p;
    if (p != pred.edges.end() && *p == e) ++c.correct;
  }
  return c;
}

inline double uuas(const UndirectedTree& pred, const UndirectedTree& gold) { return attachment_count(pred, gold).score(); }

enum class Averaging { micro, macro };

struct UuasResult {
  double value = 0.0;
  std::size_t sentences = 0;
  std::size_t correct = 0;
  std::size_t gold_edges = 0;
};

// Micro: pooled correct edges over pooled gold edges. Macro: mean of
// per-sentence scores over sentences that have at least one gold edge.
inline UuasResult uuas(std::span<const UndirectedTree> pred, std::span<const UndirectedTree> gold, Averaging avg = Averaging::micro) {
  if (pred.size() != gold.size()) throw DataError("uuas: corpus size mismatch");
  UuasResult r;
  double macro_sum = 0.0;
  std::size_t macro_n = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    auto c = attachment_count(pred[i], gold[i]);
    r.correct += c.correct;
    r.gold_edges += c.gold;
    ++r.sentences;
    if (c.gold > 0) {
      macro_sum += c.score();
      ++macro_n;
    }
  }
  if (avg == Averaging::micro)
    r.value = r.gold_edges == 0 ? 0.0 : static_cast<double>(r.correct) / static_cast<double>(r.gold_edges);
  else
    r.value = macro_n == 0 ? 0.0 : macro_sum / static_cast<double>(macro_n);
  return r;
}

// ---------------------------------------------------------------------------
// Spearman / DSpr

// 1-based ranks; tied values share the mean of the ranks they span.
inline std::vector<double> average_ranks(std::span<const double> xs) {
  std::vector<std::size_t> order(xs.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return xs[a] < xs[b]; });
  std::vector<double> ranks(xs.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && xs[order[j + 1]] == xs[order[i]]) ++j;
    double mean = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = mean;
    i = j + 1;
  }
  return ranks;
}

namespace detail {

inline double pearson(std::span<const double> x, std::span<const double> y) {
  const double n = static_cast<double>(x.size());
  double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

inline bool is_constant(std::span<const double> xs) {
  return std::all_of(xs.begin(), xs.end(), [&](double v) { return v == xs.front(); });
}

}  // namespace detail

// Pearson correlation of average ranks; 0 when either side is constant.
inline double spearman_rank(std::span<const double> xs, std::span<const double> ys) {
  if (xs.size() != ys.size()) throw DataError("spearman_rank: length mismatch");
  if (xs.size() < 2) throw DataError("spearman_rank: need at least two values");
  if (detail::is_constant(xs) || detail::is_constant(ys)) return 0.0;
  auto rx = average_ranks(xs);
  auto ry = average_ranks(ys);
  return detail::pearson(rx, ry);
}

enum class DsprAggregation { row_wise, flattened_pairs };

struct DsprOptions {
  DsprAggregation aggregation = DsprAggregation::row_wise;
  bool length_filter = false;  // keep only 5 <= n <= 50
};

struct DsprResult {
  double value = 0.0;
  std::size_t sentences = 0;  // sentences that contributed
  std::size_t skipped = 0;    // too short, filtered out, or no scorable row
};

// Score for one sentence, or nullopt when nothing is scorable. Row-wise:
// for each word, Spearman between its gold and predicted distances to every
// other word, averaged over words. Rows whose gold distances are all equal
// (e.g. the hub of a star) have no defined rank order and are left out.
inline std::optional<double> dspr_sentence(const Eigen::MatrixXd& pred, const DistanceMatrix& gold, DsprAggregation agg) {
  const auto n = gold.size();
  if (static_cast<std::size_t>(pred.rows()) != n || static_cast<std::size_t>(pred.cols()) != n)
    throw DataError("dspr: predicted matrix size does not match gold");
  if (n < 3) return std::nullopt;
  if (agg == DsprAggregation::flattened_pairs) {
    std::vector<double> g, p;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) {
        g.push_back(gold(i, j));
        p.push_back(pred(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)));
      }
    if (detail::is_constant(g)) return std::nullopt;
    return spearman_rank(g, p);
  }
  double sum = 0.0;
  std::size_t rows = 0;
  std::vector<double> g(n - 1), p(n - 1);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t k = 0;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      g[k] = gold(i, j);
      p[k] = pred(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
      ++k;
    }
    if (detail::is_constant(g)) continue;
    sum += spearman_rank(g, p);
    ++rows;
  }
  if (rows == 0) return std::nullopt;
  return sum / static_cast<double>(rows);
}

// Macro average over sentences.
inline DsprResult dspr(std::span<const Eigen::MatrixXd> pred, std::span<const DistanceMatrix> gold, const DsprOptions& opt = {}) {
  if (pred.size() != gold.size()) throw DataError("dspr: corpus size mismatch");
  DsprResult r;
  double sum = 0.0;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    const auto n = gold[i].size();
    if (opt.length_filter && (n < 5 || n > 50)) {
      ++r.skipped;
      continue;
    }
    auto s = dspr_sentence(pred[i], gold[i], opt.aggregation);
    if (!s) {
      ++r.skipped;
      continue;
    }
    sum += *s;
    ++r.sentences;
  }
  r.value = r.sentences == 0 ? 0.0 : sum / static_cast<double>(r.sentences);
  return r;
}

// Integer tree distances as a real matrix, for scoring tree-shaped
// predictions (the baselines) with DSpr.
inline Eigen::MatrixXd to_real(const DistanceMatrix& d) {
  const auto n = static_cast<Eigen::Index>(d.size());
  Eigen::MatrixXd m(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) m(i, j) = d(static_cast<std::size_t>(i), static_cast<std::size_t>(j));
  return m;
}

// Restriction of a tree to a subset of nodes (given as 1-based ids in
// increasing order): keeps edges with both endpoints retained, renumbered
// 1..|keep|. The result may be a forest.
inline UndirectedTree restrict_edges(const UndirectedTree& t, std::span<const int> keep) {
  std::vector<int> remap(static_cast<std::size_t>(t.n) + 1, 0);
  for (std::size_t i = 0; i < keep.size(); ++i) remap[keep[i]] = static_cast<int>(i) + 1;
  UndirectedTree out{static_cast<int>(keep.size()), {}};
  for (auto [a, b] : t.edges)
    if (remap[a] && remap[b]) out.edges.push_back(make_edge(remap[a], remap[b]));
  std::sort(out.edges.begin(), out.edges.end());
  return out;
}

}  // namespace jabberprobe
