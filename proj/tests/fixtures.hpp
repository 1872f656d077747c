#pragma once

#include <algorithm>
#include <queue>
#include <string>
#include <vector>

#include <optional>

#include <Eigen/Dense>

#include "jabberprobe/detail/random.hpp"
#include "jabberprobe/metrics.hpp"
#include "jabberprobe/probes.hpp"
#include "jabberprobe/tree.hpp"

namespace jabberprobe::fixtures {

// "I enjoyed your presentations very much", heads [2,0,4,2,6,2].
inline const char* fig2_conllu =
    "# sent_id = fig2\n"
    "# text = I enjoyed your presentations very much\n"
    "1\tI\tI\tPRON\tPRP\tCase=Nom|Number=Sing|Person=1|PronType=Prs\t2\tnsubj\t_\t_\n"
    "2\tenjoyed\tenjoy\tVERB\tVBD\tMood=Ind|Tense=Past|VerbForm=Fin\t0\troot\t_\t_\n"
    "3\tyour\tyou\tPRON\tPRP$\tPerson=2|Poss=Yes|PronType=Prs\t4\tnmod:poss\t_\t_\n"
    "4\tpresentations\tpresentation\tNOUN\tNNS\tNumber=Plur\t2\tobj\t_\t_\n"
    "5\tvery\tvery\tADV\tRB\t_\t6\tadvmod\t_\t_\n"
    "6\tmuch\tmuch\tADV\tRB\t_\t2\tadvmod\t_\tSpaceAfter=No\n"
    "\n";

inline std::vector<Edge> fig2_edges() { return {{1, 2}, {3, 4}, {2, 4}, {5, 6}, {2, 6}}; }

// Random recursive tree (each node picks a parent among earlier nodes),
// randomly relabeled.
inline UndirectedTree random_tree(int n, detail::Rng& rng) {
  std::vector<int> label(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) label[i] = i + 1;
  rng.shuffle(label);
  std::vector<Edge> edges;
  for (int v = 1; v < n; ++v) {
    int parent = static_cast<int>(rng.index(static_cast<std::size_t>(v)));
    edges.push_back(make_edge(label[v], label[parent]));
  }
  return make_tree(n, edges);
}

// Uniformly random labeled tree (random Pruefer sequence).
inline UndirectedTree uniform_tree(int n, detail::Rng& rng) {
  std::vector<int> seq(static_cast<std::size_t>(std::max(0, n - 2)));
  for (auto& x : seq) x = 1 + static_cast<int>(rng.index(static_cast<std::size_t>(n)));
  return decode_pruefer(n, seq);
}

// Floyd-Warshall over the edge set; independent of the BFS implementation.
inline std::vector<std::vector<int>> all_pairs_shortest(int n, const std::vector<Edge>& edges) {
  const int inf = 1 << 20;
  std::vector<std::vector<int>> d(n, std::vector<int>(n, inf));
  for (int i = 0; i < n; ++i) d[i][i] = 0;
  for (auto [a, b] : edges) d[a - 1][b - 1] = d[b - 1][a - 1] = 1;
  for (int k = 0; k < n; ++k)
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) d[i][j] = std::min(d[i][j], d[i][k] + d[k][j]);
  return d;
}

// Planted solution: token v is the 0/1 indicator of the edges on the path
// from node 1 to v, each edge named by its lower (child) endpoint. Squared
// distances under B = I are then exactly the tree distances.
inline Eigen::MatrixXd planted_embeddings(const UndirectedTree& t, Eigen::Index dim) {
  const int n = t.n;
  auto adj = adjacency(t);
  std::vector<int> parent(n, -1);
  Eigen::MatrixXd h = Eigen::MatrixXd::Zero(n, dim);
  std::queue<int> q;
  q.push(0);
  parent[0] = 0;
  Eigen::Index next = 0;
  while (!q.empty()) {
    int v = q.front();
    q.pop();
    for (int u : adj[v]) {
      if (parent[u] != -1) continue;
      parent[u] = v;
      h.row(u) = h.row(v);
      h(u, next++) = 1.0;
      q.push(u);
    }
  }
  return h;
}

inline ProbeDataset planted_dataset(std::size_t count, int n_min, int n_max, Eigen::Index dim, detail::Rng& rng,
                                    const std::string& prefix) {
  ProbeDataset out;
  for (std::size_t i = 0; i < count; ++i) {
    auto t = uniform_tree(static_cast<int>(rng.integer(n_min, n_max)), rng);
    out.push_back({prefix + std::to_string(i), planted_embeddings(t, dim), distance_matrix(t), t});
  }
  return out;
}

// Compares the analytic gradient of one sentence's loss against central
// differences. Returns max|analytic - numeric| / max(|analytic|, |numeric|)
// over all entries of B, or nullopt when a perturbation crosses a kink of
// the loss (an |.| sign flip or a change of decoded tree).
inline std::optional<double> gradient_check(ProbeKind kind, const ProbeParams& p, const Eigen::MatrixXd& h, const UndirectedTree& gold,
                                            double eps = 1e-4) {
  auto dist = distance_matrix(gold);
  auto signature = [&](const Eigen::MatrixXd& B) {
    Eigen::MatrixXd d = pairwise_squared_distances(h * B.transpose());
    std::vector<int> sig;
    if (kind == ProbeKind::structural) {
      for (Eigen::Index i = 0; i < d.rows(); ++i)
        for (Eigen::Index j = 0; j < d.cols(); ++j) {
          double r = dist(static_cast<std::size_t>(i), static_cast<std::size_t>(j)) - d(i, j);
          sig.push_back(r > 0 ? 1 : (r < 0 ? -1 : 0));
        }
    } else {
      for (auto [a, b] : mst_prim(d).edges) sig.push_back(a * 100 + b);
    }
    return sig;
  };
  auto loss_at = [&](const Eigen::MatrixXd& B) {
    ProbeParams q{kind, B};
    return kind == ProbeKind::structural ? structural_loss(q, h, dist).loss : perceptron_loss(q, h, gold).loss;
  };
  const auto analytic = (kind == ProbeKind::structural ? structural_loss(p, h, dist) : perceptron_loss(p, h, gold)).grad;
  const auto base = signature(p.B);
  Eigen::MatrixXd numeric(p.B.rows(), p.B.cols());
  for (Eigen::Index i = 0; i < p.B.rows(); ++i)
    for (Eigen::Index j = 0; j < p.B.cols(); ++j) {
      Eigen::MatrixXd plus = p.B, minus = p.B;
      plus(i, j) += eps;
      minus(i, j) -= eps;
      if (signature(plus) != base || signature(minus) != base) return std::nullopt;
      numeric(i, j) = (loss_at(plus) - loss_at(minus)) / (2 * eps);
    }
  const double scale = std::max(analytic.cwiseAbs().maxCoeff(), numeric.cwiseAbs().maxCoeff());
  if (scale == 0.0) return 0.0;
  return (analytic - numeric).cwiseAbs().maxCoeff() / scale;
}

// A random smooth instance: n <= 6 tokens, d <= 8, k <= 4.
struct GradientInstance {
  ProbeParams params;
  Eigen::MatrixXd embeddings;
  UndirectedTree gold;
};

inline GradientInstance random_gradient_instance(ProbeKind kind, detail::Rng& rng) {
  const int n = static_cast<int>(rng.integer(2, 6));
  const auto d = static_cast<Eigen::Index>(rng.integer(1, 8));
  const auto k = static_cast<Eigen::Index>(rng.integer(1, std::min<std::int64_t>(4, d)));
  GradientInstance g{{kind, Eigen::MatrixXd(k, d)}, Eigen::MatrixXd(n, d), random_tree(n, rng)};
  for (Eigen::Index i = 0; i < k; ++i)
    for (Eigen::Index j = 0; j < d; ++j) g.params.B(i, j) = rng.uniform(-1.0, 1.0);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < d; ++j) g.embeddings(i, j) = rng.uniform(-1.0, 1.0);
  return g;
}

}  // namespace jabberprobe::fixtures
