#pragma once

#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "jabberprobe/error.hpp"
#include "jabberprobe/metrics.hpp"
#include "jabberprobe/tree.hpp"
#include "jabberprobe/treebank.hpp"

namespace jabberprobe {

// Chain linking every word to its right neighbour.
inline UndirectedTree path_tree(int n) {
  if (n < 1) throw DataError("path_tree: n must be >= 1");
  UndirectedTree t{n, {}};
  for (int i = 1; i < n; ++i) t.edges.push_back({i, i + 1});
  return t;
}

// Per-length maximum spanning trees of training edge counts.
struct MajorityModel {
  static constexpr int max_length = 40;
  std::map<int, UndirectedTree> trees;  // only lengths seen in training

  bool operator==(const MajorityModel&) const = default;
};

// Edge counts per exact sentence length; lengths above max_length are
// never fitted and fall back to the path.
inline MajorityModel majority_fit(const std::vector<UndirectedTree>& train) {
  if (train.empty()) throw DataError("majority_fit: empty training corpus");
  std::map<int, Eigen::MatrixXd> counts;
  for (const auto& t : train) {
    if (t.n < 2 || t.n > MajorityModel::max_length) continue;
    auto [it, fresh] = counts.try_emplace(t.n, Eigen::MatrixXd::Zero(t.n, t.n));
    for (auto [a, b] : t.edges) {
      it->second(a - 1, b - 1) += 1.0;
      it->second(b - 1, a - 1) += 1.0;
    }
  }
  MajorityModel m;
  for (const auto& [n, c] : counts) m.trees.emplace(n, mst_prim(c, Objective::maximize));
  return m;
}

inline MajorityModel majority_fit(const std::vector<Sentence>& train) {
  std::vector<UndirectedTree> trees;
  trees.reserve(train.size());
  for (const auto& s : train) trees.push_back(gold_tree(s));
  return majority_fit(trees);
}

inline UndirectedTree majority_predict(const MajorityModel& m, int n) {
  if (n < 1) throw DataError("majority_predict: n must be >= 1");
  if (n <= MajorityModel::max_length)
    if (auto it = m.trees.find(n); it != m.trees.end()) return it->second;
  return path_tree(n);
}

// {"<n>": [[a, b], ...], ...}
inline nlohmann::json to_json(const MajorityModel& m) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [n, t] : m.trees) {
    auto& edges = j[std::to_string(n)] = nlohmann::json::array();
    for (auto [a, b] : t.edges) edges.push_back({a, b});
  }
  return j;
}

inline MajorityModel majority_from_json(const nlohmann::json& j) {
  MajorityModel m;
  for (const auto& [key, edges] : j.items()) {
    auto n = detail::to_int(key);
    if (!n || *n < 1) throw ParseError("majority model: bad length key '" + key + "'");
    std::vector<Edge> es;
    for (const auto& e : edges) es.emplace_back(e.at(0).get<int>(), e.at(1).get<int>());
    m.trees.emplace(*n, make_tree(*n, std::move(es)));
  }
  return m;
}

}  // namespace jabberprobe
