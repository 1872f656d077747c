#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "jabberprobe/detail/binary_io.hpp"
#include "jabberprobe/detail/file_io.hpp"
#include "jabberprobe/detail/random.hpp"
#include "jabberprobe/embeddings.hpp"
#include "jabberprobe/error.hpp"
#include "jabberprobe/metrics.hpp"
#include "jabberprobe/treebank.hpp"

namespace jabberprobe {

enum class ProbeKind : std::uint8_t { structural = 0, perceptron = 1 };

inline const char* to_string(ProbeKind k) { return k == ProbeKind::structural ? "structural" : "perceptron"; }

inline ProbeKind parse_probe_kind(std::string_view s) {
  if (s == "structural") return ProbeKind::structural;
  if (s == "perceptron") return ProbeKind::perceptron;
  throw ConfigError("unknown probe kind '" + std::string(s) + "'");
}

// Linear map B (rank x dim). Squared distance between two embeddings is the
// squared norm of B applied to their difference.
struct ProbeParams {
  ProbeKind kind = ProbeKind::structural;
  Eigen::MatrixXd B;

  Eigen::Index rank() const { return B.rows(); }
  Eigen::Index dim() const { return B.cols(); }
};

inline double squared_distance(const ProbeParams& p, const Eigen::VectorXd& hi, const Eigen::VectorXd& hj) {
  if (hi.size() != p.dim() || hj.size() != p.dim())
    throw DataError("squared_distance: vectors of length " + std::to_string(hi.size()) + "/" + std::to_string(hj.size()) +
                    " for probe of dim " + std::to_string(p.dim()));
  return (p.B * (hi - hj)).squaredNorm();
}

// All pairwise squared distances between rows of a projected matrix.
inline Eigen::MatrixXd pairwise_squared_distances(const Eigen::MatrixXd& projected) {
  const auto n = projected.rows();
  Eigen::MatrixXd d = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = i + 1; j < n; ++j) d(i, j) = d(j, i) = (projected.row(i) - projected.row(j)).squaredNorm();
  return d;
}

inline Eigen::MatrixXd predict_distances(const ProbeParams& p, const Eigen::MatrixXd& embeddings) {
  if (embeddings.cols() != p.dim()) throw DataError("probe dim does not match embedding dim");
  return pairwise_squared_distances(embeddings * p.B.transpose());
}

// Minimum spanning tree over predicted distances (ties lexicographic).
inline UndirectedTree predict_tree(const ProbeParams& p, const Eigen::MatrixXd& embeddings) {
  return mst_prim(predict_distances(p, embeddings), Objective::minimize);
}

struct LossAndGradient {
  double loss = 0.0;
  Eigen::MatrixXd grad;  // d loss / d projected rows (n x k) or d loss / d B
};

namespace detail {

// Given pairwise weights w(i,j) = d loss / d sqdist(i,j) over ordered pairs
// (symmetric), d loss / d P = 4 * Lap(w) * P.
inline Eigen::MatrixXd laplacian_gradient(const Eigen::MatrixXd& w, const Eigen::MatrixXd& projected) {
  Eigen::MatrixXd lap = -w;
  lap.diagonal() += w.rowwise().sum();
  return 4.0 * lap * projected;
}

// Structural loss on projected rows: mean over all ordered pairs of
// |gold - predicted|.
inline LossAndGradient structural_on_projection(const Eigen::MatrixXd& projected, const DistanceMatrix& gold, bool want_grad) {
  const auto n = projected.rows();
  const double scale = 1.0 / static_cast<double>(n * n);
  Eigen::MatrixXd d = pairwise_squared_distances(projected);
  Eigen::MatrixXd w = Eigen::MatrixXd::Zero(n, n);
  double loss = 0.0;
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) {
      double r = gold(static_cast<std::size_t>(i), static_cast<std::size_t>(j)) - d(i, j);
      loss += std::abs(r);
      w(i, j) = r > 0 ? -scale : (r < 0 ? scale : 0.0);
    }
  LossAndGradient out{loss * scale, {}};
  if (want_grad) out.grad = laplacian_gradient(w, projected);
  return out;
}

// Perceptron loss: gold tree score minus decoded MST score, with the decoded
// tree held fixed for the gradient.
inline LossAndGradient perceptron_on_projection(const Eigen::MatrixXd& projected, const UndirectedTree& gold, bool want_grad) {
  const auto n = projected.rows();
  Eigen::MatrixXd d = pairwise_squared_distances(projected);
  auto decoded = mst_prim(d, Objective::minimize);
  if (decoded.edges == gold.edges)
    return {0.0, want_grad ? Eigen::MatrixXd::Zero(n, projected.cols()) : Eigen::MatrixXd()};
  Eigen::MatrixXd w = Eigen::MatrixXd::Zero(n, n);
  double loss = 0.0;
  for (auto [a, b] : gold.edges) {
    loss += d(a - 1, b - 1);
    w(a - 1, b - 1) += 0.5;
    w(b - 1, a - 1) += 0.5;
  }
  for (auto [a, b] : decoded.edges) {
    loss -= d(a - 1, b - 1);
    w(a - 1, b - 1) -= 0.5;
    w(b - 1, a - 1) -= 0.5;
  }
  LossAndGradient out{loss, {}};
  if (want_grad) out.grad = laplacian_gradient(w, projected);
  return out;
}

}  // namespace detail

// Loss and its gradient with respect to B for one sentence. Subgradient of
// |x| at 0 is taken as 0.
inline LossAndGradient structural_loss(const ProbeParams& p, const Eigen::MatrixXd& embeddings, const DistanceMatrix& gold) {
  if (embeddings.rows() < 2) throw DataError("structural_loss: need at least two tokens");
  Eigen::MatrixXd projected = embeddings * p.B.transpose();
  auto r = detail::structural_on_projection(projected, gold, true);
  r.grad = r.grad.transpose() * embeddings;
  return r;
}

inline LossAndGradient perceptron_loss(const ProbeParams& p, const Eigen::MatrixXd& embeddings, const UndirectedTree& gold) {
  if (embeddings.rows() < 2) throw DataError("perceptron_loss: need at least two tokens");
  Eigen::MatrixXd projected = embeddings * p.B.transpose();
  auto r = detail::perceptron_on_projection(projected, gold, true);
  r.grad = r.grad.transpose() * embeddings;
  return r;
}

// ---------------------------------------------------------------------------
// Training data

struct ProbeExample {
  std::string sent_id;
  Eigen::MatrixXd embeddings;  // n x d
  DistanceMatrix gold_distances;
  UndirectedTree gold_tree;
};

using ProbeDataset = std::vector<ProbeExample>;

inline ProbeExample make_example(const Sentence& s, const EmbeddingMatrix& m) {
  if (static_cast<std::size_t>(m.rows()) != s.size())
    throw DataError("sentence " + s.sent_id + ": " + std::to_string(m.rows()) + " embedding rows for " + std::to_string(s.size()) + " tokens");
  auto tree = gold_tree(s);
  return ProbeExample{s.sent_id, m.cast<double>(), distance_matrix(tree), std::move(tree)};
}

inline double example_loss(ProbeKind kind, const ProbeParams& p, const ProbeExample& ex) {
  Eigen::MatrixXd projected = ex.embeddings * p.B.transpose();
  return kind == ProbeKind::structural ? detail::structural_on_projection(projected, ex.gold_distances, false).loss
                                       : detail::perceptron_on_projection(projected, ex.gold_tree, false).loss;
}

inline double mean_loss(ProbeKind kind, const ProbeParams& p, const ProbeDataset& data) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& ex : data) {
    if (ex.embeddings.rows() < 2) continue;
    sum += example_loss(kind, p, ex);
    ++n;
  }
  return n == 0 ? 0.0 : sum / static_cast<double>(n);
}

// ---------------------------------------------------------------------------
// Optimizer

struct Adam {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  Eigen::MatrixXd m, v;
  long step_count = 0;

  void step(Eigen::MatrixXd& params, const Eigen::MatrixXd& grad, double lr) {
    if (m.size() == 0) {
      m = Eigen::MatrixXd::Zero(params.rows(), params.cols());
      v = Eigen::MatrixXd::Zero(params.rows(), params.cols());
    }
    ++step_count;
    m = beta1 * m + (1.0 - beta1) * grad;
    v = beta2 * v + (1.0 - beta2) * grad.cwiseProduct(grad);
    const double c1 = 1.0 - std::pow(beta1, static_cast<double>(step_count));
    const double c2 = 1.0 - std::pow(beta2, static_cast<double>(step_count));
    params.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + epsilon);
  }
};

enum class DropoutSite { input, projection };

struct TrainConfig {
  double learning_rate = 1e-3;
  int rank = 0;  // 0 = full rank (d)
  double dropout = 0.0;
  DropoutSite dropout_site = DropoutSite::input;
  int batch_size = 64;
  int max_epochs = 20;
  int patience = 15;           // non-improving checkpoints before stopping
  int checkpoint_every = 100;  // optimizer steps; every epoch end is also a checkpoint
  double init_range = 0.05;
  std::uint64_t seed = 0;

  bool operator==(const TrainConfig&) const = default;
};

inline void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = nlohmann::json{{"learning_rate", c.learning_rate}, {"rank", c.rank},
                     {"dropout", c.dropout}, {"dropout_site", c.dropout_site == DropoutSite::input ? "input" : "projection"},
                     {"batch_size", c.batch_size}, {"max_epochs", c.max_epochs},
                     {"patience", c.patience}, {"checkpoint_every", c.checkpoint_every},
                     {"init_range", c.init_range}, {"seed", c.seed}};
}

inline void from_json(const nlohmann::json& j, TrainConfig& c) {
  c.learning_rate = j.at("learning_rate").get<double>();
  c.rank = j.at("rank").get<int>();
  c.dropout = j.at("dropout").get<double>();
  c.dropout_site = j.value("dropout_site", std::string("input")) == "projection" ? DropoutSite::projection : DropoutSite::input;
  c.batch_size = j.at("batch_size").get<int>();
  c.max_epochs = j.at("max_epochs").get<int>();
  c.patience = j.at("patience").get<int>();
  c.checkpoint_every = j.at("checkpoint_every").get<int>();
  c.init_range = j.value("init_range", 0.05);
  c.seed = j.at("seed").get<std::uint64_t>();
}

struct Checkpoint {
  long step = 0;
  int epoch = 0;
  double dev_loss = 0.0;

  bool operator==(const Checkpoint&) const = default;
};

struct TrainHistory {
  std::vector<Checkpoint> checkpoints;
  long steps = 0;
  long best_step = 0;
  int best_epoch = 0;
  double best_dev_loss = std::numeric_limits<double>::infinity();
  std::string stop_reason;
  double wall_clock_seconds = 0.0;

  // Wall-clock time is excluded so that reruns compare equal.
  bool operator==(const TrainHistory& o) const {
    return checkpoints == o.checkpoints && steps == o.steps && best_step == o.best_step && best_epoch == o.best_epoch &&
           best_dev_loss == o.best_dev_loss && stop_reason == o.stop_reason;
  }
};

inline void to_json(nlohmann::json& j, const TrainHistory& h) {
  j = nlohmann::json{{"steps", h.steps}, {"best_step", h.best_step}, {"best_epoch", h.best_epoch},
                     {"best_dev_loss", h.best_dev_loss}, {"stop_reason", h.stop_reason},
                     {"wall_clock_seconds", h.wall_clock_seconds}, {"checkpoints", nlohmann::json::array()}};
  for (const auto& c : h.checkpoints) j["checkpoints"].push_back({{"step", c.step}, {"epoch", c.epoch}, {"dev_loss", c.dev_loss}});
}

inline void from_json(const nlohmann::json& j, TrainHistory& h) {
  h.steps = j.at("steps").get<long>();
  h.best_step = j.at("best_step").get<long>();
  h.best_epoch = j.at("best_epoch").get<int>();
  h.best_dev_loss = j.at("best_dev_loss").get<double>();
  h.stop_reason = j.at("stop_reason").get<std::string>();
  h.wall_clock_seconds = j.value("wall_clock_seconds", 0.0);
  h.checkpoints.clear();
  for (const auto& c : j.at("checkpoints"))
    h.checkpoints.push_back({c.at("step").get<long>(), c.at("epoch").get<int>(), c.at("dev_loss").get<double>()});
}

struct TrainResult {
  ProbeParams params;
  TrainHistory history;
};

namespace detail {

inline Eigen::MatrixXd dropout_mask(Rng& rng, Eigen::Index rows, Eigen::Index cols, double rate) {
  Eigen::MatrixXd mask(rows, cols);
  const double keep_scale = 1.0 / (1.0 - rate);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) mask(i, j) = rng.bernoulli(rate) ? 0.0 : keep_scale;
  return mask;
}

// Loss and d loss / d B for one training sentence with dropout applied.
inline LossAndGradient training_step_loss(ProbeKind kind, const Eigen::MatrixXd& B, const ProbeExample& ex, const TrainConfig& cfg, Rng& rng) {
  auto on_projection = [&](const Eigen::MatrixXd& projected) {
    return kind == ProbeKind::structural ? structural_on_projection(projected, ex.gold_distances, true)
                                         : perceptron_on_projection(projected, ex.gold_tree, true);
  };
  if (cfg.dropout <= 0.0) {
    auto r = on_projection(ex.embeddings * B.transpose());
    r.grad = r.grad.transpose() * ex.embeddings;
    return r;
  }
  if (cfg.dropout_site == DropoutSite::input) {
    Eigen::MatrixXd dropped = ex.embeddings.cwiseProduct(dropout_mask(rng, ex.embeddings.rows(), ex.embeddings.cols(), cfg.dropout));
    auto r = on_projection(dropped * B.transpose());
    r.grad = r.grad.transpose() * dropped;
    return r;
  }
  Eigen::MatrixXd mask = dropout_mask(rng, ex.embeddings.rows(), B.rows(), cfg.dropout);
  auto r = on_projection((ex.embeddings * B.transpose()).cwiseProduct(mask));
  r.grad = r.grad.cwiseProduct(mask).transpose() * ex.embeddings;
  return r;
}

}  // namespace detail

inline Eigen::MatrixXd initial_probe_matrix(Eigen::Index rank, Eigen::Index dim, double range, std::uint64_t seed) {
  detail::Rng rng(detail::derive_seed(seed, "init"));
  Eigen::MatrixXd B(rank, dim);
  for (Eigen::Index i = 0; i < rank; ++i)
    for (Eigen::Index j = 0; j < dim; ++j) B(i, j) = rng.uniform(-range, range);
  return B;
}

// Mini-batch Adam with dropout. Dev loss is checked every
// cfg.checkpoint_every steps and at the end of every epoch; training stops
// after max_epochs or after `patience` consecutive checkpoints without a
// strict decrease (at least one). Returns the parameters from the best
// checkpoint.
inline TrainResult train_probe(ProbeKind kind, const ProbeDataset& train, const ProbeDataset& dev, const TrainConfig& cfg) {
  if (train.empty() || dev.empty()) throw DataError("train_probe: training and dev data must be nonempty");
  const auto dim = train.front().embeddings.cols();
  for (const auto* set : {&train, &dev})
    for (const auto& ex : *set)
      if (ex.embeddings.cols() != dim) throw DataError("train_probe: inconsistent embedding dims (sentence " + ex.sent_id + ")");
  const Eigen::Index rank = cfg.rank <= 0 ? dim : cfg.rank;
  if (rank > dim) throw ConfigError("train_probe: rank " + std::to_string(rank) + " exceeds embedding dim " + std::to_string(dim));
  if (cfg.batch_size < 1 || cfg.max_epochs < 1 || cfg.checkpoint_every < 1) throw ConfigError("train_probe: batch size, epochs and checkpoint interval must be positive");
  if (cfg.dropout < 0.0 || cfg.dropout >= 1.0) throw ConfigError("train_probe: dropout must lie in [0, 1)");

  const auto started = std::chrono::steady_clock::now();
  ProbeParams params{kind, initial_probe_matrix(rank, dim, cfg.init_range, cfg.seed)};
  ProbeParams best = params;
  TrainHistory hist;
  Adam adam;
  detail::Rng order_rng(detail::derive_seed(cfg.seed, "order"));
  detail::Rng dropout_rng(detail::derive_seed(cfg.seed, "dropout"));

  std::vector<std::size_t> order;
  for (std::size_t i = 0; i < train.size(); ++i)
    if (train[i].embeddings.rows() >= 2) order.push_back(i);
  if (order.empty()) throw DataError("train_probe: no training sentence has two or more tokens");

  int since_improvement = 0;
  bool stop = false;
  auto checkpoint = [&](int epoch) {
    double dev_loss = mean_loss(kind, params, dev);
    if (!std::isfinite(dev_loss)) {
      std::ostringstream msg;
      msg << "non-finite dev loss at step " << hist.steps << " (learning rate " << cfg.learning_rate << ")";
      throw NumericalError(msg.str());
    }
    hist.checkpoints.push_back({hist.steps, epoch, dev_loss});
    if (dev_loss < hist.best_dev_loss) {
      hist.best_dev_loss = dev_loss;
      hist.best_step = hist.steps;
      hist.best_epoch = epoch;
      best.B = params.B;
      since_improvement = 0;
    } else if (++since_improvement >= std::max(1, cfg.patience)) {
      hist.stop_reason = "early_stopping";
      stop = true;
    }
  };

  for (int epoch = 1; epoch <= cfg.max_epochs && !stop; ++epoch) {
    order_rng.shuffle(order);
    for (std::size_t start = 0; start < order.size() && !stop; start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      Eigen::MatrixXd grad = Eigen::MatrixXd::Zero(rank, dim);
      double loss = 0.0;
      for (std::size_t i = start; i < end; ++i) {
        auto r = detail::training_step_loss(kind, params.B, train[order[i]], cfg, dropout_rng);
        loss += r.loss;
        grad += r.grad;
      }
      const double count = static_cast<double>(end - start);
      loss /= count;
      grad /= count;
      if (!std::isfinite(loss) || !grad.allFinite()) {
        std::ostringstream msg;
        msg << "non-finite training loss at step " << hist.steps + 1 << " (learning rate " << cfg.learning_rate << ")";
        throw NumericalError(msg.str());
      }
      adam.step(params.B, grad, cfg.learning_rate);
      ++hist.steps;
      if (hist.steps % cfg.checkpoint_every == 0) checkpoint(epoch);
    }
    if (!stop && (hist.checkpoints.empty() || hist.checkpoints.back().step != hist.steps)) checkpoint(epoch);
  }
  if (!stop) hist.stop_reason = "max_epochs";
  hist.wall_clock_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return TrainResult{std::move(best), std::move(hist)};
}

// ---------------------------------------------------------------------------
// Hyperparameter search

struct SearchSpace {
  double lr_min = 5e-5;
  double lr_max = 5e-3;
  int rank_min = 1;
  int rank_max = 0;  // 0 = embedding dim
  double dropout_min = 0.1;
  double dropout_max = 0.8;
};

// Layers probed for a model with `num_layers` transformer layers: 0 and
// every `stride`-th layer up to the last.
inline std::vector<int> sweep_layers(int num_layers, int stride = 4) {
  std::vector<int> out;
  for (int l = 0; l <= num_layers; l += stride) out.push_back(l);
  return out;
}

// Trial t for a layer: log-uniform learning rate, uniform integer rank,
// uniform dropout, each drawn from a stream keyed by (seed, layer).
inline std::vector<TrainConfig> sample_trials(const SearchSpace& space, const TrainConfig& base, int layer, int trials, Eigen::Index dim,
                                              std::uint64_t seed) {
  detail::Rng rng(detail::derive_seed(seed, "search/layer" + std::to_string(layer)));
  const int rank_max = space.rank_max <= 0 ? static_cast<int>(dim) : std::min<int>(space.rank_max, static_cast<int>(dim));
  std::vector<TrainConfig> out;
  for (int t = 0; t < trials; ++t) {
    TrainConfig c = base;
    c.learning_rate = rng.log_uniform(space.lr_min, space.lr_max);
    c.rank = static_cast<int>(rng.integer(space.rank_min, rank_max));
    c.dropout = rng.uniform(space.dropout_min, space.dropout_max);
    c.seed = detail::derive_seed(seed, "trial/layer" + std::to_string(layer) + "/" + std::to_string(t));
    out.push_back(c);
  }
  return out;
}

struct LayerData {
  ProbeDataset train;
  ProbeDataset dev;
};

struct TrialRecord {
  int layer = 0;
  int trial = 0;
  TrainConfig config;
  TrainHistory history;
};

struct SearchResult {
  int best_layer = 0;
  TrainConfig best_config;
  ProbeParams best_params;
  TrainHistory best_history;
  std::vector<TrialRecord> trials;
};

// Random search over layers x trials; the winner has the lowest best dev
// loss (earliest trial on ties). `load` supplies data one layer at a time.
inline SearchResult random_search(ProbeKind kind, const std::function<LayerData(int)>& load, const std::vector<int>& layers,
                                  const SearchSpace& space, const TrainConfig& base, int trials, std::uint64_t seed,
                                  const std::function<void(const TrialRecord&)>& on_trial = {}) {
  if (trials < 1) throw ConfigError("random_search: trials must be >= 1");
  if (layers.empty()) throw ConfigError("random_search: no layers given");
  SearchResult result;
  double best_loss = std::numeric_limits<double>::infinity();
  bool have = false;
  for (int layer : layers) {
    LayerData data = load(layer);
    if (data.train.empty()) throw DataError("random_search: no training data for layer " + std::to_string(layer));
    auto configs = sample_trials(space, base, layer, trials, data.train.front().embeddings.cols(), seed);
    for (int t = 0; t < trials; ++t) {
      auto r = train_probe(kind, data.train, data.dev, configs[t]);
      TrialRecord rec{layer, t, configs[t], r.history};
      if (on_trial) on_trial(rec);
      if (!have || r.history.best_dev_loss < best_loss) {
        have = true;
        best_loss = r.history.best_dev_loss;
        result.best_layer = layer;
        result.best_config = configs[t];
        result.best_params = std::move(r.params);
        result.best_history = r.history;
      }
      result.trials.push_back(std::move(rec));
    }
  }
  return result;
}

// ---------------------------------------------------------------------------
// JPRB: "JPRB" | u32 version | u8 kind | u32 rank | u32 dim | rank*dim f64
// row-major, little-endian.

inline constexpr std::string_view jprb_magic = "JPRB";
inline constexpr std::uint32_t jprb_version = 1;

inline std::string serialize_probe(const ProbeParams& p) {
  detail::ByteWriter w;
  w.bytes(jprb_magic);
  w.u32(jprb_version);
  w.u8(static_cast<std::uint8_t>(p.kind));
  w.u32(static_cast<std::uint32_t>(p.rank()));
  w.u32(static_cast<std::uint32_t>(p.dim()));
  for (Eigen::Index i = 0; i < p.rank(); ++i)
    for (Eigen::Index j = 0; j < p.dim(); ++j) w.f64(p.B(i, j));
  return w.release();
}

inline ProbeParams deserialize_probe(std::string_view bytes) {
  if (bytes.size() < 4 || bytes.substr(0, 4) != jprb_magic) throw FormatError("bad magic, expected JPRB", 0);
  detail::ByteReader r(bytes);
  r.bytes(4, "magic");
  auto at = r.offset();
  if (auto v = r.u32("version"); v != jprb_version) throw FormatError("unsupported JPRB version " + std::to_string(v), at);
  at = r.offset();
  auto kind = r.u8("kind");
  if (kind > 1) throw FormatError("unknown probe kind byte " + std::to_string(kind), at);
  auto rank = r.u32("rank");
  auto dim = r.u32("dim");
  at = r.offset();
  if (rank < 1 || rank > dim) throw FormatError("invalid probe shape " + std::to_string(rank) + "x" + std::to_string(dim), at);
  ProbeParams p{static_cast<ProbeKind>(kind), Eigen::MatrixXd(rank, dim)};
  for (Eigen::Index i = 0; i < p.rank(); ++i)
    for (Eigen::Index j = 0; j < p.dim(); ++j) {
      at = r.offset();
      double v = r.f64("probe entry");
      if (!std::isfinite(v)) throw FormatError("non-finite probe entry", at);
      p.B(i, j) = v;
    }
  if (!r.at_end()) throw FormatError("trailing bytes after probe matrix", r.offset());
  return p;
}

}  // namespace jabberprobe
