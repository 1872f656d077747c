#pragma once

#include <zlib.h>

#include <algorithm>
#include <atomic>
#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <charconv>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <mutex>
#include <nlohmann/json.hpp>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "jabberprobe/baselines.hpp"
#include "jabberprobe/detail/file_io.hpp"
#include "jabberprobe/detail/random.hpp"
#include "jabberprobe/embeddings.hpp"
#include "jabberprobe/lexicon.hpp"
#include "jabberprobe/metrics.hpp"
#include "jabberprobe/probes.hpp"
#include "jabberprobe/substitute.hpp"
#include "jabberprobe/treebank.hpp"

namespace jabberprobe {

// ---------------------------------------------------------------------------
// Configuration

enum class ModelType { embeddings, fastpos, path, majority };

inline const char* to_string(ModelType t) {
  switch (t) {
    case ModelType::embeddings: return "embeddings";
    case ModelType::fastpos: return "fastpos";
    case ModelType::path: return "path";
    case ModelType::majority: return "majority";
  }
  return "?";
}

struct ModelSpec {
  std::string name;
  ModelType type = ModelType::embeddings;
  std::filesystem::path dir;              // holds {split}.layer{L}.jemb and optional {split}.align.jsonl
  std::filesystem::path jabberwocky_dir;  // same layout for the jabberwocky split; defaults to dir
  std::vector<int> layers;

  bool is_baseline() const { return type == ModelType::path || type == ModelType::majority; }
};

struct DataPaths {
  std::filesystem::path train, dev, test, jabberwocky, lexicon, word_vectors, position_table;
};

struct EvalOptions {
  bool exclude_punct = false;
  bool dspr_length_filter = false;
  Averaging uuas_averaging = Averaging::micro;
  DsprAggregation dspr_aggregation = DsprAggregation::row_wise;
};

struct ExperimentConfig {
  std::uint64_t seed = 0;
  std::filesystem::path output_dir;
  DataPaths data;
  bool past_tense = false;
  double substitution_probability = 1.0;
  std::vector<ProbeKind> kinds{ProbeKind::structural, ProbeKind::perceptron};
  std::vector<ModelSpec> models;
  TrainConfig train;
  SearchSpace space;
  int trials = 10;
  EvalOptions eval;
  int workers = 1;
  std::string hash;  // crc32 of the canonical key=value listing, 8 hex digits

  std::filesystem::path jabberwocky_path() const {
    return data.jabberwocky.empty() ? output_dir / "jabberwocky.conllu" : data.jabberwocky;
  }
  std::string provenance() const { return "# jabberprobe config_hash=" + hash + " seed=" + std::to_string(seed); }
};

namespace detail {

using Ptree = boost::property_tree::ptree;

inline Ptree::path_type ini_key(const std::string& section, const std::string& name) {
  return Ptree::path_type(section.empty() ? name : section + "/" + name, '/');
}

inline std::string field_name(const std::string& section, const std::string& name) {
  return section.empty() ? name : section + "." + name;
}

inline std::string trim(std::string_view s) {
  auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

inline std::vector<std::string> split_list(std::string_view s) {
  std::vector<std::string> out;
  for (auto part : split(s, ',')) {
    auto t = trim(part);
    if (!t.empty()) out.push_back(std::move(t));
  }
  return out;
}

inline std::uint32_t crc32_of(std::string_view bytes) {
  return static_cast<std::uint32_t>(::crc32(0L, reinterpret_cast<const Bytef*>(bytes.data()), static_cast<uInt>(bytes.size())));
}

inline std::string hex8(std::uint32_t v) {
  char buf[9];
  std::snprintf(buf, sizeof buf, "%08x", v);
  return buf;
}

// Reads typed values and reports bad ones by their dotted field name.
class ConfigReader {
public:
  explicit ConfigReader(const Ptree& pt) : pt_(pt) {}

  std::optional<std::string> raw(const std::string& section, const std::string& name) const {
    auto v = pt_.get_optional<std::string>(ini_key(section, name));
    if (!v) return std::nullopt;
    return trim(*v);
  }

  std::string string(const std::string& section, const std::string& name, const std::string& fallback = {}) const {
    return raw(section, name).value_or(fallback);
  }

  template <typename T>
  T integer(const std::string& section, const std::string& name, T fallback) const {
    auto v = raw(section, name);
    if (!v) return fallback;
    T out{};
    auto [p, ec] = std::from_chars(v->data(), v->data() + v->size(), out);
    if (ec != std::errc() || p != v->data() + v->size() || v->empty())
      throw ConfigError(field_name(section, name) + ": expected an integer, got '" + *v + "'");
    return out;
  }

  double real(const std::string& section, const std::string& name, double fallback) const {
    auto v = raw(section, name);
    if (!v) return fallback;
    char* end = nullptr;
    double out = std::strtod(v->c_str(), &end);
    if (v->empty() || end != v->c_str() + v->size() || !std::isfinite(out))
      throw ConfigError(field_name(section, name) + ": expected a number, got '" + *v + "'");
    return out;
  }

  bool boolean(const std::string& section, const std::string& name, bool fallback) const {
    auto v = raw(section, name);
    if (!v) return fallback;
    if (*v == "true" || *v == "yes" || *v == "1" || *v == "on") return true;
    if (*v == "false" || *v == "no" || *v == "0" || *v == "off") return false;
    throw ConfigError(field_name(section, name) + ": expected true or false, got '" + *v + "'");
  }

private:
  const Ptree& pt_;
};

inline const std::map<std::string, std::set<std::string>>& known_keys() {
  static const std::map<std::string, std::set<std::string>> keys{
      {"", {"seed", "output_dir", "workers"}},
      {"data", {"train", "dev", "test", "jabberwocky", "lexicon", "word_vectors", "position_table"}},
      {"generate", {"past_tense", "substitution_probability"}},
      {"probes", {"kinds"}},
      {"models", {"names"}},
      {"train", {"learning_rate", "rank", "dropout", "dropout_site", "batch_size", "max_epochs", "patience", "checkpoint_every", "init_range"}},
      {"search", {"trials", "lr_min", "lr_max", "rank_min", "rank_max", "dropout_min", "dropout_max"}},
      {"eval", {"exclude_punct", "dspr_length_filter", "uuas_average", "dspr_aggregation"}},
  };
  return keys;
}

inline const std::set<std::string>& model_keys() {
  static const std::set<std::string> keys{"type", "dir", "jabberwocky_dir", "layers", "num_layers", "layer_stride"};
  return keys;
}

inline void check_keys(const Ptree& pt) {
  for (const auto& [section, body] : pt) {
    if (body.empty()) {
      bool section_name = known_keys().count(section) || section.rfind("model.", 0) == 0;
      if (!known_keys().at("").count(section) && !section_name) throw ConfigError(section + ": unknown key");
      continue;
    }
    const std::set<std::string>* allowed = nullptr;
    if (section.rfind("model.", 0) == 0)
      allowed = &model_keys();
    else if (auto it = known_keys().find(section); it != known_keys().end() && !section.empty())
      allowed = &it->second;
    if (!allowed) throw ConfigError("[" + section + "]: unknown section");
    for (const auto& [name, leaf] : body)
      if (!allowed->count(name)) throw ConfigError(field_name(section, name) + ": unknown key");
  }
}

// "section.key=value"; the key is everything after the last dot so that
// model sections ("model.bert.dir=...") work. A key without a dot is top-level.
inline void apply_override(Ptree& pt, const std::string& assignment) {
  auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + assignment + "': expected section.key=value");
  auto lhs = trim(std::string_view(assignment).substr(0, eq));
  auto value = trim(std::string_view(assignment).substr(eq + 1));
  auto dot = lhs.rfind('.');
  std::string section = dot == std::string::npos ? "" : lhs.substr(0, dot);
  std::string name = dot == std::string::npos ? lhs : lhs.substr(dot + 1);
  if (name.empty()) throw ConfigError("override '" + assignment + "': empty key");
  pt.put(ini_key(section, name), value);
}

// Sorted key=value listing; the hash ignores `workers`, which does not
// change any result.
inline std::string canonical_listing(const Ptree& pt) {
  std::vector<std::string> lines;
  for (const auto& [section, body] : pt) {
    if (body.empty()) {
      if (section != "workers") lines.push_back(section + "=" + trim(body.data()));
      continue;
    }
    for (const auto& [name, leaf] : body) lines.push_back(section + "." + name + "=" + trim(leaf.data()));
  }
  std::sort(lines.begin(), lines.end());
  std::string out;
  for (const auto& l : lines) out += l + "\n";
  return out;
}

inline std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  if (p.empty()) return {};
  std::filesystem::path path(p);
  return path.is_absolute() ? path : base / path;
}

inline std::vector<int> parse_layers(const std::string& field, const std::string& text) {
  std::vector<int> out;
  for (const auto& item : split_list(text)) {
    int v = 0;
    auto [p, ec] = std::from_chars(item.data(), item.data() + item.size(), v);
    if (ec != std::errc() || p != item.data() + item.size() || v < 0) throw ConfigError(field + ": bad layer '" + item + "'");
    out.push_back(v);
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

}  // namespace detail

// Parses INI text. Relative paths resolve against `base_dir`; overrides are
// "section.key=value" strings applied before anything is read.
inline ExperimentConfig parse_config(const std::string& text, const std::filesystem::path& base_dir = ".",
                                     const std::vector<std::string>& overrides = {}) {
  detail::Ptree pt;
  std::istringstream in(text);
  try {
    boost::property_tree::ini_parser::read_ini(in, pt);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  for (const auto& o : overrides) detail::apply_override(pt, o);
  detail::check_keys(pt);
  detail::ConfigReader r(pt);

  ExperimentConfig cfg;
  if (!r.raw("", "seed")) throw ConfigError("seed: required (runs never fall back to a clock-derived seed)");
  cfg.seed = r.integer<std::uint64_t>("", "seed", 0);
  cfg.output_dir = detail::resolve(base_dir, r.string("", "output_dir", "output"));
  cfg.workers = r.integer<int>("", "workers", 1);
  if (cfg.workers < 1) throw ConfigError("workers: must be >= 1");

  auto path = [&](const std::string& name) { return detail::resolve(base_dir, r.string("data", name)); };
  cfg.data = {path("train"), path("dev"), path("test"), path("jabberwocky"), path("lexicon"), path("word_vectors"), path("position_table")};

  cfg.past_tense = r.boolean("generate", "past_tense", false);
  cfg.substitution_probability = r.real("generate", "substitution_probability", 1.0);
  if (cfg.substitution_probability < 0.0 || cfg.substitution_probability > 1.0)
    throw ConfigError("generate.substitution_probability: must lie in [0, 1]");

  if (auto kinds = r.raw("probes", "kinds")) {
    cfg.kinds.clear();
    for (const auto& k : detail::split_list(*kinds)) {
      if (k != "structural" && k != "perceptron") throw ConfigError("probes.kinds: unknown probe '" + k + "'");
      auto kind = parse_probe_kind(k);
      if (std::find(cfg.kinds.begin(), cfg.kinds.end(), kind) == cfg.kinds.end()) cfg.kinds.push_back(kind);
    }
  }

  std::set<std::string> seen;
  for (const auto& name : detail::split_list(r.string("models", "names"))) {
    if (!seen.insert(name).second) throw ConfigError("models.names: duplicate model '" + name + "'");
    if (name.find_first_of(",/\\ \t") != std::string::npos) throw ConfigError("models.names: bad model name '" + name + "'");
    const std::string section = "model." + name;
    ModelSpec m;
    m.name = name;
    auto type = r.raw(section, "type");
    std::string t = type.value_or(name == "path" || name == "majority" ? name : "");
    if (t == "embeddings")
      m.type = ModelType::embeddings;
    else if (t == "fastpos")
      m.type = ModelType::fastpos;
    else if (t == "path")
      m.type = ModelType::path;
    else if (t == "majority")
      m.type = ModelType::majority;
    else
      throw ConfigError(section + ".type: expected embeddings, fastpos, path or majority, got '" + t + "'");
    if (m.type == ModelType::embeddings) {
      m.dir = detail::resolve(base_dir, r.string(section, "dir"));
      if (m.dir.empty()) throw ConfigError(section + ".dir: required for embeddings models");
      auto jd = r.string(section, "jabberwocky_dir");
      m.jabberwocky_dir = jd.empty() ? m.dir : detail::resolve(base_dir, jd);
      if (auto layers = r.raw(section, "layers"); layers && !layers->empty()) {
        m.layers = detail::parse_layers(section + ".layers", *layers);
      } else if (r.raw(section, "num_layers")) {
        int stride = r.integer<int>(section, "layer_stride", 4);
        if (stride < 1) throw ConfigError(section + ".layer_stride: must be >= 1");
        m.layers = sweep_layers(r.integer<int>(section, "num_layers", 0), stride);
      }
      if (m.layers.empty()) throw ConfigError(section + ".layers: at least one layer is required");
    } else if (m.type == ModelType::fastpos) {
      m.layers = {0};
    }
    cfg.models.push_back(std::move(m));
  }

  auto& t = cfg.train;
  t.learning_rate = r.real("train", "learning_rate", t.learning_rate);
  t.rank = r.integer<int>("train", "rank", t.rank);
  t.dropout = r.real("train", "dropout", t.dropout);
  auto site = r.string("train", "dropout_site", "input");
  if (site != "input" && site != "projection") throw ConfigError("train.dropout_site: expected input or projection");
  t.dropout_site = site == "input" ? DropoutSite::input : DropoutSite::projection;
  t.batch_size = r.integer<int>("train", "batch_size", t.batch_size);
  t.max_epochs = r.integer<int>("train", "max_epochs", t.max_epochs);
  t.patience = r.integer<int>("train", "patience", t.patience);
  t.checkpoint_every = r.integer<int>("train", "checkpoint_every", t.checkpoint_every);
  t.init_range = r.real("train", "init_range", t.init_range);
  if (t.learning_rate <= 0) throw ConfigError("train.learning_rate: must be positive");
  if (t.rank < 0) throw ConfigError("train.rank: must be >= 0 (0 = full rank)");
  if (t.dropout < 0 || t.dropout >= 1) throw ConfigError("train.dropout: must lie in [0, 1)");
  if (t.batch_size < 1) throw ConfigError("train.batch_size: must be >= 1");
  if (t.max_epochs < 1) throw ConfigError("train.max_epochs: must be >= 1");
  if (t.patience < 0) throw ConfigError("train.patience: must be >= 0");
  if (t.checkpoint_every < 1) throw ConfigError("train.checkpoint_every: must be >= 1");

  auto& s = cfg.space;
  cfg.trials = r.integer<int>("search", "trials", cfg.trials);
  s.lr_min = r.real("search", "lr_min", s.lr_min);
  s.lr_max = r.real("search", "lr_max", s.lr_max);
  s.rank_min = r.integer<int>("search", "rank_min", s.rank_min);
  s.rank_max = r.integer<int>("search", "rank_max", s.rank_max);
  s.dropout_min = r.real("search", "dropout_min", s.dropout_min);
  s.dropout_max = r.real("search", "dropout_max", s.dropout_max);
  if (cfg.trials < 1) throw ConfigError("search.trials: must be >= 1");
  if (s.lr_min <= 0 || s.lr_max < s.lr_min) throw ConfigError("search.lr_min/lr_max: need 0 < lr_min <= lr_max");
  if (s.rank_min < 1) throw ConfigError("search.rank_min: must be >= 1");
  if (s.dropout_min < 0 || s.dropout_max >= 1 || s.dropout_max < s.dropout_min)
    throw ConfigError("search.dropout_min/dropout_max: need 0 <= min <= max < 1");

  cfg.eval.exclude_punct = r.boolean("eval", "exclude_punct", false);
  cfg.eval.dspr_length_filter = r.boolean("eval", "dspr_length_filter", false);
  auto avg = r.string("eval", "uuas_average", "micro");
  if (avg != "micro" && avg != "macro") throw ConfigError("eval.uuas_average: expected micro or macro");
  cfg.eval.uuas_averaging = avg == "micro" ? Averaging::micro : Averaging::macro;
  auto agg = r.string("eval", "dspr_aggregation", "row_wise");
  if (agg != "row_wise" && agg != "flattened_pairs") throw ConfigError("eval.dspr_aggregation: expected row_wise or flattened_pairs");
  cfg.eval.dspr_aggregation = agg == "row_wise" ? DsprAggregation::row_wise : DsprAggregation::flattened_pairs;

  cfg.hash = detail::hex8(detail::crc32_of(detail::canonical_listing(pt)));
  return cfg;
}

inline ExperimentConfig load_config(const std::filesystem::path& path, const std::vector<std::string>& overrides = {}) {
  if (!std::filesystem::exists(path)) throw ConfigError("config file not found: " + path.string());
  auto base = path.has_parent_path() ? path.parent_path() : std::filesystem::path(".");
  return parse_config(detail::read_file(path), base, overrides);
}

// ---------------------------------------------------------------------------
// Shared plumbing

using LogSink = std::function<void(const std::string&)>;

namespace detail {

inline void require_file(const std::string& field, const std::filesystem::path& p) {
  if (p.empty()) throw ConfigError(field + ": not set");
  if (!std::filesystem::exists(p)) throw ConfigError(field + ": file not found: " + p.string());
}

inline std::vector<Sentence> read_corpus(const std::filesystem::path& p) {
  try {
    return parse_conllu(read_file(p));
  } catch (const ParseError& e) {
    throw ParseError(p.string() + ": " + e.what());
  }
}

// Runs jobs 0..count-1 on up to `workers` threads. Every job runs even if
// another fails; the first failure in job order is rethrown.
inline void run_jobs(std::size_t count, int workers, const std::function<void(std::size_t)>& job) {
  std::vector<std::exception_ptr> errors(count);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i; (i = next++) < count;) {
      try {
        job(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const auto n = std::min<std::size_t>(static_cast<std::size_t>(std::max(1, workers)), count);
  if (n <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < n; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

inline LogSink locked(const LogSink& log) {
  auto m = std::make_shared<std::mutex>();
  return [m, log](const std::string& line) {
    std::lock_guard lock(*m);
    if (log) log(line);
  };
}

inline std::string format_value(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

}  // namespace detail

// Corpora and Fast+Pos inputs a command needs, loaded once and then shared
// read-only between worker threads.
struct Workspace {
  std::map<std::string, std::vector<Sentence>> corpora;  // by split name
  WordVectors words;
  PositionTable positions;
  bool have_fastpos = false;

  const std::vector<Sentence>& corpus(const std::string& split) const {
    auto it = corpora.find(split);
    if (it == corpora.end()) throw DataError("split " + split + " was not loaded");
    return it->second;
  }
};

inline std::filesystem::path split_path(const ExperimentConfig& cfg, const std::string& split) {
  if (split == "train") return cfg.data.train;
  if (split == "dev") return cfg.data.dev;
  if (split == "test") return cfg.data.test;
  if (split == "jabberwocky") return cfg.jabberwocky_path();
  throw ConfigError("unknown split " + split);
}

inline Workspace load_workspace(const ExperimentConfig& cfg, const std::vector<std::string>& splits, const std::vector<ModelSpec>& models) {
  Workspace ws;
  for (const auto& split : splits) {
    auto p = split_path(cfg, split);
    detail::require_file(split == "jabberwocky" && cfg.data.jabberwocky.empty() ? "data.jabberwocky (run generate first)" : "data." + split, p);
    ws.corpora[split] = detail::read_corpus(p);
  }
  bool fastpos = std::any_of(models.begin(), models.end(), [](const ModelSpec& m) { return m.type == ModelType::fastpos; });
  if (fastpos) {
    detail::require_file("data.word_vectors", cfg.data.word_vectors);
    detail::require_file("data.position_table", cfg.data.position_table);
    std::unordered_set<std::string> vocab;
    for (const auto& [_, corpus] : ws.corpora)
      for (const auto& s : corpus)
        for (const auto& t : s.tokens) {
          vocab.insert(t.form);
          std::string lower = t.form;
          for (auto& c : lower) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
          vocab.insert(lower);
        }
    ws.words = load_word_vectors(cfg.data.word_vectors, &vocab);
    ws.positions = position_table_from(read_embedding_file(cfg.data.position_table));
    ws.have_fastpos = true;
  }
  for (const auto& m : models)
    if (m.type == ModelType::embeddings && !std::filesystem::is_directory(m.dir))
      throw ConfigError("model." + m.name + ".dir: directory not found: " + m.dir.string());
  return ws;
}

inline std::filesystem::path jemb_path(const ModelSpec& m, const std::string& split, int layer) {
  return (split == "jabberwocky" ? m.jabberwocky_dir : m.dir) / (split + ".layer" + std::to_string(layer) + ".jemb");
}

inline std::filesystem::path alignment_path(const ModelSpec& m, const std::string& split) {
  return (split == "jabberwocky" ? m.jabberwocky_dir : m.dir) / (split + ".align.jsonl");
}

// Probe inputs for one (model, layer, split). With an alignment file the
// corpus is reconciled first (removed sentences are dropped) and each word
// takes its first subword's vector; without one the JEMB rows must already
// be one per word.
struct SplitData {
  std::vector<Sentence> sentences;
  ProbeDataset examples;
  std::size_t dropped = 0;
};

inline SplitData load_split(const Workspace& ws, const ModelSpec& m, int layer, const std::string& split, const LogSink& log = {}) {
  const auto& corpus = ws.corpus(split);
  SplitData out;
  if (m.type == ModelType::fastpos) {
    if (!ws.have_fastpos) throw DataError("fast+pos inputs were not loaded");
    FastPosOptions opt;
    opt.word_dim = ws.words.dim;
    opt.pos_dim = ws.positions.dim_pos;
    opt.split = split;
    auto fp = compose_fast_pos(corpus, ws.words, ws.positions, opt);
    if (log)
      for (const auto& line : fp.log) log(m.name + "/" + split + ": " + line);
    for (const auto& s : corpus) {
      const auto* e = fp.set.find(s.sent_id);
      if (!e) {
        ++out.dropped;
        continue;
      }
      out.examples.push_back(make_example(s, *e));
      out.sentences.push_back(s);
    }
    return out;
  }
  if (m.type != ModelType::embeddings) throw DataError("model " + m.name + " has no embeddings");

  const auto file = jemb_path(m, split, layer);
  if (!std::filesystem::exists(file)) throw DataError("missing embedding file " + file.string());
  auto set = read_embedding_file(file);
  std::unordered_map<std::string, AlignmentRecord> records;
  const auto align = alignment_path(m, split);
  const bool aligned = std::filesystem::exists(align);
  if (aligned)
    for (auto& rec : parse_alignments(detail::read_file(align))) {
      auto id = rec.sent_id;
      if (!records.emplace(id, std::move(rec)).second) throw AlignmentError(align.string() + ": duplicate record for " + id);
    }
  for (const auto& s : corpus) {
    if (aligned) {
      auto it = records.find(s.sent_id);
      if (it == records.end()) throw AlignmentError(align.string() + ": no record for sentence " + s.sent_id);
      auto merged = align_and_reconcile(s, it->second);
      if (!merged) {
        ++out.dropped;
        continue;
      }
      const auto* raw = set.find(s.sent_id);
      if (!raw) throw DataError(file.string() + ": no vectors for sentence " + s.sent_id);
      out.examples.push_back(make_example(*merged, token_vectors_from_subwords(*raw, it->second)));
      out.sentences.push_back(std::move(*merged));
    } else {
      const auto* raw = set.find(s.sent_id);
      if (!raw) throw DataError(file.string() + ": no vectors for sentence " + s.sent_id);
      out.examples.push_back(make_example(s, *raw));
      out.sentences.push_back(s);
    }
  }
  if (out.dropped && log) log(m.name + "/" + split + ": " + std::to_string(out.dropped) + " sentences removed by alignment");
  return out;
}

// ---------------------------------------------------------------------------
// Probe artifacts: {output}/probes/{model}/layer{L}/{kind}.jprb plus a JSON
// sidecar. The sidecar is written last and carries the crc32 of the JPRB
// bytes and the job description, so a rerun can tell finished work apart
// from stale or tampered files.

struct ProbeArtifact {
  std::filesystem::path params;
  std::filesystem::path sidecar;
};

inline ProbeArtifact probe_artifact(const ExperimentConfig& cfg, const std::string& model, int layer, ProbeKind kind) {
  auto dir = cfg.output_dir / "probes" / model / ("layer" + std::to_string(layer));
  return {dir / (std::string(to_string(kind)) + ".jprb"), dir / (std::string(to_string(kind)) + ".json")};
}

enum class ArtifactState { missing, stale, complete };

inline ArtifactState artifact_state(const ProbeArtifact& a, const nlohmann::json& job) {
  if (!std::filesystem::exists(a.params) || !std::filesystem::exists(a.sidecar)) return ArtifactState::missing;
  nlohmann::json side;
  try {
    side = nlohmann::json::parse(detail::read_file(a.sidecar));
  } catch (const nlohmann::json::exception& e) {
    throw DataError(a.sidecar.string() + ": unreadable sidecar: " + e.what());
  }
  auto sum = detail::hex8(detail::crc32_of(detail::read_file(a.params)));
  if (side.value("checksum", std::string()) != sum)
    throw DataError(a.params.string() + ": checksum does not match " + a.sidecar.string() +
                    "; refusing to reuse or overwrite it (delete both files to retrain)");
  return side.value("job", nlohmann::json()) == job ? ArtifactState::complete : ArtifactState::stale;
}

inline void write_artifact(const ExperimentConfig& cfg, const ProbeArtifact& a, const ProbeParams& p, nlohmann::json sidecar) {
  auto bytes = serialize_probe(p);
  detail::write_file(a.params, bytes);
  sidecar["checksum"] = detail::hex8(detail::crc32_of(bytes));
  sidecar["config_hash"] = cfg.hash;
  sidecar["seed"] = cfg.seed;
  detail::write_file(a.sidecar, sidecar.dump(2) + "\n");
}

inline ProbeParams read_artifact(const ProbeArtifact& a) {
  auto bytes = detail::read_file(a.params);
  auto side = nlohmann::json::parse(detail::read_file(a.sidecar));
  if (side.value("checksum", std::string()) != detail::hex8(detail::crc32_of(bytes)))
    throw DataError(a.params.string() + ": checksum does not match " + a.sidecar.string());
  try {
    return deserialize_probe(bytes);
  } catch (const FormatError& e) {
    throw FormatError(a.params.string() + ": " + e.reason(), e.offset());
  }
}

inline std::uint64_t job_seed(const ExperimentConfig& cfg, const std::string& what, const std::string& model, int layer, ProbeKind kind) {
  return detail::derive_seed(cfg.seed, what + "/" + model + "/layer" + std::to_string(layer) + "/" + to_string(kind));
}

inline std::vector<const ModelSpec*> probed_models(const ExperimentConfig& cfg) {
  std::vector<const ModelSpec*> out;
  for (const auto& m : cfg.models)
    if (!m.is_baseline()) out.push_back(&m);
  return out;
}

// ---------------------------------------------------------------------------
// Commands

// Writes {output}/jabberwocky.conllu from the test corpus, plus the
// substitution log, the inflection table and a manifest. The CoNLL-U file
// stays free of run metadata so stripping it gives back the input exactly;
// provenance lives in the other three files.
inline void cmd_generate(const ExperimentConfig& cfg, const LogSink& log = {}) {
  detail::require_file("data.test", cfg.data.test);
  detail::require_file("data.lexicon", cfg.data.lexicon);
  auto corpus = detail::read_corpus(cfg.data.test);
  auto lex = load_lexicon(cfg.data.lexicon);
  if (log)
    for (const auto& w : lex.warnings) log("lexicon: " + w);
  auto table = inflection_table(lex.entries, cfg.past_tense);
  SubstitutionPlan plan;
  plan.seed = detail::derive_seed(cfg.seed, "generate");
  plan.bundles = enabled_bundles(cfg.past_tense);
  plan.substitution_probability = cfg.substitution_probability;
  auto result = substitute_corpus(corpus, table, plan);

  const auto dir = cfg.output_dir;
  detail::write_file(dir / "jabberwocky.conllu", write_conllu(result.corpus));
  detail::write_file(dir / "generate" / "substitutions.tsv", cfg.provenance() + "\n" + write_substitution_log(result.log));
  detail::write_file(dir / "generate" / "inflections.tsv", write_inflection_table(table));
  nlohmann::json manifest{{"config_hash", cfg.hash},
                          {"seed", cfg.seed},
                          {"source", cfg.data.test.string()},
                          {"sentences", result.corpus.size()},
                          {"substitutions", result.log.size()},
                          {"inflected_forms", table.size()},
                          {"past_tense", cfg.past_tense}};
  detail::write_file(dir / "generate" / "manifest.json", manifest.dump(2) + "\n");
  if (log) log("generate: " + std::to_string(result.log.size()) + " substitutions in " + std::to_string(result.corpus.size()) + " sentences");
}

// Synthetic stand-in for the extractor: writes {split}.layer{L}.jemb files
// and {split}.align.jsonl in the extractor's layout. Words split into one
// subword per four characters; subword vectors are pseudo-random functions
// of the piece and its position, and higher layers mix in the sentence mean.
struct StubOptions {
  std::filesystem::path corpus;
  std::filesystem::path out_dir;
  std::string split = "test";
  std::string model = "stub";
  std::vector<int> layers{0};
  int dim = 16;
  std::uint64_t seed = 0;
};

inline void cmd_extract_stub(const StubOptions& opt, const LogSink& log = {}) {
  detail::require_file("corpus", opt.corpus);
  if (opt.dim < 1) throw ConfigError("dim: must be >= 1");
  if (opt.layers.empty()) throw ConfigError("layers: at least one layer is required");
  auto corpus = detail::read_corpus(opt.corpus);
  const auto d = static_cast<Eigen::Index>(opt.dim);
  auto vec = [&](const std::string& key) {
    detail::Rng rng(detail::derive_seed(opt.seed, key));
    Eigen::RowVectorXf v(d);
    for (Eigen::Index i = 0; i < d; ++i) v(i) = static_cast<float>(rng.uniform(-1.0, 1.0));
    return v;
  };

  std::vector<AlignmentRecord> records;
  std::vector<EmbeddingMatrix> base;
  for (const auto& s : corpus) {
    AlignmentRecord rec{s.sent_id, AlignmentStatus::ok, {}, {}, ""};
    std::vector<Eigen::RowVectorXf> rows;
    for (const auto& t : s.tokens) {
      const std::size_t pieces = std::max<std::size_t>(1, (t.form.size() + 3) / 4);
      rec.token_map.emplace_back(rows.size(), rows.size() + pieces);
      for (std::size_t k = 0; k < pieces; ++k)
        rows.push_back(vec("piece/" + t.form.substr(4 * k, 4) + "/" + std::to_string(k)) + 0.25f * vec("position/" + std::to_string(rows.size())));
    }
    EmbeddingMatrix m(static_cast<Eigen::Index>(rows.size()), d);
    for (std::size_t i = 0; i < rows.size(); ++i) m.row(static_cast<Eigen::Index>(i)) = rows[i];
    base.push_back(std::move(m));
    records.push_back(std::move(rec));
  }
  for (int layer : opt.layers) {
    EmbeddingSet set(opt.model, layer, static_cast<std::size_t>(opt.dim), opt.split);
    const float mix = static_cast<float>(layer) / static_cast<float>(layer + 1);
    for (std::size_t i = 0; i < corpus.size(); ++i) {
      EmbeddingMatrix m = base[i];
      if (m.rows() > 0 && layer > 0) {
        Eigen::RowVectorXf mean = m.colwise().mean();
        m.rowwise() += mix * mean;
      }
      set.add(corpus[i].sent_id, std::move(m));
    }
    write_embedding_file(set, opt.out_dir / (opt.split + ".layer" + std::to_string(layer) + ".jemb"));
  }
  detail::write_file(opt.out_dir / (opt.split + ".align.jsonl"), write_alignments(records));
  if (log) log("extract-stub: " + std::to_string(corpus.size()) + " sentences, " + std::to_string(opt.layers.size()) + " layers");
}

// One probe per (model, layer, kind) with the [train] settings. Finished
// artifacts are skipped; artifacts whose checksum fails stop the run.
inline void cmd_train(const ExperimentConfig& cfg, const LogSink& sink = {}) {
  auto log = detail::locked(sink);
  auto models = probed_models(cfg);
  std::vector<ModelSpec> specs;
  for (const auto* m : models) specs.push_back(*m);
  auto ws = load_workspace(cfg, {"train", "dev"}, specs);

  std::vector<std::pair<const ModelSpec*, int>> jobs;
  for (const auto* m : models)
    for (int layer : m->layers) jobs.emplace_back(m, layer);

  detail::run_jobs(jobs.size(), cfg.workers, [&](std::size_t j) {
    const auto& [m, layer] = jobs[j];
    std::vector<ProbeKind> todo;
    std::map<ProbeKind, TrainConfig> config_of;
    std::map<ProbeKind, nlohmann::json> job_of;
    for (auto kind : cfg.kinds) {
      TrainConfig c = cfg.train;
      c.seed = job_seed(cfg, "train", m->name, layer, kind);
      config_of[kind] = c;
      job_of[kind] = nlohmann::json{{"source", "train"}, {"config", c}};
      auto state = artifact_state(probe_artifact(cfg, m->name, layer, kind), job_of[kind]);
      if (state == ArtifactState::complete) {
        log("train " + m->name + " layer " + std::to_string(layer) + " " + to_string(kind) + ": up to date, skipped");
        continue;
      }
      todo.push_back(kind);
    }
    if (todo.empty()) return;
    auto train = load_split(ws, *m, layer, "train", log);
    auto dev = load_split(ws, *m, layer, "dev", log);
    for (auto kind : todo) {
      auto r = train_probe(kind, train.examples, dev.examples, config_of[kind]);
      write_artifact(cfg, probe_artifact(cfg, m->name, layer, kind), r.params,
                     {{"model", m->name}, {"layer", layer}, {"kind", to_string(kind)}, {"job", job_of[kind]}, {"history", r.history}});
      log("train " + m->name + " layer " + std::to_string(layer) + " " + to_string(kind) + ": best dev loss " +
          detail::format_value(r.history.best_dev_loss) + " (" + r.history.stop_reason + ")");
    }
  });
}

// Random search per (model, layer, kind): every trial leaves a history file
// under {output}/search/{model}/{kind}/layer{L}/trial{t}.json and the best
// trial becomes that layer's probe artifact.
inline void cmd_search(const ExperimentConfig& cfg, const LogSink& sink = {}) {
  auto log = detail::locked(sink);
  auto models = probed_models(cfg);
  std::vector<ModelSpec> specs;
  for (const auto* m : models) specs.push_back(*m);
  auto ws = load_workspace(cfg, {"train", "dev"}, specs);

  nlohmann::json space{{"lr_min", cfg.space.lr_min}, {"lr_max", cfg.space.lr_max},
                       {"rank_min", cfg.space.rank_min}, {"rank_max", cfg.space.rank_max},
                       {"dropout_min", cfg.space.dropout_min}, {"dropout_max", cfg.space.dropout_max}};
  std::vector<std::pair<const ModelSpec*, int>> jobs;
  for (const auto* m : models)
    for (int layer : m->layers) jobs.emplace_back(m, layer);

  detail::run_jobs(jobs.size(), cfg.workers, [&](std::size_t j) {
    const auto& [m, layer] = jobs[j];
    std::optional<SplitData> train, dev;
    for (auto kind : cfg.kinds) {
      const auto seed = detail::derive_seed(cfg.seed, "search/" + m->name + "/" + to_string(kind));
      nlohmann::json job{{"source", "search"}, {"trials", cfg.trials}, {"space", space}, {"base", cfg.train}, {"seed", seed}};
      auto artifact = probe_artifact(cfg, m->name, layer, kind);
      const auto trial_dir = cfg.output_dir / "search" / m->name / to_string(kind) / ("layer" + std::to_string(layer));
      auto trial_file = [&](int t) {
        char name[32];
        std::snprintf(name, sizeof name, "trial%02d.json", t);
        return trial_dir / name;
      };
      bool trials_done = true;
      for (int t = 0; t < cfg.trials; ++t) trials_done = trials_done && std::filesystem::exists(trial_file(t));
      if (artifact_state(artifact, job) == ArtifactState::complete && trials_done) {
        log("search " + m->name + " layer " + std::to_string(layer) + " " + to_string(kind) + ": up to date, skipped");
        continue;
      }
      if (!train) {
        train = load_split(ws, *m, layer, "train", log);
        dev = load_split(ws, *m, layer, "dev", log);
      }
      auto result = random_search(
          kind, [&](int) { return LayerData{train->examples, dev->examples}; }, {layer}, cfg.space, cfg.train, cfg.trials, seed,
          [&](const TrialRecord& rec) {
            nlohmann::json h{{"model", m->name}, {"layer", rec.layer}, {"kind", to_string(kind)}, {"trial", rec.trial},
                             {"config", rec.config}, {"history", rec.history}, {"config_hash", cfg.hash}, {"seed", cfg.seed}};
            detail::write_file(trial_file(rec.trial), h.dump(2) + "\n");
          });
      int best_trial = 0;
      for (const auto& rec : result.trials)
        if (rec.config == result.best_config) best_trial = rec.trial;
      write_artifact(cfg, artifact, result.best_params,
                     {{"model", m->name}, {"layer", layer}, {"kind", to_string(kind)}, {"job", job},
                      {"trial", best_trial}, {"config", result.best_config}, {"history", result.best_history}});
      log("search " + m->name + " layer " + std::to_string(layer) + " " + to_string(kind) + ": best trial " + std::to_string(best_trial) +
          ", dev loss " + detail::format_value(result.best_history.best_dev_loss));
    }
  });
}

// ---------------------------------------------------------------------------
// Evaluation

struct ResultRow {
  std::string model;
  std::string layer;  // "-" for baselines
  std::string probe;  // "-" for baselines
  std::string dataset;
  std::string metric;
  double value = 0.0;
  std::size_t n_sentences = 0;
};

inline constexpr std::string_view results_header = "model,layer,probe,dataset,metric,value,n_sentences";

inline std::string write_results_csv(const std::string& provenance, const std::vector<ResultRow>& rows) {
  std::string out = provenance + "\n" + std::string(results_header) + "\n";
  for (const auto& r : rows)
    out += r.model + "," + r.layer + "," + r.probe + "," + r.dataset + "," + r.metric + "," + detail::format_value(r.value) + "," +
           std::to_string(r.n_sentences) + "\n";
  return out;
}

struct ResultsFile {
  std::string provenance;
  std::vector<ResultRow> rows;
};

inline ResultsFile parse_results_csv(std::string_view text) {
  ResultsFile out;
  bool header = false;
  std::size_t line_no = 0;
  for (auto line : detail::split(text, '\n')) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;
    if (line.front() == '#') {
      if (out.provenance.empty()) out.provenance = std::string(line);
      continue;
    }
    if (!header) {
      if (line != results_header) throw ParseError("results line " + std::to_string(line_no) + ": expected header " + std::string(results_header));
      header = true;
      continue;
    }
    auto f = detail::split(line, ',');
    if (f.size() != 7) throw ParseError("results line " + std::to_string(line_no) + ": expected 7 fields");
    ResultRow r{std::string(f[0]), std::string(f[1]), std::string(f[2]), std::string(f[3]), std::string(f[4]), 0.0, 0};
    char* end = nullptr;
    std::string v(f[5]);
    r.value = std::strtod(v.c_str(), &end);
    auto n = detail::to_int(f[6]);
    if (end != v.c_str() + v.size() || !n || *n < 0) throw ParseError("results line " + std::to_string(line_no) + ": bad value or count");
    r.n_sentences = static_cast<std::size_t>(*n);
    out.rows.push_back(std::move(r));
  }
  if (!header) throw ParseError("results: missing header line");
  return out;
}

struct Scores {
  UuasResult uuas;
  DsprResult dspr;
};

// Scores predicted trees and distances against the gold sentences. With
// exclude_punct both sides are restricted to non-PUNCT words (trees become
// forests; distances keep their full-tree values).
inline Scores score_predictions(const std::vector<Sentence>& gold, const std::vector<UndirectedTree>& trees,
                                const std::vector<Eigen::MatrixXd>& distances, const EvalOptions& opt) {
  std::vector<UndirectedTree> pred_t, gold_t;
  std::vector<Eigen::MatrixXd> pred_d;
  std::vector<DistanceMatrix> gold_d;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    auto g = gold_tree(gold[i]);
    auto gd = distance_matrix(g);
    if (!opt.exclude_punct) {
      pred_t.push_back(trees[i]);
      gold_t.push_back(std::move(g));
      pred_d.push_back(distances[i]);
      gold_d.push_back(std::move(gd));
      continue;
    }
    std::vector<int> keep;
    for (const auto& t : gold[i].tokens)
      if (t.upos != "PUNCT") keep.push_back(t.index);
    pred_t.push_back(restrict_edges(trees[i], keep));
    gold_t.push_back(restrict_edges(g, keep));
    DistanceMatrix sub(keep.size());
    Eigen::MatrixXd psub(static_cast<Eigen::Index>(keep.size()), static_cast<Eigen::Index>(keep.size()));
    for (std::size_t a = 0; a < keep.size(); ++a)
      for (std::size_t b = 0; b < keep.size(); ++b) {
        auto ia = static_cast<std::size_t>(keep[a] - 1), ib = static_cast<std::size_t>(keep[b] - 1);
        sub(a, b) = gd(ia, ib);
        psub(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) = distances[i](static_cast<Eigen::Index>(ia), static_cast<Eigen::Index>(ib));
      }
    pred_d.push_back(std::move(psub));
    gold_d.push_back(std::move(sub));
  }
  return {uuas(pred_t, gold_t, opt.uuas_averaging), dspr(pred_d, gold_d, {opt.dspr_aggregation, opt.dspr_length_filter})};
}

namespace detail {

inline void add_scores(std::vector<ResultRow>& rows, const std::string& model, const std::string& layer, const std::string& probe,
                       const std::string& dataset, const Scores& s) {
  rows.push_back({model, layer, probe, dataset, "uuas", s.uuas.value, s.uuas.sentences});
  rows.push_back({model, layer, probe, dataset, "dspr", s.dspr.value, s.dspr.sentences});
}

inline std::string dataset_name(const std::string& split) { return split == "test" ? "normal" : split; }

inline std::string escape_xml(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

inline std::string fmt2(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

}  // namespace detail

// Bar chart for one metric. Each model gets a solid bar (normal test set)
// and a hatched bar (jabberwocky); probed models show the layer that scores
// best on the normal set, with a white inset bar for layer 0. UUAS charts
// use perceptron probes and DSpr charts structural probes.
inline std::string render_chart(const ResultsFile& results, const std::string& metric) {
  const std::string probe = metric == "uuas" ? "perceptron" : "structural";
  struct Bar {
    std::string model;
    std::string layer;
    std::optional<double> normal, jabber, normal0, jabber0;
  };
  std::vector<Bar> bars;
  auto find = [&](const std::string& model, const std::string& layer, const std::string& p, const std::string& dataset) -> std::optional<double> {
    for (const auto& r : results.rows)
      if (r.model == model && r.layer == layer && r.probe == p && r.dataset == dataset && r.metric == metric) return r.value;
    return std::nullopt;
  };
  for (const auto& r : results.rows) {
    if (r.metric != metric || r.dataset != "normal") continue;
    if (r.probe != "-" && r.probe != probe) continue;
    auto it = std::find_if(bars.begin(), bars.end(), [&](const Bar& b) { return b.model == r.model; });
    if (it == bars.end()) {
      bars.push_back({r.model, r.layer, r.value, std::nullopt, std::nullopt, std::nullopt});
      continue;
    }
    if (r.value > *it->normal) it->layer = r.layer, it->normal = r.value;
  }
  for (auto& b : bars) {
    const std::string p = b.layer == "-" ? "-" : probe;
    b.jabber = find(b.model, b.layer, p, "jabberwocky");
    if (b.layer != "-") {
      b.normal0 = find(b.model, "0", probe, "normal");
      b.jabber0 = find(b.model, "0", probe, "jabberwocky");
    }
  }

  const int left = 56, top = 40, plot_h = 240, group_w = 120, bar_w = 40;
  const int width = std::max(320, left + 20 + group_w * static_cast<int>(bars.size()));
  const int height = top + plot_h + 70;
  auto y = [&](double v) { return top + plot_h - static_cast<int>(std::lround(std::clamp(v, 0.0, 1.0) * plot_h)); };
  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  svg << "<!-- " << detail::escape_xml(results.provenance.empty() ? "jabberprobe" : results.provenance.substr(2)) << " -->\n";
  svg << "<defs><pattern id=\"hatch\" width=\"6\" height=\"6\" patternUnits=\"userSpaceOnUse\" patternTransform=\"rotate(45)\">"
         "<rect width=\"6\" height=\"6\" fill=\"#9ecae1\"/><line x1=\"0\" y1=\"0\" x2=\"0\" y2=\"6\" stroke=\"#3182bd\" stroke-width=\"2\"/>"
         "</pattern></defs>\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg << "<text x=\"" << left << "\" y=\"20\" font-size=\"14\">" << (metric == "uuas" ? "UUAS" : "DSpr") << " (" << probe << " probes)</text>\n";
  for (int k = 0; k <= 4; ++k) {
    double v = k / 4.0;
    svg << "<line x1=\"" << left << "\" y1=\"" << y(v) << "\" x2=\"" << width - 20 << "\" y2=\"" << y(v) << "\" stroke=\"#ddd\"/>";
    svg << "<text x=\"" << left - 6 << "\" y=\"" << y(v) + 4 << "\" text-anchor=\"end\">" << detail::fmt2(v) << "</text>\n";
  }
  svg << "<line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left << "\" y2=\"" << top + plot_h << "\" stroke=\"black\"/>\n";
  for (std::size_t i = 0; i < bars.size(); ++i) {
    const auto& b = bars[i];
    const int gx = left + 10 + group_w * static_cast<int>(i);
    auto bar = [&](int x, std::optional<double> v, std::optional<double> v0, const char* fill) {
      if (!v) return;
      svg << "<rect x=\"" << x << "\" y=\"" << y(*v) << "\" width=\"" << bar_w << "\" height=\"" << top + plot_h - y(*v) << "\" fill=\"" << fill
          << "\" stroke=\"#3182bd\"/>";
      if (v0)
        svg << "<rect x=\"" << x + bar_w / 4 << "\" y=\"" << y(*v0) << "\" width=\"" << bar_w / 2 << "\" height=\"" << top + plot_h - y(*v0)
            << "\" fill=\"white\" stroke=\"#555\"/>";
      svg << "<text x=\"" << x + bar_w / 2 << "\" y=\"" << y(*v) - 4 << "\" text-anchor=\"middle\">" << detail::fmt2(*v) << "</text>\n";
    };
    bar(gx, b.normal, b.normal0, "#3182bd");
    bar(gx + bar_w + 4, b.jabber, b.jabber0, "url(#hatch)");
    std::string label = b.model + (b.layer == "-" ? "" : " (layer " + b.layer + ")");
    svg << "<text x=\"" << gx + bar_w + 2 << "\" y=\"" << top + plot_h + 16 << "\" text-anchor=\"middle\">" << detail::escape_xml(label) << "</text>\n";
  }
  const int ly = top + plot_h + 40;
  svg << "<rect x=\"" << left << "\" y=\"" << ly << "\" width=\"12\" height=\"12\" fill=\"#3182bd\"/><text x=\"" << left + 16 << "\" y=\"" << ly + 10
      << "\">normal</text>";
  svg << "<rect x=\"" << left + 80 << "\" y=\"" << ly << "\" width=\"12\" height=\"12\" fill=\"url(#hatch)\"/><text x=\"" << left + 96 << "\" y=\""
      << ly + 10 << "\">jabberwocky</text>";
  svg << "<rect x=\"" << left + 190 << "\" y=\"" << ly << "\" width=\"12\" height=\"12\" fill=\"white\" stroke=\"#555\"/><text x=\"" << left + 206
      << "\" y=\"" << ly + 10 << "\">layer 0</text>\n";
  svg << "</svg>\n";
  return svg.str();
}

inline void cmd_report(const std::filesystem::path& results_csv, const std::filesystem::path& out_dir, const LogSink& log = {}) {
  if (!std::filesystem::exists(results_csv)) throw ConfigError("results file not found: " + results_csv.string() + " (run eval first)");
  auto results = parse_results_csv(detail::read_file(results_csv));
  for (const char* metric : {"uuas", "dspr"}) {
    auto path = out_dir / (std::string(metric) + ".svg");
    detail::write_file(path, render_chart(results, metric));
    if (log) log("report: wrote " + path.string());
  }
}

// Scores every listed model on the normal test set and its Jabberwocky
// twin, writes {output}/results.csv and renders the charts. Probes are read
// from the artifacts cmd_train or cmd_search left behind; missing ones are
// reported and skipped.
inline std::vector<ResultRow> cmd_eval(const ExperimentConfig& cfg, const LogSink& sink = {}) {
  auto log = detail::locked(sink);
  std::vector<ResultRow> rows;
  if (!cfg.models.empty()) {
    bool majority = std::any_of(cfg.models.begin(), cfg.models.end(), [](const ModelSpec& m) { return m.type == ModelType::majority; });
    std::vector<std::string> splits{"test", "jabberwocky"};
    if (majority) splits.push_back("train");
    auto ws = load_workspace(cfg, splits, cfg.models);
    const std::vector<std::string> eval_splits{"test", "jabberwocky"};

    for (const auto& m : cfg.models) {
      if (m.is_baseline()) {
        std::optional<MajorityModel> fit;
        if (m.type == ModelType::majority) fit = majority_fit(ws.corpus("train"));
        for (const auto& split : eval_splits) {
          const auto& corpus = ws.corpus(split);
          std::vector<UndirectedTree> trees;
          std::vector<Eigen::MatrixXd> dists;
          for (const auto& s : corpus) {
            int n = static_cast<int>(s.size());
            trees.push_back(fit ? majority_predict(*fit, n) : path_tree(n));
            dists.push_back(to_real(distance_matrix(trees.back())));
          }
          detail::add_scores(rows, m.name, "-", "-", detail::dataset_name(split), score_predictions(corpus, trees, dists, cfg.eval));
        }
        continue;
      }
      std::vector<std::pair<int, ProbeKind>> jobs;
      for (int layer : m.layers)
        for (auto kind : cfg.kinds) jobs.emplace_back(layer, kind);
      std::vector<std::vector<ResultRow>> per_job(jobs.size());
      detail::run_jobs(jobs.size(), cfg.workers, [&](std::size_t j) {
        auto [layer, kind] = jobs[j];
        auto artifact = probe_artifact(cfg, m.name, layer, kind);
        if (!std::filesystem::exists(artifact.params) || !std::filesystem::exists(artifact.sidecar)) {
          log("eval " + m.name + " layer " + std::to_string(layer) + " " + to_string(kind) + ": no probe, skipped");
          return;
        }
        auto params = read_artifact(artifact);
        if (params.kind != kind) throw DataError(artifact.params.string() + ": holds a " + to_string(params.kind) + " probe");
        for (const auto& split : eval_splits) {
          auto data = load_split(ws, m, layer, split, log);
          std::vector<UndirectedTree> trees;
          std::vector<Eigen::MatrixXd> dists;
          for (const auto& ex : data.examples) {
            dists.push_back(predict_distances(params, ex.embeddings));
            trees.push_back(mst_prim(dists.back()));
          }
          detail::add_scores(per_job[j], m.name, std::to_string(layer), to_string(kind), detail::dataset_name(split),
                             score_predictions(data.sentences, trees, dists, cfg.eval));
        }
      });
      for (auto& part : per_job) rows.insert(rows.end(), part.begin(), part.end());
    }
  }
  const auto csv = cfg.output_dir / "results.csv";
  detail::write_file(csv, write_results_csv(cfg.provenance(), rows));
  log("eval: wrote " + std::to_string(rows.size()) + " rows to " + csv.string());
  cmd_report(csv, cfg.output_dir, log);
  return rows;
}

}  // namespace jabberprobe
