#pragma once

#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "jabberprobe/detail/binary_io.hpp"
#include "jabberprobe/detail/file_io.hpp"
#include "jabberprobe/error.hpp"
#include "jabberprobe/treebank.hpp"

namespace jabberprobe {

// Row-major, one row per token, matching the on-disk layout.
using EmbeddingMatrix = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Per-sentence token matrices for one (model, layer). Sentences keep their
// insertion order, which is also the file order.
class EmbeddingSet {
public:
  std::string model_id;
  int layer = 0;
  std::size_t dim = 0;
  std::string split;

  EmbeddingSet() = default;
  EmbeddingSet(std::string model, int layer_, std::size_t dim_, std::string split_ = {})
      : model_id(std::move(model)), layer(layer_), dim(dim_), split(std::move(split_)) {}

  void add(std::string sent_id, EmbeddingMatrix m) {
    if (static_cast<std::size_t>(m.cols()) != dim)
      throw DataError("embedding set " + model_id + ": sentence " + sent_id + " has " + std::to_string(m.cols()) +
                      " columns, expected " + std::to_string(dim));
    if (index_.count(sent_id)) throw DataError("embedding set " + model_id + ": duplicate sentence " + sent_id);
    index_.emplace(sent_id, sentences_.size());
    sentences_.emplace_back(std::move(sent_id), std::move(m));
  }

  const EmbeddingMatrix* find(const std::string& sent_id) const {
    auto it = index_.find(sent_id);
    return it == index_.end() ? nullptr : &sentences_[it->second].second;
  }

  const auto& sentences() const { return sentences_; }
  std::size_t size() const { return sentences_.size(); }

private:
  std::vector<std::pair<std::string, EmbeddingMatrix>> sentences_;
  std::unordered_map<std::string, std::size_t> index_;
};

// Bitwise comparison (distinguishes -0.0 from 0.0).
inline bool identical(const EmbeddingSet& a, const EmbeddingSet& b) {
  if (a.model_id != b.model_id || a.layer != b.layer || a.dim != b.dim || a.split != b.split || a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const auto& [ida, ma] = a.sentences()[i];
    const auto& [idb, mb] = b.sentences()[i];
    if (ida != idb || ma.rows() != mb.rows() || ma.cols() != mb.cols()) return false;
    if (ma.size() && std::memcmp(ma.data(), mb.data(), sizeof(float) * static_cast<std::size_t>(ma.size())) != 0) return false;
  }
  return true;
}

inline constexpr std::string_view jemb_magic = "JEMB";
inline constexpr std::uint32_t jemb_version = 1;

// JEMB layout (all integers little-endian):
//   "JEMB" | u32 version | u32 metadata length | metadata JSON
//   | u32 sentence count | per sentence: u16 id length, id, u32 n_tokens,
//   n_tokens*dim f32 row-major
inline std::string serialize_embeddings(const EmbeddingSet& set) {
  if (set.dim < 1) throw DataError("embedding set " + set.model_id + ": dim must be >= 1");
  detail::ByteWriter w;
  w.bytes(jemb_magic);
  w.u32(jemb_version);
  nlohmann::json meta{{"model", set.model_id}, {"layer", set.layer}, {"dim", set.dim}, {"split", set.split}};
  auto meta_text = meta.dump();
  w.u32(static_cast<std::uint32_t>(meta_text.size()));
  w.bytes(meta_text);
  w.u32(static_cast<std::uint32_t>(set.size()));
  for (const auto& [id, m] : set.sentences()) {
    if (id.size() > 0xffff) throw DataError("sentence id too long for JEMB: " + id.substr(0, 32));
    w.u16(static_cast<std::uint16_t>(id.size()));
    w.bytes(id);
    w.u32(static_cast<std::uint32_t>(m.rows()));
    for (Eigen::Index i = 0; i < m.size(); ++i) w.f32(m.data()[i]);
  }
  return w.release();
}

inline EmbeddingSet deserialize_embeddings(std::string_view bytes) {
  detail::ByteReader r(bytes);
  if (bytes.size() < 4 || bytes.substr(0, 4) != jemb_magic) throw FormatError("bad magic, expected JEMB", 0);
  r.bytes(4, "magic");
  auto version_at = r.offset();
  auto version = r.u32("version");
  if (version != jemb_version) throw FormatError("unsupported JEMB version " + std::to_string(version), version_at);
  auto meta_len = r.u32("metadata length");
  auto meta_at = r.offset();
  auto meta_text = r.bytes(meta_len, "metadata");
  EmbeddingSet set;
  try {
    auto meta = nlohmann::json::parse(meta_text);
    set.model_id = meta.at("model").get<std::string>();
    set.layer = meta.at("layer").get<int>();
    set.dim = meta.at("dim").get<std::size_t>();
    set.split = meta.value("split", std::string());
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("bad JEMB metadata: ") + e.what(), meta_at);
  }
  if (set.dim < 1) throw FormatError("dim must be >= 1", meta_at);
  auto count = r.u32("sentence count");
  for (std::uint32_t s = 0; s < count; ++s) {
    auto id_len = r.u16("sentence id length");
    std::string id(r.bytes(id_len, "sentence id"));
    auto n = r.u32("token count");
    auto payload_at = r.offset();
    if (static_cast<std::uint64_t>(n) * set.dim * 4 > r.remaining())
      throw FormatError("truncated record: sentence " + id + " needs " + std::to_string(static_cast<std::uint64_t>(n) * set.dim * 4) + " payload bytes", payload_at);
    EmbeddingMatrix m(n, static_cast<Eigen::Index>(set.dim));
    for (Eigen::Index i = 0; i < m.size(); ++i) {
      auto at = r.offset();
      float v = r.f32("embedding value");
      if (!std::isfinite(v)) throw FormatError("non-finite value in sentence " + id, at);
      m.data()[i] = v;
    }
    if (set.find(id)) throw FormatError("duplicate sentence id " + id, payload_at);
    set.add(std::move(id), std::move(m));
  }
  if (!r.at_end()) throw FormatError("trailing bytes after last sentence", r.offset());
  return set;
}

inline void write_embedding_file(const EmbeddingSet& set, const std::filesystem::path& path) {
  detail::write_file(path, serialize_embeddings(set));
}

inline EmbeddingSet read_embedding_file(const std::filesystem::path& path) {
  auto bytes = detail::read_file(path);
  try {
    return deserialize_embeddings(bytes);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.reason(), e.offset());
  }
}

// ---------------------------------------------------------------------------
// Word vectors and positions (the Fast+Pos baseline)

struct WordVectors {
  std::size_t dim = 0;
  std::unordered_map<std::string, std::vector<float>> vectors;

  const std::vector<float>* find(const std::string& w) const {
    auto it = vectors.find(w);
    return it == vectors.end() ? nullptr : &it->second;
  }
};

// Text format: a "count dim" header line, then "word v1 ... vdim" per line.
// When `vocabulary` is given, only those words are kept.
inline WordVectors parse_word_vectors(std::string_view text, const std::unordered_set<std::string>* vocabulary = nullptr) {
  WordVectors wv;
  std::size_t line_no = 0;
  for (auto line : detail::split(text, '\n')) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    while (!line.empty() && line.back() == ' ') line.remove_suffix(1);
    if (line.empty()) continue;
    auto fields = detail::split(line, ' ');
    if (line_no == 1) {
      auto count = detail::to_int(fields[0]);
      auto dim = fields.size() == 2 ? detail::to_int(fields[1]) : std::nullopt;
      if (!count || !dim || *dim < 1) throw ParseError("word vectors: first line must be '<count> <dim>'");
      wv.dim = static_cast<std::size_t>(*dim);
      continue;
    }
    if (fields.size() != wv.dim + 1)
      throw ParseError("word vectors line " + std::to_string(line_no) + ": expected " + std::to_string(wv.dim) + " values");
    std::string word(fields[0]);
    if (vocabulary && !vocabulary->count(word)) continue;
    std::vector<float> v(wv.dim);
    for (std::size_t i = 0; i < wv.dim; ++i) {
      std::string field(fields[i + 1]);
      char* end = nullptr;
      v[i] = std::strtof(field.c_str(), &end);
      if (end != field.c_str() + field.size() || !std::isfinite(v[i]))
        throw ParseError("word vectors line " + std::to_string(line_no) + ": bad value '" + field + "'");
    }
    wv.vectors.emplace(std::move(word), std::move(v));
  }
  return wv;
}

inline WordVectors load_word_vectors(const std::filesystem::path& path, const std::unordered_set<std::string>* vocabulary = nullptr) {
  return parse_word_vectors(detail::read_file(path), vocabulary);
}

struct PositionTable {
  std::size_t max_positions = 0;
  std::size_t dim_pos = 0;
  EmbeddingMatrix rows;
};

// A position table travels as a JEMB file holding one pseudo-sentence.
inline PositionTable position_table_from(const EmbeddingSet& set) {
  if (set.size() != 1) throw DataError("position table must hold exactly one pseudo-sentence, found " + std::to_string(set.size()));
  const auto& m = set.sentences().front().second;
  return PositionTable{static_cast<std::size_t>(m.rows()), set.dim, m};
}

inline EmbeddingSet to_embedding_set(const PositionTable& table, const std::string& model_id = "positions") {
  EmbeddingSet set(model_id, 0, table.dim_pos, "positions");
  set.add("positions", table.rows);
  return set;
}

struct FastPosOptions {
  std::size_t word_dim = 300;
  std::size_t pos_dim = 768;
  // Row of the position table used by the first word. Row 0 belongs to the
  // leading special token of the checkpoint the table came from.
  std::size_t position_offset = 1;
  std::string model_id = "fastpos";
  std::string split;
};

struct FastPosResult {
  EmbeddingSet set;
  std::size_t oov_tokens = 0;
  std::vector<std::string> log;
};

// Word vector (exact form, then lowercased, then zeros) followed by the
// position embedding of the token's slot.
inline FastPosResult compose_fast_pos(const std::vector<Sentence>& corpus, const WordVectors& words, const PositionTable& pos,
                                      const FastPosOptions& opt = {}) {
  if (words.dim != opt.word_dim)
    throw DataError("fast+pos: word vectors have dim " + std::to_string(words.dim) + ", expected " + std::to_string(opt.word_dim));
  if (pos.dim_pos != opt.pos_dim)
    throw DataError("fast+pos: position table has dim " + std::to_string(pos.dim_pos) + ", expected " + std::to_string(opt.pos_dim));
  const std::size_t dim = opt.word_dim + opt.pos_dim;
  FastPosResult out{EmbeddingSet(opt.model_id, 0, dim, opt.split), 0, {}};
  for (const auto& s : corpus) {
    const std::size_t n = s.size();
    if (n + opt.position_offset > pos.max_positions) {
      out.log.push_back("skipped " + s.sent_id + ": " + std::to_string(n) + " tokens exceed the position table");
      continue;
    }
    EmbeddingMatrix m = EmbeddingMatrix::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(dim));
    for (std::size_t i = 0; i < n; ++i) {
      const auto& form = s.tokens[i].form;
      const auto* v = words.find(form);
      if (!v) {
        std::string lower = form;
        for (auto& c : lower) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
        v = words.find(lower);
      }
      const auto row = static_cast<Eigen::Index>(i);
      if (v) {
        for (std::size_t k = 0; k < opt.word_dim; ++k) m(row, static_cast<Eigen::Index>(k)) = (*v)[k];
      } else {
        ++out.oov_tokens;
      }
      m.row(row).tail(static_cast<Eigen::Index>(opt.pos_dim)) = pos.rows.row(static_cast<Eigen::Index>(i + opt.position_offset));
    }
    out.set.add(s.sent_id, std::move(m));
  }
  if (out.oov_tokens) out.log.push_back(std::to_string(out.oov_tokens) + " out-of-vocabulary tokens mapped to zero word vectors");
  return out;
}

// Each word takes the vector of its first subword.
inline EmbeddingMatrix token_vectors_from_subwords(const EmbeddingMatrix& raw, const AlignmentRecord& a) {
  if (a.status != AlignmentStatus::ok) throw AlignmentError("alignment " + a.sent_id + ": sentence was removed");
  EmbeddingMatrix out(static_cast<Eigen::Index>(a.token_map.size()), raw.cols());
  for (std::size_t t = 0; t < a.token_map.size(); ++t) {
    auto [start, end] = a.token_map[t];
    if (start >= end || end > static_cast<std::size_t>(raw.rows()))
      throw AlignmentError("alignment " + a.sent_id + ": span [" + std::to_string(start) + "," + std::to_string(end) + ") out of bounds for " +
                           std::to_string(raw.rows()) + " subwords");
    out.row(static_cast<Eigen::Index>(t)) = raw.row(static_cast<Eigen::Index>(start));
  }
  return out;
}

}  // namespace jabberprobe
