#pragma once

#include <algorithm>
#include <charconv>
#include <cstddef>
#include <deque>
#include <map>
#include <optional>
#include <queue>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "jabberprobe/error.hpp"
#include "jabberprobe/tree.hpp"

namespace jabberprobe {

using Feature = std::pair<std::string, std::string>;

// One syntactic word of a CoNLL-U sentence.
struct Token {
  int index = 0;  // 1-based
  std::string form;
  std::string lemma;
  std::string upos;
  std::string xpos;
  std::vector<Feature> feats;  // in file order, keys unique
  int head = 0;                // 0 = root
  std::string deprel;
  std::string deps;            // passed through untouched
  std::vector<std::string> misc;

  std::optional<std::string> feat(std::string_view key) const {
    for (const auto& [k, v] : feats)
      if (k == key) return v;
    return std::nullopt;
  }

  std::optional<std::string> misc_value(std::string_view key) const;
  void set_misc(std::string_view key, std::string_view value);
  bool erase_misc(std::string_view key);

  bool operator==(const Token&) const = default;
};

struct Sentence {
  std::string sent_id;
  std::vector<std::string> comments;  // full lines including the leading '#'
  std::vector<Token> tokens;

  std::size_t size() const { return tokens.size(); }
  bool operator==(const Sentence&) const = default;
};

// MISC values may not contain '|' or whitespace; originals stashed there are
// percent-escaped.
inline std::string escape_misc_value(std::string_view s) {
  static constexpr char hex[] = "0123456789ABCDEF";
  std::string out;
  for (unsigned char c : s) {
    if (c == '%' || c == '|' || c == '=' || c <= ' ') {
      out += '%';
      out += hex[c >> 4];
      out += hex[c & 0xf];
    } else {
      out += static_cast<char>(c);
    }
  }
  return out;
}

inline std::string unescape_misc_value(std::string_view s) {
  auto nibble = [](char c) -> int {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    return -1;
  };
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '%' && i + 2 < s.size()) {
      int hi = nibble(s[i + 1]), lo = nibble(s[i + 2]);
      if (hi >= 0 && lo >= 0) {
        out += static_cast<char>(hi * 16 + lo);
        i += 2;
        continue;
      }
    }
    out += s[i];
  }
  return out;
}

inline std::optional<std::string> Token::misc_value(std::string_view key) const {
  for (const auto& item : misc) {
    auto eq = item.find('=');
    if (eq != std::string::npos && std::string_view(item).substr(0, eq) == key) return item.substr(eq + 1);
  }
  return std::nullopt;
}

inline void Token::set_misc(std::string_view key, std::string_view value) {
  std::string entry = std::string(key) + "=" + std::string(value);
  for (auto& item : misc) {
    auto eq = item.find('=');
    if (eq != std::string::npos && std::string_view(item).substr(0, eq) == key) {
      item = std::move(entry);
      return;
    }
  }
  misc.push_back(std::move(entry));
}

inline bool Token::erase_misc(std::string_view key) {
  auto it = std::find_if(misc.begin(), misc.end(), [&](const std::string& item) {
    auto eq = item.find('=');
    return eq != std::string::npos && std::string_view(item).substr(0, eq) == key;
  });
  if (it == misc.end()) return false;
  misc.erase(it);
  return true;
}

namespace detail {

inline std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    auto pos = s.find(sep, start);
    if (pos == std::string_view::npos) {
      out.push_back(s.substr(start));
      return out;
    }
    out.push_back(s.substr(start, pos - start));
    start = pos + 1;
  }
}

inline std::optional<int> to_int(std::string_view s) {
  int v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size()) return std::nullopt;
  return v;
}

inline std::string or_underscore(const std::string& s) { return s.empty() ? "_" : s; }

}  // namespace detail

// Verifies the single-root and acyclic-heads invariants. `where` prefixes
// error messages.
inline void validate_sentence(const Sentence& s, const std::string& where = {}) {
  const int n = static_cast<int>(s.size());
  auto fail = [&](const std::string& msg) {
    throw ParseError((where.empty() ? "sentence " + s.sent_id : where) + ": " + msg);
  };
  int roots = 0;
  for (int i = 0; i < n; ++i) {
    const auto& t = s.tokens[i];
    if (t.index != i + 1) fail("token indices are not 1..n");
    if (t.head < 0 || t.head > n) fail("head " + std::to_string(t.head) + " out of range at token " + std::to_string(t.index));
    if (t.head == t.index) fail("token " + std::to_string(t.index) + " is its own head");
    if (t.head == 0) ++roots;
  }
  if (n > 0 && roots != 1) fail("expected exactly one root, found " + std::to_string(roots));
  // every token must reach the root within n steps
  std::vector<int> state(static_cast<std::size_t>(n) + 1, 0);  // 0 unvisited, 1 on stack, 2 done
  for (int start = 1; start <= n; ++start) {
    std::vector<int> path;
    int v = start;
    while (v != 0 && state[v] == 0) {
      state[v] = 1;
      path.push_back(v);
      v = s.tokens[v - 1].head;
    }
    if (v != 0 && state[v] == 1) fail("cyclic head links through token " + std::to_string(v));
    for (int p : path) state[p] = 2;
  }
}

// Parses a CoNLL-U document. Multiword-token ranges and empty nodes are
// skipped; comment lines are kept on the sentence they precede.
inline std::vector<Sentence> parse_conllu(std::string_view text) {
  std::vector<Sentence> out;
  Sentence cur;
  std::size_t line_no = 0;
  std::size_t sentence_start = 0;
  bool open = false;

  auto flush = [&] {
    if (!open) return;
    if (cur.sent_id.empty()) cur.sent_id = "sent-" + std::to_string(out.size() + 1);
    if (!cur.tokens.empty())
      validate_sentence(cur, "sentence " + cur.sent_id + " (line " + std::to_string(sentence_start) + ")");
    out.push_back(std::move(cur));
    cur = Sentence{};
    open = false;
  };

  std::size_t pos = 0;
  while (pos <= text.size()) {
    auto nl = text.find('\n', pos);
    std::string_view line = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);

    if (line.empty()) {
      flush();
      continue;
    }
    if (!open) {
      open = true;
      sentence_start = line_no;
    }
    auto where = [&] {
      return "sentence " + (cur.sent_id.empty() ? "sent-" + std::to_string(out.size() + 1) : cur.sent_id) +
             ", line " + std::to_string(line_no);
    };
    if (line.front() == '#') {
      cur.comments.emplace_back(line);
      constexpr std::string_view key = "sent_id";
      auto body = line.substr(1);
      while (!body.empty() && body.front() == ' ') body.remove_prefix(1);
      if (body.substr(0, key.size()) == key) {
        auto rest = body.substr(key.size());
        while (!rest.empty() && rest.front() == ' ') rest.remove_prefix(1);
        if (!rest.empty() && rest.front() == '=') {
          rest.remove_prefix(1);
          while (!rest.empty() && rest.front() == ' ') rest.remove_prefix(1);
          cur.sent_id = std::string(rest);
        }
      }
      continue;
    }
    auto cols = detail::split(line, '\t');
    if (cols.size() != 10)
      throw ParseError(where() + ": expected 10 tab-separated columns, found " + std::to_string(cols.size()));
    if (cols[0].find('-') != std::string_view::npos || cols[0].find('.') != std::string_view::npos) continue;

    Token t;
    auto idx = detail::to_int(cols[0]);
    if (!idx) throw ParseError(where() + ": non-integer token id '" + std::string(cols[0]) + "'");
    t.index = *idx;
    t.form = std::string(cols[1]);
    t.lemma = std::string(cols[2]);
    t.upos = std::string(cols[3]);
    t.xpos = cols[4] == "_" ? std::string() : std::string(cols[4]);
    if (cols[5] != "_") {
      for (auto item : detail::split(cols[5], '|')) {
        auto eq = item.find('=');
        if (eq == std::string_view::npos || eq == 0) throw ParseError(where() + ": malformed feature '" + std::string(item) + "'");
        Feature f{std::string(item.substr(0, eq)), std::string(item.substr(eq + 1))};
        if (t.feat(f.first)) throw ParseError(where() + ": duplicate feature key '" + f.first + "'");
        t.feats.push_back(std::move(f));
      }
    }
    auto head = detail::to_int(cols[6]);
    if (!head) throw ParseError(where() + ": non-integer head '" + std::string(cols[6]) + "'");
    t.head = *head;
    t.deprel = std::string(cols[7]);
    t.deps = std::string(cols[8]);
    if (cols[9] != "_")
      for (auto item : detail::split(cols[9], '|')) t.misc.emplace_back(item);
    if (t.head == t.index) throw ParseError(where() + ": token " + std::to_string(t.index) + " is its own head");
    cur.tokens.push_back(std::move(t));
  }
  flush();
  return out;
}

inline std::string write_conllu(const Sentence& s) {
  std::string out;
  for (const auto& c : s.comments) out += c + "\n";
  for (const auto& t : s.tokens) {
    std::string feats;
    for (const auto& [k, v] : t.feats) feats += (feats.empty() ? "" : "|") + k + "=" + v;
    std::string misc;
    for (const auto& m : t.misc) misc += (misc.empty() ? "" : "|") + m;
    out += std::to_string(t.index) + '\t' + t.form + '\t' + t.lemma + '\t' + t.upos + '\t' +
           detail::or_underscore(t.xpos) + '\t' + detail::or_underscore(feats) + '\t' + std::to_string(t.head) +
           '\t' + t.deprel + '\t' + detail::or_underscore(t.deps) + '\t' + detail::or_underscore(misc) + '\n';
  }
  out += '\n';
  return out;
}

inline std::string write_conllu(const std::vector<Sentence>& corpus) {
  std::string out;
  for (const auto& s : corpus) out += write_conllu(s);
  return out;
}

// Gold tree with dependency direction dropped.
inline UndirectedTree gold_tree(const Sentence& s) {
  std::vector<Edge> edges;
  for (const auto& t : s.tokens)
    if (t.head != 0) edges.push_back(make_edge(t.index, t.head));
  return make_tree(static_cast<int>(s.size()), std::move(edges));
}

// Pairwise path lengths in a tree, indexed 0..n-1.
class DistanceMatrix {
public:
  DistanceMatrix() = default;
  explicit DistanceMatrix(std::size_t n) : n_(n), d_(n * n, 0) {}

  std::size_t size() const { return n_; }
  int operator()(std::size_t i, std::size_t j) const { return d_[i * n_ + j]; }
  int& operator()(std::size_t i, std::size_t j) { return d_[i * n_ + j]; }

  bool operator==(const DistanceMatrix&) const = default;

private:
  std::size_t n_ = 0;
  std::vector<int> d_;
};

// Breadth-first traversal from every node.
inline DistanceMatrix distance_matrix(const UndirectedTree& tree) {
  const auto n = static_cast<std::size_t>(tree.n);
  auto adj = adjacency(tree);
  DistanceMatrix dm(n);
  std::vector<int> dist(n);
  std::queue<int> q;
  for (std::size_t src = 0; src < n; ++src) {
    std::fill(dist.begin(), dist.end(), -1);
    dist[src] = 0;
    q.push(static_cast<int>(src));
    while (!q.empty()) {
      int v = q.front();
      q.pop();
      for (int w : adj[v])
        if (dist[w] < 0) {
          dist[w] = dist[v] + 1;
          q.push(w);
        }
    }
    for (std::size_t j = 0; j < n; ++j) dm(src, j) = dist[j];
  }
  return dm;
}

inline DistanceMatrix distance_matrix(const Sentence& s) { return distance_matrix(gold_tree(s)); }

// ---------------------------------------------------------------------------
// Subword alignment

enum class AlignmentStatus { ok, removed };

struct AlignmentRecord {
  std::string sent_id;
  AlignmentStatus status = AlignmentStatus::ok;
  std::vector<std::pair<std::size_t, std::size_t>> token_map;  // [start, end) per final token
  std::vector<std::vector<int>> merges;                         // 1-based UD token ids
  std::string reason;                                           // why a sentence was removed

  bool operator==(const AlignmentRecord&) const = default;
};

inline void to_json(nlohmann::json& j, const AlignmentRecord& a) {
  j = nlohmann::json{{"sent_id", a.sent_id},
                     {"status", a.status == AlignmentStatus::ok ? "ok" : "removed"},
                     {"token_map", nlohmann::json::array()},
                     {"merges", a.merges}};
  for (auto [s, e] : a.token_map) j["token_map"].push_back({s, e});
  if (!a.reason.empty()) j["reason"] = a.reason;
}

inline void from_json(const nlohmann::json& j, AlignmentRecord& a) {
  a.sent_id = j.at("sent_id").get<std::string>();
  auto status = j.at("status").get<std::string>();
  if (status == "ok")
    a.status = AlignmentStatus::ok;
  else if (status == "removed")
    a.status = AlignmentStatus::removed;
  else
    throw AlignmentError("alignment " + a.sent_id + ": unknown status '" + status + "'");
  a.token_map.clear();
  for (const auto& span : j.value("token_map", nlohmann::json::array())) {
    if (!span.is_array() || span.size() != 2) throw AlignmentError("alignment " + a.sent_id + ": token_map spans must be [start, end)");
    a.token_map.emplace_back(span[0].get<std::size_t>(), span[1].get<std::size_t>());
  }
  a.merges = j.value("merges", std::vector<std::vector<int>>{});
  a.reason = j.value("reason", std::string());
}

// One JSON object per line; blank lines ignored.
inline std::vector<AlignmentRecord> parse_alignments(std::string_view text) {
  std::vector<AlignmentRecord> out;
  std::size_t line_no = 0;
  for (auto line : detail::split(text, '\n')) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
    try {
      out.push_back(nlohmann::json::parse(line).get<AlignmentRecord>());
    } catch (const nlohmann::json::exception& e) {
      throw AlignmentError("alignment line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

inline std::string write_alignments(const std::vector<AlignmentRecord>& records) {
  std::string out;
  for (const auto& r : records) out += nlohmann::json(r).dump() + "\n";
  return out;
}

// Spans must be nonempty, ordered and disjoint.
inline void validate_token_map(const AlignmentRecord& a) {
  std::size_t prev_end = 0;
  for (std::size_t t = 0; t < a.token_map.size(); ++t) {
    auto [s, e] = a.token_map[t];
    if (s >= e) throw AlignmentError("alignment " + a.sent_id + ": empty span for token " + std::to_string(t + 1));
    if (s < prev_end) throw AlignmentError("alignment " + a.sent_id + ": overlapping or unordered span for token " + std::to_string(t + 1));
    prev_end = e;
  }
}

enum class ReconcileReason { id_mismatch, bad_merge_group, non_contiguous_merge, disconnected_merge, overlapping_merges, non_tree, token_map_mismatch, bad_token_map };

inline const char* to_string(ReconcileReason r) {
  switch (r) {
    case ReconcileReason::id_mismatch: return "id_mismatch";
    case ReconcileReason::bad_merge_group: return "bad_merge_group";
    case ReconcileReason::non_contiguous_merge: return "non_contiguous_merge";
    case ReconcileReason::disconnected_merge: return "disconnected_merge";
    case ReconcileReason::overlapping_merges: return "overlapping_merges";
    case ReconcileReason::non_tree: return "non_tree";
    case ReconcileReason::token_map_mismatch: return "token_map_mismatch";
    case ReconcileReason::bad_token_map: return "bad_token_map";
  }
  return "unknown";
}

class ReconcileError : public AlignmentError {
public:
  ReconcileError(ReconcileReason reason, const std::string& sent_id, const std::string& detail)
      : AlignmentError("reconcile " + sent_id + " [" + to_string(reason) + "]: " + detail), reason_(reason) {}
  ReconcileReason reason() const noexcept { return reason_; }

private:
  ReconcileReason reason_;
};

// Applies an alignment record's merges. Each merge group collapses onto its
// first member: forms are concatenated (originals kept under MergedForms in
// MISC), outside dependents reattach to the survivor, and the survivor keeps
// its own head unless that head lies inside the group, in which case it takes
// the group's external head. Returns nullopt for removed sentences.
inline std::optional<Sentence> align_and_reconcile(const Sentence& s, const AlignmentRecord& a) {
  if (a.sent_id != s.sent_id) throw ReconcileError(ReconcileReason::id_mismatch, s.sent_id, "record is for " + a.sent_id);
  if (a.status == AlignmentStatus::removed) return std::nullopt;

  const int n = static_cast<int>(s.size());
  std::vector<int> group_of(static_cast<std::size_t>(n) + 1, -1);
  for (std::size_t g = 0; g < a.merges.size(); ++g) {
    const auto& grp = a.merges[g];
    if (grp.size() < 2) throw ReconcileError(ReconcileReason::bad_merge_group, s.sent_id, "merge group needs at least two tokens");
    for (std::size_t k = 0; k < grp.size(); ++k) {
      int id = grp[k];
      if (id < 1 || id > n) throw ReconcileError(ReconcileReason::bad_merge_group, s.sent_id, "merge id " + std::to_string(id) + " out of range");
      if (k > 0 && id != grp[k - 1] + 1)
        throw ReconcileError(ReconcileReason::non_contiguous_merge, s.sent_id, "merge group is not contiguous");
      if (group_of[id] >= 0) throw ReconcileError(ReconcileReason::overlapping_merges, s.sent_id, "token " + std::to_string(id) + " in two merge groups");
      group_of[id] = static_cast<int>(g);
    }
  }

  // survivor id for every original token
  std::vector<int> survivor(static_cast<std::size_t>(n) + 1);
  for (int i = 1; i <= n; ++i) survivor[i] = group_of[i] >= 0 ? a.merges[group_of[i]].front() : i;

  std::vector<int> new_index(static_cast<std::size_t>(n) + 1, 0);
  int next = 0;
  for (int i = 1; i <= n; ++i)
    if (survivor[i] == i) new_index[i] = ++next;

  Sentence out;
  out.sent_id = s.sent_id;
  out.comments = s.comments;
  for (int i = 1; i <= n; ++i) {
    if (survivor[i] != i) continue;
    Token t = s.tokens[i - 1];
    if (group_of[i] >= 0) {
      const auto& grp = a.merges[group_of[i]];
      // members attached outside the group must all share one external head
      int top = 0;
      std::string joined;
      for (int m : grp) {
        int h = s.tokens[m - 1].head;
        bool external = h == 0 || group_of[h] != group_of[i];
        if (external) {
          if (top != 0 && s.tokens[top - 1].head != h)
            throw ReconcileError(ReconcileReason::disconnected_merge, s.sent_id, "merge group has more than one external head");
          if (top == 0) top = m;
        }
        joined += (joined.empty() ? "" : " ") + s.tokens[m - 1].form;
        if (m != grp.front()) t.form += s.tokens[m - 1].form;
      }
      if (s.tokens[i - 1].head != 0 && group_of[s.tokens[i - 1].head] == group_of[i]) {
        t.head = s.tokens[top - 1].head;
        t.deprel = s.tokens[top - 1].deprel;
      }
      t.set_misc("MergedForms", escape_misc_value(joined));
    }
    t.index = new_index[i];
    t.head = t.head == 0 ? 0 : new_index[survivor[t.head]];
    out.tokens.push_back(std::move(t));
  }

  if (a.token_map.size() != out.size())
    throw ReconcileError(ReconcileReason::token_map_mismatch, s.sent_id,
                         "token_map has " + std::to_string(a.token_map.size()) + " spans for " + std::to_string(out.size()) + " tokens");
  try {
    validate_token_map(a);
  } catch (const AlignmentError& e) {
    throw ReconcileError(ReconcileReason::bad_token_map, s.sent_id, e.what());
  }
  try {
    validate_sentence(out);
  } catch (const ParseError& e) {
    throw ReconcileError(ReconcileReason::non_tree, s.sent_id, e.what());
  }
  return out;
}

struct CorpusStats {
  std::size_t sentences = 0;
  std::size_t tokens = 0;
  std::map<std::size_t, std::size_t> length_histogram;

  bool operator==(const CorpusStats&) const = default;
};

inline CorpusStats corpus_stats(const std::vector<Sentence>& corpus) {
  CorpusStats st;
  for (const auto& s : corpus) {
    ++st.sentences;
    st.tokens += s.size();
    ++st.length_histogram[s.size()];
  }
  return st;
}

}  // namespace jabberprobe
