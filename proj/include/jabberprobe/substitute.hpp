#pragma once

#include <cctype>
#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "jabberprobe/detail/random.hpp"
#include "jabberprobe/error.hpp"
#include "jabberprobe/lexicon.hpp"
#include "jabberprobe/treebank.hpp"

namespace jabberprobe {

struct SubstitutionPlan {
  std::uint64_t seed = 0;
  std::vector<FeatureBundle> bundles = bundle_inventory();
  std::string provenance_key = "OrigForm";
  std::string lemma_key = "OrigLemma";
  double substitution_probability = 1.0;  // 1 = every eligible token
};

// The most specific enabled bundle whose tag matches and whose features are
// all present on the token, or nullptr.
inline const FeatureBundle* substitutable_slot(const Token& t, const std::vector<FeatureBundle>& bundles) {
  const FeatureBundle* best = nullptr;
  for (const auto& b : bundles) {
    if (!b.licenses(t.upos)) continue;
    bool all = std::all_of(b.feats.begin(), b.feats.end(), [&](const Feature& f) { return t.feat(f.first) == f.second; });
    if (all && (!best || b.feats.size() > best->feats.size())) best = &b;
  }
  return best;
}

struct SubstitutionLogEntry {
  std::string sent_id;
  int token = 0;
  std::string original;
  std::string replacement;
  std::string bundle_id;

  bool operator==(const SubstitutionLogEntry&) const = default;
};

struct SubstitutionResult {
  std::vector<Sentence> corpus;
  std::vector<SubstitutionLogEntry> log;
};

namespace detail {

// Mirrors the casing shape (ALLCAPS, Capitalized, lower) of `like`.
inline std::string match_case(std::string s, std::string_view like) {
  auto is_upper = [](char c) { return std::isupper(static_cast<unsigned char>(c)) != 0; };
  auto is_alpha = [](char c) { return std::isalpha(static_cast<unsigned char>(c)) != 0; };
  if (like.empty() || !is_upper(like.front())) return s;
  bool all_caps = like.size() > 1 && std::all_of(like.begin(), like.end(), [&](char c) { return !is_alpha(c) || is_upper(c); });
  if (all_caps) {
    for (auto& c : s) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  } else if (!s.empty()) {
    s.front() = static_cast<char>(std::toupper(static_cast<unsigned char>(s.front())));
  }
  return s;
}

}  // namespace detail

// Replaces every eligible token with a uniformly drawn inflection of its
// matched bundle. Draws come from one seeded stream in corpus order; heads,
// relations, indices and untouched tokens are carried over unchanged. The
// original form and lemma are kept in MISC so the pass can be undone.
//
// Draws prefer forms whose lemma carries the token's own tag; adverb lemmas
// fill adjective slots only when the lexicon has no adjectives.
inline SubstitutionResult substitute_corpus(const std::vector<Sentence>& corpus, const std::vector<InflectedForm>& table,
                                            const SubstitutionPlan& plan) {
  std::map<std::pair<std::string, std::string>, std::vector<const InflectedForm*>> by_tag;  // (bundle, upos)
  std::map<std::string, std::vector<const InflectedForm*>> by_bundle;
  for (const auto& f : table) {
    by_tag[{f.bundle_id, f.upos}].push_back(&f);
    by_bundle[f.bundle_id].push_back(&f);
  }
  for (const auto& b : plan.bundles)
    if (by_bundle[b.id].empty()) throw ConfigError("substitution: no pseudoword forms available for enabled bundle " + b.id);
  if (plan.substitution_probability < 0.0 || plan.substitution_probability > 1.0)
    throw ConfigError("substitution: probability must lie in [0, 1]");

  detail::Rng rng(plan.seed);
  SubstitutionResult out;
  out.corpus.reserve(corpus.size());
  for (const auto& s : corpus) {
    Sentence copy = s;
    for (auto& t : copy.tokens) {
      const auto* bundle = substitutable_slot(t, plan.bundles);
      if (!bundle) continue;
      if (plan.substitution_probability < 1.0 && !rng.bernoulli(plan.substitution_probability)) continue;
      const auto& own = by_tag[{bundle->id, t.upos}];
      const auto& pool = own.empty() ? by_bundle[bundle->id] : own;
      const InflectedForm& pick = *pool[rng.index(pool.size())];

      std::string surface = t.index == 1 ? detail::match_case(pick.surface, t.form) : pick.surface;
      out.log.push_back({s.sent_id, t.index, t.form, surface, bundle->id});
      if (!t.misc_value(plan.provenance_key)) {
        t.set_misc(plan.provenance_key, escape_misc_value(t.form));
        t.set_misc(plan.lemma_key, escape_misc_value(t.lemma));
      }
      t.form = std::move(surface);
      t.lemma = pick.lemma;
    }
    out.corpus.push_back(std::move(copy));
  }
  return out;
}

// Undoes substitute_corpus using the provenance annotations.
inline std::vector<Sentence> strip_substitutions(std::vector<Sentence> corpus, const SubstitutionPlan& plan = {}) {
  for (auto& s : corpus)
    for (auto& t : s.tokens) {
      if (auto orig = t.misc_value(plan.provenance_key)) {
        t.form = unescape_misc_value(*orig);
        t.erase_misc(plan.provenance_key);
      }
      if (auto orig = t.misc_value(plan.lemma_key)) {
        t.lemma = unescape_misc_value(*orig);
        t.erase_misc(plan.lemma_key);
      }
    }
  return corpus;
}

inline std::string write_substitution_log(const std::vector<SubstitutionLogEntry>& log) {
  std::string out = "sent_id\ttoken\toriginal\treplacement\tbundle\n";
  for (const auto& e : log)
    out += e.sent_id + '\t' + std::to_string(e.token) + '\t' + e.original + '\t' + e.replacement + '\t' + e.bundle_id + '\n';
  return out;
}

}  // namespace jabberprobe
