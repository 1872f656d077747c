#pragma once

#include <algorithm>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <tuple>
#include <utility>
#include <vector>

#include "jabberprobe/detail/file_io.hpp"
#include "jabberprobe/error.hpp"
#include "jabberprobe/treebank.hpp"

namespace jabberprobe {

enum class PartOfSpeech { noun, verb, adj, adv };

inline const char* to_upos(PartOfSpeech p) {
  switch (p) {
    case PartOfSpeech::noun: return "NOUN";
    case PartOfSpeech::verb: return "VERB";
    case PartOfSpeech::adj: return "ADJ";
    case PartOfSpeech::adv: return "ADV";
  }
  return "X";
}

inline std::optional<PartOfSpeech> parse_pos(std::string_view s) {
  if (s == "NOUN") return PartOfSpeech::noun;
  if (s == "VERB") return PartOfSpeech::verb;
  if (s == "ADJ") return PartOfSpeech::adj;
  if (s == "ADV") return PartOfSpeech::adv;
  return std::nullopt;
}

struct PseudowordEntry {
  std::string lemma;
  PartOfSpeech pos = PartOfSpeech::noun;

  auto operator<=>(const PseudowordEntry&) const = default;
};

// A UD feature set that licenses substitution in tokens tagged `upos`.
struct FeatureBundle {
  std::string id;
  std::vector<std::string> upos;
  std::vector<Feature> feats;  // sorted by key, as UD writes them

  bool licenses(std::string_view tag) const { return std::find(upos.begin(), upos.end(), tag) != upos.end(); }
  bool operator==(const FeatureBundle&) const = default;
};

inline std::string serialize_feats(const std::vector<Feature>& feats) {
  if (feats.empty()) return "_";
  std::string out;
  for (const auto& [k, v] : feats) out += (out.empty() ? "" : "|") + k + "=" + v;
  return out;
}

// The nine regular-form bundles: two nominal, four verbal, and three
// adjectival (comparative, superlative, unmarked). Adverb lemmas inflect
// with the adjectival rules and fill adjective slots only as a fallback.
inline const std::vector<FeatureBundle>& bundle_inventory() {
  static const std::vector<FeatureBundle> inventory = {
      {"noun_sing", {"NOUN"}, {{"Number", "Sing"}}},
      {"noun_plur", {"NOUN"}, {{"Number", "Plur"}}},
      {"verb_inf", {"VERB"}, {{"VerbForm", "Inf"}}},
      {"verb_pres_3sg", {"VERB"}, {{"Mood", "Ind"}, {"Number", "Sing"}, {"Person", "3"}, {"Tense", "Pres"}, {"VerbForm", "Fin"}}},
      {"verb_pres", {"VERB"}, {{"Mood", "Ind"}, {"Tense", "Pres"}, {"VerbForm", "Fin"}}},
      {"verb_pres_part", {"VERB"}, {{"Tense", "Pres"}, {"VerbForm", "Part"}}},
      {"adj_cmp", {"ADJ"}, {{"Degree", "Cmp"}}},
      {"adj_sup", {"ADJ"}, {{"Degree", "Sup"}}},
      {"adj_unmarked", {"ADJ"}, {}},
  };
  return inventory;
}

// Optional finite past-tense bundle (off by default).
inline const FeatureBundle& past_tense_bundle() {
  static const FeatureBundle b{"verb_past", {"VERB"}, {{"Mood", "Ind"}, {"Tense", "Past"}, {"VerbForm", "Fin"}}};
  return b;
}

inline std::vector<FeatureBundle> enabled_bundles(bool with_past_tense) {
  auto out = bundle_inventory();
  if (with_past_tense) out.push_back(past_tense_bundle());
  return out;
}

inline const FeatureBundle* find_bundle(std::string_view id) {
  for (const auto& b : bundle_inventory())
    if (b.id == id) return &b;
  if (past_tense_bundle().id == id) return &past_tense_bundle();
  return nullptr;
}

struct InflectedForm {
  std::string surface;
  std::string lemma;
  std::string upos;
  std::string bundle_id;

  auto operator<=>(const InflectedForm&) const = default;
};

// ---------------------------------------------------------------------------
// Spelling rules

namespace morph {

inline bool is_vowel_at(std::string_view w, std::size_t i) {
  char c = w[i];
  if (c == 'u' && i > 0 && w[i - 1] == 'q') return false;
  if (c == 'y') return i > 0 && !is_vowel_at(w, i - 1);
  return c == 'a' || c == 'e' || c == 'i' || c == 'o' || c == 'u';
}

inline bool is_plain_vowel(char c) { return c == 'a' || c == 'e' || c == 'i' || c == 'o' || c == 'u'; }

inline int vowel_groups(std::string_view w) {
  int groups = 0;
  bool prev = false;
  for (std::size_t i = 0; i < w.size(); ++i) {
    bool v = is_vowel_at(w, i);
    if (v && !prev) ++groups;
    prev = v;
  }
  return groups;
}

// Monosyllable ending consonant-vowel-consonant, final consonant not w/x/y.
inline bool doubles_final_consonant(std::string_view w) {
  if (w.size() < 3) return false;
  const std::size_t n = w.size();
  char last = w[n - 1];
  if (is_vowel_at(w, n - 1) || last == 'w' || last == 'x' || last == 'y') return false;
  if (!is_plain_vowel(w[n - 2]) || !is_vowel_at(w, n - 2)) return false;
  if (is_vowel_at(w, n - 3)) return false;
  return vowel_groups(w) == 1;
}

inline bool ends_consonant_y(std::string_view w) {
  return w.size() >= 2 && w.back() == 'y' && !is_plain_vowel(w[w.size() - 2]);
}

inline bool ends_with(std::string_view w, std::string_view suffix) {
  return w.size() >= suffix.size() && w.substr(w.size() - suffix.size()) == suffix;
}

// -s / -es (plural nouns, 3sg verbs)
inline std::string add_s(std::string_view w) {
  std::string s(w);
  if (ends_with(w, "s") || ends_with(w, "x") || ends_with(w, "z") || ends_with(w, "ch") || ends_with(w, "sh")) return s + "es";
  if (ends_consonant_y(w)) return s.substr(0, s.size() - 1) + "ies";
  return s + "s";
}

// Vowel-initial suffixes: "ing", "ed", "er", "est".
inline std::string add_vowel_suffix(std::string_view w, std::string_view suffix) {
  std::string s(w);
  const bool ing = suffix == "ing";
  if (ends_consonant_y(w)) return ing ? s + "ing" : s.substr(0, s.size() - 1) + "i" + std::string(suffix);
  if (w.back() == 'e') {
    // -ee keeps both vowels before -ing; an e-initial suffix absorbs the final e
    if (ing && ends_with(w, "ee")) return s + "ing";
    return s.substr(0, s.size() - 1) + std::string(suffix);
  }
  if (doubles_final_consonant(w)) return s + w.back() + std::string(suffix);
  return s + std::string(suffix);
}

}  // namespace morph

inline std::vector<InflectedForm> inflect(const PseudowordEntry& e, bool with_past_tense = false) {
  const std::string upos = to_upos(e.pos);
  auto form = [&](std::string surface, const char* bundle) { return InflectedForm{std::move(surface), e.lemma, upos, bundle}; };
  switch (e.pos) {
    case PartOfSpeech::noun:
      return {form(e.lemma, "noun_sing"), form(morph::add_s(e.lemma), "noun_plur")};
    case PartOfSpeech::verb: {
      std::vector<InflectedForm> out{form(e.lemma, "verb_inf"), form(morph::add_s(e.lemma), "verb_pres_3sg"),
                                     form(e.lemma, "verb_pres"), form(morph::add_vowel_suffix(e.lemma, "ing"), "verb_pres_part")};
      if (with_past_tense) out.push_back(form(morph::add_vowel_suffix(e.lemma, "ed"), "verb_past"));
      return out;
    }
    case PartOfSpeech::adj:
    case PartOfSpeech::adv:
      return {form(morph::add_vowel_suffix(e.lemma, "er"), "adj_cmp"), form(morph::add_vowel_suffix(e.lemma, "est"), "adj_sup"),
              form(e.lemma, "adj_unmarked")};
  }
  return {};
}

struct LexiconLoad {
  std::vector<PseudowordEntry> entries;
  std::vector<std::string> warnings;
};

// TSV with columns lemma, pos. Blank lines, '#' comments and a
// "lemma<TAB>pos" header are ignored; repeated rows are dropped with a
// warning.
inline LexiconLoad parse_lexicon(std::string_view text) {
  LexiconLoad out;
  std::set<PseudowordEntry> seen;
  std::size_t line_no = 0;
  for (auto line : detail::split(text, '\n')) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty() || line.front() == '#') continue;
    auto cols = detail::split(line, '\t');
    if (cols.size() != 2) throw ParseError("lexicon line " + std::to_string(line_no) + ": expected 2 tab-separated columns");
    if (line_no == 1 && cols[0] == "lemma" && cols[1] == "pos") continue;
    auto pos = parse_pos(cols[1]);
    if (!pos) throw ParseError("lexicon line " + std::to_string(line_no) + ": unknown pos '" + std::string(cols[1]) + "'");
    if (cols[0].empty() || !std::all_of(cols[0].begin(), cols[0].end(), [](char c) { return c >= 'a' && c <= 'z'; }))
      throw ParseError("lexicon line " + std::to_string(line_no) + ": lemma '" + std::string(cols[0]) + "' is not lowercase ASCII alphabetic");
    PseudowordEntry e{std::string(cols[0]), *pos};
    if (!seen.insert(e).second) {
      out.warnings.push_back("lexicon line " + std::to_string(line_no) + ": duplicate entry " + e.lemma + "/" + to_upos(e.pos));
      continue;
    }
    out.entries.push_back(std::move(e));
  }
  return out;
}

inline LexiconLoad load_lexicon(const std::filesystem::path& path) { return parse_lexicon(detail::read_file(path)); }

inline std::vector<InflectedForm> inflection_table(const std::vector<PseudowordEntry>& entries, bool with_past_tense = false) {
  std::vector<InflectedForm> out;
  for (const auto& e : entries) {
    auto forms = inflect(e, with_past_tense);
    out.insert(out.end(), forms.begin(), forms.end());
  }
  return out;
}

// Columns: surface, lemma, upos, serialized bundle.
inline std::string write_inflection_table(const std::vector<InflectedForm>& forms) {
  std::string out = "surface\tlemma\tupos\tbundle\n";
  for (const auto& f : forms) {
    const auto* b = find_bundle(f.bundle_id);
    out += f.surface + '\t' + f.lemma + '\t' + f.upos + '\t' + serialize_feats(b ? b->feats : std::vector<Feature>{}) + '\n';
  }
  return out;
}

inline std::vector<InflectedForm> parse_inflection_table(std::string_view text) {
  std::vector<InflectedForm> out;
  std::size_t line_no = 0;
  for (auto line : detail::split(text, '\n')) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty() || (line_no == 1 && line.substr(0, 8) == "surface\t")) continue;
    auto cols = detail::split(line, '\t');
    if (cols.size() != 4) throw ParseError("inflection table line " + std::to_string(line_no) + ": expected 4 columns");
    const FeatureBundle* match = nullptr;
    std::string_view tag = cols[2] == "ADV" ? "ADJ" : cols[2];
    for (const auto& b : enabled_bundles(true))
      if (b.licenses(tag) && serialize_feats(b.feats) == cols[3]) match = find_bundle(b.id);
    if (!match) throw ParseError("inflection table line " + std::to_string(line_no) + ": unknown bundle " + std::string(cols[2]) + " " + std::string(cols[3]));
    out.push_back({std::string(cols[0]), std::string(cols[1]), std::string(cols[2]), match->id});
  }
  return out;
}

struct LexiconSummary {
  std::size_t word_types = 0;  // distinct surface strings
  std::size_t varieties = 0;   // distinct (surface, upos, bundle) annotations
};

inline LexiconSummary summarize(const std::vector<InflectedForm>& forms) {
  std::set<std::string> types;
  std::set<std::tuple<std::string, std::string, std::string>> varieties;
  for (const auto& f : forms) {
    types.insert(f.surface);
    varieties.insert({f.surface, f.upos, f.bundle_id});
  }
  return {types.size(), varieties.size()};
}

}  // namespace jabberprobe
