#pragma once

// Scoring-time text normalization, edit-distance alignment and WER/CER.
//
// Normalization steps, always in this order:
//   1. Unicode NFKC
//   2. lowercase (root locale), then NFKC again
//   3. typographic apostrophes -> ', every character that is not a letter,
//      combining mark, decimal digit or apostrophe -> space; apostrophes at
//      word edges are removed
//   4. whitespace split
//   5. contraction and colloquial expansion table
//   6. British -> American spelling table (applied to each expanded word)
//   7. custom rules (literal word sequence -> word sequence), in table order

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <unicode/locid.h>
#include <unicode/normalizer2.h>
#include <unicode/uchar.h>
#include <unicode/unistr.h>

#include "adaptbench/error.hpp"
#include "adaptbench/util.hpp"

namespace adaptbench::scoring {

// ---------------------------------------------------------------------------
// Alignment

enum class EditOp { Hit, Substitution, Deletion, Insertion };

struct AlignedPair {
  EditOp op;
  std::optional<std::size_t> ref_index;
  std::optional<std::size_t> hyp_index;
  bool operator==(const AlignedPair&) const = default;
};

struct EditCounts {
  std::uint64_t hits = 0;
  std::uint64_t substitutions = 0;
  std::uint64_t deletions = 0;
  std::uint64_t insertions = 0;

  std::uint64_t errors() const { return substitutions + deletions + insertions; }
  std::uint64_t ref_length() const { return hits + substitutions + deletions; }
  EditCounts& operator+=(const EditCounts& o) {
    hits += o.hits;
    substitutions += o.substitutions;
    deletions += o.deletions;
    insertions += o.insertions;
    return *this;
  }
  bool operator==(const EditCounts&) const = default;
};

struct AlignmentResult {
  EditCounts counts;
  std::vector<AlignedPair> alignment;
  std::uint64_t distance() const { return counts.errors(); }
};

/// Minimal unit-cost alignment. Among equal-cost paths the backtrace prefers
/// the diagonal (hit/substitution), then deletion, then insertion; the choice
/// only changes the displayed alignment, never the distance.
template <typename T>
AlignmentResult align(std::span<const T> ref, std::span<const T> hyp) {
  const std::size_t n = ref.size(), m = hyp.size();
  const std::size_t w = m + 1;
  std::vector<std::uint32_t> d((n + 1) * w);
  for (std::size_t j = 0; j <= m; ++j) d[j] = static_cast<std::uint32_t>(j);
  for (std::size_t i = 1; i <= n; ++i) {
    d[i * w] = static_cast<std::uint32_t>(i);
    for (std::size_t j = 1; j <= m; ++j) {
      std::uint32_t diag = d[(i - 1) * w + j - 1] + (ref[i - 1] == hyp[j - 1] ? 0 : 1);
      std::uint32_t del = d[(i - 1) * w + j] + 1;
      std::uint32_t ins = d[i * w + j - 1] + 1;
      d[i * w + j] = std::min({diag, del, ins});
    }
  }

  AlignmentResult r;
  std::size_t i = n, j = m;
  while (i > 0 || j > 0) {
    const std::uint32_t here = d[i * w + j];
    if (i > 0 && j > 0 && here == d[(i - 1) * w + j - 1] + (ref[i - 1] == hyp[j - 1] ? 0 : 1)) {
      bool hit = ref[i - 1] == hyp[j - 1];
      r.alignment.push_back({hit ? EditOp::Hit : EditOp::Substitution, i - 1, j - 1});
      ++(hit ? r.counts.hits : r.counts.substitutions);
      --i;
      --j;
    } else if (i > 0 && here == d[(i - 1) * w + j] + 1) {
      r.alignment.push_back({EditOp::Deletion, i - 1, std::nullopt});
      ++r.counts.deletions;
      --i;
    } else {
      r.alignment.push_back({EditOp::Insertion, std::nullopt, j - 1});
      ++r.counts.insertions;
      --j;
    }
  }
  std::reverse(r.alignment.begin(), r.alignment.end());
  return r;
}

template <typename T>
AlignmentResult align(const std::vector<T>& ref, const std::vector<T>& hyp) {
  return align(std::span<const T>(ref), std::span<const T>(hyp));
}

// ---------------------------------------------------------------------------
// Normalizer

struct Rule {
  std::vector<std::string> pattern;
  std::vector<std::string> replacement;
  bool operator==(const Rule&) const = default;
};

namespace detail {

struct SpellingPair {
  std::string_view british, american;
};

// Bundled British -> American table.
inline constexpr SpellingPair kSpelling[] = {
    {"aeroplane", "airplane"},   {"analyse", "analyze"},       {"analysed", "analyzed"},
    {"apologise", "apologize"},  {"apologised", "apologized"}, {"armour", "armor"},
    {"behaviour", "behavior"},   {"behaviours", "behaviors"},  {"catalogue", "catalog"},
    {"centre", "center"},        {"centres", "centers"},       {"cheque", "check"},
    {"colour", "color"},         {"colours", "colors"},        {"coloured", "colored"},
    {"defence", "defense"},      {"dialogue", "dialog"},       {"favour", "favor"},
    {"favourite", "favorite"},   {"favourites", "favorites"},  {"flavour", "flavor"},
    {"grey", "gray"},            {"harbour", "harbor"},        {"honour", "honor"},
    {"humour", "humor"},         {"jewellery", "jewelry"},     {"kilometre", "kilometer"},
    {"kilometres", "kilometers"},{"labour", "labor"},          {"licence", "license"},
    {"litre", "liter"},          {"litres", "liters"},         {"metre", "meter"},
    {"metres", "meters"},        {"mould", "mold"},            {"neighbour", "neighbor"},
    {"neighbours", "neighbors"}, {"offence", "offense"},       {"organisation", "organization"},
    {"organise", "organize"},    {"organised", "organized"},   {"practise", "practice"},
    {"programme", "program"},    {"programmes", "programs"},   {"pyjamas", "pajamas"},
    {"realise", "realize"},      {"realised", "realized"},     {"recognise", "recognize"},
    {"recognised", "recognized"},{"rumour", "rumor"},          {"savour", "savor"},
    {"theatre", "theater"},      {"theatres", "theaters"},     {"travelled", "traveled"},
    {"travelling", "traveling"}, {"tyre", "tire"},             {"tyres", "tires"},
    {"vapour", "vapor"},
};

struct Expansion {
  std::string_view word, expansion;
};

// Whole-word contractions and colloquialisms.
inline constexpr Expansion kExpansions[] = {
    {"won't", "will not"},  {"can't", "can not"},  {"shan't", "shall not"}, {"ain't", "ain't"},
    {"let's", "let us"},    {"y'all", "you all"},  {"gonna", "going to"},   {"wanna", "want to"},
    {"gotta", "got to"},    {"kinda", "kind of"},  {"sorta", "sort of"},    {"lemme", "let me"},
    {"gimme", "give me"},   {"outta", "out of"},   {"lotta", "lot of"},
};

// Suffix contractions, tried in order after the whole-word table.
inline constexpr Expansion kSuffixes[] = {
    {"n't", "not"}, {"'re", "are"}, {"'ve", "have"}, {"'ll", "will"}, {"'m", "am"}, {"'d", "would"},
};

inline bool is_apostrophe(UChar32 c) {
  return c == 0x27 || c == 0x2019 || c == 0x2018 || c == 0x02BC || c == 0x60 || c == 0xB4;
}

inline bool is_word_char(UChar32 c) {
  auto mask = U_GET_GC_MASK(c);
  return (mask & (U_GC_L_MASK | U_GC_M_MASK | U_GC_ND_MASK)) != 0;
}

}  // namespace detail

class ScoringNormalizer {
 public:
  /// Builtin steps plus the default custom rule table ("hafta" -> "have to").
  ScoringNormalizer() {
    UErrorCode st = U_ZERO_ERROR;
    nfkc_ = icu::Normalizer2::getNFKCInstance(st);
    if (U_FAILURE(st) || !nfkc_) throw Error(ErrorCode::InvariantViolation, "ICU NFKC normalizer unavailable");
    for (auto p : detail::kSpelling) spelling_.emplace(p.british, p.american);
    for (auto e : detail::kExpansions) expansions_.emplace(e.word, split_ws(e.expansion));
    add_custom_rule("hafta", "have to");
  }

  static ScoringNormalizer without_custom_rules() {
    ScoringNormalizer n;
    n.custom_.clear();
    return n;
  }

  /// Pattern and replacement pass through steps 1-6 so rules match what the
  /// builtin steps produce.
  void add_custom_rule(std::string_view pattern, std::string_view replacement) {
    Rule r{builtin_words(pattern), builtin_words(replacement)};
    if (r.pattern.empty())
      throw Error(ErrorCode::InvalidValue, "custom rule with empty pattern: '" + std::string(pattern) + "'");
    custom_.push_back(std::move(r));
  }

  /// Tab-separated `pattern<TAB>replacement`, one rule per line; '#' starts a
  /// comment line.
  void load_rules_tsv(std::string_view content) {
    std::size_t pos = 0, line_no = 0;
    while (pos < content.size()) {
      auto nl = content.find('\n', pos);
      auto line = content.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
      pos = nl == std::string_view::npos ? content.size() : nl + 1;
      ++line_no;
      if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
      if (trim(line).empty() || trim(line).front() == '#') continue;
      auto tab = line.find('\t');
      if (tab == std::string_view::npos)
        throw Error(ErrorCode::InvalidValue, "rules line " + std::to_string(line_no) + ": expected pattern<TAB>replacement",
                    line_no);
      add_custom_rule(line.substr(0, tab), line.substr(tab + 1));
    }
  }

  const std::vector<Rule>& custom_rules() const { return custom_; }

  std::vector<std::string> operator()(std::string_view text) const {
    auto words = builtin_words(text);
    for (const auto& rule : custom_) words = apply_rule(rule, words);
    return words;
  }

 private:
  // Steps 1-6.
  std::vector<std::string> builtin_words(std::string_view text) const {
    std::vector<std::string> words;
    for (const auto& w : basic_words(text)) expand(w, words);
    for (auto& w : words)
      if (auto it = spelling_.find(w); it != spelling_.end()) w = it->second;
    return words;
  }

  // Steps 1-4.
  std::vector<std::string> basic_words(std::string_view text) const {
    UErrorCode st = U_ZERO_ERROR;
    icu::UnicodeString s = icu::UnicodeString::fromUTF8(icu::StringPiece(text.data(), static_cast<int32_t>(text.size())));
    s = nfkc_->normalize(s, st);
    s.toLower(icu::Locale::getRoot());
    s = nfkc_->normalize(s, st);
    if (U_FAILURE(st)) return {};

    icu::UnicodeString cleaned;
    for (int32_t i = 0; i < s.length(); i = s.moveIndex32(i, 1)) {
      UChar32 c = s.char32At(i);
      if (detail::is_apostrophe(c))
        cleaned.append(static_cast<UChar32>('\''));
      else if (detail::is_word_char(c))
        cleaned.append(c);
      else
        cleaned.append(static_cast<UChar32>(' '));
    }
    std::string utf8;
    cleaned.toUTF8String(utf8);
    std::vector<std::string> out;
    for (auto& w : split_ws(utf8)) {
      auto b = w.find_first_not_of('\'');
      if (b == std::string::npos) continue;
      auto e = w.find_last_not_of('\'');
      out.push_back(w.substr(b, e - b + 1));
    }
    return out;
  }

  void expand(const std::string& w, std::vector<std::string>& out) const {
    if (auto it = expansions_.find(w); it != expansions_.end()) {
      out.insert(out.end(), it->second.begin(), it->second.end());
      return;
    }
    for (auto s : detail::kSuffixes) {
      if (w.size() > s.word.size() && std::string_view(w).substr(w.size() - s.word.size()) == s.word) {
        out.push_back(w.substr(0, w.size() - s.word.size()));
        out.emplace_back(s.expansion);
        return;
      }
    }
    out.push_back(w);
  }

  static std::vector<std::string> apply_rule(const Rule& rule, const std::vector<std::string>& words) {
    std::vector<std::string> out;
    const std::size_t k = rule.pattern.size();
    std::size_t i = 0;
    while (i < words.size()) {
      if (i + k <= words.size() && std::equal(rule.pattern.begin(), rule.pattern.end(), words.begin() + i)) {
        out.insert(out.end(), rule.replacement.begin(), rule.replacement.end());
        i += k;
      } else {
        out.push_back(words[i++]);
      }
    }
    return out;
  }

  const icu::Normalizer2* nfkc_ = nullptr;
  std::unordered_map<std::string, std::string> spelling_;
  std::unordered_map<std::string, std::vector<std::string>> expansions_;
  std::vector<Rule> custom_;
};

// ---------------------------------------------------------------------------
// Aggregation

enum class CerSpaces { Include, Exclude };

inline CerSpaces parse_cer_spaces(std::string_view s) {
  if (s == "include") return CerSpaces::Include;
  if (s == "exclude") return CerSpaces::Exclude;
  throw Error(ErrorCode::InvalidValue, "cer-spaces must be include|exclude, got '" + std::string(s) + "'");
}

constexpr std::string_view to_string(CerSpaces c) { return c == CerSpaces::Include ? "include" : "exclude"; }

inline std::u32string cer_chars(std::span<const std::string> words, CerSpaces spaces) {
  return utf8_decode(join(words, spaces == CerSpaces::Include ? " " : ""));
}

struct PairCounts {
  EditCounts words;
  EditCounts chars;
};

inline PairCounts score_pair(std::string_view ref, std::string_view hyp, const ScoringNormalizer& norm,
                             CerSpaces spaces = CerSpaces::Include) {
  auto r = norm(ref), h = norm(hyp);
  PairCounts pc;
  pc.words = align(r, h).counts;
  auto rc = cer_chars(r, spaces), hc = cer_chars(h, spaces);
  pc.chars = align(std::span<const char32_t>(rc), std::span<const char32_t>(hc)).counts;
  return pc;
}

enum class Scope { Corpus, Speaker, Utterance };

constexpr std::string_view to_string(Scope s) {
  return s == Scope::Corpus ? "corpus" : s == Scope::Speaker ? "speaker" : "utterance";
}

struct ScoreReport {
  Scope scope = Scope::Corpus;
  double wer = 0;  // percent
  double cer = 0;  // percent
  EditCounts words;
  EditCounts chars;
  std::size_t n_utts = 0;
};

/// Micro-average: sum the counts, divide once.
inline ScoreReport make_report(std::span<const PairCounts> pairs, Scope scope) {
  ScoreReport r;
  r.scope = scope;
  for (const auto& p : pairs) {
    r.words += p.words;
    r.chars += p.chars;
  }
  r.n_utts = pairs.size();
  if (r.words.ref_length() == 0)
    throw Error(ErrorCode::EmptyReferenceCorpus, "no reference words to score against");
  r.wer = 100.0 * static_cast<double>(r.words.errors()) / static_cast<double>(r.words.ref_length());
  r.cer = r.chars.ref_length() == 0
              ? 0.0
              : 100.0 * static_cast<double>(r.chars.errors()) / static_cast<double>(r.chars.ref_length());
  return r;
}

struct RefHyp {
  std::string ref;
  std::string hyp;
};

inline std::vector<PairCounts> score_pairs(std::span<const RefHyp> pairs, const ScoringNormalizer& norm,
                                           CerSpaces spaces = CerSpaces::Include, std::size_t jobs = 1) {
  std::vector<PairCounts> out(pairs.size());
  parallel_for(pairs.size(), jobs, [&](std::size_t i) { out[i] = score_pair(pairs[i].ref, pairs[i].hyp, norm, spaces); });
  return out;
}

inline ScoreReport score_corpus(std::span<const RefHyp> pairs, const ScoringNormalizer& norm,
                                CerSpaces spaces = CerSpaces::Include, std::size_t jobs = 1) {
  auto counts = score_pairs(pairs, norm, spaces, jobs);
  return make_report(counts, Scope::Corpus);
}

struct SpeakerRefHyp {
  std::string speaker_id;
  std::string ref;
  std::string hyp;
};

inline std::map<std::string, ScoreReport> score_per_speaker(std::span<const SpeakerRefHyp> pairs,
                                                            const ScoringNormalizer& norm,
                                                            CerSpaces spaces = CerSpaces::Include,
                                                            std::size_t jobs = 1) {
  std::vector<PairCounts> counts(pairs.size());
  parallel_for(pairs.size(), jobs,
               [&](std::size_t i) { counts[i] = score_pair(pairs[i].ref, pairs[i].hyp, norm, spaces); });
  std::map<std::string, std::vector<PairCounts>> by;
  for (std::size_t i = 0; i < pairs.size(); ++i) by[pairs[i].speaker_id].push_back(counts[i]);
  std::map<std::string, ScoreReport> out;
  for (auto& [spk, cs] : by) {
    try {
      out.emplace(spk, make_report(cs, Scope::Speaker));
    } catch (const Error& e) {
      if (e.code() != ErrorCode::EmptyReferenceCorpus) throw;
      throw Error(ErrorCode::SpeakerWithNoReference, "speaker " + spk + " has no reference words");
    }
  }
  return out;
}

}  // namespace adaptbench::scoring
