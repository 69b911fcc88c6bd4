#pragma once

// Turns parsed CHAT utterances into ASR target text.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "adaptbench/chat.hpp"
#include "adaptbench/util.hpp"

namespace adaptbench::normalize {

struct NormalizationPolicy {
  bool apply_replacements = true;
  // Retraced and repeated words were spoken; only their markers are removed.
  bool keep_retraced_words = true;
  bool drop_unintelligible = true;
  bool drop_nonspeech = true;
  bool drop_fragments = true;
  bool lowercase = false;

  /// Canonical serialization; every field is always present.
  std::string canonical() const {
    auto b = [](bool v) { return v ? "true" : "false"; };
    std::string s;
    s += "normalize.apply_replacements=";
    s += b(apply_replacements);
    s += ";normalize.keep_retraced_words=";
    s += b(keep_retraced_words);
    s += ";normalize.drop_unintelligible=";
    s += b(drop_unintelligible);
    s += ";normalize.drop_nonspeech=";
    s += b(drop_nonspeech);
    s += ";normalize.drop_fragments=";
    s += b(drop_fragments);
    s += ";normalize.lowercase=";
    s += b(lowercase);
    return s;
  }

  std::string fingerprint() const { return hex64(fnv1a64(canonical())); }

  bool operator==(const NormalizationPolicy&) const = default;
};

struct NormalizedUtterance {
  std::string utt_id;
  std::string speaker_code;
  std::string text;
  std::optional<chat::TimeAlignment> alignment;
  std::string provenance;  // policy fingerprint
  bool empty = false;
  bool operator==(const NormalizedUtterance&) const = default;
};

namespace detail {

// CHAT-internal symbols that never belong in target text.
constexpr std::string_view kDroppedSymbols[] = {
    "\xE2\x80\xA2",  // • bullet
    "\xE2\x86\x91",  // ↑ pitch up
    "\xE2\x86\x93",  // ↓ pitch down
    "\xE2\x89\xA0",  // ≠
    "\xE2\x89\x88",  // ≈
    "\xE2\x89\x8B",  // ≋
    "\xE2\x80\xA1",  // ‡
    "\xE2\x80\x9E",  // „
    "\xE2\x80\x9C",  // “
    "\xE2\x80\x9D",  // ”
    "\xCB\x88",      // ˈ primary stress
    "\xCB\x8C",      // ˌ secondary stress
    "\xE2\x8C\x88",  // ⌈ overlap brackets
    "\xE2\x8C\x89",  // ⌉
    "\xE2\x8C\x8A",  // ⌊
    "\xE2\x8C\x8B",  // ⌋
};

inline bool is_ascii_word_char(char c) {
  return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '\'' || c == '-';
}

/// Reduces one written CHAT word to plain orthography, possibly several words:
/// strips the @-suffix and the &/0 prefixes, removes shortening parentheses and
/// prosodic symbols, and splits compounds on '_' and '+'.
inline std::vector<std::string> clean_word(std::string_view w) {
  if (auto at = w.rfind('@'); at != std::string_view::npos && at > 0) w = w.substr(0, at);
  std::string cur;
  std::vector<std::string> out;
  auto flush = [&] {
    // Trim hyphens and apostrophes that do not sit between word characters.
    std::size_t b = cur.find_first_not_of("-'");
    std::size_t e = cur.find_last_not_of("-'");
    if (b != std::string::npos) out.push_back(cur.substr(b, e - b + 1));
    cur.clear();
  };
  std::size_t i = 0;
  while (i < w.size()) {
    auto u = static_cast<unsigned char>(w[i]);
    if (u >= 0x80) {
      bool dropped = false;
      for (auto sym : kDroppedSymbols) {
        if (w.substr(i, sym.size()) == sym) {
          i += sym.size();
          dropped = true;
          break;
        }
      }
      if (dropped) continue;
      if (u == 0xC2 && i + 1 < w.size() && static_cast<unsigned char>(w[i + 1]) <= 0xA0) {
        // C1 controls and NBSP
        flush();
        i += 2;
        continue;
      }
      cur += w[i++];
    } else if (w[i] == '_' || w[i] == '+' || w[i] == ' ') {
      flush();
      ++i;
    } else if (is_ascii_word_char(w[i])) {
      cur += w[i++];
    } else {
      ++i;  // ( ) : ^ & = and other ASCII punctuation or controls
    }
  }
  flush();
  return out;
}

inline void ascii_lower(std::string& s) {
  for (auto& c : s)
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
}

}  // namespace detail

/// Total function: never throws.
inline NormalizedUtterance normalize_utterance(const chat::Utterance& utt, const NormalizationPolicy& policy) {
  using chat::AnnotationKind;
  using chat::TokenKind;
  const auto& tokens = utt.tokens;

  std::vector<bool> retraced(tokens.size(), false);
  std::vector<std::size_t> replacement_end(tokens.size(), 0);
  for (const auto& a : utt.annotations) {
    if (a.scope.end > tokens.size() || a.scope.begin > a.scope.end) continue;
    if (a.kind == AnnotationKind::Retrace || a.kind == AnnotationKind::Repetition)
      for (auto i = a.scope.begin; i < a.scope.end; ++i) retraced[i] = true;
    if (a.kind == AnnotationKind::ReplacementLink && !a.scope.empty())
      replacement_end[a.scope.begin] = std::max(replacement_end[a.scope.begin], a.scope.end);
  }

  std::vector<std::string> words;
  auto emit = [&](std::string_view text) {
    for (const auto& piece : split_ws(text))
      for (auto& w : detail::clean_word(piece)) words.push_back(std::move(w));
  };

  for (std::size_t i = 0; i < tokens.size(); ++i) {
    const auto& tok = tokens[i];
    if (!policy.keep_retraced_words && retraced[i]) continue;
    if (tok.replacement && policy.apply_replacements) {
      emit(*tok.replacement);
      if (replacement_end[i] > i + 1) i = replacement_end[i] - 1;
      continue;
    }
    switch (tok.kind) {
      case TokenKind::Word:
        emit(tok.surface);
        break;
      case TokenKind::PhonologicalForm:
        break;  // no orthographic target without a replacement
      case TokenKind::Unintelligible:
        if (!policy.drop_unintelligible) emit(tok.surface);
        break;
      case TokenKind::NonSpeechEvent:
        if (!policy.drop_nonspeech) emit(tok.surface);
        break;
      case TokenKind::Fragment:
        if (!policy.drop_fragments) emit(tok.surface);
        break;
    }
  }

  NormalizedUtterance out;
  out.utt_id = utt.utt_id;
  out.speaker_code = utt.speaker_code;
  out.text = join(words);
  if (policy.lowercase) detail::ascii_lower(out.text);
  out.alignment = utt.alignment;
  out.provenance = policy.fingerprint();
  out.empty = out.text.empty();
  return out;
}

/// Document order, then utterance order. Empty results are kept and flagged.
inline std::vector<NormalizedUtterance> normalize_corpus(std::span<const chat::ChatDocument> docs,
                                                         const NormalizationPolicy& policy,
                                                         std::size_t jobs = 1) {
  std::vector<const chat::Utterance*> flat;
  for (const auto& d : docs)
    for (const auto& u : d.utterances) flat.push_back(&u);
  std::vector<NormalizedUtterance> out(flat.size());
  parallel_for(flat.size(), jobs, [&](std::size_t i) { out[i] = normalize_utterance(*flat[i], policy); });
  return out;
}

inline nlohmann::ordered_json to_json(const NormalizedUtterance& n) {
  nlohmann::ordered_json j{{"v", 1}, {"utt_id", n.utt_id}, {"speaker_code", n.speaker_code}, {"text", n.text}};
  j["alignment"] = n.alignment ? chat::to_json(*n.alignment) : nlohmann::ordered_json(nullptr);
  j["empty"] = n.empty;
  j["provenance"] = n.provenance;
  return j;
}

}  // namespace adaptbench::normalize
