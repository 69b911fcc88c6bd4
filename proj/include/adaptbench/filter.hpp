#pragma once

// SI-FT data selection: keep utterances tagged as pronunciation errors, drop
// anything carrying a semantic-error tag.

#include <set>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "adaptbench/chat.hpp"
#include "adaptbench/normalize.hpp"

namespace adaptbench::filter {

enum class Reason { HasPronunciationTag, HasSemanticTag, NoRelevantTag, EmptyAfterNormalization };

constexpr std::string_view to_string(Reason r) {
  switch (r) {
    case Reason::HasPronunciationTag: return "HasPronunciationTag";
    case Reason::HasSemanticTag: return "HasSemanticTag";
    case Reason::NoRelevantTag: return "NoRelevantTag";
    case Reason::EmptyAfterNormalization: return "EmptyAfterNormalization";
  }
  return "?";
}

struct FilterDecision {
  std::string utt_id;
  bool included = false;
  std::vector<Reason> reasons;
  bool operator==(const FilterDecision&) const = default;
};

inline std::set<chat::ErrorClass> classify_utterance(const chat::Utterance& utt) {
  std::set<chat::ErrorClass> classes;
  for (const auto& a : utt.annotations)
    if (a.kind == chat::AnnotationKind::ErrorCode && a.error_class) classes.insert(*a.error_class);
  return classes;
}

/// Decision for one utterance given its normalized text. Semantic tags exclude
/// even when a pronunciation tag is also present.
inline FilterDecision decide(const chat::Utterance& utt, bool normalized_empty) {
  auto classes = classify_utterance(utt);
  const bool p = classes.count(chat::ErrorClass::Pronunciation) > 0;
  const bool s = classes.count(chat::ErrorClass::Semantic) > 0;
  FilterDecision d;
  d.utt_id = utt.utt_id;
  if (p) d.reasons.push_back(Reason::HasPronunciationTag);
  if (s) d.reasons.push_back(Reason::HasSemanticTag);
  if (!p && !s) d.reasons.push_back(Reason::NoRelevantTag);
  if (normalized_empty) d.reasons.push_back(Reason::EmptyAfterNormalization);
  d.included = p && !s && !normalized_empty;
  return d;
}

inline std::vector<FilterDecision> filter_si(std::span<const chat::Utterance> utts,
                                             const normalize::NormalizationPolicy& policy) {
  std::vector<FilterDecision> out;
  out.reserve(utts.size());
  for (const auto& u : utts) out.push_back(decide(u, normalize::normalize_utterance(u, policy).empty));
  return out;
}

inline nlohmann::ordered_json to_json(const FilterDecision& d) {
  nlohmann::ordered_json reasons = nlohmann::ordered_json::array();
  for (auto r : d.reasons) reasons.push_back(to_string(r));
  return {{"v", 1}, {"utt_id", d.utt_id}, {"included", d.included}, {"reasons", std::move(reasons)}};
}

}  // namespace adaptbench::filter
