#pragma once

// Wire formats between the toolkit and ASR backends. Both files are JSON
// lines with a fixed key order; see docs/formats.md.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "adaptbench/error.hpp"
#include "adaptbench/split.hpp"
#include "adaptbench/util.hpp"

namespace adaptbench::manifest {

inline constexpr int kSchemaVersion = 1;

enum class Condition { B1, B2, B3, B4 };
enum class InitLineage { Pretrained, SIAdapted };

/// B1 vanilla, B2 SI-adapted, B3 SI -> SS, B4 pretrained -> SS.
struct ConditionId {
  Condition id = Condition::B1;

  constexpr InitLineage init_lineage() const {
    return id == Condition::B2 || id == Condition::B3 ? InitLineage::SIAdapted : InitLineage::Pretrained;
  }
  constexpr bool personalization() const { return id == Condition::B3 || id == Condition::B4; }
  constexpr std::string_view name() const {
    switch (id) {
      case Condition::B1: return "B1";
      case Condition::B2: return "B2";
      case Condition::B3: return "B3";
      case Condition::B4: return "B4";
    }
    return "?";
  }
  constexpr auto operator<=>(const ConditionId&) const = default;

  static ConditionId parse(std::string_view s) {
    if (s == "B1") return {Condition::B1};
    if (s == "B2") return {Condition::B2};
    if (s == "B3") return {Condition::B3};
    if (s == "B4") return {Condition::B4};
    throw Error(ErrorCode::InvalidValue, "unknown condition '" + std::string(s) + "' (expected B1..B4)");
  }
};

inline constexpr ConditionId kAllConditions[] = {{Condition::B1}, {Condition::B2}, {Condition::B3}, {Condition::B4}};

constexpr std::string_view to_string(InitLineage l) {
  return l == InitLineage::Pretrained ? "Pretrained" : "SIAdapted";
}

struct ManifestEntry {
  std::string utt_id;
  std::string audio_path;
  std::optional<std::int64_t> start_ms;
  std::optional<std::int64_t> end_ms;
  std::string text;
  std::string speaker_id;
  split::Split split = split::Split::Train;
  // Absent on manifests shared by several conditions (SS train/valid/test, OOD).
  std::optional<ConditionId> condition;
  std::string dataset;
  bool operator==(const ManifestEntry&) const = default;
};

struct HypothesisEntry {
  std::string utt_id;
  std::string hypothesis;
  ConditionId condition;
  std::string speaker_id;
  // Target speaker of the personalized model that produced this line (B3/B4);
  // empty for the shared B1/B2 models.
  std::string model;
  std::optional<nlohmann::ordered_json> decode_meta;
  bool operator==(const HypothesisEntry&) const = default;
};

namespace detail {

inline void validate(const ManifestEntry& e) {
  auto bad = [&](const std::string& why) {
    return Error(ErrorCode::InvalidEntry, "manifest entry '" + e.utt_id + "': " + why);
  };
  if (e.utt_id.empty()) throw bad("empty utt_id");
  if (e.speaker_id.empty()) throw bad("empty speaker_id");
  if (e.dataset.empty()) throw bad("empty dataset");
  if (trim(e.text).empty()) throw bad("empty text");
  if (e.start_ms.has_value() != e.end_ms.has_value()) throw bad("start_ms and end_ms must be given together");
  if (e.start_ms && (*e.start_ms < 0 || *e.start_ms > *e.end_ms)) throw bad("start_ms > end_ms");
}

inline std::string dump_line(const nlohmann::ordered_json& j, const std::string& utt_id) {
  try {
    return j.dump() + "\n";
  } catch (const nlohmann::json::exception& ex) {
    throw Error(ErrorCode::InvalidEntry, "entry '" + utt_id + "' is not valid UTF-8: " + ex.what());
  }
}

inline std::string get_string(const nlohmann::ordered_json& j, const char* key, std::size_t line) {
  auto it = j.find(key);
  if (it == j.end() || !it->is_string())
    throw Error(ErrorCode::MalformedLine, "line " + std::to_string(line) + ": missing string field '" + key + "'", line);
  return it->get<std::string>();
}

inline std::optional<std::int64_t> get_opt_int(const nlohmann::ordered_json& j, const char* key, std::size_t line) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return std::nullopt;
  if (!it->is_number_integer())
    throw Error(ErrorCode::MalformedLine, "line " + std::to_string(line) + ": field '" + key + "' is not an integer", line);
  return it->get<std::int64_t>();
}

template <typename Fn>
void for_each_json_line(std::string_view content, Fn&& fn) {
  std::size_t line_no = 0, pos = 0;
  while (pos < content.size()) {
    auto nl = content.find('\n', pos);
    auto line = content.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? content.size() : nl + 1;
    ++line_no;
    if (trim(line).empty()) continue;
    nlohmann::ordered_json j;
    try {
      j = nlohmann::ordered_json::parse(line);
    } catch (const nlohmann::json::parse_error& ex) {
      throw Error(ErrorCode::MalformedLine, "line " + std::to_string(line_no) + ": " + ex.what(), line_no);
    }
    if (!j.is_object())
      throw Error(ErrorCode::MalformedLine, "line " + std::to_string(line_no) + ": not a JSON object", line_no);
    auto v = j.find("v");
    if (v == j.end() || !v->is_number_integer() || v->get<int>() != kSchemaVersion)
      throw Error(ErrorCode::MalformedLine, "line " + std::to_string(line_no) + ": unsupported schema version", line_no);
    try {
      fn(j, line_no);
    } catch (const Error& ex) {
      // A bad enum value inside a data file is a data error, not a config one.
      if (ex.category() != ErrorCategory::Config) throw;
      throw Error(ErrorCode::MalformedLine, "line " + std::to_string(line_no) + ": " + ex.what(), line_no);
    } catch (const std::exception& ex) {
      throw Error(ErrorCode::MalformedLine, "line " + std::to_string(line_no) + ": " + ex.what(), line_no);
    }
  }
}

}  // namespace detail

inline nlohmann::ordered_json to_json(const ManifestEntry& e) {
  using nlohmann::ordered_json;
  ordered_json j{{"v", kSchemaVersion},   {"utt_id", e.utt_id},
                 {"speaker_id", e.speaker_id}, {"dataset", e.dataset},
                 {"split", split::to_string(e.split)}};
  j["condition"] = e.condition ? ordered_json(e.condition->name()) : ordered_json(nullptr);
  j["audio_path"] = e.audio_path;
  j["start_ms"] = e.start_ms ? ordered_json(*e.start_ms) : ordered_json(nullptr);
  j["end_ms"] = e.end_ms ? ordered_json(*e.end_ms) : ordered_json(nullptr);
  j["text"] = e.text;
  return j;
}

/// Validated, sorted by (speaker_id, utt_id), one line per entry.
inline std::string serialize_manifest(std::vector<ManifestEntry> entries) {
  for (const auto& e : entries) detail::validate(e);
  std::sort(entries.begin(), entries.end(), [](const ManifestEntry& a, const ManifestEntry& b) {
    return std::tie(a.speaker_id, a.utt_id) < std::tie(b.speaker_id, b.utt_id);
  });
  std::map<std::string, bool> seen;
  std::string out;
  for (const auto& e : entries) {
    if (!seen.emplace(e.utt_id, true).second)
      throw Error(ErrorCode::DuplicateUttId, "duplicate utt_id in manifest: " + e.utt_id);
    out += detail::dump_line(to_json(e), e.utt_id);
  }
  return out;
}

inline void write_manifest(const std::filesystem::path& path, std::vector<ManifestEntry> entries) {
  write_file(path, serialize_manifest(std::move(entries)));
}

inline std::vector<ManifestEntry> parse_manifest(std::string_view content) {
  std::vector<ManifestEntry> out;
  std::map<std::string, bool> seen;
  detail::for_each_json_line(content, [&](const nlohmann::ordered_json& j, std::size_t line) {
    ManifestEntry e;
    e.utt_id = detail::get_string(j, "utt_id", line);
    e.speaker_id = detail::get_string(j, "speaker_id", line);
    e.dataset = detail::get_string(j, "dataset", line);
    e.split = split::parse_split(detail::get_string(j, "split", line));
    if (auto c = j.find("condition"); c != j.end() && !c->is_null()) e.condition = ConditionId::parse(c->get<std::string>());
    e.audio_path = detail::get_string(j, "audio_path", line);
    e.start_ms = detail::get_opt_int(j, "start_ms", line);
    e.end_ms = detail::get_opt_int(j, "end_ms", line);
    e.text = detail::get_string(j, "text", line);
    try {
      detail::validate(e);
    } catch (const Error& ex) {
      throw Error(ErrorCode::InvalidEntry, "line " + std::to_string(line) + ": " + ex.what(), line);
    }
    if (!seen.emplace(e.utt_id, true).second)
      throw Error(ErrorCode::DuplicateUttId, "line " + std::to_string(line) + ": duplicate utt_id " + e.utt_id, line);
    out.push_back(std::move(e));
  });
  return out;
}

inline std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path) {
  return parse_manifest(read_file(path));
}

// ---------------------------------------------------------------------------

class HypothesisSet {
 public:
  using Key = std::tuple<ConditionId, std::string, std::string>;  // condition, model, utt_id

  void add(HypothesisEntry e, std::size_t line = 0) {
    Key k{e.condition, e.model, e.utt_id};
    if (index_.count(k))
      throw Error(ErrorCode::DuplicateHypothesis,
                  "duplicate hypothesis for " + e.utt_id + " (condition " + std::string(e.condition.name()) +
                      (e.model.empty() ? "" : ", model " + e.model) + ")",
                  line);
    index_.emplace(std::move(k), entries_.size());
    entries_.push_back(std::move(e));
  }

  void merge(const HypothesisSet& other) {
    for (const auto& e : other.entries_) add(e);
  }

  const HypothesisEntry* find(ConditionId c, std::string_view model, std::string_view utt_id) const {
    auto it = index_.find(Key{c, std::string(model), std::string(utt_id)});
    return it == index_.end() ? nullptr : &entries_[it->second];
  }

  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  const std::vector<HypothesisEntry>& entries() const { return entries_; }

 private:
  std::vector<HypothesisEntry> entries_;
  std::map<Key, std::size_t> index_;
};

inline nlohmann::ordered_json to_json(const HypothesisEntry& h) {
  using nlohmann::ordered_json;
  ordered_json j{{"v", kSchemaVersion},
                 {"utt_id", h.utt_id},
                 {"speaker_id", h.speaker_id},
                 {"condition", h.condition.name()},
                 {"model", h.model},
                 {"hypothesis", h.hypothesis}};
  j["decode_meta"] = h.decode_meta ? *h.decode_meta : ordered_json(nullptr);
  return j;
}

/// Sorted by (condition, model, speaker_id, utt_id).
inline std::string serialize_hypotheses(std::vector<HypothesisEntry> entries) {
  std::sort(entries.begin(), entries.end(), [](const HypothesisEntry& a, const HypothesisEntry& b) {
    return std::tie(a.condition, a.model, a.speaker_id, a.utt_id) <
           std::tie(b.condition, b.model, b.speaker_id, b.utt_id);
  });
  std::string out;
  for (const auto& e : entries) out += detail::dump_line(to_json(e), e.utt_id);
  return out;
}

inline HypothesisSet parse_hypotheses(std::string_view content) {
  HypothesisSet set;
  detail::for_each_json_line(content, [&](const nlohmann::ordered_json& j, std::size_t line) {
    HypothesisEntry e;
    e.utt_id = detail::get_string(j, "utt_id", line);
    e.speaker_id = detail::get_string(j, "speaker_id", line);
    e.condition = ConditionId::parse(detail::get_string(j, "condition", line));
    if (auto m = j.find("model"); m != j.end() && !m->is_null()) e.model = m->get<std::string>();
    e.hypothesis = detail::get_string(j, "hypothesis", line);
    if (auto d = j.find("decode_meta"); d != j.end() && !d->is_null()) {
      if (!d->is_object())
        throw Error(ErrorCode::MalformedLine, "line " + std::to_string(line) + ": decode_meta must be an object", line);
      e.decode_meta = *d;
    }
    if (e.utt_id.empty()) throw Error(ErrorCode::MalformedLine, "line " + std::to_string(line) + ": empty utt_id", line);
    set.add(std::move(e), line);
  });
  return set;
}

inline HypothesisSet read_hypotheses(const std::filesystem::path& path) { return parse_hypotheses(read_file(path)); }

}  // namespace adaptbench::manifest
