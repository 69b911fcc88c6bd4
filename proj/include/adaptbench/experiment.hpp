#pragma once

// B1-B4 condition bookkeeping: job plans, per-speaker B3-B4 deltas and the
// results table.

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "adaptbench/error.hpp"
#include "adaptbench/manifest.hpp"
#include "adaptbench/util.hpp"

namespace adaptbench::experiment {

using manifest::Condition;
using manifest::ConditionId;

enum class Stage { SIFT, SSFT, DecodeOnly };
enum class InitFrom { Pretrained, SICheckpoint };

constexpr std::string_view to_string(Stage s) {
  return s == Stage::SIFT ? "SIFT" : s == Stage::SSFT ? "SSFT" : "DecodeOnly";
}
constexpr std::string_view to_string(InitFrom i) { return i == InitFrom::Pretrained ? "Pretrained" : "SICheckpoint"; }

struct EvalManifest {
  std::string evalset;  // row label in the results table, e.g. "SS-FT" or "FLEURS"
  std::string path;
  bool operator==(const EvalManifest&) const = default;
};

/// Opaque to this module; a backend must honor every field or refuse the job.
struct TrainHints {
  bool freeze_lower_encoder_half = false;
  bool reduced_epochs = false;
  std::string checkpoint_selection = "lowest validation WER";
  int temperature = 0;
  int beam_size = 5;
  bool operator==(const TrainHints&) const = default;
};

struct JobPlan {
  std::string job_id;
  ConditionId condition;
  Stage stage = Stage::DecodeOnly;
  InitFrom init_from = InitFrom::Pretrained;
  std::optional<std::string> speaker_id;
  std::optional<std::string> train_manifest;
  std::optional<std::string> valid_manifest;
  std::vector<EvalManifest> eval_manifests;
  TrainHints train_hints;

  /// Hypothesis `model` field for lines produced by this job.
  std::string model() const { return stage == Stage::SSFT && speaker_id ? *speaker_id : std::string{}; }
  bool operator==(const JobPlan&) const = default;
};

struct SpeakerManifests {
  std::string speaker_id;
  std::string train;
  std::string valid;
  std::string test;
};

struct PlanInputs {
  std::string si_train;
  std::string si_valid;
  // Decoded by the shared B1/B2 models: SI test, pooled SS test, OOD sets.
  std::vector<EvalManifest> shared_evals;
  std::vector<SpeakerManifests> speakers;
  std::vector<EvalManifest> ood;
  std::set<ConditionId> conditions{std::begin(manifest::kAllConditions), std::end(manifest::kAllConditions)};
  std::string ss_evalset = "SS-FT";
};

inline TrainHints decode_hints() {
  TrainHints h;
  h.checkpoint_selection.clear();
  return h;
}

/// One SIFT job (B2 training); B1/B2 DecodeOnly jobs per shared eval manifest;
/// per target speaker one B3 job (from the SI checkpoint) and one B4 job (from
/// the pretrained model) over identical manifests.
inline std::vector<JobPlan> plan_conditions(const PlanInputs& in) {
  const auto has = [&](Condition c) { return in.conditions.count(ConditionId{c}) > 0; };
  if (has(Condition::B3) && !has(Condition::B2))
    throw Error(ErrorCode::MissingSICheckpointRef, "B3 needs the SI-FT checkpoint, but B2 is not in the condition set");

  std::vector<JobPlan> jobs;
  if (has(Condition::B2)) {
    JobPlan j;
    j.job_id = "B2-sift";
    j.condition = {Condition::B2};
    j.stage = Stage::SIFT;
    j.init_from = InitFrom::Pretrained;
    j.train_manifest = in.si_train;
    j.valid_manifest = in.si_valid;
    jobs.push_back(std::move(j));
  }
  for (auto c : {Condition::B1, Condition::B2}) {
    if (!has(c)) continue;
    for (const auto& e : in.shared_evals) {
      JobPlan j;
      j.condition = {c};
      j.job_id = std::string(j.condition.name()) + "-decode-" + e.evalset;
      j.stage = Stage::DecodeOnly;
      j.init_from = c == Condition::B1 ? InitFrom::Pretrained : InitFrom::SICheckpoint;
      j.eval_manifests = {e};
      j.train_hints = decode_hints();
      jobs.push_back(std::move(j));
    }
  }
  auto speakers = in.speakers;
  std::sort(speakers.begin(), speakers.end(),
            [](const SpeakerManifests& a, const SpeakerManifests& b) { return a.speaker_id < b.speaker_id; });
  for (const auto& s : speakers) {
    for (auto c : {Condition::B3, Condition::B4}) {
      if (!has(c)) continue;
      JobPlan j;
      j.condition = {c};
      j.job_id = std::string(j.condition.name()) + "-ssft-" + s.speaker_id;
      j.stage = Stage::SSFT;
      j.init_from = c == Condition::B3 ? InitFrom::SICheckpoint : InitFrom::Pretrained;
      j.speaker_id = s.speaker_id;
      j.train_manifest = s.train;
      j.valid_manifest = s.valid;
      j.eval_manifests.push_back({in.ss_evalset, s.test});
      j.eval_manifests.insert(j.eval_manifests.end(), in.ood.begin(), in.ood.end());
      j.train_hints.freeze_lower_encoder_half = true;
      j.train_hints.reduced_epochs = true;
      jobs.push_back(std::move(j));
    }
  }
  return jobs;
}

inline nlohmann::ordered_json to_json(const TrainHints& h) {
  return {{"freeze_lower_encoder_half", h.freeze_lower_encoder_half},
          {"reduced_epochs", h.reduced_epochs},
          {"checkpoint_selection", h.checkpoint_selection},
          {"temperature", h.temperature},
          {"beam_size", h.beam_size}};
}

inline nlohmann::ordered_json to_json(const JobPlan& j) {
  using nlohmann::ordered_json;
  auto opt = [](const std::optional<std::string>& s) { return s ? ordered_json(*s) : ordered_json(nullptr); };
  ordered_json evals = ordered_json::array();
  for (const auto& e : j.eval_manifests) evals.push_back({{"evalset", e.evalset}, {"path", e.path}});
  ordered_json out{{"job_id", j.job_id},
                   {"condition", j.condition.name()},
                   {"init_lineage", manifest::to_string(j.condition.init_lineage())},
                   {"personalization", j.condition.personalization()},
                   {"stage", to_string(j.stage)},
                   {"init_from", to_string(j.init_from)}};
  out["speaker_id"] = opt(j.speaker_id);
  out["train_manifest"] = opt(j.train_manifest);
  out["valid_manifest"] = opt(j.valid_manifest);
  out["eval_manifests"] = std::move(evals);
  out["train_hints"] = to_json(j.train_hints);
  return out;
}

inline nlohmann::ordered_json plan_to_json(const std::vector<JobPlan>& jobs) {
  nlohmann::ordered_json arr = nlohmann::ordered_json::array();
  for (const auto& j : jobs) arr.push_back(to_json(j));
  return {{"v", 1}, {"jobs", std::move(arr)}};
}

inline std::vector<JobPlan> plan_from_json(const nlohmann::json& doc) {
  auto bad = [](const std::string& why) { return Error(ErrorCode::InvalidEntry, "plan: " + why); };
  if (!doc.is_object() || doc.value("v", 0) != 1 || !doc.contains("jobs") || !doc["jobs"].is_array())
    throw bad("expected {\"v\":1,\"jobs\":[...]}");
  auto opt = [](const nlohmann::json& j, const char* k) -> std::optional<std::string> {
    if (!j.contains(k) || j[k].is_null()) return std::nullopt;
    return j[k].get<std::string>();
  };
  std::vector<JobPlan> out;
  try {
    for (const auto& j : doc["jobs"]) {
      JobPlan p;
      p.job_id = j.at("job_id").get<std::string>();
      p.condition = ConditionId::parse(j.at("condition").get<std::string>());
      auto stage = j.at("stage").get<std::string>();
      p.stage = stage == "SIFT" ? Stage::SIFT : stage == "SSFT" ? Stage::SSFT : Stage::DecodeOnly;
      p.init_from = j.at("init_from").get<std::string>() == "SICheckpoint" ? InitFrom::SICheckpoint : InitFrom::Pretrained;
      p.speaker_id = opt(j, "speaker_id");
      p.train_manifest = opt(j, "train_manifest");
      p.valid_manifest = opt(j, "valid_manifest");
      for (const auto& e : j.at("eval_manifests"))
        p.eval_manifests.push_back({e.at("evalset").get<std::string>(), e.at("path").get<std::string>()});
      const auto& h = j.at("train_hints");
      p.train_hints.freeze_lower_encoder_half = h.at("freeze_lower_encoder_half").get<bool>();
      p.train_hints.reduced_epochs = h.at("reduced_epochs").get<bool>();
      p.train_hints.checkpoint_selection = h.at("checkpoint_selection").get<std::string>();
      p.train_hints.temperature = h.at("temperature").get<int>();
      p.train_hints.beam_size = h.at("beam_size").get<int>();
      out.push_back(std::move(p));
    }
  } catch (const nlohmann::json::exception& e) {
    throw bad(e.what());
  }
  return out;
}

/// Top-level keys in which two job plans differ.
inline std::set<std::string> structural_diff(const JobPlan& a, const JobPlan& b) {
  auto ja = to_json(a), jb = to_json(b);
  std::set<std::string> keys;
  for (auto it = ja.begin(); it != ja.end(); ++it)
    if (!jb.contains(it.key()) || jb[it.key()] != it.value()) keys.insert(it.key());
  for (auto it = jb.begin(); it != jb.end(); ++it)
    if (!ja.contains(it.key())) keys.insert(it.key());
  return keys;
}

// ---------------------------------------------------------------------------
// Per-speaker deltas

enum class Outcome { Win, Loss, Tie };
enum class MedianBase { All, ExcludeTies };

constexpr std::string_view to_string(Outcome o) {
  return o == Outcome::Win ? "win" : o == Outcome::Loss ? "loss" : "tie";
}
constexpr std::string_view to_string(MedianBase m) { return m == MedianBase::All ? "all" : "excl-ties"; }

inline MedianBase parse_median_base(std::string_view s) {
  if (s == "all") return MedianBase::All;
  if (s == "excl-ties") return MedianBase::ExcludeTies;
  throw Error(ErrorCode::InvalidValue, "median base must be all|excl-ties, got '" + std::string(s) + "'");
}

// |delta| below this (percentage points) rounds to 0.000 and counts as a tie.
inline constexpr double kTieThreshold = 0.0005;

struct ErrorRates {
  double wer = 0;
  double cer = 0;
};

struct SpeakerDelta {
  std::string speaker_id;
  double delta_wer = 0;  // WER_B3 - WER_B4; negative favors B3
  double delta_cer = 0;
  Outcome outcome = Outcome::Tie;
};

struct DeltaReport {
  std::vector<SpeakerDelta> per_speaker;  // by speaker_id
  std::size_t win_count = 0;
  std::size_t loss_count = 0;
  std::size_t tie_count = 0;
  std::optional<double> win_rate_excl_ties;  // percent; absent when every speaker ties
  std::optional<double> median_delta_wer;
  std::optional<double> median_delta_cer;
  MedianBase median_base = MedianBase::All;
};

inline std::optional<double> median(std::vector<double> v) {
  if (v.empty()) return std::nullopt;
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : (v[n / 2 - 1] + v[n / 2]) / 2.0;
}

inline Outcome classify_delta(double delta) {
  if (std::fabs(delta) < kTieThreshold) return Outcome::Tie;
  return delta < 0 ? Outcome::Win : Outcome::Loss;
}

inline DeltaReport compute_deltas(const std::map<std::string, ErrorRates>& b3,
                                  const std::map<std::string, ErrorRates>& b4,
                                  MedianBase median_base = MedianBase::All) {
  std::set<std::string> k3, k4;
  for (const auto& [k, _] : b3) k3.insert(k);
  for (const auto& [k, _] : b4) k4.insert(k);
  if (k3 != k4) {
    std::string msg = "B3 and B4 cover different speakers:";
    for (const auto& k : k3)
      if (!k4.count(k)) msg += " " + k + "(B3 only)";
    for (const auto& k : k4)
      if (!k3.count(k)) msg += " " + k + "(B4 only)";
    throw Error(ErrorCode::SpeakerSetMismatch, msg);
  }

  DeltaReport r;
  r.median_base = median_base;
  std::vector<double> dw, dc;
  for (const auto& [spk, s3] : b3) {
    const auto& s4 = b4.at(spk);
    SpeakerDelta d{spk, s3.wer - s4.wer, s3.cer - s4.cer, Outcome::Tie};
    d.outcome = classify_delta(d.delta_wer);
    switch (d.outcome) {
      case Outcome::Win: ++r.win_count; break;
      case Outcome::Loss: ++r.loss_count; break;
      case Outcome::Tie: ++r.tie_count; break;
    }
    if (median_base == MedianBase::All || d.outcome != Outcome::Tie) {
      dw.push_back(d.delta_wer);
      dc.push_back(d.delta_cer);
    }
    r.per_speaker.push_back(std::move(d));
  }
  if (r.win_count + r.loss_count > 0)
    r.win_rate_excl_ties = 100.0 * static_cast<double>(r.win_count) / static_cast<double>(r.win_count + r.loss_count);
  r.median_delta_wer = median(std::move(dw));
  r.median_delta_cer = median(std::move(dc));
  return r;
}

inline std::string opt_fixed(const std::optional<double>& v, int decimals) {
  return v ? format_fixed(*v, decimals) : std::string("n/a");
}

/// Plot data: one row per speaker, sorted by delta_wer then speaker_id.
inline std::string render_delta_tsv(const DeltaReport& r) {
  auto rows = r.per_speaker;
  std::stable_sort(rows.begin(), rows.end(), [](const SpeakerDelta& a, const SpeakerDelta& b) {
    if (a.delta_wer != b.delta_wer) return a.delta_wer < b.delta_wer;
    return a.speaker_id < b.speaker_id;
  });
  std::string out = "speaker_id\tdelta_wer\tdelta_cer\toutcome\n";
  for (const auto& d : rows) {
    out += d.speaker_id + "\t" + format_fixed(d.delta_wer, 3) + "\t" + format_fixed(d.delta_cer, 3) + "\t" +
           std::string(to_string(d.outcome)) + "\n";
  }
  return out;
}

inline std::string render_delta_summary(const DeltaReport& r) {
  std::string out;
  out += "B3 - B4 per-speaker deltas (negative favors B3)\n";
  out += "  speakers: " + std::to_string(r.per_speaker.size()) + "\n";
  out += "  wins: " + std::to_string(r.win_count) + "  losses: " + std::to_string(r.loss_count) +
         "  ties: " + std::to_string(r.tie_count) + "\n";
  out += "  win rate (excluding ties): " +
         (r.win_rate_excl_ties ? format_fixed(*r.win_rate_excl_ties, 1) + "%" : std::string("n/a")) + "\n";
  out += "  median delta WER: " + opt_fixed(r.median_delta_wer, 3) + "  median delta CER: " +
         opt_fixed(r.median_delta_cer, 3) + "  (median over: " + std::string(to_string(r.median_base)) + ")\n";
  return out;
}

// ---------------------------------------------------------------------------
// Results table

enum class Aggregation { Micro, ModelMean };

constexpr std::string_view to_string(Aggregation a) { return a == Aggregation::Micro ? "micro" : "model-mean"; }

struct Cell {
  double wer = 0;
  double cer = 0;
  std::size_t n_utts = 0;
};

class ResultsTable {
 public:
  void set(const std::string& dataset, const std::string& evalset, ConditionId c, Cell cell,
           Aggregation agg = Aggregation::Micro) {
    auto& ds = dataset_entry(dataset);
    auto row_key = std::make_pair(evalset, agg);
    if (std::find(ds.rows.begin(), ds.rows.end(), row_key) == ds.rows.end()) ds.rows.push_back(row_key);
    cells_[{dataset, evalset, agg, c}] = cell;
  }

  /// Registers a row without values, so every condition renders as absent.
  void declare_row(const std::string& dataset, const std::string& evalset, Aggregation agg = Aggregation::Micro) {
    auto& ds = dataset_entry(dataset);
    auto row_key = std::make_pair(evalset, agg);
    if (std::find(ds.rows.begin(), ds.rows.end(), row_key) == ds.rows.end()) ds.rows.push_back(row_key);
  }

  std::optional<Cell> get(const std::string& dataset, const std::string& evalset, ConditionId c,
                          Aggregation agg = Aggregation::Micro) const {
    auto it = cells_.find({dataset, evalset, agg, c});
    if (it == cells_.end()) return std::nullopt;
    return it->second;
  }

  std::size_t row_count() const {
    std::size_t n = 0;
    for (const auto& d : datasets_) n += d.rows.size();
    return n;
  }

  /// Grouped by dataset; columns B1..B4 (WER, CER); "--" marks absent cells.
  std::string render_text() const {
    std::size_t label_w = 7;
    for (const auto& d : datasets_)
      for (const auto& r : d.rows) label_w = std::max(label_w, row_label(r).size());
    label_w += 2;
    auto pad_right = [](std::string s, std::size_t w) {
      if (s.size() < w) s.append(w - s.size(), ' ');
      return s;
    };
    auto pad_left = [](std::string s, std::size_t w) {
      if (s.size() < w) s.insert(0, w - s.size(), ' ');
      return s;
    };
    constexpr std::size_t kNum = 9;
    std::string out;
    for (const auto& d : datasets_) {
      out += "[" + d.name + "]\n";
      std::string header = pad_right("evalset", label_w);
      for (auto c : manifest::kAllConditions) {
        header += pad_left(std::string(c.name()) + " WER", kNum);
        header += pad_left(std::string(c.name()) + " CER", kNum);
      }
      out += header + "\n";
      for (const auto& r : d.rows) {
        std::string line = pad_right(row_label(r), label_w);
        for (auto c : manifest::kAllConditions) {
          auto cell = get(d.name, r.first, c, r.second);
          line += pad_left(cell ? format_fixed(cell->wer, 2) : "--", kNum);
          line += pad_left(cell ? format_fixed(cell->cer, 2) : "--", kNum);
        }
        out += line + "\n";
      }
      out += "\n";
    }
    return out;
  }

  std::string render_csv() const {
    std::string out = "dataset,evalset,condition,aggregation,wer,cer,n_utts\n";
    for (const auto& d : datasets_)
      for (const auto& r : d.rows)
        for (auto c : manifest::kAllConditions) {
          auto cell = get(d.name, r.first, c, r.second);
          out += csv_field(d.name) + "," + csv_field(r.first) + "," + std::string(c.name()) + "," +
                 std::string(to_string(r.second)) + ",";
          out += cell ? format_fixed(cell->wer, 2) + "," + format_fixed(cell->cer, 2) + "," + std::to_string(cell->n_utts)
                      : std::string("--,--,0");
          out += "\n";
        }
    return out;
  }

 private:
  using RowKey = std::pair<std::string, Aggregation>;
  struct DatasetRows {
    std::string name;
    std::vector<RowKey> rows;
  };

  static std::string row_label(const RowKey& r) {
    return r.second == Aggregation::Micro ? r.first : r.first + " [model-mean]";
  }

  static std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string q = "\"";
    for (char c : s) {
      if (c == '"') q += '"';
      q += c;
    }
    return q + "\"";
  }

  DatasetRows& dataset_entry(const std::string& name) {
    for (auto& d : datasets_)
      if (d.name == name) return d;
    datasets_.push_back({name, {}});
    return datasets_.back();
  }

  std::vector<DatasetRows> datasets_;
  std::map<std::tuple<std::string, std::string, Aggregation, ConditionId>, Cell> cells_;
};

}  // namespace adaptbench::experiment
