#pragma once

// Config-driven stages: load -> partition -> split -> manifests -> plan ->
// (mock) decode -> report. Each stage returns artifacts as relative path ->
// file content, so outputs are byte-deterministic and independent of `jobs`.

#include <algorithm>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "adaptbench/chat.hpp"
#include "adaptbench/config.hpp"
#include "adaptbench/error.hpp"
#include "adaptbench/experiment.hpp"
#include "adaptbench/filter.hpp"
#include "adaptbench/manifest.hpp"
#include "adaptbench/normalize.hpp"
#include "adaptbench/scoring.hpp"
#include "adaptbench/split.hpp"
#include "adaptbench/util.hpp"

namespace adaptbench::pipeline {

namespace fs = std::filesystem;
using manifest::ConditionId;
using manifest::ManifestEntry;

using Artifacts = std::map<std::string, std::string>;

inline constexpr std::string_view kSiEvalset = "SI-FT";
inline constexpr std::string_view kSsEvalset = "SS-FT";

enum class DatasetKind { Chat, Wordlist };

struct MockSettings {
  std::uint64_t seed = 0;
  double sub = 0.05;
  double del = 0.03;
  double ins = 0.02;
  double offset[4] = {0.20, 0.10, 0.0, 0.03};  // B1..B4
};

struct OodSet {
  std::string name;
  fs::path path;
};

struct Settings {
  DatasetKind kind = DatasetKind::Chat;
  std::string dataset_name;
  std::vector<fs::path> inputs;
  std::string audio_dir;
  bool include_all_speakers = false;
  normalize::NormalizationPolicy policy;
  bool filter_si = true;
  split::Scheme scheme = split::Scheme::Ratio811;
  split::Fraction fraction;
  split::Rounding rounding = split::Rounding::Round;
  bool selection_filtered = false;
  std::uint64_t seed = 0;
  split::Fraction holdout;
  std::optional<fs::path> custom_rules;
  scoring::CerSpaces cer_spaces = scoring::CerSpaces::Include;
  std::set<ConditionId> conditions;
  std::vector<OodSet> ood;
  experiment::MedianBase median_base = experiment::MedianBase::All;
  std::optional<fs::path> hyps_dir;
  bool mock_enabled = false;
  MockSettings mock;
  fs::path out_dir;
  std::string fingerprint;

  /// Resolves and validates the config. `need_output` is false for the
  /// stdout-only stages.
  static Settings from(const config::Config& c, bool need_output = true) {
    Settings s;
    auto kind = c.require("dataset.kind");
    if (kind == "chat")
      s.kind = DatasetKind::Chat;
    else if (kind == "wordlist")
      s.kind = DatasetKind::Wordlist;
    else
      throw Error(ErrorCode::InvalidValue, "dataset.kind must be chat|wordlist, got '" + kind + "'");
    s.dataset_name = c.require("dataset.name");
    auto inputs = c.list("dataset.inputs");
    if (inputs.empty()) throw Error(ErrorCode::MissingKey, "missing required config key 'dataset.inputs'");
    for (const auto& p : inputs) s.inputs.push_back(c.resolve(p));
    s.audio_dir = c.str("dataset.audio_dir");
    s.include_all_speakers = c.flag("dataset.include_all_speakers");

    s.policy.apply_replacements = c.flag("normalize.apply_replacements");
    s.policy.keep_retraced_words = c.flag("normalize.keep_retraced_words");
    s.policy.drop_unintelligible = c.flag("normalize.drop_unintelligible");
    s.policy.drop_nonspeech = c.flag("normalize.drop_nonspeech");
    s.policy.drop_fragments = c.flag("normalize.drop_fragments");
    s.policy.lowercase = c.flag("normalize.lowercase");

    auto mode = c.str("filter.mode");
    if (mode.empty()) mode = s.kind == DatasetKind::Chat ? "si" : "none";
    if (mode != "si" && mode != "none")
      throw Error(ErrorCode::InvalidValue, "filter.mode must be si|none, got '" + mode + "'");
    s.filter_si = mode == "si";
    if (s.filter_si && s.kind == DatasetKind::Wordlist)
      throw Error(ErrorCode::InvalidValue, "filter.mode=si needs CHAT error codes; use none for wordlist datasets");

    auto scheme = c.str("split.scheme");
    if (scheme.empty()) scheme = s.kind == DatasetKind::Chat ? "ratio811" : "blocks";
    s.scheme = split::parse_scheme(scheme);
    s.fraction = split::Fraction::parse(c.str("split.fraction"));
    s.rounding = split::parse_rounding(c.str("split.rounding"));
    auto base = c.str("split.selection_base");
    if (base != "all" && base != "filtered")
      throw Error(ErrorCode::InvalidValue, "split.selection_base must be all|filtered, got '" + base + "'");
    s.selection_filtered = base == "filtered";
    s.seed = c.u64("split.seed");
    s.holdout = split::Fraction::parse(c.str("split.holdout_fraction"));

    if (!c.str("scoring.custom_rules").empty()) s.custom_rules = c.path("scoring.custom_rules");
    s.cer_spaces = scoring::parse_cer_spaces(c.str("scoring.cer_spaces"));

    for (const auto& cond : c.list("experiment.conditions")) s.conditions.insert(ConditionId::parse(cond));
    for (const auto& o : c.list("experiment.ood")) {
      auto eq = o.find('=');
      if (eq == std::string::npos || eq == 0 || eq + 1 == o.size())
        throw Error(ErrorCode::InvalidValue, "experiment.ood entries must be NAME=path, got '" + o + "'");
      auto name = o.substr(0, eq);
      if (name == kSiEvalset || name == kSsEvalset || name.find('/') != std::string::npos)
        throw Error(ErrorCode::InvalidValue, "invalid OOD set name '" + name + "'");
      s.ood.push_back({name, c.resolve(o.substr(eq + 1))});
    }
    s.median_base = experiment::parse_median_base(c.str("experiment.median_base"));
    if (!c.str("experiment.hyps").empty()) s.hyps_dir = c.path("experiment.hyps");

    s.mock_enabled = c.flag("mock.enabled");
    s.mock.seed = c.u64("mock.seed");
    s.mock.sub = c.real("mock.sub");
    s.mock.del = c.real("mock.del");
    s.mock.ins = c.real("mock.ins");
    s.mock.offset[0] = c.real("mock.offset_b1");
    s.mock.offset[1] = c.real("mock.offset_b2");
    s.mock.offset[2] = c.real("mock.offset_b3");
    s.mock.offset[3] = c.real("mock.offset_b4");

    s.out_dir = c.path("output.dir");
    if (s.out_dir.empty() && need_output) throw Error(ErrorCode::MissingKey, "missing required config key 'output.dir'");
    s.fingerprint = c.fingerprint();
    return s;
  }

  scoring::ScoringNormalizer normalizer() const {
    scoring::ScoringNormalizer n;
    if (custom_rules) n.load_rules_tsv(read_file(*custom_rules));
    return n;
  }
};

// ---------------------------------------------------------------------------
// Loading

struct UttRecord {
  std::string utt_id;
  std::string speaker_id;
  std::string audio_path;
  std::optional<chat::TimeAlignment> alignment;
  std::optional<std::int64_t> duration_ms;
  std::optional<int> block;
  std::string text;
  bool empty = false;
  bool included = true;  // SI filter verdict
  std::optional<filter::FilterDecision> decision;
};

struct Corpus {
  std::vector<chat::ChatDocument> docs;
  std::vector<UttRecord> records;
  std::vector<normalize::NormalizedUtterance> normalized;
  std::size_t skipped_speaker_utts = 0;
};

/// Expands directories (recursively, `ext` files only) and sorts the result.
inline std::vector<fs::path> collect_inputs(const std::vector<fs::path>& inputs, std::string_view ext) {
  std::vector<fs::path> files;
  for (const auto& p : inputs) {
    std::error_code ec;
    if (fs::is_directory(p, ec)) {
      for (const auto& e : fs::recursive_directory_iterator(p))
        if (e.is_regular_file() && e.path().extension() == ext) files.push_back(e.path());
    } else if (fs::exists(p, ec)) {
      files.push_back(p);
    } else {
      throw Error(ErrorCode::FileNotFound, "input not found: " + p.string());
    }
  }
  std::sort(files.begin(), files.end());
  files.erase(std::unique(files.begin(), files.end()), files.end());
  return files;
}

inline std::vector<chat::ChatDocument> parse_files(const std::vector<fs::path>& files, std::size_t jobs) {
  std::vector<chat::ChatDocument> docs(files.size());
  parallel_for(files.size(), jobs, [&](std::size_t i) {
    try {
      docs[i] = chat::parse_document(read_file(files[i]), files[i].string());
    } catch (const Error& e) {
      if (e.category() != ErrorCategory::Data) throw;
      throw Error(e.code(), files[i].string() + ": " + e.what(), e.line());
    }
  });
  return docs;
}

/// Speaker identity: the file stem for the participant (PAR), stem.CODE for
/// anyone else.
inline std::string speaker_id_for(const chat::ChatDocument& doc, const std::string& code) {
  auto stem = fs::path(doc.source_path).stem().string();
  return code == "PAR" ? stem : stem + "." + code;
}

inline Corpus load_chat(const Settings& s, std::size_t jobs) {
  Corpus c;
  auto files = collect_inputs(s.inputs, ".cha");
  c.docs = parse_files(files, jobs);
  // Corpus-relative source paths keep outputs independent of where the run lives.
  std::vector<const chat::Utterance*> utts;
  std::vector<const chat::ChatDocument*> owners;
  for (const auto& d : c.docs)
    for (const auto& u : d.utterances) {
      if (!s.include_all_speakers && u.speaker_code != "PAR") {
        ++c.skipped_speaker_utts;
        continue;
      }
      utts.push_back(&u);
      owners.push_back(&d);
    }
  c.normalized.resize(utts.size());
  c.records.resize(utts.size());
  parallel_for(utts.size(), jobs, [&](std::size_t i) {
    const auto& u = *utts[i];
    const auto& d = *owners[i];
    auto n = normalize::normalize_utterance(u, s.policy);
    UttRecord r;
    r.utt_id = u.utt_id;
    r.speaker_id = speaker_id_for(d, u.speaker_code);
    auto media = d.media.value_or(fs::path(d.source_path).stem().string());
    r.audio_path = (fs::path(s.audio_dir) / (media + ".wav")).generic_string();
    r.alignment = u.alignment;
    if (u.alignment) r.duration_ms = u.alignment->duration_ms();
    r.text = n.text;
    r.empty = n.empty;
    if (s.filter_si) {
      r.decision = filter::decide(u, n.empty);
      r.included = r.decision->included;
    } else {
      r.included = !n.empty;
    }
    c.records[i] = std::move(r);
    c.normalized[i] = std::move(n);
  });
  return c;
}

/// Wordlist TSV: a header row naming at least utt_id, speaker_id, block,
/// audio_path, duration_ms and text (any column order).
inline Corpus load_wordlist(const Settings& s) {
  Corpus c;
  for (const auto& file : collect_inputs(s.inputs, ".tsv")) {
    auto content = read_file(file);
    std::map<std::string, std::size_t> col;
    std::size_t pos = 0, line_no = 0;
    auto fail = [&](const std::string& why) {
      return Error(ErrorCode::MalformedLine, file.string() + ":" + std::to_string(line_no) + ": " + why, line_no);
    };
    while (pos < content.size()) {
      auto nl = content.find('\n', pos);
      std::string line = content.substr(pos, nl == std::string::npos ? std::string::npos : nl - pos);
      pos = nl == std::string::npos ? content.size() : nl + 1;
      ++line_no;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (trim(line).empty()) continue;
      std::vector<std::string> fields;
      std::size_t start = 0;
      while (true) {
        auto tab = line.find('\t', start);
        fields.emplace_back(trim(std::string_view(line).substr(start, tab == std::string::npos ? std::string::npos : tab - start)));
        if (tab == std::string::npos) break;
        start = tab + 1;
      }
      if (col.empty()) {
        for (std::size_t i = 0; i < fields.size(); ++i) col[fields[i]] = i;
        for (auto req : {"utt_id", "speaker_id", "block", "audio_path", "duration_ms", "text"})
          if (!col.count(req)) throw fail(std::string("header lacks column '") + req + "'");
        continue;
      }
      auto get = [&](const char* name) -> const std::string& {
        auto i = col.at(name);
        if (i >= fields.size()) throw fail(std::string("missing column '") + name + "'");
        return fields[i];
      };
      UttRecord r;
      r.utt_id = get("utt_id");
      r.speaker_id = get("speaker_id");
      r.audio_path = get("audio_path");
      if (r.utt_id.empty() || r.speaker_id.empty()) throw fail("empty utt_id or speaker_id");
      auto block = get("block");
      if (!block.empty() && (block[0] == 'B' || block[0] == 'b')) block.erase(0, 1);
      if (block == "1" || block == "2" || block == "3") r.block = block[0] - '0';
      try {
        std::size_t used = 0;
        auto d = std::stoll(get("duration_ms"), &used);
        if (used != get("duration_ms").size() || d < 0) throw std::invalid_argument("duration");
        r.duration_ms = d;
      } catch (const std::invalid_argument&) {
        throw fail("duration_ms must be a non-negative integer");
      } catch (const std::out_of_range&) {
        throw fail("duration_ms out of range");
      }
      r.text = join(split_ws(get("text")));
      r.empty = r.text.empty();
      r.included = !r.empty;
      c.records.push_back(std::move(r));
    }
  }
  return c;
}

inline Corpus load_corpus(const Settings& s, std::size_t jobs) {
  return s.kind == DatasetKind::Chat ? load_chat(s, jobs) : load_wordlist(s);
}

// ---------------------------------------------------------------------------
// Partition and splits

struct PartitionResult {
  std::vector<split::SpeakerStat> stats;
  split::SpeakerPartition partition;
};

inline PartitionResult build_partition(const Settings& s, const Corpus& c) {
  std::vector<split::UtteranceTiming> timing;
  for (const auto& r : c.records) timing.push_back({r.speaker_id, r.duration_ms});
  PartitionResult out;
  out.stats = split::compute_speaker_stats(timing);

  std::vector<split::SpeakerStat> base = out.stats;
  if (s.selection_filtered) {
    std::set<std::string> with_included;
    for (const auto& r : c.records)
      if (r.included) with_included.insert(r.speaker_id);
    std::erase_if(base, [&](const split::SpeakerStat& st) { return !with_included.count(st.speaker_id); });
  }
  auto ranked = split::rank_speakers(base);
  out.partition = split::select_ss(ranked, s.fraction, s.rounding);
  for (const auto& st : out.stats)
    if (!out.partition.ss_speakers.count(st.speaker_id)) out.partition.si_speakers.insert(st.speaker_id);
  return out;
}

inline bool usable(const Settings& s, const UttRecord& r) {
  return !r.empty && (s.kind == DatasetKind::Wordlist || r.alignment.has_value());
}

struct SplitResult {
  split::SplitAssignment ss;
  split::SplitAssignment si;
  std::vector<std::string> si_pool;
  std::map<std::string, std::vector<std::string>> ss_utts;  // speaker -> usable utt_ids
};

inline split::SplitAssignment split_group(const Settings& s, const std::string& key,
                                          const std::vector<const UttRecord*>& utts) {
  if (s.scheme == split::Scheme::Ratio811) {
    std::vector<std::string> ids;
    for (auto* r : utts) ids.push_back(r->utt_id);
    return split::split_ratio(key, std::move(ids), s.seed);
  }
  std::vector<split::BlockedUtterance> blocked;
  for (auto* r : utts) blocked.push_back({r->utt_id, r->block});
  return split::split_blocks(key, blocked, s.holdout, s.seed);
}

inline SplitResult build_splits(const Settings& s, const Corpus& c, const split::SpeakerPartition& p) {
  SplitResult out;
  out.ss.scheme = out.si.scheme = s.scheme;
  out.ss.seed = out.si.seed = s.seed;

  std::map<std::string, std::vector<const UttRecord*>> by_speaker;
  std::map<std::string, const UttRecord*> by_id;
  for (const auto& r : c.records) {
    if (!by_id.emplace(r.utt_id, &r).second)
      throw Error(ErrorCode::DuplicateUttId, "utterance id " + r.utt_id + " occurs twice in the corpus");
    if (usable(s, r)) by_speaker[r.speaker_id].push_back(&r);
  }

  for (const auto& spk : p.ss_speakers) {
    auto& utts = by_speaker[spk];
    for (auto* r : utts) out.ss_utts[spk].push_back(r->utt_id);
    out.ss.merge(split_group(s, spk, utts));
  }

  std::vector<split::PoolCandidate> candidates;
  for (const auto& r : c.records)
    if (usable(s, r)) candidates.push_back({r.utt_id, r.speaker_id, r.included});
  out.si_pool = split::build_si_pool(p, candidates);
  if (!out.si_pool.empty()) {
    std::vector<const UttRecord*> pool;
    for (const auto& id : out.si_pool) pool.push_back(by_id.at(id));
    out.si = split_group(s, "SI", pool);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Manifests and plan

struct ManifestSet {
  std::map<std::string, std::vector<ManifestEntry>> files;  // relative path -> entries
  experiment::PlanInputs plan_inputs;
};

inline std::string ss_dir(const std::string& speaker) { return "manifests/ss/" + speaker + "/"; }

inline ManifestSet build_manifests(const Settings& s, const Corpus& c, const PartitionResult& part,
                                   const SplitResult& sr) {
  ManifestSet m;
  auto entry = [&](const UttRecord& r, split::Split sp, std::optional<ConditionId> cond) {
    ManifestEntry e;
    e.utt_id = r.utt_id;
    e.audio_path = r.audio_path;
    if (s.kind == DatasetKind::Chat && r.alignment) {
      e.start_ms = r.alignment->start_ms;
      e.end_ms = r.alignment->end_ms;
    }
    e.text = r.text;
    e.speaker_id = r.speaker_id;
    e.split = sp;
    e.condition = cond;
    e.dataset = s.dataset_name;
    return e;
  };
  const std::string si_train = "manifests/si/train.jsonl", si_valid = "manifests/si/valid.jsonl",
                    si_test = "manifests/si/test.jsonl", ss_test = "manifests/ss/test.jsonl";
  m.files[si_train];
  m.files[si_valid];
  m.files[si_test];

  for (const auto& r : c.records) {
    if (auto it = sr.si.assignments.find(r.utt_id); it != sr.si.assignments.end()) {
      switch (it->second) {
        case split::Split::Train: m.files[si_train].push_back(entry(r, it->second, ConditionId{manifest::Condition::B2})); break;
        case split::Split::Valid: m.files[si_valid].push_back(entry(r, it->second, ConditionId{manifest::Condition::B2})); break;
        case split::Split::Test: m.files[si_test].push_back(entry(r, it->second, std::nullopt)); break;
      }
    }
    if (auto it = sr.ss.assignments.find(r.utt_id); it != sr.ss.assignments.end()) {
      auto e = entry(r, it->second, std::nullopt);
      m.files[ss_dir(r.speaker_id) + std::string(split::to_string(it->second)) + ".jsonl"].push_back(e);
      if (it->second == split::Split::Test) m.files[ss_test].push_back(e);
    }
  }

  auto& pi = m.plan_inputs;
  pi.si_train = si_train;
  pi.si_valid = si_valid;
  pi.conditions = s.conditions;
  pi.ss_evalset = std::string(kSsEvalset);
  pi.shared_evals.push_back({std::string(kSiEvalset), si_test});
  if (!part.partition.ss_speakers.empty()) {
    m.files[ss_test];
    pi.shared_evals.push_back({std::string(kSsEvalset), ss_test});
  }
  for (const auto& spk : part.partition.ss_speakers) {
    auto dir = ss_dir(spk);
    m.files[dir + "train.jsonl"];
    m.files[dir + "valid.jsonl"];
    m.files[dir + "test.jsonl"];
    pi.speakers.push_back({spk, dir + "train.jsonl", dir + "valid.jsonl", dir + "test.jsonl"});
  }
  for (const auto& o : s.ood) {
    auto rel = "manifests/ood/" + o.name + ".jsonl";
    try {
      m.files[rel] = manifest::read_manifest(o.path);
    } catch (const Error& e) {
      throw Error(e.code(), "OOD manifest " + o.path.string() + ": " + e.what(), e.line());
    }
    pi.ood.push_back({o.name, rel});
    pi.shared_evals.push_back({o.name, rel});
  }
  return m;
}

// ---------------------------------------------------------------------------
// Mock decoding

namespace detail {

inline constexpr std::string_view kMockVocabulary[] = {
    "the", "a",    "and",  "to",   "of",   "in",  "it",   "that", "is",  "was",
    "he",  "she",  "they", "we",   "you",  "uh",  "um",   "yes",  "no",  "go",
    "get", "see",  "said", "went", "then", "so",  "well", "just", "like", "there",
};

inline std::string mock_word(SplitMix64& g, std::string_view avoid) {
  constexpr std::size_t n = std::size(kMockVocabulary);
  auto i = g.below(n);
  if (kMockVocabulary[i] == avoid) i = (i + 1 + g.below(n - 1)) % n;
  return std::string(kMockVocabulary[i]);
}

}  // namespace detail

/// Corrupts a reference with per-word deletion/substitution and insertion
/// probabilities. The RNG stream is keyed by (seed, condition, model, utt_id).
inline std::string mock_hypothesis(const std::string& reference, ConditionId cond, std::string_view model,
                                   std::string_view utt_id, const MockSettings& m) {
  const double off = m.offset[static_cast<int>(cond.id)];
  auto clamp01 = [](double v) { return std::clamp(v, 0.0, 1.0); };
  const double p_del = clamp01(m.del + off), p_sub = clamp01(m.sub + off), p_ins = clamp01(m.ins + off);
  std::string key = std::string(cond.name()) + "|" + std::string(model) + "|" + std::string(utt_id);
  SplitMix64 g(mix_seed(m.seed, key));
  std::vector<std::string> out;
  for (const auto& w : split_ws(reference)) {
    double u = g.unit();
    if (u < p_del) {
      // dropped
    } else if (u < p_del + p_sub) {
      out.push_back(detail::mock_word(g, w));
    } else {
      out.push_back(w);
    }
    if (g.unit() < p_ins) out.push_back(detail::mock_word(g, ""));
  }
  return join(out);
}

using ManifestLoader = std::function<const std::vector<ManifestEntry>&(const std::string&)>;

/// One hypothesis file per job that has evaluation manifests.
inline Artifacts mock_decode(const std::vector<experiment::JobPlan>& plan, const ManifestLoader& load,
                             const MockSettings& m, std::size_t jobs) {
  std::vector<const experiment::JobPlan*> decoding;
  for (const auto& j : plan)
    if (!j.eval_manifests.empty()) decoding.push_back(&j);
  for (const auto* j : decoding)
    for (const auto& e : j->eval_manifests) load(e.path);  // warm the cache before going parallel
  std::vector<std::string> contents(decoding.size());
  parallel_for(decoding.size(), jobs, [&](std::size_t i) {
    const auto& job = *decoding[i];
    std::vector<manifest::HypothesisEntry> hyps;
    for (const auto& e : job.eval_manifests) {
      for (const auto& entry : load(e.path)) {
        manifest::HypothesisEntry h;
        h.utt_id = entry.utt_id;
        h.speaker_id = entry.speaker_id;
        h.condition = job.condition;
        h.model = job.model();
        h.hypothesis = mock_hypothesis(entry.text, job.condition, h.model, entry.utt_id, m);
        h.decode_meta = nlohmann::ordered_json{{"backend", "mock"},
                                               {"beam_size", job.train_hints.beam_size},
                                               {"temperature", job.train_hints.temperature}};
        hyps.push_back(std::move(h));
      }
    }
    contents[i] = manifest::serialize_hypotheses(std::move(hyps));
  });
  Artifacts out;
  for (std::size_t i = 0; i < decoding.size(); ++i) out["hyps/" + decoding[i]->job_id + ".jsonl"] = std::move(contents[i]);
  return out;
}

// ---------------------------------------------------------------------------
// Report

struct ReportOutput {
  experiment::ResultsTable table;
  std::optional<experiment::DeltaReport> deltas;
  std::size_t missing_hypotheses = 0;
  Artifacts files;
};

inline ReportOutput build_report(const Settings& s, const std::vector<experiment::JobPlan>& plan,
                                 const ManifestLoader& load, const manifest::HypothesisSet& hyps,
                                 const scoring::ScoringNormalizer& norm, std::size_t jobs) {
  using experiment::Aggregation;
  using experiment::Cell;
  ReportOutput out;

  struct Unit {
    const experiment::JobPlan* job;
    const experiment::EvalManifest* eval;
    std::vector<scoring::RefHyp> pairs;
    std::vector<scoring::PairCounts> counts;
  };
  std::vector<Unit> units;
  for (const auto& j : plan)
    for (const auto& e : j.eval_manifests) {
      Unit u{&j, &e, {}, {}};
      for (const auto& entry : load(e.path)) {
        const auto* h = hyps.find(j.condition, j.model(), entry.utt_id);
        if (!h) ++out.missing_hypotheses;
        u.pairs.push_back({entry.text, h ? h->hypothesis : std::string{}});
      }
      units.push_back(std::move(u));
    }
  parallel_for(units.size(), jobs, [&](std::size_t i) {
    units[i].counts = scoring::score_pairs(units[i].pairs, norm, s.cer_spaces, 1);
  });

  // Declare rows in a fixed order: SI-FT, SS-FT, then OOD sets as configured.
  out.table.declare_row(s.dataset_name, std::string(kSiEvalset));
  out.table.declare_row(s.dataset_name, std::string(kSsEvalset));
  for (const auto& o : s.ood) out.table.declare_row(s.dataset_name, o.name);

  std::map<std::pair<std::string, ConditionId>, std::vector<scoring::PairCounts>> pooled;
  std::map<std::pair<std::string, ConditionId>, std::vector<double>> model_wer, model_cer;
  std::map<std::string, experiment::ErrorRates> b3, b4;
  for (const auto& u : units) {
    auto key = std::make_pair(u.eval->evalset, u.job->condition);
    auto& pool = pooled[key];
    pool.insert(pool.end(), u.counts.begin(), u.counts.end());
    if (u.job->stage != experiment::Stage::SSFT || u.counts.empty()) continue;
    auto rep = scoring::make_report(u.counts, scoring::Scope::Speaker);
    if (u.eval->evalset == kSsEvalset) {
      auto& target = u.job->condition.id == manifest::Condition::B3 ? b3 : b4;
      target[*u.job->speaker_id] = {rep.wer, rep.cer};
    } else {
      model_wer[key].push_back(rep.wer);
      model_cer[key].push_back(rep.cer);
    }
  }
  for (const auto& [key, counts] : pooled) {
    if (counts.empty()) continue;
    auto rep = scoring::make_report(counts, scoring::Scope::Corpus);
    out.table.set(s.dataset_name, key.first, key.second, Cell{rep.wer, rep.cer, rep.n_utts});
  }
  for (const auto& [key, wers] : model_wer) {
    const auto& cers = model_cer[key];
    double mw = 0, mc = 0;
    for (double w : wers) mw += w;
    for (double c : cers) mc += c;
    out.table.set(s.dataset_name, key.first, key.second,
                  Cell{mw / static_cast<double>(wers.size()), mc / static_cast<double>(cers.size()), wers.size()},
                  Aggregation::ModelMean);
  }

  std::string results = out.table.render_text();
  std::string tsv = "speaker_id\tdelta_wer\tdelta_cer\toutcome\n";
  const bool both = s.conditions.count({manifest::Condition::B3}) && s.conditions.count({manifest::Condition::B4});
  if (both && !b3.empty()) {
    out.deltas = experiment::compute_deltas(b3, b4, s.median_base);
    results += experiment::render_delta_summary(*out.deltas);
    tsv = experiment::render_delta_tsv(*out.deltas);
  } else {
    results += "B3 - B4 per-speaker deltas: n/a (needs B3 and B4 personalized results)\n";
  }
  results += "missing hypotheses (scored as empty): " + std::to_string(out.missing_hypotheses) + "\n";
  out.files["results.txt"] = results;
  out.files["results.csv"] = out.table.render_csv();
  out.files["delta_speakers.tsv"] = tsv;
  return out;
}

/// Reads every *.jsonl under `dir` (sorted) into one set.
inline manifest::HypothesisSet read_hypothesis_dir(const fs::path& dir) {
  manifest::HypothesisSet set;
  std::vector<fs::path> files;
  if (fs::is_directory(dir)) {
    for (const auto& e : fs::directory_iterator(dir))
      if (e.is_regular_file() && e.path().extension() == ".jsonl") files.push_back(e.path());
  } else if (fs::exists(dir)) {
    files.push_back(dir);
  } else {
    throw Error(ErrorCode::FileNotFound, "hypotheses not found: " + dir.string());
  }
  std::sort(files.begin(), files.end());
  for (const auto& f : files) {
    try {
      set.merge(manifest::read_hypotheses(f));
    } catch (const Error& e) {
      throw Error(e.code(), f.string() + ": " + e.what(), e.line());
    }
  }
  return set;
}

// ---------------------------------------------------------------------------
// Stage artifacts

inline std::string jsonl(const std::vector<nlohmann::ordered_json>& rows) {
  std::string out;
  for (const auto& r : rows) out += r.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace) + "\n";
  return out;
}

inline std::string summary_text(const Settings& s, const Corpus& c, const PartitionResult& p, const SplitResult& sr) {
  std::size_t empty = 0, unaligned = 0, included = 0;
  std::set<std::string> speakers, included_speakers;
  std::int64_t included_ms = 0;
  for (const auto& r : c.records) {
    speakers.insert(r.speaker_id);
    if (r.empty) ++empty;
    if (s.kind == DatasetKind::Chat && !r.alignment) ++unaligned;
    if (r.included) {
      ++included;
      included_speakers.insert(r.speaker_id);
      included_ms += r.duration_ms.value_or(0);
    }
  }
  std::string out;
  out += "config fingerprint: " + s.fingerprint + "\n";
  out += "dataset: " + s.dataset_name + "\n";
  out += "documents: " + std::to_string(c.docs.size()) + "\n";
  out += "utterances considered: " + std::to_string(c.records.size()) + "\n";
  out += "utterances skipped (non-PAR speakers): " + std::to_string(c.skipped_speaker_utts) + "\n";
  out += "utterances empty after normalization: " + std::to_string(empty) + "\n";
  out += "utterances without time alignment: " + std::to_string(unaligned) + "\n";
  out += "speakers: " + std::to_string(speakers.size()) + "\n";
  out += std::string("SI filter (") + (s.filter_si ? "si" : "none") + "): " + std::to_string(included) +
         " utterances from " + std::to_string(included_speakers.size()) + " speakers, " +
         format_fixed(static_cast<double>(included_ms) / 3600000.0, 4) + " h\n";
  out += "SS speakers: " + std::to_string(p.partition.ss_speakers.size()) + " of " + std::to_string(p.partition.ranking.size()) +
         " ranked (fraction " + p.partition.fraction.str() + ", " + std::string(split::to_string(p.partition.rounding)) +
         ", base " + (s.selection_filtered ? "filtered" : "all") + ")\n";
  out += "SI pool: " + std::to_string(sr.si_pool.size()) + " utterances (train " + std::to_string(sr.si.count(split::Split::Train)) +
         ", valid " + std::to_string(sr.si.count(split::Split::Valid)) + ", test " +
         std::to_string(sr.si.count(split::Split::Test)) + ")\n";
  out += "SS utterances: train " + std::to_string(sr.ss.count(split::Split::Train)) + ", valid " +
         std::to_string(sr.ss.count(split::Split::Valid)) + ", test " + std::to_string(sr.ss.count(split::Split::Test)) + "\n";
  return out;
}

struct PreparedRun {
  Settings settings;
  Corpus corpus;
  PartitionResult partition;
  SplitResult splits;
  ManifestSet manifests;
  std::vector<experiment::JobPlan> plan;
};

/// Everything up to and including the job plan.
inline PreparedRun prepare(const Settings& s, std::size_t jobs) {
  PreparedRun r;
  r.settings = s;
  r.corpus = load_corpus(s, jobs);
  r.partition = build_partition(s, r.corpus);
  r.splits = build_splits(s, r.corpus, r.partition.partition);
  r.manifests = build_manifests(s, r.corpus, r.partition, r.splits);
  r.plan = experiment::plan_conditions(r.manifests.plan_inputs);
  return r;
}

inline Artifacts corpus_artifacts(const PreparedRun& r) {
  Artifacts a;
  std::vector<nlohmann::ordered_json> rows;
  for (const auto& n : r.corpus.normalized) rows.push_back(normalize::to_json(n));
  if (!rows.empty()) a["normalized.jsonl"] = jsonl(rows);
  rows.clear();
  for (const auto& rec : r.corpus.records)
    if (rec.decision) rows.push_back(filter::to_json(*rec.decision));
  if (!rows.empty()) a["filter.jsonl"] = jsonl(rows);
  a["summary.txt"] = summary_text(r.settings, r.corpus, r.partition, r.splits);
  return a;
}

inline Artifacts split_artifacts(const PreparedRun& r) {
  Artifacts a;
  a["partition.json"] = split::to_json(r.partition.partition, r.partition.stats,
                                       r.settings.selection_filtered ? "filtered" : "all")
                            .dump(2) + "\n";
  nlohmann::ordered_json splits{{"v", 1}, {"ss", split::to_json(r.splits.ss)}, {"si", split::to_json(r.splits.si)}};
  a["splits.json"] = splits.dump(2) + "\n";
  return a;
}

inline Artifacts manifest_artifacts(const PreparedRun& r) {
  Artifacts a;
  for (const auto& [path, entries] : r.manifests.files) a[path] = manifest::serialize_manifest(entries);
  return a;
}

inline Artifacts plan_artifacts(const PreparedRun& r) {
  return {{"plan.json", experiment::plan_to_json(r.plan).dump(2) + "\n"}};
}

/// Writes artifacts under `dir`, then rewrites `outputs.tsv`: every file in
/// the directory with its size and FNV-1a hash.
inline void write_artifacts(const fs::path& dir, const Artifacts& a) {
  for (const auto& [path, content] : a) write_file(dir / path, content);
  std::vector<std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file()) files.push_back(fs::relative(e.path(), dir).generic_string());
  std::sort(files.begin(), files.end());
  std::string index = "path\tbytes\tfnv1a64\n";
  for (const auto& f : files) {
    if (f == "outputs.tsv") continue;
    auto content = read_file(dir / f);
    index += f + "\t" + std::to_string(content.size()) + "\t" + hex64(fnv1a64(content)) + "\n";
  }
  write_file(dir / "outputs.tsv", index);
}

/// Caches manifests read from disk relative to `root`, or serves in-memory ones.
class ManifestCache {
 public:
  explicit ManifestCache(fs::path root) : root_(std::move(root)) {}
  ManifestCache(fs::path root, const std::map<std::string, std::vector<ManifestEntry>>& preload)
      : root_(std::move(root)), cache_(preload) {}

  const std::vector<ManifestEntry>& operator()(const std::string& rel) {
    std::lock_guard lock(mu_);
    auto it = cache_.find(rel);
    if (it == cache_.end()) it = cache_.emplace(rel, manifest::read_manifest(root_ / rel)).first;
    return it->second;
  }

 private:
  fs::path root_;
  std::map<std::string, std::vector<ManifestEntry>> cache_;
  std::mutex mu_;
};

}  // namespace adaptbench::pipeline
