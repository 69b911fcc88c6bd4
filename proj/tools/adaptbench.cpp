// adaptbench command-line driver.

#include <chrono>
#include <filesystem>
#include <iostream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "adaptbench/pipeline.hpp"

namespace fs = std::filesystem;
using namespace adaptbench;

namespace {

constexpr std::string_view kVersion = "0.1.0";

// Keys whose values are paths; command-line values resolve against the
// working directory, config-file values against the config's directory.
const std::set<std::string> kPathKeys = {"dataset.inputs", "scoring.custom_rules", "experiment.hyps", "output.dir"};

std::string flag_name(std::string_view key) {
  std::string s(key);
  for (auto& ch : s)
    if (ch == '.' || ch == '_') ch = '-';
  return s;
}

std::string short_name(std::string_view key) {
  std::string s(key.substr(key.find('.') + 1));
  for (auto& ch : s)
    if (ch == '_') ch = '-';
  return s;
}

struct Invocation {
  std::string config_path;
  std::vector<std::string> sets;
  std::size_t jobs = 1;
  std::map<std::string, std::string> flags;  // config key -> value (when given)
  std::vector<std::pair<std::string, CLI::Option*>> flag_opts;  // one entry per subcommand and key
  std::vector<std::string> files;
};

/// Adds a --section-key option for every config key, plus the bare key name
/// when it is unambiguous and not already used by the subcommand.
void add_config_flags(CLI::App* sub, Invocation& inv) {
  std::map<std::string, int> counts;
  for (const auto& k : config::kKeys) ++counts[short_name(k.key)];
  for (const auto& k : config::kKeys) {
    std::string key(k.key);
    std::string names = "--" + flag_name(key);
    auto alias = short_name(key);
    if (counts[alias] == 1 && !sub->get_option_no_throw("--" + alias)) names += ",--" + alias;
    if (key == "output.dir") names += ",--out,-o";
    if (key == "split.seed") names += ",--seed";
    std::string help(k.help);
    if (!k.default_value.empty()) help += (help.empty() ? "" : " ") + std::string("[default ") + std::string(k.default_value) + "]";
    inv.flag_opts.emplace_back(key, sub->add_option(names, inv.flags[key], help));
  }
}

std::string absolutize(const std::string& key, const std::string& value) {
  auto abs = [](const std::string& p) { return p.empty() ? p : fs::absolute(p).lexically_normal().string(); };
  if (key == "dataset.inputs") {
    std::string out;
    for (const auto& part : split_ws([&] {
           std::string v = value;
           for (auto& ch : v)
             if (ch == ',') ch = ' ';
           return v;
         }())) {
      if (!out.empty()) out += ",";
      out += abs(part);
    }
    return out;
  }
  if (key == "experiment.ood") {
    std::string out;
    std::string_view rest = value;
    while (!rest.empty()) {
      auto comma = rest.find(',');
      std::string item(trim(rest.substr(0, comma)));
      rest = comma == std::string_view::npos ? std::string_view{} : rest.substr(comma + 1);
      if (item.empty()) continue;
      auto eq = item.find('=');
      if (eq != std::string::npos) item = item.substr(0, eq + 1) + abs(item.substr(eq + 1));
      if (!out.empty()) out += ",";
      out += item;
    }
    return out;
  }
  return kPathKeys.count(key) ? abs(value) : value;
}

config::Config load_config(const Invocation& inv) {
  config::Config cfg;
  if (!inv.config_path.empty())
    cfg = config::Config::load(inv.config_path);
  else
    cfg.set_base_dir(fs::current_path());
  auto apply = [&](const std::string& key, const std::string& value) {
    if (!config::find_key(key)) throw Error(ErrorCode::UnknownKey, "unknown config key '" + key + "'");
    cfg.set(key, {absolutize(key, value)});
  };
  for (const auto& s : inv.sets) {
    auto eq = s.find('=');
    if (eq == std::string::npos) throw Error(ErrorCode::InvalidValue, "--set expects key=value, got '" + s + "'");
    apply(std::string(trim(std::string_view(s).substr(0, eq))), std::string(trim(std::string_view(s).substr(eq + 1))));
  }
  for (const auto& [key, opt] : inv.flag_opts)
    if (opt->count() > 0) apply(key, inv.flags.at(key));
  return cfg;
}

/// Config for the stdout-only stages: positional files become the inputs and
/// dataset.kind / dataset.name fall back to chat / adhoc.
pipeline::Settings adhoc_settings(const Invocation& inv) {
  auto cfg = load_config(inv);
  if (!inv.files.empty()) {
    std::vector<std::string> abs;
    for (const auto& f : inv.files) abs.push_back(fs::absolute(f).lexically_normal().string());
    cfg.set("dataset.inputs", abs);
  }
  if (!cfg.has("dataset.kind")) cfg.set("dataset.kind", {"chat"});
  if (!cfg.has("dataset.name")) cfg.set("dataset.name", {"adhoc"});
  auto s = pipeline::Settings::from(cfg, false);
  std::cerr << "config fingerprint: " << s.fingerprint << "\n";
  return s;
}

pipeline::Settings full_settings(const Invocation& inv) {
  auto s = pipeline::Settings::from(load_config(inv));
  std::cerr << "config fingerprint: " << s.fingerprint << "\n";
  return s;
}

void write_out(const pipeline::Settings& s, const pipeline::Artifacts& a) {
  pipeline::write_artifacts(s.out_dir, a);
  std::cerr << "wrote " << a.size() << " files under " << s.out_dir.string() << "\n";
}

// The summary's first line repeats the fingerprint already logged.
void print_summary(const std::string& summary) { std::cerr << summary.substr(summary.find('\n') + 1); }

void merge_into(pipeline::Artifacts& into, pipeline::Artifacts from) { into.merge(from); }

std::string ndjson(const std::vector<nlohmann::ordered_json>& rows) { return pipeline::jsonl(rows); }

int cmd_parse(const Invocation& inv) {
  auto s = adhoc_settings(inv);
  if (s.kind != pipeline::DatasetKind::Chat) throw Error(ErrorCode::InvalidValue, "parse reads CHAT files only");
  auto docs = pipeline::parse_files(pipeline::collect_inputs(s.inputs, ".cha"), inv.jobs);
  std::vector<nlohmann::ordered_json> rows;
  for (const auto& d : docs) {
    for (const auto& w : d.warnings)
      std::cerr << "warning: " << d.source_path << ":" << w.line_no << ": " << w.message << "\n";
    rows.push_back(chat::to_json(d));
  }
  std::cout << ndjson(rows);
  return 0;
}

int cmd_normalize(const Invocation& inv) {
  auto s = adhoc_settings(inv);
  auto corpus = pipeline::load_corpus(s, inv.jobs);
  std::vector<nlohmann::ordered_json> rows;
  if (s.kind == pipeline::DatasetKind::Chat) {
    for (const auto& n : corpus.normalized) rows.push_back(normalize::to_json(n));
  } else {
    for (const auto& r : corpus.records)
      rows.push_back({{"v", 1}, {"utt_id", r.utt_id}, {"speaker_id", r.speaker_id}, {"text", r.text}});
  }
  std::cout << ndjson(rows);
  return 0;
}

int cmd_filter(const Invocation& inv) {
  auto s = adhoc_settings(inv);
  auto corpus = pipeline::load_corpus(s, inv.jobs);
  std::vector<nlohmann::ordered_json> rows;
  std::size_t included = 0;
  for (const auto& r : corpus.records) {
    filter::FilterDecision d;
    if (r.decision) {
      d = *r.decision;
    } else {
      d.utt_id = r.utt_id;
      d.included = r.included;
      if (r.empty) d.reasons.push_back(filter::Reason::EmptyAfterNormalization);
    }
    if (d.included) ++included;
    rows.push_back(filter::to_json(d));
  }
  std::cout << ndjson(rows);
  std::cerr << "included " << included << " of " << rows.size() << " utterances\n";
  return 0;
}

int cmd_stages(const Invocation& inv, int upto) {
  auto s = full_settings(inv);
  auto run = pipeline::prepare(s, inv.jobs);
  auto a = pipeline::corpus_artifacts(run);
  merge_into(a, pipeline::split_artifacts(run));
  if (upto >= 1) merge_into(a, pipeline::manifest_artifacts(run));
  if (upto >= 2) merge_into(a, pipeline::plan_artifacts(run));
  write_out(s, a);
  print_summary(a.at("summary.txt"));
  return 0;
}

std::vector<experiment::JobPlan> read_plan(const fs::path& out_dir) {
  auto text = read_file(out_dir / "plan.json");
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::MalformedLine, "plan.json: " + std::string(e.what()));
  }
  return experiment::plan_from_json(doc);
}

pipeline::Artifacts run_mock(const pipeline::Settings& s, const std::vector<experiment::JobPlan>& plan,
                             pipeline::ManifestCache& cache, std::size_t jobs) {
  return pipeline::mock_decode(
      plan, [&](const std::string& rel) -> const std::vector<manifest::ManifestEntry>& { return cache(rel); }, s.mock,
      jobs);
}

pipeline::Artifacts run_report(const pipeline::Settings& s, const std::vector<experiment::JobPlan>& plan,
                               pipeline::ManifestCache& cache, const manifest::HypothesisSet& hyps, std::size_t jobs) {
  auto rep = pipeline::build_report(
      s, plan, [&](const std::string& rel) -> const std::vector<manifest::ManifestEntry>& { return cache(rel); }, hyps,
      s.normalizer(), jobs);
  std::cout << rep.files.at("results.txt");
  return rep.files;
}

int cmd_mock_decode(const Invocation& inv) {
  auto s = full_settings(inv);
  auto plan = read_plan(s.out_dir);
  pipeline::ManifestCache cache(s.out_dir);
  write_out(s, run_mock(s, plan, cache, inv.jobs));
  return 0;
}

int cmd_report(const Invocation& inv) {
  auto s = full_settings(inv);
  auto plan = read_plan(s.out_dir);
  pipeline::ManifestCache cache(s.out_dir);
  auto hyps = pipeline::read_hypothesis_dir(s.hyps_dir.value_or(s.out_dir / "hyps"));
  write_out(s, run_report(s, plan, cache, hyps, inv.jobs));
  return 0;
}

int cmd_all(const Invocation& inv) {
  auto s = full_settings(inv);
  auto run = pipeline::prepare(s, inv.jobs);
  auto a = pipeline::corpus_artifacts(run);
  merge_into(a, pipeline::split_artifacts(run));
  merge_into(a, pipeline::manifest_artifacts(run));
  merge_into(a, pipeline::plan_artifacts(run));
  print_summary(a.at("summary.txt"));

  pipeline::ManifestCache cache(s.out_dir, run.manifests.files);
  std::optional<manifest::HypothesisSet> hyps;
  if (s.mock_enabled) {
    auto mock = run_mock(s, run.plan, cache, inv.jobs);
    hyps.emplace();
    for (const auto& [path, content] : mock) hyps->merge(manifest::parse_hypotheses(content));
    merge_into(a, std::move(mock));
  }
  if (s.hyps_dir) {
    if (!hyps) hyps.emplace();
    hyps->merge(pipeline::read_hypothesis_dir(*s.hyps_dir));
  }
  if (hyps)
    merge_into(a, run_report(s, run.plan, cache, *hyps, inv.jobs));
  else
    std::cerr << "no hypotheses (mock.enabled=false, experiment.hyps unset): report skipped\n";
  write_out(s, a);
  return 0;
}

int cmd_score(const Invocation& inv, const std::string& manifest_path, const std::string& hyps_path,
              bool per_speaker, const std::string& condition, const std::string& model) {
  auto cfg = load_config(inv);
  scoring::ScoringNormalizer norm;
  if (!cfg.str("scoring.custom_rules").empty()) norm.load_rules_tsv(read_file(cfg.path("scoring.custom_rules")));
  auto spaces = scoring::parse_cer_spaces(cfg.str("scoring.cer_spaces"));
  std::cerr << "config fingerprint: " << cfg.fingerprint() << "\n";

  auto entries = manifest::read_manifest(manifest_path);
  auto hyps = pipeline::read_hypothesis_dir(hyps_path);
  std::optional<manifest::ConditionId> cond;
  if (!condition.empty()) cond = manifest::ConditionId::parse(condition);

  std::map<std::string, const manifest::HypothesisEntry*> by_utt;
  for (const auto& h : hyps.entries()) {
    if (cond && h.condition != *cond) continue;
    if (!model.empty() && h.model != model) continue;
    auto [it, fresh] = by_utt.emplace(h.utt_id, &h);
    if (!fresh)
      throw Error(ErrorCode::DuplicateHypothesis,
                  "several hypotheses for " + h.utt_id + "; select one set with --condition and --model");
  }
  std::vector<scoring::SpeakerRefHyp> pairs;
  std::size_t missing = 0;
  for (const auto& e : entries) {
    auto it = by_utt.find(e.utt_id);
    if (it == by_utt.end()) ++missing;
    pairs.push_back({e.speaker_id, e.text, it == by_utt.end() ? std::string{} : it->second->hypothesis});
  }
  if (missing) std::cerr << "warning: " << missing << " utterances have no hypothesis (scored as empty)\n";

  auto line = [](const std::string& scope, const scoring::ScoreReport& r) {
    std::cout << scope << "\tWER " << format_fixed(r.wer, 2) << "\tCER " << format_fixed(r.cer, 2) << "\tsub "
              << r.words.substitutions << "\tdel " << r.words.deletions << "\tins " << r.words.insertions
              << "\tref_words " << r.words.ref_length() << "\tutts " << r.n_utts << "\n";
  };
  std::vector<scoring::PairCounts> counts(pairs.size());
  parallel_for(pairs.size(), inv.jobs,
               [&](std::size_t i) { counts[i] = scoring::score_pair(pairs[i].ref, pairs[i].hyp, norm, spaces); });
  line("corpus", scoring::make_report(counts, scoring::Scope::Corpus));
  if (per_speaker)
    for (const auto& [spk, r] : scoring::score_per_speaker(pairs, norm, spaces, inv.jobs)) line("speaker " + spk, r);
  return 0;
}

std::string quote(const std::string& s) {
  std::string out;
  for (char ch : s) {
    if (ch == '"' || ch == '\\') out += '\\';
    out += ch == '\n' ? ' ' : ch;
  }
  return out;
}

void report_error(std::string_view code, std::string_view category, int exit_code, const std::string& message) {
  std::cerr << "error code=" << code << " category=" << category << " exit=" << exit_code << " message=\""
            << quote(message) << "\"\n";
}

std::string_view category_name(ErrorCategory c) {
  switch (c) {
    case ErrorCategory::Config: return "config";
    case ErrorCategory::Data: return "data";
    case ErrorCategory::IO: return "io";
    case ErrorCategory::Internal: return "internal";
  }
  return "internal";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"adaptbench: dysarthric/aphasic speech benchmark preparation and scoring"};
  app.require_subcommand(1);
  std::string version = "adaptbench " + std::string(kVersion) + "\nmanifest schema v" +
                        std::to_string(manifest::kSchemaVersion) + "\nhypothesis schema v" +
                        std::to_string(manifest::kSchemaVersion) + "\nplan schema v1\nfilter/normalize schema v1";
  app.set_version_flag("--version", version);

  Invocation inv;
  app.add_option("-c,--config", inv.config_path, "TOML config file")->check(CLI::ExistingFile);
  app.add_option("--set", inv.sets, "override a config key: section.key=value (repeatable)");
  app.add_option("-j,--jobs", inv.jobs, "worker threads; outputs do not depend on it")->check(CLI::Range(1, 1024));

  auto* parse = app.add_subcommand("parse", "dump parsed CHAT documents as JSON lines");
  auto* normalize = app.add_subcommand("normalize", "normalized utterances as JSON lines");
  auto* filt = app.add_subcommand("filter", "SI filter decisions as JSON lines");
  auto* split = app.add_subcommand("split", "speaker partition and utterance splits");
  auto* manifest = app.add_subcommand("manifest", "write train/valid/test manifests");
  auto* plan = app.add_subcommand("plan", "write the B1-B4 job plan");
  auto* mock = app.add_subcommand("mock-decode", "synthesize hypotheses for every planned decode");
  auto* report = app.add_subcommand("report", "score hypotheses against the plan's manifests");
  auto* all = app.add_subcommand("all", "run every stage from one config");
  auto* score = app.add_subcommand("score", "score a hypothesis file against a manifest");

  for (auto* sub : {parse, normalize, filt}) sub->add_option("files", inv.files, ".cha files or directories");
  std::string manifest_path, hyps_path, condition, model;
  bool per_speaker = false;
  score->add_option("--manifest", manifest_path, "manifest JSONL")->required();
  score->add_option("--hyps", hyps_path, "hypothesis JSONL file or directory")->required();
  score->add_flag("--per-speaker", per_speaker, "also print one line per speaker");
  score->add_option("--condition", condition, "only hypotheses of this condition (B1-B4)");
  score->add_option("--model", model, "only hypotheses of this model");
  for (auto* sub : {parse, normalize, filt, split, manifest, plan, mock, report, all, score}) {
    sub->fallthrough();
    add_config_flags(sub, inv);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    report_error("Usage", "config", 2, e.what());
    return 2;
  }

  try {
    if (parse->parsed()) return cmd_parse(inv);
    if (normalize->parsed()) return cmd_normalize(inv);
    if (filt->parsed()) return cmd_filter(inv);
    if (split->parsed()) return cmd_stages(inv, 0);
    if (manifest->parsed()) return cmd_stages(inv, 1);
    if (plan->parsed()) return cmd_stages(inv, 2);
    if (mock->parsed()) return cmd_mock_decode(inv);
    if (report->parsed()) return cmd_report(inv);
    if (all->parsed()) return cmd_all(inv);
    if (score->parsed()) return cmd_score(inv, manifest_path, hyps_path, per_speaker, condition, model);
  } catch (const Error& e) {
    report_error(to_string(e.code()), category_name(e.category()), e.exit_code(), e.what());
    return e.exit_code();
  } catch (const std::exception& e) {
    report_error("InvariantViolation", "internal", 5, e.what());
    return 5;
  }
  return 5;
}
