// One PASS/FAIL line per acceptance criterion; exits nonzero if any fails.

#include <chrono>
#include <cmath>
#include <functional>
#include <iostream>

#include "adaptbench/pipeline.hpp"
#include "oracle.hpp"
#include "support.hpp"

using namespace adaptbench;
namespace fs = std::filesystem;

namespace {

struct Check {
  bool ok = true;
  std::string detail;
  void require(bool cond, const std::string& what) {
    if (!cond && ok) {
      ok = false;
      detail = what;
    }
  }
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

chat::Utterance utterance(std::string_view tier) {
  auto t = chat::tokenize_main_tier(tier);
  chat::Utterance u;
  u.utt_id = "a_00000";
  u.speaker_code = "PAR";
  u.tokens = t.tokens;
  u.annotations = t.annotations;
  return u;
}

Check edit_distance_oracle() {
  Check c;
  SplitMix64 g(2026);
  auto t0 = std::chrono::steady_clock::now();
  auto seq = [&] {
    std::vector<std::string> v(g.below(13));
    for (auto& w : v) w = std::string(1, static_cast<char>('a' + g.below(5)));
    return v;
  };
  for (int i = 0; i < 1000 && c.ok; ++i) {
    auto a = seq(), b = seq();
    c.require(scoring::align(a, b).distance() == oracle::edit_distance(a, b), "mismatch on pair " + std::to_string(i));
  }
  double s = seconds_since(t0);
  c.require(s < 5.0, "took " + std::to_string(s) + " s");
  return c;
}

Check wer_above_hundred() {
  Check c;
  scoring::ScoringNormalizer norm;
  std::vector<scoring::RefHyp> pairs{{"dog", "the big cat"}};
  auto r = scoring::score_corpus(pairs, norm, scoring::CerSpaces::Include, 1);
  c.require(r.wer == 300.0, "WER " + std::to_string(r.wer));
  return c;
}

Check speaker_disjointness() {
  Check c;
  SplitMix64 g(77);
  for (int corpus = 0; corpus < 200 && c.ok; ++corpus) {
    std::vector<split::UtteranceTiming> timings;
    std::vector<split::PoolCandidate> candidates;
    auto n_speakers = 1 + g.below(60);
    for (std::uint64_t s = 0; s < n_speakers; ++s) {
      auto spk = "P" + std::to_string(s);
      for (std::uint64_t u = 0, n = 1 + g.below(20); u < n; ++u) {
        timings.push_back({spk, static_cast<std::int64_t>(g.below(3000))});
        candidates.push_back({spk + "_" + std::to_string(u), spk, g.below(3) != 0});
      }
    }
    auto stats = split::compute_speaker_stats(timings);
    auto ranked = split::rank_speakers(stats);
    auto p = split::select_ss(ranked, split::Fraction{1, 10}, static_cast<split::Rounding>(g.below(3)));
    std::set<std::string> pool_speakers;
    for (const auto& id : split::build_si_pool(p, candidates)) pool_speakers.insert(id.substr(0, id.find('_')));
    for (const auto& s : pool_speakers) c.require(!p.ss_speakers.count(s), "speaker " + s + " on both sides");
  }
  return c;
}

Check top_fraction_counts() {
  Check c;
  auto tenth = split::Fraction::parse("0.10");
  auto k16 = split::apply_fraction(tenth, 16, split::Rounding::Ceil);
  auto k456 = split::apply_fraction(tenth, 456, split::Rounding::Round);
  c.require(k16 == 2, "N=16 gave " + std::to_string(k16));
  c.require(k456 == 46, "N=456 gave " + std::to_string(k456));
  std::vector<std::string> ranked;
  for (int i = 0; i < 16; ++i) ranked.push_back("s" + std::to_string(i));
  c.require(split::select_ss(ranked, tenth, split::Rounding::Ceil).ss_speakers.size() == 2, "select_ss on 16");
  return c;
}

Check split_ratios() {
  Check c;
  for (std::size_t n = 3; n <= 500 && c.ok; ++n) {
    auto sizes = split::ratio811_sizes(n);
    c.require(sizes[0] + sizes[1] + sizes[2] == n, "sum for n=" + std::to_string(n));
    const double quota[] = {0.8 * static_cast<double>(n), 0.1 * static_cast<double>(n), 0.1 * static_cast<double>(n)};
    for (int b = 0; b < 3; ++b) {
      auto diff = std::abs(static_cast<double>(sizes[b]) - quota[b]);
      // Below five utterances every bucket is held at one; compare against the
      // rounded quota there.
      double bound = n >= 5 ? diff : std::abs(static_cast<double>(sizes[b]) - std::round(quota[b]));
      c.require(bound <= 1.0, "bucket " + std::to_string(b) + " for n=" + std::to_string(n));
    }
  }
  std::vector<split::BlockedUtterance> utts;
  for (int block = 1; block <= 3; ++block)
    for (int w = 0; w < 50; ++w) utts.push_back({"u" + std::to_string(block) + "_" + std::to_string(100 + w), block});
  auto a = split::split_blocks("M01", utts, split::Fraction{1, 10}, 3);
  for (const auto& u : utts)
    c.require((a.assignments.at(u.utt_id) == split::Split::Test) == (*u.block == 2), "block mapping " + u.utt_id);
  c.require(a.count(split::Split::Valid) >= 9 && a.count(split::Split::Valid) <= 11,
            "holdout " + std::to_string(a.count(split::Split::Valid)));
  c.require(a.count(split::Split::Train) + a.count(split::Split::Valid) == 100, "train+valid");
  return c;
}

Check delta_win_rate() {
  Check c;
  std::map<std::string, experiment::ErrorRates> b3, b4;
  for (int i = 0; i < 46; ++i) {
    auto spk = "s" + std::to_string(100 + i);
    double b4_wer = 30.0;
    double b3_wer = i < 34 ? 25.0 - i * 0.1 : i < 44 ? 31.0 + i * 0.1 : 30.0;
    b3[spk] = {b3_wer, b3_wer};
    b4[spk] = {b4_wer, b4_wer};
  }
  auto r = experiment::compute_deltas(b3, b4);
  c.require(r.win_count == 34 && r.loss_count == 10 && r.tie_count == 2, "counts " + std::to_string(r.win_count) + "/" +
                                                                              std::to_string(r.loss_count) + "/" +
                                                                              std::to_string(r.tie_count));
  c.require(r.win_rate_excl_ties && std::abs(*r.win_rate_excl_ties - 77.3) <= 0.05, "win rate");
  return c;
}

Check normalization_pipeline() {
  Check c;
  scoring::ScoringNormalizer norm;
  c.require(join(norm("Hafta go!"), " ") == "have to go", "Hafta go! -> " + join(norm("Hafta go!"), " "));
  SplitMix64 g(500);
  const char* words[] = {"Hafta", "gonna", "it's", "don't", "Colour", "OK", "hello,", "world.", "don’t", "we'll",
                         "grey", "\"hi\"", "e-mail", "uh", "1st", "THEATRE", "gotta", "you're", "...", "ｗｉｄｅ"};
  for (int i = 0; i < 500 && c.ok; ++i) {
    std::string s;
    for (std::uint64_t k = 0, n = g.below(9); k < n; ++k) s += (k ? " " : "") + std::string(words[g.below(20)]);
    auto once = norm(s);
    c.require(norm(join(once, " ")) == once, "not idempotent: " + s);
  }
  auto cfg = config::Config::load(testsupport::data_path("aphasia.toml"));
  cfg.set_assignment("output.dir=unused");
  auto corpus = pipeline::load_corpus(pipeline::Settings::from(cfg), 2);
  c.require(!corpus.normalized.empty(), "empty synthetic corpus");
  for (const auto& n : corpus.normalized) {
    bool marker = n.text.find_first_of("[]<>&@+*%\x15=:/") != std::string::npos ||
                  n.text.find("xxx") != std::string::npos || n.text.find("\xE2\x80\xA2") != std::string::npos;
    c.require(!marker, "marker in " + n.utt_id + ": " + n.text);
  }
  return c;
}

Check replacement_semantics() {
  Check c;
  normalize::NormalizationPolicy policy;
  auto kept = utterance("wabbit [: rabbit] [* p:w] .");
  auto n = normalize::normalize_utterance(kept, policy);
  c.require(n.text == "rabbit", "normalized to '" + n.text + "'");
  c.require(filter::decide(kept, n.empty).included, "p:w utterance excluded");
  auto dropped = utterance("wabbit [: rabbit] [* p:w] [* s:x] .");
  c.require(!filter::decide(dropped, false).included, "s:x utterance included");
  return c;
}

std::map<std::string, std::string> read_tree(const fs::path& root) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(root))
    if (e.is_regular_file()) files[fs::relative(e.path(), root).generic_string()] = read_file(e.path());
  return files;
}

Check end_to_end_golden() {
  Check c;
  auto t0 = std::chrono::steady_clock::now();
  testsupport::TempDir dir("acceptance");
  auto run = [&](const std::string& out, int jobs) {
    auto r = testsupport::run_cli("all -c '" + testsupport::data_path("aphasia.toml") + "' --out '" +
                                  (dir / out).string() + "' -j " + std::to_string(jobs));
    c.require(r.exit_code == 0, "exit " + std::to_string(r.exit_code) + ": " + r.out);
    return read_tree(dir / out);
  };
  auto first = run("first", 1), second = run("second", 1), parallel = run("parallel", 8);
  auto golden = read_tree(fs::path(ADAPTBENCH_GOLDEN) / "aphasia");
  for (auto key : {"partition.json", "manifests/si/train.jsonl", "manifests/ss/test.jsonl", "plan.json",
                   "results.txt", "delta_speakers.tsv"})
    c.require(first.count(key), std::string("missing ") + key);
  c.require(first == second, "two runs differ");
  c.require(first == parallel, "--jobs 1 and --jobs 8 differ");
  c.require(first == golden, "output differs from golden files");
  double s = seconds_since(t0);
  c.require(s < 30.0, "took " + std::to_string(s) + " s");
  return c;
}

Check b3_b4_isolation() {
  Check c;
  auto cfg = config::Config::load(testsupport::data_path("aphasia.toml"));
  cfg.set_assignment("output.dir=unused");
  auto run = pipeline::prepare(pipeline::Settings::from(cfg), 2);
  std::map<std::string, std::map<manifest::Condition, const experiment::JobPlan*>> by;
  for (const auto& j : run.plan)
    if (j.stage == experiment::Stage::SSFT) by[*j.speaker_id][j.condition.id] = &j;
  c.require(!by.empty(), "no personalized jobs");
  for (const auto& [spk, m] : by) {
    c.require(m.count(manifest::Condition::B3) && m.count(manifest::Condition::B4), "B3/B4 missing for " + spk);
    if (!c.ok) break;
    auto diff = experiment::structural_diff(*m.at(manifest::Condition::B3), *m.at(manifest::Condition::B4));
    for (auto identity : {"job_id", "condition", "init_lineage"}) diff.erase(identity);
    c.require(diff == std::set<std::string>{"init_from"}, "unexpected difference for " + spk);
  }
  return c;
}

}  // namespace

int main() {
  const std::pair<const char*, std::function<Check()>> checks[] = {
      {"edit-distance-oracle", edit_distance_oracle},
      {"wer-above-100", wer_above_hundred},
      {"speaker-disjointness", speaker_disjointness},
      {"top-fraction-counts", top_fraction_counts},
      {"split-ratios", split_ratios},
      {"delta-win-rate", delta_win_rate},
      {"normalization-pipeline", normalization_pipeline},
      {"replacement-semantics", replacement_semantics},
      {"end-to-end-golden", end_to_end_golden},
      {"b3-b4-isolation", b3_b4_isolation},
  };
  int failed = 0;
  for (const auto& [name, fn] : checks) {
    Check c;
    try {
      c = fn();
    } catch (const std::exception& e) {
      c.ok = false;
      c.detail = std::string("exception: ") + e.what();
    }
    if (c.ok) {
      std::cout << "PASS " << name << "\n";
    } else {
      std::cout << "FAIL " << name << ": " << c.detail << "\n";
      ++failed;
    }
  }
  return failed == 0 ? 0 : 1;
}
