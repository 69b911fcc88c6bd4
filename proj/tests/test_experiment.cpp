#include <gtest/gtest.h>

#include "adaptbench/experiment.hpp"

using namespace adaptbench;
using namespace adaptbench::experiment;
using manifest::Condition;
using manifest::ConditionId;

namespace {

PlanInputs inputs(std::size_t n_speakers, std::size_t n_ood) {
  PlanInputs in;
  in.si_train = "si/train.jsonl";
  in.si_valid = "si/valid.jsonl";
  in.shared_evals.push_back({"SI-FT", "si/test.jsonl"});
  if (n_speakers) in.shared_evals.push_back({"SS-FT", "ss/test.jsonl"});
  for (std::size_t i = 0; i < n_speakers; ++i) {
    auto s = "spk" + std::to_string(i);
    in.speakers.push_back({s, "ss/" + s + "/train.jsonl", "ss/" + s + "/valid.jsonl", "ss/" + s + "/test.jsonl"});
  }
  for (std::size_t i = 0; i < n_ood; ++i) {
    EvalManifest e{"ood" + std::to_string(i), "ood/" + std::to_string(i) + ".jsonl"};
    in.ood.push_back(e);
    in.shared_evals.push_back(e);
  }
  return in;
}

std::size_t count_stage(const std::vector<JobPlan>& jobs, Stage s) {
  return static_cast<std::size_t>(std::count_if(jobs.begin(), jobs.end(), [s](const JobPlan& j) { return j.stage == s; }));
}

std::map<std::string, ErrorRates> rates(const std::vector<double>& wer) {
  std::map<std::string, ErrorRates> m;
  for (std::size_t i = 0; i < wer.size(); ++i) m["s" + std::to_string(100 + i)] = {wer[i], wer[i]};
  return m;
}

}  // namespace

TEST(Plan, EnumeratesEveryJob) {
  auto jobs = plan_conditions(inputs(2, 2));
  EXPECT_EQ(count_stage(jobs, Stage::SIFT), 1u);
  EXPECT_EQ(count_stage(jobs, Stage::SSFT), 4u);
  // B1 and B2 decode SI-FT, SS-FT and both OOD sets.
  EXPECT_EQ(count_stage(jobs, Stage::DecodeOnly), 8u);
  std::set<std::pair<std::string, std::string>> decoded;  // (condition, evalset)
  for (const auto& j : jobs)
    for (const auto& e : j.eval_manifests) decoded.insert({std::string(j.condition.name()), e.evalset});
  for (std::string c : {"B1", "B2", "B3", "B4"})
    for (std::string e : {"SS-FT", "ood0", "ood1"}) EXPECT_TRUE(decoded.count({c, e})) << c << " " << e;
  EXPECT_TRUE(decoded.count({"B2", "SI-FT"}));
}

TEST(Plan, NoTargetSpeakersMeansNoPersonalization) {
  auto jobs = plan_conditions(inputs(0, 0));
  EXPECT_EQ(count_stage(jobs, Stage::SSFT), 0u);
  EXPECT_EQ(count_stage(jobs, Stage::SIFT), 1u);
}

TEST(Plan, B3WithoutB2IsRejected) {
  auto in = inputs(1, 0);
  in.conditions = {ConditionId{Condition::B3}, ConditionId{Condition::B4}};
  try {
    plan_conditions(in);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::MissingSICheckpointRef);
  }
  in.conditions = {ConditionId{Condition::B4}};
  EXPECT_EQ(plan_conditions(in).size(), 1u);
}

TEST(Plan, B3AndB4DifferOnlyInInitialization) {
  auto jobs = plan_conditions(inputs(3, 1));
  std::map<std::string, std::map<Condition, const JobPlan*>> by;
  for (const auto& j : jobs)
    if (j.stage == Stage::SSFT) by[*j.speaker_id][j.condition.id] = &j;
  ASSERT_EQ(by.size(), 3u);
  for (const auto& [spk, m] : by) {
    const auto& b3 = *m.at(Condition::B3);
    const auto& b4 = *m.at(Condition::B4);
    auto diff = structural_diff(b3, b4);
    for (auto identity : {"job_id", "condition", "init_lineage"}) diff.erase(identity);
    EXPECT_EQ(diff, std::set<std::string>{"init_from"}) << spk;
    EXPECT_EQ(b3.init_from, InitFrom::SICheckpoint);
    EXPECT_EQ(b4.init_from, InitFrom::Pretrained);
    EXPECT_EQ(b3.train_manifest, b4.train_manifest);
    EXPECT_TRUE(b3.train_hints.freeze_lower_encoder_half);
    EXPECT_TRUE(b3.train_hints.reduced_epochs);
  }
}

TEST(Plan, JsonRoundTrip) {
  auto jobs = plan_conditions(inputs(2, 1));
  auto doc = plan_to_json(jobs);
  EXPECT_EQ(plan_from_json(nlohmann::json::parse(doc.dump())), jobs);
  EXPECT_EQ(doc["jobs"][0]["train_hints"]["checkpoint_selection"], "lowest validation WER");
  EXPECT_EQ(doc["jobs"][0]["train_hints"]["beam_size"], 5);
  EXPECT_EQ(doc["jobs"][0]["train_hints"]["temperature"], 0);
}

TEST(Plan, ModelFieldNamesTheTargetSpeaker) {
  for (const auto& j : plan_conditions(inputs(1, 0)))
    EXPECT_EQ(j.model(), j.stage == Stage::SSFT ? "spk0" : "");
}

TEST(Deltas, SmallArithmeticFixture) {
  auto r = compute_deltas(rates({-1.0, -2.0, 0.5, 0.0}), rates({0, 0, 0, 0}));
  EXPECT_EQ(r.win_count, 2u);
  EXPECT_EQ(r.loss_count, 1u);
  EXPECT_EQ(r.tie_count, 1u);
  EXPECT_EQ(format_fixed(*r.win_rate_excl_ties, 1), "66.7");
  EXPECT_DOUBLE_EQ(*r.median_delta_wer, -0.5);
  auto excl = compute_deltas(rates({-1.0, -2.0, 0.5, 0.0}), rates({0, 0, 0, 0}), MedianBase::ExcludeTies);
  EXPECT_DOUBLE_EQ(*excl.median_delta_wer, -1.0);
}

TEST(Deltas, FortySixSpeakers) {
  std::vector<double> d;
  for (int i = 0; i < 34; ++i) d.push_back(-1.0 - i * 0.1);
  for (int i = 0; i < 10; ++i) d.push_back(0.5 + i);
  d.push_back(0.0);
  d.push_back(0.0001);
  auto r = compute_deltas(rates(d), rates(std::vector<double>(d.size(), 0.0)));
  EXPECT_EQ(r.win_count, 34u);
  EXPECT_EQ(r.loss_count, 10u);
  EXPECT_EQ(r.tie_count, 2u);
  EXPECT_NEAR(*r.win_rate_excl_ties, 77.3, 0.05);
}

TEST(Deltas, AllTiesHaveNoWinRate) {
  auto r = compute_deltas(rates({0, 0}), rates({0, 0}));
  EXPECT_FALSE(r.win_rate_excl_ties);
  EXPECT_NE(render_delta_summary(r).find("win rate (excluding ties): n/a"), std::string::npos);
}

TEST(Deltas, SpeakerSetsMustMatch) {
  try {
    compute_deltas(rates({1, 2}), rates({1}));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::SpeakerSetMismatch);
  }
}

TEST(Deltas, TieBoundary) {
  EXPECT_EQ(classify_delta(0.0004999), Outcome::Tie);
  EXPECT_EQ(classify_delta(-0.0005), Outcome::Win);
  EXPECT_EQ(classify_delta(0.0005), Outcome::Loss);
}

TEST(Deltas, TsvIsSortedByDelta) {
  auto r = compute_deltas(rates({2.0, -3.0, 0.0}), rates({0, 0, 0}));
  EXPECT_EQ(render_delta_tsv(r),
            "speaker_id\tdelta_wer\tdelta_cer\toutcome\n"
            "s101\t-3.000\t-3.000\twin\n"
            "s102\t0.000\t0.000\ttie\n"
            "s100\t2.000\t2.000\tloss\n");
}

TEST(Results, SingleCell) {
  ResultsTable t;
  t.set("D", "SI-FT", {Condition::B1}, {12.5, 6.25, 10});
  EXPECT_EQ(t.row_count(), 1u);
  EXPECT_EQ(t.render_csv(),
            "dataset,evalset,condition,aggregation,wer,cer,n_utts\n"
            "D,SI-FT,B1,micro,12.50,6.25,10\n"
            "D,SI-FT,B2,micro,--,--,0\n"
            "D,SI-FT,B3,micro,--,--,0\n"
            "D,SI-FT,B4,micro,--,--,0\n");
}

TEST(Results, TextLayoutHasFixedColumnOrder) {
  ResultsTable t;
  t.set("AphasiaBank", "SS-FT", {Condition::B4}, {40, 20, 5});
  t.set("UA-Speech", "SS-FT", {Condition::B1}, {113.34, 80, 5});
  t.set("AphasiaBank", "FLEURS", {Condition::B3}, {10, 5, 5}, Aggregation::ModelMean);
  auto text = t.render_text();
  EXPECT_EQ(text,
            "[AphasiaBank]\n"
            "evalset                 B1 WER   B1 CER   B2 WER   B2 CER   B3 WER   B3 CER   B4 WER   B4 CER\n"
            "SS-FT                       --       --       --       --       --       --    40.00    20.00\n"
            "FLEURS [model-mean]         --       --       --       --    10.00     5.00       --       --\n"
            "\n"
            "[UA-Speech]\n"
            "evalset                 B1 WER   B1 CER   B2 WER   B2 CER   B3 WER   B3 CER   B4 WER   B4 CER\n"
            "SS-FT                   113.34    80.00       --       --       --       --       --       --\n"
            "\n");
}
