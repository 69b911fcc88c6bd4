#include <gtest/gtest.h>

#include "adaptbench/scoring.hpp"
#include "oracle.hpp"

using namespace adaptbench;
using namespace adaptbench::scoring;

namespace {

using Words = std::vector<std::string>;

const ScoringNormalizer& norm() {
  static const ScoringNormalizer n;
  return n;
}

}  // namespace

TEST(Align, Identity) {
  auto r = align(Words{"a", "b", "c"}, Words{"a", "b", "c"});
  EXPECT_EQ(r.counts.hits, 3u);
  EXPECT_EQ(r.distance(), 0u);
}

TEST(Align, SubstitutionAndInsertion) {
  auto r = align(Words{"a", "b", "c"}, Words{"a", "x", "c", "d"});
  EXPECT_EQ(r.counts.substitutions, 1u);
  EXPECT_EQ(r.counts.insertions, 1u);
  EXPECT_EQ(r.counts.deletions, 0u);
  EXPECT_EQ(r.distance(), oracle::edit_distance(Words{"a", "b", "c"}, Words{"a", "x", "c", "d"}));
  EXPECT_EQ(format_fixed(100.0 * r.distance() / 3, 2), "66.67");
}

TEST(Align, WerAboveOneHundred) {
  auto r = align(Words{"a"}, Words{"x", "y", "z"});
  EXPECT_EQ(r.distance(), 3u);
  EXPECT_EQ(r.counts.substitutions, 1u);
  EXPECT_EQ(r.counts.insertions, 2u);
  std::vector<RefHyp> p{{"a", "x y z"}};
  EXPECT_DOUBLE_EQ(score_corpus(p, norm()).wer, 300.0);
}

TEST(Align, EmptySides) {
  EXPECT_EQ(align(Words{}, Words{"a", "b"}).counts.insertions, 2u);
  EXPECT_EQ(align(Words{"a", "b"}, Words{}).counts.deletions, 2u);
}

TEST(Align, PathAccountsForEveryWord) {
  Words ref{"the", "cat", "sat", "on", "mat"}, hyp{"a", "cat", "sat", "mat", "today"};
  auto r = align(ref, hyp);
  std::size_t refs = 0, hyps = 0;
  for (const auto& p : r.alignment) {
    if (p.op != EditOp::Insertion) ++refs;
    if (p.op != EditOp::Deletion) ++hyps;
  }
  EXPECT_EQ(refs, ref.size());
  EXPECT_EQ(hyps, hyp.size());
}

TEST(Normalizer, CustomRuleFromTheDefaults) {
  EXPECT_EQ(norm()("Hafta go!"), (Words{"have", "to", "go"}));
  EXPECT_EQ(ScoringNormalizer::without_custom_rules()("Hafta go!"), (Words{"hafta", "go"}));
}

TEST(Normalizer, BasicSteps) {
  EXPECT_TRUE(norm()("").empty());
  EXPECT_EQ(norm()("The  CAT."), (Words{"the", "cat"}));
  EXPECT_EQ(norm()("\xEF\xBC\xA1" "BC"), (Words{"abc"}));  // fullwidth A folds under NFKC
  EXPECT_EQ(norm()("'quoted' rock'n'roll"), (Words{"quoted", "rock'n'roll"}));
  EXPECT_EQ(norm()("it\xE2\x80\x99s"), (Words{"it's"}));  // ambiguous 's is left alone
}

TEST(Normalizer, SpellingAndContractions) {
  EXPECT_EQ(norm()("the colour of the centre"), (Words{"the", "color", "of", "the", "center"}));
  EXPECT_EQ(norm()("don't won't gonna"), (Words{"do", "not", "will", "not", "going", "to"}));
  EXPECT_EQ(norm()("colour'll"), (Words{"color", "will"}));
}

TEST(Normalizer, CustomRulesFromTsv) {
  ScoringNormalizer n;
  n.load_rules_tsv("# comment\nokay\tok\nuh huh\tyes\n");
  EXPECT_EQ(n("Okay it was uh huh big"), (Words{"ok", "it", "was", "yes", "big"}));
  try {
    n.load_rules_tsv("no tab here\n");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::InvalidValue);
    EXPECT_EQ(e.line(), 1u);
  }
}

TEST(Score, MicroAverage) {
  std::vector<RefHyp> same{{"a b", "a b"}, {"c d", "c d"}};
  EXPECT_DOUBLE_EQ(score_corpus(same, norm()).wer, 0.0);
  std::vector<RefHyp> half{{"a b", "a b"}, {"c d", "x y"}};
  EXPECT_DOUBLE_EQ(score_corpus(half, norm()).wer, 50.0);
  // Unequal lengths: pooled 1/4 errors, not the mean of 0% and 100%.
  std::vector<RefHyp> skew{{"a b c", "a b c"}, {"d", "x"}};
  EXPECT_DOUBLE_EQ(score_corpus(skew, norm()).wer, 25.0);
}

TEST(Score, CerSpaces) {
  std::vector<RefHyp> p{{"ab cd", "abcd"}};
  EXPECT_DOUBLE_EQ(score_corpus(p, norm(), CerSpaces::Include).cer, 20.0);
  EXPECT_DOUBLE_EQ(score_corpus(p, norm(), CerSpaces::Exclude).cer, 0.0);
}

TEST(Score, EmptyReferenceCorpus) {
  std::vector<RefHyp> p{{"", "x"}};
  try {
    score_corpus(p, norm());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::EmptyReferenceCorpus);
  }
}

TEST(Score, PerSpeakerIsKeyedAndPooledSeparately) {
  std::vector<SpeakerRefHyp> p{{"s1", "a b c", "a b c"}, {"s2", "d", "x"}};
  auto by = score_per_speaker(p, norm());
  ASSERT_EQ(by.size(), 2u);
  EXPECT_DOUBLE_EQ(by.at("s1").wer, 0.0);
  EXPECT_DOUBLE_EQ(by.at("s2").wer, 100.0);
  std::vector<SpeakerRefHyp> bad{{"s1", "a", "a"}, {"s3", "", "x"}};
  try {
    score_per_speaker(bad, norm());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::SpeakerWithNoReference);
  }
}

TEST(Score, RandomFixtureMatchesOracle) {
  SplitMix64 g(50);
  const char* vocab[] = {"the", "a", "dog", "cat", "ran", "home", "big", "red"};
  auto sentence = [&] {
    std::string s;
    auto n = g.below(8);
    for (std::uint64_t i = 0; i < n; ++i) s += std::string(i ? " " : "") + vocab[g.below(8)];
    return s;
  };
  std::vector<RefHyp> pairs;
  std::size_t errors = 0, ref_words = 0;
  for (int i = 0; i < 50; ++i) {
    RefHyp p{"start " + sentence(), sentence()};
    auto r = norm()(p.ref), h = norm()(p.hyp);
    errors += oracle::edit_distance(r, h);
    ref_words += r.size();
    pairs.push_back(p);
  }
  auto rep = score_corpus(pairs, norm(), CerSpaces::Include, 4);
  EXPECT_DOUBLE_EQ(rep.wer, 100.0 * static_cast<double>(errors) / static_cast<double>(ref_words));
}
