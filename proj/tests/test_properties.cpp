#include <gtest/gtest.h>

#include "adaptbench/chat.hpp"
#include "adaptbench/manifest.hpp"
#include "adaptbench/normalize.hpp"
#include "adaptbench/scoring.hpp"
#include "adaptbench/split.hpp"
#include "oracle.hpp"

using namespace adaptbench;

namespace {

template <std::size_t N>
std::string pick(SplitMix64& g, const char* const (&items)[N]) {
  return items[g.below(N)];
}

// Fragments of main-tier syntax, deliberately including unbalanced pieces.
const char* const kTierPieces[] = {
    "the", "dog", "wabbit", "[: rabbit]", "[* p:w]", "[* s:r]", "[/]", "[//]", "<", ">", "<the big>", "&-uh",
    "&=laughs", "xxx", "yyy", "www", "doggie@u", "0is", "+<", "(.)", "[", "]", "[+ gram]", "\xE2\x80\xA2",
    "\x15", "0_100", "\x15" "10_20\x15", "it's", "ca(n)", "+...", ".", "?", "!", ":", "&", "@", "[=! cries]",
};

std::string random_tier(SplitMix64& g) {
  std::string s;
  auto n = g.below(12);
  for (std::uint64_t i = 0; i < n; ++i) s += (i ? " " : "") + pick(g, kTierPieces);
  if (g.below(2)) s += " .";
  return s;
}

const char* const kScoringWords[] = {
    "Hafta", "gonna", "wanna", "it's", "don't", "can't", "I'm", "we'll", "colour", "Color", "OK", "okay",
    "grey", "gray", "hello,", "world.", "\"quoted\"", "e-mail", "uh", "um", "theatre", "don’t", "Ｆｕｌｌ", "1st",
    "Dr.", "rock'n'roll", "'tis", "...", "--", "kinda", "gotta", "you're", "they've", "X", "ab-c",
};

std::string random_sentence(SplitMix64& g) {
  std::string s;
  auto n = g.below(10);
  for (std::uint64_t i = 0; i < n; ++i) s += (i ? (g.below(4) ? " " : "  ") : "") + pick(g, kScoringWords);
  return s;
}

std::vector<int> random_word_seq(SplitMix64& g, std::size_t max_len, std::uint64_t alphabet) {
  std::vector<int> v(g.below(max_len + 1));
  for (auto& x : v) x = static_cast<int>(g.below(alphabet));
  return v;
}

}  // namespace

TEST(Properties, TierTokenizerIsTotal) {
  SplitMix64 g(101);
  for (int i = 0; i < 2000; ++i) {
    auto tier = random_tier(g);
    chat::TierParse t;
    ASSERT_NO_THROW(t = chat::tokenize_main_tier(tier)) << tier;
    for (const auto& tok : t.tokens) {
      ASSERT_LE(tok.span.end, tier.size()) << tier;
      ASSERT_LT(tok.span.begin, tok.span.end) << tier;
    }
    for (const auto& a : t.annotations) ASSERT_LE(a.scope.end, t.tokens.size()) << tier;
  }
}

TEST(Properties, DocumentParserOnlyThrowsTypedErrors) {
  SplitMix64 g(102);
  const char* const lines[] = {"@Begin", "@End", "@Participants:\tPAR Participant", "@Media:\tx, audio",
                               "%mor:\tn|dog", "\tcontinued", "*PAR:", "*INV:\thi .", "garbage", ""};
  for (int i = 0; i < 1000; ++i) {
    std::string doc;
    auto n = g.below(10);
    for (std::uint64_t k = 0; k < n; ++k)
      doc += (g.below(2) ? "*PAR:\t" + random_tier(g) : std::string(pick(g, lines))) + "\n";
    try {
      chat::parse_document(doc, "fuzz.cha");
    } catch (const Error& e) {
      EXPECT_EQ(e.category(), ErrorCategory::Data) << doc;
    } catch (const std::exception& e) {
      ADD_FAILURE() << "untyped exception " << e.what() << " for\n" << doc;
    }
  }
}

TEST(Properties, NormalizedTextIsMarkerFree) {
  SplitMix64 g(103);
  normalize::NormalizationPolicy policy;
  for (int i = 0; i < 1000; ++i) {
    chat::Utterance u;
    u.utt_id = "f_" + std::to_string(i);
    auto t = chat::tokenize_main_tier(random_tier(g));
    u.tokens = t.tokens;
    u.annotations = t.annotations;
    auto n = normalize::normalize_utterance(u, policy);
    for (char c : n.text) ASSERT_EQ(std::string_view("[]<>&@+*%\x15=:/").find(c), std::string_view::npos) << n.text;
    ASSERT_EQ(n.text.find("\xE2\x80\xA2"), std::string::npos);
    ASSERT_EQ(n.empty, n.text.empty());
  }
}

TEST(Properties, ScoringNormalizerIsIdempotent) {
  SplitMix64 g(104);
  scoring::ScoringNormalizer norm;
  for (int i = 0; i < 500; ++i) {
    auto s = random_sentence(g);
    auto once = norm(s);
    EXPECT_EQ(norm(join(once, " ")), once) << s;
  }
}

TEST(Properties, EditDistanceIsAMetricAndMatchesOracle) {
  SplitMix64 g(105);
  for (int i = 0; i < 300; ++i) {
    auto a = random_word_seq(g, 9, 4), b = random_word_seq(g, 9, 4), c = random_word_seq(g, 9, 4);
    auto ab = scoring::align(a, b).distance(), ba = scoring::align(b, a).distance();
    auto bc = scoring::align(b, c).distance(), ac = scoring::align(a, c).distance();
    EXPECT_EQ(ab, oracle::edit_distance(a, b));
    EXPECT_EQ(ab, ba);
    EXPECT_LE(ac, ab + bc);
    EXPECT_EQ(scoring::align(a, a).distance(), 0u);
    auto counts = scoring::align(a, b).counts;
    EXPECT_EQ(counts.ref_length(), a.size());
    EXPECT_EQ(counts.hits + counts.substitutions + counts.insertions, b.size());
  }
}

TEST(Properties, ApportionSumsAndStaysNearQuota) {
  SplitMix64 g(106);
  for (int i = 0; i < 2000; ++i) {
    std::vector<std::uint64_t> w(1 + g.below(5));
    for (auto& x : w) x = 1 + g.below(20);
    std::size_t n = g.below(300);
    auto sizes = split::apportion(n, w);
    std::uint64_t total = 0;
    for (auto x : w) total += x;
    std::size_t sum = 0;
    for (std::size_t k = 0; k < w.size(); ++k) {
      sum += sizes[k];
      double quota = static_cast<double>(n * w[k]) / static_cast<double>(total);
      EXPECT_LT(std::abs(static_cast<double>(sizes[k]) - quota), 1.0);
    }
    EXPECT_EQ(sum, n);
  }
}

TEST(Properties, RatioSplitDependsOnlyOnSeedAndSpeaker) {
  SplitMix64 g(107);
  for (int i = 0; i < 100; ++i) {
    std::vector<std::string> utts;
    auto n = 3 + g.below(60);
    for (std::uint64_t k = 0; k < n; ++k) utts.push_back("u" + std::to_string(g.below(100000)) + "_" + std::to_string(k));
    auto seed = g.next();
    auto a = split::split_ratio("spk", utts, seed);
    deterministic_shuffle(utts, g.next());
    auto b = split::split_ratio("spk", utts, seed);
    EXPECT_EQ(a.assignments, b.assignments);
    EXPECT_EQ(a.assignments.size(), n);
  }
}

// Random corpora: speakers with random durations and utterance counts.
TEST(Properties, SpeakerSetsAreDisjointOnRandomCorpora) {
  SplitMix64 g(108);
  const split::Rounding roundings[] = {split::Rounding::Ceil, split::Rounding::Round, split::Rounding::Floor};
  for (int corpus = 0; corpus < 200; ++corpus) {
    std::vector<split::UtteranceTiming> timings;
    std::vector<split::PoolCandidate> candidates;
    std::map<std::string, std::vector<std::string>> by_speaker;
    auto n_speakers = 1 + g.below(40);
    for (std::uint64_t s = 0; s < n_speakers; ++s) {
      auto spk = "S" + std::to_string(s);
      auto n_utts = 3 + g.below(30);
      for (std::uint64_t u = 0; u < n_utts; ++u) {
        auto id = spk + "_" + std::to_string(u);
        timings.push_back({spk, g.below(5) ? std::optional<std::int64_t>(g.below(4000)) : std::nullopt});
        candidates.push_back({id, spk, g.below(4) != 0});
        by_speaker[spk].push_back(id);
      }
    }
    auto stats = split::compute_speaker_stats(timings);
    auto ranked = split::rank_speakers(stats);
    split::Fraction f{1 + g.below(9), 10};
    auto p = split::select_ss(ranked, f, roundings[g.below(3)]);
    ASSERT_TRUE(p.disjoint());
    EXPECT_EQ(p.ss_speakers.size() + p.si_speakers.size(), n_speakers);
    EXPECT_GE(p.ss_speakers.size(), 1u);

    auto pool = split::build_si_pool(p, candidates);
    std::set<std::string> seen(pool.begin(), pool.end());
    split::SplitAssignment all;
    for (const auto& spk : p.ss_speakers) all.merge(split::split_ratio(spk, by_speaker[spk], 99));
    for (const auto& [utt, _] : all.assignments) {
      EXPECT_FALSE(seen.count(utt)) << utt;
      EXPECT_TRUE(p.ss_speakers.count(utt.substr(0, utt.find('_'))));
    }
    for (const auto& utt : pool) EXPECT_TRUE(p.si_speakers.count(utt.substr(0, utt.find('_'))));
  }
}

TEST(Properties, ManifestAndHypothesisRoundTrip) {
  SplitMix64 g(109);
  const char* const texts[] = {"hello", "the \"quoted\" dog", "tab\there", "caf\xC3\xA9", "", "back\\slash"};
  for (int i = 0; i < 100; ++i) {
    std::vector<manifest::ManifestEntry> entries;
    std::vector<manifest::HypothesisEntry> hyps;
    auto n = 1 + g.below(20);
    for (std::uint64_t k = 0; k < n; ++k) {
      manifest::ManifestEntry e;
      e.utt_id = "r" + std::to_string(i) + "_" + std::to_string(k);
      e.audio_path = "audio/" + e.utt_id + ".wav";
      if (g.below(2)) {
        e.start_ms = static_cast<std::int64_t>(g.below(1000));
        e.end_ms = *e.start_ms + 1 + static_cast<std::int64_t>(g.below(1000));
      }
      e.text = std::string(pick(g, texts)) + " w" + std::to_string(k);
      e.speaker_id = "spk" + std::to_string(g.below(4));
      e.split = static_cast<split::Split>(g.below(3));
      if (g.below(2)) e.condition = manifest::kAllConditions[g.below(4)];
      e.dataset = "rand";
      entries.push_back(e);

      manifest::HypothesisEntry h;
      h.utt_id = e.utt_id;
      h.hypothesis = pick(g, texts);
      h.condition = manifest::kAllConditions[g.below(4)];
      h.speaker_id = e.speaker_id;
      if (g.below(2)) h.decode_meta = nlohmann::ordered_json{{"z", 1}, {"a", "b"}};
      hyps.push_back(h);
    }
    auto sorted = entries;
    std::sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) { return std::tie(a.speaker_id, a.utt_id) < std::tie(b.speaker_id, b.utt_id);
    });
    EXPECT_EQ(manifest::parse_manifest(manifest::serialize_manifest(entries)), sorted);
    auto text = manifest::serialize_hypotheses(hyps);
    EXPECT_EQ(manifest::serialize_hypotheses([&] {
                std::vector<manifest::HypothesisEntry> back;
                for (const auto& h : hyps) back.push_back(*manifest::parse_hypotheses(text).find(h.condition, h.model, h.utt_id));
                return back;
              }()),
              text);
  }
}
