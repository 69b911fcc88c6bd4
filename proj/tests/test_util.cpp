#include <gtest/gtest.h>

#include <atomic>
#include <numeric>

#include "adaptbench/util.hpp"
#include "adaptbench/error.hpp"

using namespace adaptbench;

// Published reference vectors.
TEST(Util, Fnv1aReferenceValues) {
  EXPECT_EQ(fnv1a64(""), 0xcbf29ce484222325ULL);
  EXPECT_EQ(fnv1a64("a"), 0xaf63dc4c8601ec8cULL);
  EXPECT_EQ(fnv1a64("foobar"), 0x85944171f73967e8ULL);
  EXPECT_EQ(hex64(0xaf63dc4c8601ec8cULL), "af63dc4c8601ec8c");
}

TEST(Util, SplitMixReferenceSequence) {
  SplitMix64 g(1234567);
  EXPECT_EQ(g.next(), 6457827717110365317ULL);
  EXPECT_EQ(g.next(), 3203168211198807973ULL);
  EXPECT_EQ(g.next(), 9817491932198370423ULL);
  EXPECT_EQ(g.next(), 4593380528125082431ULL);
  EXPECT_EQ(g.next(), 16408922859458223821ULL);
}

TEST(Util, BelowAndUnitStayInRange) {
  SplitMix64 g(9);
  for (int i = 0; i < 10000; ++i) {
    EXPECT_LT(g.below(7), 7u);
    double u = g.unit();
    EXPECT_GE(u, 0.0);
    EXPECT_LT(u, 1.0);
  }
}

TEST(Util, ShuffleIsAPermutationAndSeeded) {
  std::vector<int> a(50);
  std::iota(a.begin(), a.end(), 0);
  auto b = a, c = a;
  deterministic_shuffle(b, 42);
  deterministic_shuffle(c, 42);
  EXPECT_EQ(b, c);
  EXPECT_NE(b, a);
  std::sort(b.begin(), b.end());
  EXPECT_EQ(b, a);
}

TEST(Util, ParallelForVisitsEachIndexOnce) {
  std::vector<std::atomic<int>> hits(1000);
  parallel_for(hits.size(), 8, [&](std::size_t i) { hits[i]++; });
  for (auto& h : hits) EXPECT_EQ(h.load(), 1);
}

TEST(Util, ParallelForRethrowsLowestIndexError) {
  try {
    parallel_for(100, 4, [](std::size_t i) {
      if (i == 17 || i == 60) throw Error(ErrorCode::InvalidEntry, "at " + std::to_string(i));
    });
    FAIL();
  } catch (const Error& e) {
    EXPECT_STREQ(e.what(), "at 17");
  }
}

TEST(Util, TrimSplitJoin) {
  EXPECT_EQ(trim("  a b \t"), "a b");
  EXPECT_EQ(split_ws(" a  b\tc\n"), (std::vector<std::string>{"a", "b", "c"}));
  std::vector<std::string> w{"x", "y"};
  EXPECT_EQ(join(w, "-"), "x-y");
  EXPECT_EQ(join(std::vector<std::string>{}), "");
}

TEST(Util, Utf8DecodeReplacesInvalidBytes) {
  EXPECT_EQ(utf8_decode("a\xC3\xA9"), (std::u32string{U'a', U'é'}));
  EXPECT_EQ(utf8_decode("\xFF"), std::u32string{U'�'});
}

TEST(Util, FormatFixedHasNoNegativeZero) {
  EXPECT_EQ(format_fixed(-0.0001, 2), "0.00");
  EXPECT_EQ(format_fixed(12.345, 1), "12.3");
  EXPECT_EQ(format_fixed(-1.5, 1), "-1.5");
}

TEST(Util, ErrorCategoriesMapToExitCodes) {
  EXPECT_EQ(Error(ErrorCode::MissingKey, "").exit_code(), 2);
  EXPECT_EQ(Error(ErrorCode::InvalidFraction, "").exit_code(), 2);
  EXPECT_EQ(Error(ErrorCode::MalformedHeader, "").exit_code(), 3);
  EXPECT_EQ(Error(ErrorCode::FileNotFound, "").exit_code(), 4);
  EXPECT_EQ(Error(ErrorCode::InvariantViolation, "").exit_code(), 5);
}

TEST(Util, ReadMissingFileIsIoError) {
  try {
    read_file("/nonexistent/adaptbench/file");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::FileNotFound);
  }
}
