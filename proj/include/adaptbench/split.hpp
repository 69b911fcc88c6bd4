#pragma once

// Speaker-disjoint SI/SS partition and per-speaker train/valid/test splits.

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "adaptbench/error.hpp"
#include "adaptbench/util.hpp"

namespace adaptbench::split {

// ---------------------------------------------------------------------------
// Exact rationals for selection fractions ("0.10" is 10/100, not 0.1000000001).

struct Fraction {
  std::uint64_t num = 1;
  std::uint64_t den = 10;

  static Fraction parse(std::string_view text) {
    auto bad = [&] { return Error(ErrorCode::InvalidFraction, "invalid fraction '" + std::string(text) + "'"); };
    text = trim(text);
    Fraction f{0, 1};
    if (auto slash = text.find('/'); slash != std::string_view::npos) {
      auto a = trim(text.substr(0, slash)), b = trim(text.substr(slash + 1));
      auto r1 = std::from_chars(a.data(), a.data() + a.size(), f.num);
      auto r2 = std::from_chars(b.data(), b.data() + b.size(), f.den);
      if (a.empty() || b.empty() || r1.ec != std::errc{} || r2.ec != std::errc{} ||
          r1.ptr != a.data() + a.size() || r2.ptr != b.data() + b.size())
        throw bad();
    } else {
      auto dot = text.find('.');
      std::string digits(text.substr(0, dot));
      std::string frac = dot == std::string_view::npos ? std::string{} : std::string(text.substr(dot + 1));
      if ((digits + frac).empty() || frac.size() > 12 || digits.size() > 6) throw bad();
      for (char c : digits + frac)
        if (c < '0' || c > '9') throw bad();
      f.den = 1;
      for (std::size_t i = 0; i < frac.size(); ++i) f.den *= 10;
      f.num = std::stoull(digits.empty() ? "0" : digits) * f.den + (frac.empty() ? 0 : std::stoull(frac));
    }
    if (f.den == 0 || f.num > f.den) throw bad();
    auto g = std::gcd(f.num, f.den);
    if (g > 1) {
      f.num /= g;
      f.den /= g;
    }
    return f;
  }

  std::string str() const { return std::to_string(num) + "/" + std::to_string(den); }
  bool operator==(const Fraction&) const = default;
};

enum class Rounding { Ceil, Round, Floor };

constexpr std::string_view to_string(Rounding r) {
  return r == Rounding::Ceil ? "ceil" : r == Rounding::Round ? "round" : "floor";
}

inline Rounding parse_rounding(std::string_view s) {
  if (s == "ceil") return Rounding::Ceil;
  if (s == "round") return Rounding::Round;
  if (s == "floor") return Rounding::Floor;
  throw Error(ErrorCode::InvalidValue, "rounding must be ceil|round|floor, got '" + std::string(s) + "'");
}

/// rounding(f * n); Round is half-up.
inline std::uint64_t apply_fraction(Fraction f, std::uint64_t n, Rounding r) {
  const std::uint64_t p = f.num * n;
  switch (r) {
    case Rounding::Floor: return p / f.den;
    case Rounding::Ceil: return (p + f.den - 1) / f.den;
    case Rounding::Round: return (2 * p + f.den) / (2 * f.den);
  }
  return 0;
}

/// Largest-remainder apportionment of `n` items over integer `weights`.
/// Remainder ties go to the bucket with the smaller weight, then to the later
/// bucket. Buckets below `min_each` are then topped up from the largest bucket
/// while that bucket stays above `min_each`. Sizes always sum to `n`.
inline std::vector<std::size_t> apportion(std::size_t n, std::span<const std::uint64_t> weights,
                                          std::size_t min_each = 0) {
  const std::uint64_t total = std::accumulate(weights.begin(), weights.end(), std::uint64_t{0});
  std::vector<std::size_t> size(weights.size(), 0);
  if (total == 0 || weights.empty()) return size;
  std::vector<std::uint64_t> rem(weights.size());
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    size[i] = static_cast<std::size_t>(n * weights[i] / total);
    rem[i] = n * weights[i] % total;
    assigned += size[i];
  }
  std::vector<std::size_t> order(weights.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (rem[a] != rem[b]) return rem[a] > rem[b];
    if (weights[a] != weights[b]) return weights[a] < weights[b];
    return a > b;
  });
  for (std::size_t k = 0; assigned < n; ++k, ++assigned) ++size[order[k % order.size()]];

  for (std::size_t i = 0; i < size.size(); ++i) {
    while (size[i] < min_each) {
      auto donor = std::max_element(size.begin(), size.end()) - size.begin();
      if (static_cast<std::size_t>(donor) == i || size[donor] <= min_each) break;
      --size[donor];
      ++size[i];
    }
  }
  return size;
}

// ---------------------------------------------------------------------------

struct SpeakerStat {
  std::string speaker_id;
  std::int64_t total_duration_ms = 0;
  std::size_t utterance_count = 0;
  bool operator==(const SpeakerStat&) const = default;
};

struct UtteranceTiming {
  std::string speaker_id;
  std::optional<std::int64_t> duration_ms;  // absent for unaligned utterances
};

/// Sums aligned durations per speaker; unaligned utterances count but add 0 ms.
inline std::vector<SpeakerStat> compute_speaker_stats(std::span<const UtteranceTiming> utts) {
  std::map<std::string, SpeakerStat> by;
  for (const auto& u : utts) {
    auto& s = by[u.speaker_id];
    s.speaker_id = u.speaker_id;
    s.total_duration_ms += u.duration_ms.value_or(0);
    ++s.utterance_count;
  }
  std::vector<SpeakerStat> out;
  for (auto& [_, s] : by) out.push_back(std::move(s));
  return out;
}

/// Descending duration, ties by ascending speaker_id.
inline std::vector<std::string> rank_speakers(std::span<const SpeakerStat> stats) {
  std::vector<const SpeakerStat*> v;
  for (const auto& s : stats) v.push_back(&s);
  std::sort(v.begin(), v.end(), [](const SpeakerStat* a, const SpeakerStat* b) {
    if (a->total_duration_ms != b->total_duration_ms) return a->total_duration_ms > b->total_duration_ms;
    return a->speaker_id < b->speaker_id;
  });
  std::vector<std::string> out;
  for (auto* s : v) out.push_back(s->speaker_id);
  return out;
}

struct SpeakerPartition {
  std::set<std::string> ss_speakers;
  std::set<std::string> si_speakers;
  Fraction fraction;
  Rounding rounding = Rounding::Round;
  std::vector<std::string> ranking;  // the ranked base the selection was drawn from

  bool disjoint() const {
    return std::none_of(ss_speakers.begin(), ss_speakers.end(),
                        [&](const std::string& s) { return si_speakers.count(s) > 0; });
  }
};

/// First k = max(1, rounding(fraction * N)) ranked speakers become targets.
inline SpeakerPartition select_ss(std::span<const std::string> ranked, Fraction fraction,
                                  Rounding rounding = Rounding::Round) {
  if (ranked.empty()) throw Error(ErrorCode::EmptySpeakerList, "cannot select target speakers from an empty list");
  auto k = apply_fraction(fraction, ranked.size(), rounding);
  k = std::clamp<std::uint64_t>(k, 1, ranked.size());
  SpeakerPartition p;
  p.fraction = fraction;
  p.rounding = rounding;
  p.ranking.assign(ranked.begin(), ranked.end());
  for (std::size_t i = 0; i < ranked.size(); ++i) (i < k ? p.ss_speakers : p.si_speakers).insert(ranked[i]);
  return p;
}

// ---------------------------------------------------------------------------

enum class Split { Train, Valid, Test };
enum class Scheme { Ratio811, UASpeechBlocks };

constexpr std::string_view to_string(Split s) {
  return s == Split::Train ? "train" : s == Split::Valid ? "valid" : "test";
}
constexpr std::string_view to_string(Scheme s) { return s == Scheme::Ratio811 ? "ratio811" : "blocks"; }

inline Split parse_split(std::string_view s) {
  if (s == "train") return Split::Train;
  if (s == "valid") return Split::Valid;
  if (s == "test") return Split::Test;
  throw Error(ErrorCode::InvalidValue, "unknown split '" + std::string(s) + "'");
}

inline Scheme parse_scheme(std::string_view s) {
  if (s == "ratio811") return Scheme::Ratio811;
  if (s == "blocks") return Scheme::UASpeechBlocks;
  throw Error(ErrorCode::InvalidValue, "split scheme must be ratio811|blocks, got '" + std::string(s) + "'");
}

struct SplitAssignment {
  std::map<std::string, Split> assignments;
  Scheme scheme = Scheme::Ratio811;
  std::uint64_t seed = 0;

  std::size_t count(Split s) const {
    return static_cast<std::size_t>(std::count_if(assignments.begin(), assignments.end(),
                                                  [s](const auto& kv) { return kv.second == s; }));
  }
  void merge(const SplitAssignment& other) {
    for (const auto& [k, v] : other.assignments) {
      if (!assignments.emplace(k, v).second)
        throw Error(ErrorCode::DuplicateUttId, "utterance assigned twice: " + k);
    }
  }
};

/// Shuffle key for one speaker: independent of every other speaker.
inline std::uint64_t speaker_key(std::uint64_t seed, std::string_view speaker_id) {
  return mix_seed(seed, speaker_id);
}

inline std::vector<std::size_t> ratio811_sizes(std::size_t n) {
  static constexpr std::uint64_t kWeights[] = {8, 1, 1};
  return apportion(n, kWeights, n >= 3 ? 1 : 0);
}

/// Seeded shuffle of the speaker's utterances (sorted first, so input order is
/// irrelevant), then a contiguous train/valid/test cut.
inline SplitAssignment split_ratio(std::string_view speaker_id, std::vector<std::string> utt_ids,
                                   std::uint64_t seed) {
  if (utt_ids.size() < 3)
    throw Error(ErrorCode::TooFewUtterances, "speaker " + std::string(speaker_id) + " has " +
                                                 std::to_string(utt_ids.size()) + " usable utterances (need >= 3)");
  std::sort(utt_ids.begin(), utt_ids.end());
  deterministic_shuffle(utt_ids, speaker_key(seed, speaker_id));
  auto sizes = ratio811_sizes(utt_ids.size());
  SplitAssignment a;
  a.scheme = Scheme::Ratio811;
  a.seed = seed;
  std::size_t i = 0;
  for (std::size_t b = 0; b < 3; ++b)
    for (std::size_t k = 0; k < sizes[b]; ++k, ++i)
      a.assignments[utt_ids[i]] = static_cast<Split>(b);
  return a;
}

struct BlockedUtterance {
  std::string utt_id;
  std::optional<int> block;  // 1, 2 or 3
};

inline std::size_t holdout_size(std::size_t n, Fraction holdout) {
  const std::uint64_t w[] = {holdout.den - holdout.num, holdout.num};
  auto sizes = apportion(n, w, holdout.num > 0 && n >= 2 ? 1 : 0);
  return sizes[1];
}

/// Block 2 tests; Blocks 1 and 3 train, minus a seeded holdout for validation.
inline SplitAssignment split_blocks(std::string_view speaker_id, std::span<const BlockedUtterance> utts,
                                    Fraction holdout, std::uint64_t seed) {
  std::vector<std::string> pool;
  SplitAssignment a;
  a.scheme = Scheme::UASpeechBlocks;
  a.seed = seed;
  for (const auto& u : utts) {
    if (!u.block || *u.block < 1 || *u.block > 3)
      throw Error(ErrorCode::MissingBlockLabel, "utterance " + u.utt_id + " has no block label in {1,2,3}");
    if (*u.block == 2)
      a.assignments[u.utt_id] = Split::Test;
    else
      pool.push_back(u.utt_id);
  }
  if (a.assignments.empty())
    throw Error(ErrorCode::EmptyBlock2, "speaker " + std::string(speaker_id) + " has no Block 2 (test) utterances");
  std::sort(pool.begin(), pool.end());
  deterministic_shuffle(pool, speaker_key(seed, speaker_id));
  const std::size_t n_valid = holdout_size(pool.size(), holdout);
  for (std::size_t i = 0; i < pool.size(); ++i) a.assignments[pool[i]] = i < n_valid ? Split::Valid : Split::Train;
  return a;
}

// ---------------------------------------------------------------------------

struct PoolCandidate {
  std::string utt_id;
  std::string speaker_id;
  bool included = true;  // SI filter verdict (always true when no filtering applies)
};

/// Utterances of SI speakers that passed the filter, sorted by utt_id. Throws
/// InvariantViolation if a target speaker would leak into the pool.
inline std::vector<std::string> build_si_pool(const SpeakerPartition& partition,
                                              std::span<const PoolCandidate> candidates) {
  if (!partition.disjoint())
    throw Error(ErrorCode::InvariantViolation, "SI and SS speaker sets overlap");
  std::vector<std::string> pool;
  for (const auto& c : candidates) {
    if (!c.included || partition.si_speakers.count(c.speaker_id) == 0) continue;
    if (partition.ss_speakers.count(c.speaker_id))
      throw Error(ErrorCode::InvariantViolation, "target speaker " + c.speaker_id + " in SI pool");
    pool.push_back(c.utt_id);
  }
  std::sort(pool.begin(), pool.end());
  return pool;
}

// --- JSON -------------------------------------------------------------------

inline nlohmann::ordered_json to_json(const SpeakerPartition& p, std::span<const SpeakerStat> stats,
                                      std::string_view selection_base) {
  using nlohmann::ordered_json;
  std::map<std::string, const SpeakerStat*> by;
  for (const auto& s : stats) by[s.speaker_id] = &s;
  ordered_json ranking = ordered_json::array();
  for (std::size_t i = 0; i < p.ranking.size(); ++i) {
    const auto& id = p.ranking[i];
    ordered_json r{{"rank", i + 1}, {"speaker_id", id}};
    if (auto it = by.find(id); it != by.end()) {
      r["total_duration_ms"] = it->second->total_duration_ms;
      r["utterance_count"] = it->second->utterance_count;
    }
    r["group"] = p.ss_speakers.count(id) ? "SS" : "SI";
    ranking.push_back(std::move(r));
  }
  return {{"v", 1},
          {"fraction", p.fraction.str()},
          {"rounding", to_string(p.rounding)},
          {"selection_base", selection_base},
          {"ss_speakers", std::vector<std::string>(p.ss_speakers.begin(), p.ss_speakers.end())},
          {"si_speakers", std::vector<std::string>(p.si_speakers.begin(), p.si_speakers.end())},
          {"ranking", std::move(ranking)}};
}

inline nlohmann::ordered_json to_json(const SplitAssignment& a) {
  nlohmann::ordered_json m = nlohmann::ordered_json::object();
  for (const auto& [k, v] : a.assignments) m[k] = to_string(v);
  return {{"scheme", to_string(a.scheme)}, {"seed", a.seed}, {"assignments", std::move(m)}};
}

}  // namespace adaptbench::split
