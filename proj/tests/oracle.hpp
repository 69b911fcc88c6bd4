#pragma once

// Reference edit distance: the textbook recursion, memoized. Written
// independently of scoring.hpp and used only as a test oracle.

#include <algorithm>
#include <map>
#include <vector>

namespace oracle {

template <typename T>
std::size_t edit_distance(const std::vector<T>& a, const std::vector<T>& b) {
  std::map<std::pair<std::size_t, std::size_t>, std::size_t> memo;
  auto rec = [&](auto&& self, std::size_t i, std::size_t j) -> std::size_t {
    if (i == a.size()) return b.size() - j;
    if (j == b.size()) return a.size() - i;
    auto key = std::make_pair(i, j);
    if (auto it = memo.find(key); it != memo.end()) return it->second;
    std::size_t best = std::min({self(self, i + 1, j) + 1, self(self, i, j + 1) + 1,
                                 self(self, i + 1, j + 1) + (a[i] == b[j] ? 0 : 1)});
    memo[key] = best;
    return best;
  };
  return rec(rec, 0, 0);
}

}  // namespace oracle
