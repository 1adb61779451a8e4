#pragma once

// Brute-force reference implementations used to cross-check the metrics.

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "semlogue/rng.hpp"

namespace oracle {

using Toks = std::vector<std::string>;

inline bool same_gram(const Toks& a, std::size_t i, const Toks& b, std::size_t j, std::size_t n) {
  for (std::size_t k = 0; k < n; ++k) {
    if (a[i + k] != b[j + k]) return false;
  }
  return true;
}

inline std::size_t occurrences(const Toks& hay, const Toks& src, std::size_t at, std::size_t n) {
  std::size_t c = 0;
  for (std::size_t j = 0; j + n <= hay.size(); ++j) c += same_gram(hay, j, src, at, n) ? 1 : 0;
  return c;
}

// clipped count, each distinct candidate n-gram counted at its first position
inline std::size_t clipped_matches(const Toks& cand, const Toks& ref, std::size_t n) {
  std::size_t m = 0;
  for (std::size_t i = 0; i + n <= cand.size(); ++i) {
    bool seen = false;
    for (std::size_t k = 0; k < i && !seen; ++k) seen = same_gram(cand, k, cand, i, n);
    if (seen) continue;
    m += std::min(occurrences(cand, cand, i, n), occurrences(ref, cand, i, n));
  }
  return m;
}

inline double bleu(const Toks& cand, const Toks& ref) {
  if (cand.empty()) return 0.0;
  const double c = static_cast<double>(cand.size()), r = static_cast<double>(ref.size());
  const double bp = c < r ? std::exp(1.0 - r / c) : 1.0;
  double log_sum = 0.0;
  std::size_t orders = 0;
  for (std::size_t n = 1; n <= 4 && n <= cand.size(); ++n) {
    const double p = static_cast<double>(clipped_matches(cand, ref, n)) / static_cast<double>(cand.size() - n + 1);
    log_sum += std::log(std::max(p, 1e-9));
    ++orders;
  }
  return bp * std::exp(log_sum / static_cast<double>(orders));
}

inline double precision(const Toks& cand, const Toks& ref, std::size_t n) {
  if (cand.size() < n) return 0.0;
  return static_cast<double>(clipped_matches(cand, ref, n)) / static_cast<double>(cand.size() - n + 1);
}

inline double f1(std::size_t match, std::size_t ct, std::size_t rt) {
  if (match == 0 || ct == 0 || rt == 0) return 0.0;
  const double p = static_cast<double>(match) / static_cast<double>(ct);
  const double r = static_cast<double>(match) / static_cast<double>(rt);
  return 2.0 * p * r / (p + r);
}

inline double rouge_n(const Toks& cand, const Toks& ref, std::size_t n) {
  if (cand.empty() || ref.empty()) return 0.0;
  const std::size_t ct = cand.size() >= n ? cand.size() - n + 1 : 0;
  const std::size_t rt = ref.size() >= n ? ref.size() - n + 1 : 0;
  return f1(clipped_matches(cand, ref, n), ct, rt);
}

// LCS by exhaustive recursion over (i, j) with memo table
inline std::size_t lcs(const Toks& a, const Toks& b) {
  std::vector<std::vector<long>> memo(a.size() + 1, std::vector<long>(b.size() + 1, -1));
  auto rec = [&](auto&& self, std::size_t i, std::size_t j) -> std::size_t {
    if (i == a.size() || j == b.size()) return 0;
    if (memo[i][j] >= 0) return static_cast<std::size_t>(memo[i][j]);
    std::size_t best = a[i] == b[j] ? 1 + self(self, i + 1, j + 1) : 0;
    best = std::max({best, self(self, i + 1, j), self(self, i, j + 1)});
    memo[i][j] = static_cast<long>(best);
    return best;
  };
  return rec(rec, 0, 0);
}

inline double rouge_l(const Toks& cand, const Toks& ref) {
  if (cand.empty() || ref.empty()) return 0.0;
  return f1(lcs(cand, ref), cand.size(), ref.size());
}

// Random token sequence over a small alphabet so n-grams repeat.
inline Toks random_tokens(semlogue::Rng& rng, std::size_t max_len) {
  static const char* words[] = {"a", "b", "c", "d", "e", "the", "cat"};
  Toks t(rng.below(max_len + 1));
  for (auto& w : t) w = words[rng.below(7)];
  return t;
}

}  // namespace oracle
