#pragma once

// Brute-force oracles shared by the metrics tests and the acceptance suite.
// Kept deliberately naive and independent of the library implementations.

#include <string>
#include <vector>

#include "slahan/common.hpp"

namespace slahan::testing {

// clipped n-gram recall via greedy gram matching
inline double oracle_rouge_n(const std::vector<std::string>& ref,
                             const std::vector<std::string>& cand, size_t n) {
    if (ref.size() < n) return 0.0;
    const size_t ref_grams = ref.size() - n + 1;
    const size_t cand_grams = cand.size() < n ? 0 : cand.size() - n + 1;
    std::vector<bool> used(cand_grams, false);
    size_t overlap = 0;
    for (size_t i = 0; i < ref_grams; ++i) {
        for (size_t j = 0; j < cand_grams; ++j) {
            if (used[j]) continue;
            bool eq = true;
            for (size_t k = 0; k < n; ++k)
                if (ref[i + k] != cand[j + k]) {
                    eq = false;
                    break;
                }
            if (eq) {
                used[j] = true;
                ++overlap;
                break;
            }
        }
    }
    return static_cast<double>(overlap) / static_cast<double>(ref_grams);
}

// plain recursive LCS, exponential on purpose
inline size_t oracle_lcs(const std::vector<std::string>& a, const std::vector<std::string>& b,
                         size_t i, size_t j) {
    if (i == 0 || j == 0) return 0;
    if (a[i - 1] == b[j - 1]) return 1 + oracle_lcs(a, b, i - 1, j - 1);
    return std::max(oracle_lcs(a, b, i - 1, j), oracle_lcs(a, b, i, j - 1));
}

// set F1 by direct counting
inline double oracle_f1(const std::vector<size_t>& gold, const std::vector<size_t>& system) {
    if (gold.empty() && system.empty()) return 1.0;
    if (gold.empty() || system.empty()) return 0.0;
    size_t overlap = 0;
    for (size_t g : gold)
        for (size_t s : system)
            if (g == s) {
                ++overlap;
                break;
            }
    if (overlap == 0) return 0.0;
    const double p = double(overlap) / double(system.size());
    const double r = double(overlap) / double(gold.size());
    return 2.0 * p * r / (p + r);
}

inline std::vector<std::string> random_tokens(Rng& rng, size_t max_len, size_t vocab = 6) {
    std::vector<std::string> out;
    const size_t len = 1 + rng.below(max_len);
    for (size_t i = 0; i < len; ++i) out.push_back("t" + std::to_string(rng.below(vocab)));
    return out;
}

} // namespace slahan::testing
