#pragma once

#include <algorithm>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

#include "slahan/common.hpp"
#include "slahan/corpus.hpp"

namespace slahan {

struct PrecisionRecallF1 {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

// Kept-token F1 over retained position sets. Conventions for the degenerate
// cases the data never produces but tests must: both sets empty scores 1,
// one empty set scores 0.
inline PrecisionRecallF1 kept_token_f1(const std::set<size_t>& gold,
                                       const std::set<size_t>& system) {
    if (gold.empty() && system.empty()) return {1.0, 1.0, 1.0};
    if (gold.empty() || system.empty()) return {0.0, 0.0, 0.0};
    size_t overlap = 0;
    for (size_t idx : system) overlap += gold.count(idx);
    PrecisionRecallF1 r;
    r.precision = static_cast<double>(overlap) / static_cast<double>(system.size());
    r.recall = static_cast<double>(overlap) / static_cast<double>(gold.size());
    r.f1 = overlap == 0 ? 0.0 : 2.0 * r.precision * r.recall / (r.precision + r.recall);
    return r;
}

// UTF-8 byte length of tokens joined by single spaces.
inline size_t joined_byte_length(const std::vector<std::string>& tokens) {
    if (tokens.empty()) return 0;
    size_t len = tokens.size() - 1;
    for (const auto& t : tokens) len += t.size();
    return len;
}

// Greedily keeps whole leading tokens while the joined byte length stays
// within the budget; never splits a token.
inline std::vector<std::string> byte_truncate(const std::vector<std::string>& candidate,
                                              size_t budget_bytes) {
    std::vector<std::string> out;
    size_t len = 0;
    for (const auto& tok : candidate) {
        const size_t next = len == 0 ? tok.size() : len + 1 + tok.size();
        if (next > budget_bytes) break;
        out.push_back(tok);
        len = next;
    }
    return out;
}

// Clipped n-gram recall. A reference shorter than n scores 0 (callers may
// warn). The candidate is expected to be byte-truncated already.
inline double rouge_n(const std::vector<std::string>& reference,
                      const std::vector<std::string>& candidate, size_t n) {
    if (n == 0) throw std::invalid_argument("rouge_n: n must be >= 1");
    if (reference.size() < n) return 0.0;
    auto count_ngrams = [n](const std::vector<std::string>& toks) {
        std::map<std::vector<std::string>, size_t> counts;
        if (toks.size() >= n)
            for (size_t i = 0; i + n <= toks.size(); ++i)
                ++counts[std::vector<std::string>(toks.begin() + i, toks.begin() + i + n)];
        return counts;
    };
    const auto ref = count_ngrams(reference);
    const auto cand = count_ngrams(candidate);
    size_t total = 0, overlap = 0;
    for (const auto& [gram, c] : ref) {
        total += c;
        auto it = cand.find(gram);
        if (it != cand.end()) overlap += std::min(c, it->second);
    }
    return static_cast<double>(overlap) / static_cast<double>(total);
}

inline size_t lcs_length(const std::vector<std::string>& a, const std::vector<std::string>& b) {
    std::vector<size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
    for (size_t i = 1; i <= a.size(); ++i) {
        for (size_t j = 1; j <= b.size(); ++j) {
            cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
        }
        std::swap(prev, cur);
    }
    return prev[b.size()];
}

// LCS-based F measure. With the default beta -> infinity the score reduces
// to LCS recall, the recall-weighted configuration used for reporting.
inline double rouge_l(const std::vector<std::string>& reference,
                      const std::vector<std::string>& candidate,
                      double beta = std::numeric_limits<double>::infinity()) {
    if (reference.empty() || candidate.empty()) return 0.0;
    const double lcs = static_cast<double>(lcs_length(reference, candidate));
    if (lcs == 0.0) return 0.0;
    const double r = lcs / static_cast<double>(reference.size());
    const double p = lcs / static_cast<double>(candidate.size());
    if (std::isinf(beta)) return r;
    const double b2 = beta * beta;
    return (1.0 + b2) * r * p / (r + b2 * p);
}

// Signed difference of compression ratios (both in percent).
inline double delta_c(double system_cr, double gold_cr) { return system_cr - gold_cr; }

// Token compression ratio in percent, root excluded.
inline double token_compression_ratio(size_t kept_tokens, size_t total_tokens) {
    if (total_tokens == 0) return 0.0;
    return 100.0 * static_cast<double>(kept_tokens) / static_cast<double>(total_tokens);
}

// Character compression ratio in percent over joined byte lengths.
inline double char_compression_ratio(const std::vector<std::string>& kept,
                                     const std::vector<std::string>& original) {
    const size_t total = joined_byte_length(original);
    if (total == 0) return 0.0;
    return 100.0 * static_cast<double>(joined_byte_length(kept)) / static_cast<double>(total);
}

// One-sided paired bootstrap: resample sentence indices with replacement and
// count how often the observed winner loses; exact ties split by a coin flip
// so that identical systems converge to p = 0.5.
inline double paired_bootstrap(const std::vector<double>& scores_a,
                               const std::vector<double>& scores_b, size_t samples,
                               uint64_t seed) {
    if (scores_a.size() != scores_b.size())
        throw std::invalid_argument("paired_bootstrap: score vectors differ in length");
    if (scores_a.empty()) throw std::invalid_argument("paired_bootstrap: empty scores");
    const size_t n = scores_a.size();
    double mean_a = 0.0, mean_b = 0.0;
    for (size_t i = 0; i < n; ++i) {
        mean_a += scores_a[i];
        mean_b += scores_b[i];
    }
    const bool a_is_winner = mean_a >= mean_b;
    const std::vector<double>& win = a_is_winner ? scores_a : scores_b;
    const std::vector<double>& lose = a_is_winner ? scores_b : scores_a;
    Rng rng(seed);
    double exceed = 0.0;
    for (size_t s = 0; s < samples; ++s) {
        double sum_w = 0.0, sum_l = 0.0;
        for (size_t i = 0; i < n; ++i) {
            const size_t idx = static_cast<size_t>(rng.below(n));
            sum_w += win[idx];
            sum_l += lose[idx];
        }
        if (sum_l > sum_w)
            exceed += 1.0;
        else if (sum_l == sum_w && rng.uniform() < 0.5)
            exceed += 1.0;
    }
    return exceed / static_cast<double>(samples);
}

// Fig.-2-style statistic: a retained token is covered when some retained
// token to its right is its gold parent or gold child. Reported per
// sentence-length bucket, separately for parent links, child links and
// either.
struct LookaheadBucket {
    size_t retained = 0;
    size_t covered_parent = 0;
    size_t covered_child = 0;
    size_t covered_either = 0;

    double parent_rate() const { return retained ? double(covered_parent) / retained : 0.0; }
    double child_rate() const { return retained ? double(covered_child) / retained : 0.0; }
    double either_rate() const { return retained ? double(covered_either) / retained : 0.0; }
};

// bucket_bounds are upper bounds (inclusive) on sentence length n; a final
// catch-all bucket collects longer sentences.
inline std::vector<LookaheadBucket> lookahead_link_proportion(
    const std::vector<Sentence>& corpus, const std::vector<size_t>& bucket_bounds) {
    std::vector<LookaheadBucket> buckets(bucket_bounds.size() + 1);
    for (const auto& s : corpus) {
        if (!s.has_heads() || !s.has_labels())
            throw data_error("lookahead_link_proportion: gold trees and labels required");
        size_t b = 0;
        while (b < bucket_bounds.size() && s.n() > bucket_bounds[b]) ++b;
        std::vector<size_t> retained;
        for (size_t pos = 1; pos <= s.n(); ++pos)
            if (s.gold_labels[pos - 1] == Label::Keep) retained.push_back(pos);
        for (size_t pos : retained) {
            bool parent_right = false, child_right = false;
            for (size_t u : retained) {
                if (u <= pos) continue;
                if (s.gold_heads[pos] == u) parent_right = true;
                if (s.gold_heads[u] == pos) child_right = true;
            }
            ++buckets[b].retained;
            buckets[b].covered_parent += parent_right;
            buckets[b].covered_child += child_right;
            buckets[b].covered_either += parent_right || child_right;
        }
    }
    return buckets;
}

// ---------------------------------------------------------------------------
// Evaluation report
// ---------------------------------------------------------------------------

struct SentenceScores {
    double f1 = 0.0;
    double rouge1 = 0.0;
    double rouge2 = 0.0;
    double rougeL = 0.0;
    double cr_tokens = 0.0;
    double cr_chars = 0.0;
    double gold_cr_tokens = 0.0;
    double gold_cr_chars = 0.0;
};

struct EvaluationReport {
    std::vector<SentenceScores> per_sentence;
    double f1 = 0.0, rouge1 = 0.0, rouge2 = 0.0, rougeL = 0.0;
    double cr_tokens = 0.0, cr_chars = 0.0;
    double gold_cr_tokens = 0.0, gold_cr_chars = 0.0;
    double delta_c_tokens = 0.0, delta_c_chars = 0.0;
    std::optional<double> p_value;
    size_t bootstrap_samples = 0;
};

// Scores one sentence: kept sets -> F1 and compression ratios; kept token
// sequences -> byte-truncated ROUGE against the gold compression.
inline SentenceScores score_sentence(const Sentence& s, const std::vector<Label>& system) {
    if (!s.has_labels()) throw data_error("score_sentence: gold labels required");
    if (system.size() != s.n()) throw data_error("score_sentence: label length mismatch");
    std::set<size_t> gold_keep, system_keep;
    std::vector<std::string> gold_tokens, system_tokens, original;
    for (size_t pos = 1; pos <= s.n(); ++pos) {
        original.push_back(s.tokens[pos]);
        if (s.gold_labels[pos - 1] == Label::Keep) {
            gold_keep.insert(pos);
            gold_tokens.push_back(s.tokens[pos]);
        }
        if (system[pos - 1] == Label::Keep) {
            system_keep.insert(pos);
            system_tokens.push_back(s.tokens[pos]);
        }
    }
    SentenceScores out;
    out.f1 = kept_token_f1(gold_keep, system_keep).f1;
    const auto truncated = byte_truncate(system_tokens, joined_byte_length(gold_tokens));
    out.rouge1 = rouge_n(gold_tokens, truncated, 1);
    out.rouge2 = rouge_n(gold_tokens, truncated, 2);
    out.rougeL = rouge_l(gold_tokens, truncated);
    out.cr_tokens = token_compression_ratio(system_keep.size(), s.n());
    out.cr_chars = char_compression_ratio(system_tokens, original);
    out.gold_cr_tokens = token_compression_ratio(gold_keep.size(), s.n());
    out.gold_cr_chars = char_compression_ratio(gold_tokens, original);
    return out;
}

// Macro averages are plain arithmetic means of the per-sentence scores.
inline EvaluationReport evaluate_labels(const std::vector<Sentence>& corpus,
                                        const std::vector<std::vector<Label>>& system) {
    if (corpus.size() != system.size())
        throw data_error("evaluate_labels: system output count does not match corpus");
    if (corpus.empty()) throw data_error("evaluate_labels: empty corpus");
    EvaluationReport rep;
    for (size_t i = 0; i < corpus.size(); ++i)
        rep.per_sentence.push_back(score_sentence(corpus[i], system[i]));
    const double n = static_cast<double>(rep.per_sentence.size());
    for (const auto& s : rep.per_sentence) {
        rep.f1 += s.f1 / n;
        rep.rouge1 += s.rouge1 / n;
        rep.rouge2 += s.rouge2 / n;
        rep.rougeL += s.rougeL / n;
        rep.cr_tokens += s.cr_tokens / n;
        rep.cr_chars += s.cr_chars / n;
        rep.gold_cr_tokens += s.gold_cr_tokens / n;
        rep.gold_cr_chars += s.gold_cr_chars / n;
    }
    rep.delta_c_tokens = delta_c(rep.cr_tokens, rep.gold_cr_tokens);
    rep.delta_c_chars = delta_c(rep.cr_chars, rep.gold_cr_chars);
    return rep;
}

inline nlohmann::json report_to_json(const EvaluationReport& rep) {
    nlohmann::json j;
    j["macro"] = {{"f1", rep.f1},
                  {"rouge1", rep.rouge1},
                  {"rouge2", rep.rouge2},
                  {"rougeL", rep.rougeL},
                  {"cr_tokens", rep.cr_tokens},
                  {"cr_chars", rep.cr_chars},
                  {"gold_cr_tokens", rep.gold_cr_tokens},
                  {"gold_cr_chars", rep.gold_cr_chars},
                  {"delta_c_tokens", rep.delta_c_tokens},
                  {"delta_c_chars", rep.delta_c_chars}};
    if (rep.p_value) {
        j["significance"] = {{"p_value", *rep.p_value}, {"samples", rep.bootstrap_samples}};
    }
    j["per_sentence"] = nlohmann::json::array();
    for (const auto& s : rep.per_sentence)
        j["per_sentence"].push_back({{"f1", s.f1},
                                     {"rouge1", s.rouge1},
                                     {"rouge2", s.rouge2},
                                     {"rougeL", s.rougeL},
                                     {"cr_tokens", s.cr_tokens},
                                     {"cr_chars", s.cr_chars}});
    return j;
}

// Aligned text table in the reporting column order F1, R-1, R-2, R-L, dC.
inline std::string report_to_table(const EvaluationReport& rep,
                                   const std::string& row_name = "system") {
    std::ostringstream os;
    os << std::fixed << std::setprecision(1);
    os << std::left << std::setw(16) << "" << std::right << std::setw(7) << "F1"
       << std::setw(7) << "R-1" << std::setw(7) << "R-2" << std::setw(7) << "R-L"
       << std::setw(7) << "dC" << "\n";
    os << std::left << std::setw(16) << row_name << std::right << std::setw(7)
       << 100.0 * rep.f1 << std::setw(7) << 100.0 * rep.rouge1 << std::setw(7)
       << 100.0 * rep.rouge2 << std::setw(7) << 100.0 * rep.rougeL << std::setw(7)
       << rep.delta_c_tokens << "\n";
    os << std::left << std::setw(16) << "CR (tok/char)" << std::right << std::setw(7)
       << rep.cr_tokens << std::setw(7) << rep.cr_chars << std::setw(7) << ""
       << std::setw(7) << "gold:" << std::setw(7) << rep.gold_cr_tokens << "\n";
    if (rep.p_value)
        os << "paired bootstrap p = " << std::setprecision(4) << *rep.p_value << " ("
           << rep.bootstrap_samples << " samples)\n";
    return os.str();
}

} // namespace slahan
