#pragma once

#include "slahan/corpus.hpp"
#include "slahan/features.hpp"

namespace slahan {

// Rule-based toy corpus: tokens inside parentheses (and the parentheses
// themselves) are deleted, everything else is kept. Heads form a left chain
// (each token attaches to its predecessor, token 1 to the root), which gives
// the syntax loss and UAS a learnable deterministic target.
struct SyntheticSpec {
    size_t sentences = 50;
    uint64_t seed = 7;
    size_t min_words = 4;
    size_t max_words = 7;
    double paren_prob = 0.7;
    size_t vocab = 30;
};

inline std::vector<Sentence> synthetic_paren_corpus(const SyntheticSpec& spec) {
    Rng rng(spec.seed);
    std::vector<Sentence> corpus;
    for (size_t i = 0; i < spec.sentences; ++i) {
        const size_t base_len =
            spec.min_words + rng.below(spec.max_words - spec.min_words + 1);
        std::vector<std::string> tokens;
        std::vector<Label> labels;
        for (size_t w = 0; w < base_len; ++w) {
            tokens.push_back("w" + std::to_string(rng.below(spec.vocab)));
            labels.push_back(Label::Keep);
        }
        if (rng.uniform() < spec.paren_prob) {
            const size_t span = 1 + rng.below(3);
            const size_t at = rng.below(tokens.size() + 1);
            std::vector<std::string> inner{"("};
            std::vector<Label> inner_labels{Label::Delete};
            for (size_t w = 0; w < span; ++w) {
                inner.push_back("w" + std::to_string(rng.below(spec.vocab)));
                inner_labels.push_back(Label::Delete);
            }
            inner.push_back(")");
            inner_labels.push_back(Label::Delete);
            tokens.insert(tokens.begin() + at, inner.begin(), inner.end());
            labels.insert(labels.begin() + at, inner_labels.begin(), inner_labels.end());
        }
        std::vector<size_t> heads(tokens.size());
        for (size_t t = 0; t < tokens.size(); ++t) heads[t] = t; // chain: head of token k is k-1
        corpus.push_back(sentence_from_record(std::move(tokens), std::move(heads),
                                              std::move(labels)));
    }
    return corpus;
}

// Random contextual features that are consistent per token type: each token
// string gets a fixed random vector per layer (derived from its hash), so a
// model can identify tokens while the vectors carry no pretrained knowledge.
inline ContextualSource synthetic_contextual_features(const std::vector<Sentence>& corpus,
                                                      size_t dim, size_t layers,
                                                      uint64_t seed,
                                                      const std::string& name = "synth") {
    ContextualSource src;
    src.name = name;
    src.dim = dim;
    src.layers = layers;
    for (const auto& s : corpus) {
        std::vector<Tensor> per_layer;
        for (size_t k = 0; k < layers; ++k) {
            Tensor layer = Tensor::zeros({s.tokens.size(), dim});
            for (size_t i = 0; i < s.tokens.size(); ++i) {
                Rng token_rng(splitmix64(seed ^ fnv1a(s.tokens[i])) + k);
                for (size_t c = 0; c < dim; ++c) layer.at(i, c) = token_rng.uniform(-1, 1);
            }
            per_layer.push_back(std::move(layer));
        }
        src.per_sentence.push_back(std::move(per_layer));
    }
    return src;
}

} // namespace slahan
