#pragma once

#include <chrono>
#include <filesystem>

#include "slahan/checkpoint.hpp"
#include "slahan/model.hpp"

namespace slahan {

struct TrainConfig {
    double lr = 0.001;
    double clip_threshold = 5.0;
    bool clip_per_value = false; // alternative to global-norm clipping
    size_t max_epochs = 20;
    size_t batch_size = 16;
    uint64_t seed = 1;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    double syntax_scale = 1.0;          // diagnostic multiplier on the syntax term
    std::string checkpoint_dir;         // empty = keep the best model in memory only
    std::ostream* epoch_log = nullptr;  // one JSON line per epoch when set

    void validate() const {
        if (lr <= 0.0) throw std::invalid_argument("TrainConfig: lr must be positive");
        if (clip_threshold <= 0.0)
            throw std::invalid_argument("TrainConfig: clip threshold must be positive");
        if (batch_size < 1) throw std::invalid_argument("TrainConfig: batch_size must be >= 1");
    }
};

struct TrainState {
    size_t step = 0;
    std::map<std::string, std::pair<Tensor, Tensor>> moments; // name -> (m, v)
    size_t epoch = 0;
    double best_accuracy = -1.0;
    size_t best_epoch = 0;
    std::string best_checkpoint_path;
};

// Global-norm clipping: if ||g|| exceeds the threshold, scale every gradient
// by threshold / ||g||. The per-value alternative clamps each coordinate.
inline void clip_gradients(ParameterStore& store, double threshold, bool per_value = false) {
    if (threshold <= 0.0) throw std::invalid_argument("clip_gradients: threshold must be > 0");
    if (per_value) {
        for (auto& [name, e] : store.entries())
            for (double& g : e.grad.v) g = std::clamp(g, -threshold, threshold);
        return;
    }
    const double norm = std::sqrt(store.grad_sq_norm());
    if (norm > threshold) store.scale_grads(threshold / norm);
}

// One Adam update with bias-corrected moments.
inline void adam_step(ParameterStore& store, TrainState& state, const TrainConfig& cfg) {
    ++state.step;
    const double b1 = cfg.adam_beta1, b2 = cfg.adam_beta2;
    const double bc1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
    for (auto& [name, e] : store.entries()) {
        for (double g : e.grad.v)
            if (!std::isfinite(g))
                throw numeric_error("adam_step: non-finite gradient in parameter " + name);
        auto it = state.moments.find(name);
        if (it == state.moments.end())
            it = state.moments
                     .emplace(name, std::make_pair(Tensor::zeros(e.grad.shape),
                                                   Tensor::zeros(e.grad.shape)))
                     .first;
        Tensor& m = it->second.first;
        Tensor& v = it->second.second;
        for (size_t i = 0; i < e.value.numel(); ++i) {
            const double g = e.grad.v[i];
            m.v[i] = b1 * m.v[i] + (1.0 - b1) * g;
            v.v[i] = b2 * v.v[i] + (1.0 - b2) * g * g;
            const double mhat = m.v[i] / bc1;
            const double vhat = v.v[i] / bc2;
            e.value.v[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.adam_eps);
        }
    }
}

// Fraction of sentences whose full greedy label sequence matches gold.
inline double per_sentence_accuracy(SlahanModel& model, const std::vector<Sentence>& corpus,
                                    const FeatureSet& features) {
    if (corpus.empty()) throw data_error("per_sentence_accuracy: empty corpus");
    size_t exact = 0;
    for (size_t i = 0; i < corpus.size(); ++i) {
        if (!corpus[i].has_labels())
            throw data_error("per_sentence_accuracy: gold labels required");
        DecodeResult res = model.greedy_decode(corpus[i], {&features, i});
        if (res.labels == corpus[i].gold_labels) ++exact;
    }
    return static_cast<double>(exact) / static_cast<double>(corpus.size());
}

// Unlabeled attachment score of the learned head attention.
inline double head_accuracy(SlahanModel& model, const std::vector<Sentence>& corpus,
                            const FeatureSet& features) {
    size_t correct = 0, total = 0;
    for (size_t i = 0; i < corpus.size(); ++i) {
        if (!corpus[i].has_heads()) throw data_error("head_accuracy: gold heads required");
        std::vector<size_t> predicted = model.head_argmax(corpus[i], {&features, i});
        for (size_t pos = 1; pos <= corpus[i].n(); ++pos) {
            if (predicted[pos] == corpus[i].gold_heads[pos]) ++correct;
            ++total;
        }
    }
    return total == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(total);
}

struct EpochRecord {
    size_t epoch = 0;
    double train_loss = 0.0;
    double dev_accuracy = 0.0;
    double seconds = 0.0;
};

struct TrainResult {
    std::vector<EpochRecord> epochs;
    double best_accuracy = 0.0;
    size_t best_epoch = 0;
    std::string best_checkpoint_path;
    ParameterStore best_params; // snapshot of the best model
};

// Mini-batch training loop: losses summed per batch, gradients averaged by
// the batch sentence count, clipped, then one Adam step. After each epoch
// the dev set is decoded greedily and the best per-sentence accuracy
// checkpoint is kept. An optional callback (epoch, accuracy) can stop early.
inline TrainResult train(SlahanModel& model, const std::vector<Sentence>& train_corpus,
                         const FeatureSet& train_features,
                         const std::vector<Sentence>& dev_corpus,
                         const FeatureSet& dev_features, const TrainConfig& cfg,
                         const std::function<bool(size_t, double)>& stop_early = nullptr) {
    cfg.validate();
    if (train_corpus.empty() || dev_corpus.empty())
        throw data_error("train: empty corpus");
    const double lambda = model.config().syntax_lambda;
    Rng dropout_rng(splitmix64(cfg.seed) ^ 0x5eedull);
    TrainState state;
    TrainResult result;

    if (!cfg.checkpoint_dir.empty())
        std::filesystem::create_directories(cfg.checkpoint_dir);

    for (size_t epoch = 0; epoch < cfg.max_epochs; ++epoch) {
        const auto started = std::chrono::steady_clock::now();
        double epoch_loss = 0.0;
        for (const auto& batch : make_batches(train_corpus.size(), cfg.batch_size, cfg.seed,
                                              epoch)) {
            model.params().zero_grad();
            for (size_t idx : batch) {
                Tape tape;
                NodeId loss = model.sentence_loss(tape, train_corpus[idx],
                                                  {&train_features, idx}, lambda,
                                                  /*train=*/true, &dropout_rng, nullptr,
                                                  cfg.syntax_scale);
                epoch_loss += tape.value(loss).v[0];
                tape.backward(loss);
            }
            model.params().scale_grads(1.0 / static_cast<double>(batch.size()));
            clip_gradients(model.params(), cfg.clip_threshold, cfg.clip_per_value);
            adam_step(model.params(), state, cfg);
        }

        EpochRecord rec;
        rec.epoch = epoch;
        rec.train_loss = epoch_loss / static_cast<double>(train_corpus.size());
        rec.dev_accuracy = per_sentence_accuracy(model, dev_corpus, dev_features);
        rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started)
                          .count();
        result.epochs.push_back(rec);
        if (cfg.epoch_log) {
            nlohmann::json line = {{"epoch", rec.epoch},
                                   {"train_loss", rec.train_loss},
                                   {"dev_accuracy", rec.dev_accuracy},
                                   {"seconds", rec.seconds}};
            *cfg.epoch_log << line.dump() << "\n";
        }
        if (rec.dev_accuracy > state.best_accuracy) {
            state.best_accuracy = rec.dev_accuracy;
            state.best_epoch = epoch;
            result.best_params = model.params();
            if (!cfg.checkpoint_dir.empty()) {
                state.best_checkpoint_path =
                    (std::filesystem::path(cfg.checkpoint_dir) / "best.ckpt").string();
                save_checkpoint(state.best_checkpoint_path, model.config(),
                                train_features.layout_hash(), model.params());
            }
        }
        if (stop_early && stop_early(epoch, rec.dev_accuracy)) break;
    }
    result.best_accuracy = state.best_accuracy;
    result.best_epoch = state.best_epoch;
    result.best_checkpoint_path = state.best_checkpoint_path;
    return result;
}

} // namespace slahan
