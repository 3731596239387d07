#pragma once

#include <optional>

#include <json.hpp>

#include "slahan/features.hpp"
#include "slahan/graph.hpp"
#include "slahan/lstm.hpp"

namespace slahan {

enum class Variant { Base, Parent, Child, Slahan };

inline const char* variant_name(Variant v) {
    switch (v) {
        case Variant::Base: return "base";
        case Variant::Parent: return "parent";
        case Variant::Child: return "child";
        case Variant::Slahan: return "slahan";
    }
    throw std::invalid_argument("variant_name: bad variant");
}

inline Variant parse_variant(const std::string& s) {
    if (s == "base") return Variant::Base;
    if (s == "parent") return Variant::Parent;
    if (s == "child") return Variant::Child;
    if (s == "slahan") return Variant::Slahan;
    throw std::invalid_argument("unknown variant '" + s + "'");
}

struct ModelConfig {
    Variant variant = Variant::Slahan;
    double syntax_lambda = 0.0;
    std::vector<int> orders = {1, 2, 3, 4};
    size_t hidden_dim = 200;
    size_t attention_dim = 200;
    size_t lstm_depth = 2;
    double dropout = 0.3;
    bool tie_order_weights = false;
    std::vector<FeatureSourceMeta> features;

    // Diagnostic ablation hooks: zero out one summary and/or pin the gate.
    // Not serialized; used by the structural-equivalence checks.
    bool zero_parent_summary = false;
    bool zero_child_summary = false;
    std::optional<double> force_gate_value;

    bool uses_graph() const { return variant != Variant::Base; }
    bool has_parent_side() const {
        return variant == Variant::Parent || variant == Variant::Slahan;
    }
    bool has_child_side() const {
        return variant == Variant::Child || variant == Variant::Slahan;
    }

    size_t embedding_dim() const {
        size_t d = 0;
        for (const auto& m : features) d += m.dim;
        return d;
    }
    size_t state_dim() const { return 2 * hidden_dim; }             // h_t = [fwd; bwd]
    size_t context_dim() const { return 5 * hidden_dim; }           // [<-h0, ->hn, h_t, s_t]
    size_t feedback_dim() const {                                   // d_t or d'_t
        return uses_graph() ? 2 * state_dim() + hidden_dim : hidden_dim;
    }

    void validate() const {
        if (hidden_dim == 0 || attention_dim == 0 || lstm_depth == 0)
            throw std::invalid_argument("ModelConfig: dimensions must be positive");
        if (dropout < 0.0 || dropout >= 1.0)
            throw std::invalid_argument("ModelConfig: dropout must be in [0,1)");
        if (features.empty())
            throw std::invalid_argument("ModelConfig: at least one feature source is required");
        if (uses_graph() && orders.empty())
            throw std::invalid_argument("ModelConfig: graph variants need a nonempty order set");
        if (!uses_graph() && syntax_lambda != 0.0)
            throw std::invalid_argument(
                "ModelConfig: the base variant has no head attention, lambda must be 0");
        for (int d : orders)
            if (d < 1) throw std::invalid_argument("ModelConfig: orders must be >= 1");
    }

    nlohmann::json to_json() const {
        nlohmann::json j;
        j["variant"] = variant_name(variant);
        j["syntax_lambda"] = syntax_lambda;
        j["orders"] = orders;
        j["hidden_dim"] = hidden_dim;
        j["attention_dim"] = attention_dim;
        j["lstm_depth"] = lstm_depth;
        j["dropout"] = dropout;
        j["tie_order_weights"] = tie_order_weights;
        j["features"] = nlohmann::json::array();
        for (const auto& m : features)
            j["features"].push_back(
                {{"kind", m.kind == FeatureSourceMeta::Kind::Static ? "static" : "contextual"},
                 {"name", m.name},
                 {"dim", m.dim},
                 {"layers", m.layers}});
        return j;
    }

    static ModelConfig from_json(const nlohmann::json& j) {
        ModelConfig c;
        c.variant = parse_variant(j.at("variant").get<std::string>());
        c.syntax_lambda = j.at("syntax_lambda").get<double>();
        c.orders = j.at("orders").get<std::vector<int>>();
        c.hidden_dim = j.at("hidden_dim").get<size_t>();
        c.attention_dim = j.at("attention_dim").get<size_t>();
        c.lstm_depth = j.at("lstm_depth").get<size_t>();
        c.dropout = j.at("dropout").get<double>();
        c.tie_order_weights = j.at("tie_order_weights").get<bool>();
        for (const auto& f : j.at("features")) {
            FeatureSourceMeta m;
            m.kind = f.at("kind").get<std::string>() == "static"
                         ? FeatureSourceMeta::Kind::Static
                         : FeatureSourceMeta::Kind::Contextual;
            m.name = f.at("name").get<std::string>();
            m.dim = f.at("dim").get<size_t>();
            m.layers = f.at("layers").get<size_t>();
            c.features.push_back(std::move(m));
        }
        c.validate();
        return c;
    }
};

// Per-sentence view into a FeatureSet (contextual sources are indexed by
// sentence position within the corpus the features were built for).
struct SentenceFeatures {
    const FeatureSet* set = nullptr;
    size_t sentence_index = 0;
};

struct EncoderOut {
    std::vector<NodeId> h; // per position, top-layer [fwd; bwd]
    NodeId H;              // (n+1) x 2*hidden
    NodeId h_back0;        // final backward state, inherited by the decoder
    NodeId h_fwdn;
    std::vector<LstmOut> decoder_init; // per decoder layer (h, c) from the backward LSTM
};

struct ForwardTrace {
    Tensor a1;
    std::map<int, Tensor> parent_graphs;
    std::map<int, Tensor> child_graphs;
    struct Step {
        Tensor label_dist;
        Tensor feedback;                // d_t (base) or d'_t (graph variants)
        Tensor gate;                    // z_t (empty for base)
        std::vector<double> eta_parent; // gate weights over orders
        std::vector<double> eta_child;
        int chosen = -1;
        bool used_gold = false;
    };
    std::vector<Step> steps;
};

struct DecodeResult {
    std::vector<Label> labels;            // positions 1..n
    std::vector<std::string> compression; // kept tokens, original order, root excluded
};

class SlahanModel {
public:
    explicit SlahanModel(ModelConfig cfg) : cfg_(std::move(cfg)) {
        cfg_.validate();
        for (size_t l = 0; l < cfg_.lstm_depth; ++l) {
            const std::string p = "enc.l" + std::to_string(l);
            enc_fwd_.push_back({p + ".fwd.W", p + ".fwd.b"});
            enc_bwd_.push_back({p + ".bwd.W", p + ".bwd.b"});
            dec_.push_back({"dec.l" + std::to_string(l) + ".W",
                            "dec.l" + std::to_string(l) + ".b"});
        }
        for (int d : cfg_.orders) {
            const std::string suffix = ".d" + std::to_string(d);
            parent_w_.push_back(cfg_.tie_order_weights ? "order.tied" + suffix
                                                       : "order.parent" + suffix);
            child_w_.push_back(cfg_.tie_order_weights ? "order.tied" + suffix
                                                      : "order.child" + suffix);
        }
    }

    const ModelConfig& config() const { return cfg_; }
    ParameterStore& params() { return store_; }
    const ParameterStore& params() const { return store_; }

    // Every parameter draws from an rng seeded by (seed, name), so models
    // sharing a seed agree on all parameters they have in common regardless
    // of variant. Biases start at zero (including the forget gate).
    void init_parameters(uint64_t seed) {
        auto make = [&](const std::string& name, std::vector<size_t> shape, bool zeros = false) {
            Rng rng(splitmix64(seed) ^ fnv1a(name));
            store_.create(name, zeros ? Tensor::zeros(shape) : glorot_init(shape, rng));
        };
        const size_t h = cfg_.hidden_dim, sd = cfg_.state_dim();
        for (const auto& m : cfg_.features) {
            if (m.kind == FeatureSourceMeta::Kind::Static)
                make("embed." + m.name + ".unk", {m.dim});
            else if (m.layers >= 2)
                for (size_t k = 0; k < m.layers; ++k)
                    make("embed." + m.name + ".phi" + std::to_string(k), {m.dim});
        }
        size_t enc_in = cfg_.embedding_dim();
        for (size_t l = 0; l < cfg_.lstm_depth; ++l) {
            make(enc_fwd_[l].first, {4 * h, enc_in + h});
            make(enc_fwd_[l].second, {4 * h}, true);
            make(enc_bwd_[l].first, {4 * h, enc_in + h});
            make(enc_bwd_[l].second, {4 * h}, true);
            enc_in = sd;
        }
        size_t dec_in = LabelCodec::kWidth + cfg_.feedback_dim() + cfg_.embedding_dim();
        for (size_t l = 0; l < cfg_.lstm_depth; ++l) {
            make(dec_[l].first, {4 * h, dec_in + h});
            make(dec_[l].second, {4 * h}, true);
            dec_in = h;
        }
        if (cfg_.uses_graph()) {
            make("attn.Ua", {cfg_.attention_dim, sd});
            make("attn.Wa", {cfg_.attention_dim, sd});
            make("attn.va", {cfg_.attention_dim});
            if (cfg_.has_parent_side() || cfg_.tie_order_weights)
                for (const auto& name : parent_w_)
                    if (!store_.has(name)) make(name, {sd, cfg_.context_dim()});
            if (cfg_.has_child_side())
                for (const auto& name : child_w_)
                    if (!store_.has(name)) make(name, {sd, cfg_.context_dim()});
            make("gate.Wz", {sd, 2 * sd + cfg_.context_dim()});
        } else {
            make("out.Wd", {h, sd + h});
            make("out.bd", {h}, true);
        }
        make("out.Wo", {static_cast<size_t>(LabelCodec::kWidth), cfg_.feedback_dim()});
    }

    // e_i: concatenation over feature sources; multi-layer sources use the
    // learned per-token softmax layer weighting.
    std::vector<NodeId> embed_tokens(Tape& t, const Sentence& s, const SentenceFeatures& f) {
        const FeatureSet& set = *f.set;
        const auto layout = set.layout();
        if (layout.size() != cfg_.features.size())
            throw data_error("feature set does not match the model's configured sources");
        for (size_t k = 0; k < layout.size(); ++k) {
            const auto &a = layout[k], &b = cfg_.features[k];
            if (a.kind != b.kind || a.name != b.name || a.dim != b.dim || a.layers != b.layers)
                throw data_error("feature source '" + a.name +
                                 "' does not match the model's configured sources");
        }
        const size_t n1 = s.tokens.size();
        for (const auto& c : set.contextuals) {
            if (f.sentence_index >= c.per_sentence.size())
                throw data_error("contextual source '" + c.name + "' has no features for "
                                 "sentence index " + std::to_string(f.sentence_index));
            if (c.per_sentence[f.sentence_index][0].rows() != n1)
                throw data_error("contextual source '" + c.name +
                                 "' is misaligned with token positions");
        }
        std::vector<NodeId> out;
        out.reserve(n1);
        for (size_t i = 0; i < n1; ++i) {
            std::vector<NodeId> parts;
            for (const auto& src : set.statics) {
                if (const Tensor* vec = src.lookup(s.tokens[i]))
                    parts.push_back(t.constant(*vec));
                else
                    parts.push_back(t.param(store_, "embed." + src.name + ".unk"));
            }
            for (const auto& src : set.contextuals) {
                const auto& layers = src.per_sentence[f.sentence_index];
                if (src.layers == 1) {
                    parts.push_back(t.constant(row_of(layers[0], i)));
                    continue;
                }
                std::vector<NodeId> layer_vecs, scores;
                for (size_t k = 0; k < src.layers; ++k) {
                    NodeId lk = t.constant(row_of(layers[k], i));
                    NodeId phi = t.param(store_,
                                         "embed." + src.name + ".phi" + std::to_string(k));
                    layer_vecs.push_back(lk);
                    scores.push_back(dot(t, phi, lk));
                }
                NodeId psi = softmax_vec(t, concat(t, scores));
                NodeId mixed = scalar_mul(t, layer_vecs[0], pick(t, psi, 0));
                for (size_t k = 1; k < src.layers; ++k)
                    mixed = add(t, mixed, scalar_mul(t, layer_vecs[k], pick(t, psi, k)));
                parts.push_back(mixed);
            }
            out.push_back(parts.size() == 1 ? parts[0] : concat(t, parts));
        }
        return out;
    }

    // Stacked bi-LSTM. Dropout hits each layer's input sequence in train
    // mode. The backward LSTM's final state per layer seeds the decoder.
    EncoderOut encode(Tape& t, const std::vector<NodeId>& embeds, bool train, Rng* rng) {
        const size_t n1 = embeds.size(), h = cfg_.hidden_dim;
        std::vector<NodeId> layer_in = embeds;
        std::vector<NodeId> fwd(n1), bwd(n1);
        EncoderOut out;
        for (size_t l = 0; l < cfg_.lstm_depth; ++l) {
            std::vector<NodeId> inputs(n1);
            for (size_t i = 0; i < n1; ++i)
                inputs[i] = train ? dropout(t, layer_in[i], cfg_.dropout, *rng, true)
                                  : layer_in[i];
            NodeId wf = t.param(store_, enc_fwd_[l].first);
            NodeId bf = t.param(store_, enc_fwd_[l].second);
            LstmOut state{t.constant(Tensor::zeros({h})), t.constant(Tensor::zeros({h}))};
            for (size_t i = 0; i < n1; ++i) {
                state = lstm_cell(t, inputs[i], state.h, state.c, wf, bf);
                fwd[i] = state.h;
            }
            NodeId wb = t.param(store_, enc_bwd_[l].first);
            NodeId bb = t.param(store_, enc_bwd_[l].second);
            state = {t.constant(Tensor::zeros({h})), t.constant(Tensor::zeros({h}))};
            for (size_t i = n1; i-- > 0;) {
                state = lstm_cell(t, inputs[i], state.h, state.c, wb, bb);
                bwd[i] = state.h;
            }
            out.decoder_init.push_back(LstmOut{bwd[0], state.c});
            for (size_t i = 0; i < n1; ++i) layer_in[i] = concat(t, {fwd[i], bwd[i]});
        }
        out.h = layer_in;
        out.H = stack_rows(t, out.h);
        out.h_back0 = bwd[0];
        out.h_fwdn = fwd[n1 - 1];
        return out;
    }

    // score[j][t] = va . tanh(Ua h_j + Wa h_t)
    NodeId head_attention_scores(Tape& t, NodeId H) {
        NodeId uh = matmul(t, H, transpose(t, t.param(store_, "attn.Ua")));
        NodeId wh = matmul(t, H, transpose(t, t.param(store_, "attn.Wa")));
        NodeId va = t.param(store_, "attn.va");
        const size_t n1 = t.value(H).rows();
        std::vector<NodeId> cols;
        cols.reserve(n1);
        for (size_t pos = 0; pos < n1; ++pos)
            cols.push_back(matvec(t, tanh(t, add_rowvec(t, uh, row(t, wh, pos))), va));
        return transpose(t, stack_rows(t, cols)); // row j, column t
    }

    NodeId head_distribution(Tape& t, NodeId H) {
        return constrained_head_distribution(t, head_attention_scores(t, H));
    }

    struct OrderGate {
        NodeId mu;
        NodeId eta;
    };

    // eta = softmax over orders of candidate^T W_d c_t; mu = sum eta_d * candidate_d
    OrderGate order_gated_summary(Tape& t, const std::vector<NodeId>& candidates, NodeId c_t,
                                  const std::vector<std::string>& weight_names) {
        std::vector<NodeId> scores;
        scores.reserve(candidates.size());
        for (size_t k = 0; k < candidates.size(); ++k) {
            NodeId w = t.param(store_, weight_names[k]);
            scores.push_back(dot(t, candidates[k], matvec(t, w, c_t)));
        }
        NodeId eta = softmax_vec(t, concat(t, scores));
        NodeId mu = scalar_mul(t, candidates[0], pick(t, eta, 0));
        for (size_t k = 1; k < candidates.size(); ++k)
            mu = add(t, mu, scalar_mul(t, candidates[k], pick(t, eta, k)));
        return {mu, eta};
    }

    struct GateOut {
        NodeId omega;
        NodeId z;
    };

    // Omega = z * mu_parent + (1-z) * mu_child, z = sigmoid(Wz [mu_p, mu_c, c_t])
    GateOut selective_gate(Tape& t, NodeId mu_parent, NodeId mu_child, NodeId c_t) {
        NodeId z = sigmoid(t, matvec(t, t.param(store_, "gate.Wz"),
                                     concat(t, {mu_parent, mu_child, c_t})));
        if (cfg_.force_gate_value) {
            Tensor forced = Tensor::zeros(t.value(z).shape);
            std::fill(forced.v.begin(), forced.v.end(), *cfg_.force_gate_value);
            z = t.constant(std::move(forced));
        }
        NodeId omega = add(t, mul(t, z, mu_parent),
                           mul(t, affine_const(t, z, -1.0, 1.0), mu_child));
        return {omega, z};
    }

    // Loss of one sentence: teacher-forced label NLL plus, when lambda > 0,
    // the negative log head probability of every gold edge (entries clamped
    // at 1e-12 before the log). syntax_scale is a diagnostic multiplier.
    NodeId sentence_loss(Tape& t, const Sentence& s, const SentenceFeatures& f, double lambda,
                         bool train, Rng* rng = nullptr, ForwardTrace* trace = nullptr,
                         double syntax_scale = 1.0) {
        if (!s.has_labels()) throw data_error("sentence_loss: gold labels required");
        if (lambda != 0.0 && !s.has_heads())
            throw data_error("sentence_loss: lambda > 0 requires gold heads");
        if (lambda != 0.0 && !cfg_.uses_graph())
            throw std::invalid_argument("sentence_loss: lambda > 0 requires a graph variant");
        if (train && cfg_.dropout > 0.0 && rng == nullptr)
            throw std::invalid_argument("sentence_loss: train mode needs an rng for dropout");
        Pass pass = run(t, s, f, train, rng, /*teacher_forcing=*/true, trace);
        NodeId loss = pass.label_loss;
        if (lambda != 0.0) {
            NodeId syntax = t.constant(Tensor::scalar(0.0));
            for (size_t pos = 1; pos <= s.n(); ++pos) {
                NodeId alpha = pick2(t, pass.a1, s.gold_heads[pos], pos);
                syntax = add(t, syntax, neg(t, log(t, clamp_min(t, alpha, 1e-12))));
            }
            loss = add(t, loss, scale(t, syntax, lambda * syntax_scale));
        }
        return loss;
    }

    DecodeResult greedy_decode(const Sentence& s, const SentenceFeatures& f,
                               ForwardTrace* trace = nullptr) {
        Tape t;
        Pass pass = run(t, s, f, /*train=*/false, nullptr, /*teacher_forcing=*/false, trace);
        DecodeResult res;
        res.labels = pass.predicted;
        for (size_t pos = 1; pos <= s.n(); ++pos)
            if (res.labels[pos - 1] == Label::Keep) res.compression.push_back(s.tokens[pos]);
        return res;
    }

    // Argmax head per token from the learned attention (for UAS).
    std::vector<size_t> head_argmax(const Sentence& s, const SentenceFeatures& f) {
        if (!cfg_.uses_graph())
            throw std::invalid_argument("head_argmax: base variant has no head attention");
        Tape t;
        std::vector<NodeId> embeds = embed_tokens(t, s, f);
        EncoderOut enc = encode(t, embeds, false, nullptr);
        const Tensor& a1 = t.value(head_distribution(t, enc.H));
        std::vector<size_t> heads(s.tokens.size(), 0);
        for (size_t pos = 1; pos < s.tokens.size(); ++pos) {
            size_t best = 0;
            for (size_t j = 1; j < s.tokens.size(); ++j)
                if (a1.at(j, pos) > a1.at(best, pos)) best = j;
            heads[pos] = best;
        }
        return heads;
    }

private:
    struct Pass {
        NodeId label_loss = -1;
        NodeId a1 = -1;
        std::vector<Label> predicted;
    };

    static Tensor row_of(const Tensor& m, size_t i) {
        Tensor out = Tensor::zeros({m.cols()});
        std::copy(m.v.begin() + i * m.cols(), m.v.begin() + (i + 1) * m.cols(),
                  out.v.begin());
        return out;
    }

    // One full pass over the sentence. Teacher forcing feeds gold labels and
    // accumulates the NLL; otherwise the argmax label feeds the next step.
    Pass run(Tape& t, const Sentence& s, const SentenceFeatures& f, bool train, Rng* rng,
             bool teacher_forcing, ForwardTrace* trace) {
        if (teacher_forcing && !s.has_labels())
            throw data_error("teacher forcing requires gold labels");
        const size_t n = s.n(), sd = cfg_.state_dim();
        std::vector<NodeId> embeds = embed_tokens(t, s, f);
        EncoderOut enc = encode(t, embeds, train, rng);

        Pass pass;
        std::map<int, NodeId> gammas, rhos; // per order, row t = summary vector
        if (cfg_.uses_graph()) {
            pass.a1 = head_distribution(t, enc.H);
            auto parents = compose_parent_graphs(t, pass.a1, cfg_.orders);
            auto children = child_graphs_from_parent(t, parents);
            if (trace) {
                trace->a1 = t.value(pass.a1);
                for (auto& [d, g] : parents) trace->parent_graphs[d] = t.value(g);
                for (auto& [d, g] : children) trace->child_graphs[d] = t.value(g);
            }
            if (cfg_.has_parent_side())
                for (int d : cfg_.orders)
                    gammas[d] = parent_weighted_states(t, parents.at(d), enc.H);
            if (cfg_.has_child_side())
                for (int d : cfg_.orders)
                    rhos[d] = child_pooled_states(t, children.at(d), enc.H);
        }

        std::vector<LstmOut> state = enc.decoder_init;
        NodeId feedback = t.constant(Tensor::zeros({cfg_.feedback_dim()}));
        NodeId label_vec = t.constant(Tensor::zeros({LabelCodec::kWidth})); // nothing precedes t=1
        NodeId loss = t.constant(Tensor::scalar(0.0));
        pass.predicted.reserve(n);

        for (size_t pos = 1; pos <= n; ++pos) {
            NodeId x = concat(t, {label_vec, feedback, embeds[pos]});
            NodeId s_t = -1;
            for (size_t l = 0; l < cfg_.lstm_depth; ++l) {
                NodeId in = train ? dropout(t, x, cfg_.dropout, *rng, true) : x;
                NodeId w = t.param(store_, dec_[l].first);
                NodeId b = t.param(store_, dec_[l].second);
                state[l] = lstm_cell(t, in, state[l].h, state[l].c, w, b);
                x = s_t = state[l].h;
            }

            ForwardTrace::Step step;
            NodeId out_vec;
            if (cfg_.uses_graph()) {
                NodeId c_t = concat(t, {enc.h_back0, enc.h_fwdn, enc.h[pos], s_t});
                NodeId mu_parent, mu_child;
                if (cfg_.has_parent_side() && !cfg_.zero_parent_summary) {
                    std::vector<NodeId> cands;
                    for (int d : cfg_.orders) cands.push_back(row(t, gammas.at(d), pos));
                    OrderGate g = order_gated_summary(t, cands, c_t, parent_w_);
                    mu_parent = g.mu;
                    if (trace) step.eta_parent = t.value(g.eta).v;
                } else {
                    mu_parent = t.constant(Tensor::zeros({sd}));
                }
                if (cfg_.has_child_side() && !cfg_.zero_child_summary) {
                    std::vector<NodeId> cands;
                    for (int d : cfg_.orders) cands.push_back(row(t, rhos.at(d), pos));
                    OrderGate g = order_gated_summary(t, cands, c_t, child_w_);
                    mu_child = g.mu;
                    if (trace) step.eta_child = t.value(g.eta).v;
                } else {
                    mu_child = t.constant(Tensor::zeros({sd}));
                }
                GateOut gate = selective_gate(t, mu_parent, mu_child, c_t);
                out_vec = concat(t, {enc.h[pos], gate.omega, s_t}); // d'_t
                if (trace) step.gate = t.value(gate.z);
            } else {
                NodeId d_t = tanh(t, affine(t, t.param(store_, "out.Wd"),
                                            concat(t, {enc.h[pos], s_t}),
                                            t.param(store_, "out.bd")));
                out_vec = d_t;
            }

            NodeId logits = matvec(t, t.param(store_, "out.Wo"), out_vec);
            Label next;
            if (teacher_forcing) {
                NodeId logp = log_softmax_vec(t, logits);
                next = s.gold_labels[pos - 1];
                loss = add(t, loss, neg(t, pick(t, logp, LabelCodec::to_index(next))));
                if (trace) {
                    Tensor dist = t.value(logp);
                    for (double& v : dist.v) v = std::exp(v);
                    step.label_dist = std::move(dist);
                    step.used_gold = true;
                }
            } else {
                const Tensor& dist = t.value(softmax_vec(t, logits));
                int best = 0;
                for (int k = 1; k < LabelCodec::kWidth; ++k)
                    if (dist.v[k] > dist.v[best]) best = k;
                next = LabelCodec::from_index(best);
                pass.predicted.push_back(next);
                if (trace) {
                    step.label_dist = dist;
                    step.used_gold = false;
                }
            }
            if (trace) {
                step.chosen = LabelCodec::to_index(next);
                step.feedback = t.value(out_vec);
                trace->steps.push_back(std::move(step));
            }

            Tensor onehot = Tensor::zeros({LabelCodec::kWidth});
            onehot.v[LabelCodec::to_index(next)] = 1.0;
            label_vec = t.constant(std::move(onehot));
            feedback = out_vec; // d'_t (or d_t) feeds the next decoder input
        }
        pass.label_loss = loss;
        return pass;
    }

    ModelConfig cfg_;
    ParameterStore store_;
    std::vector<std::pair<std::string, std::string>> enc_fwd_, enc_bwd_, dec_;
    std::vector<std::string> parent_w_, child_w_;
};

} // namespace slahan
