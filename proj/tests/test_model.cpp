#include <gtest/gtest.h>

#include <cstdio>
#include <cstring>
#include <cstdlib>
#include <filesystem>

#include "slahan/checkpoint.hpp"
#include "slahan/gradcheck.hpp"
#include "slahan/model.hpp"
#include "slahan/synthetic.hpp"

using namespace slahan;

namespace {

Sentence chain_sentence(size_t n) {
    std::vector<std::string> tokens;
    std::vector<size_t> heads;
    std::vector<Label> labels;
    for (size_t i = 0; i < n; ++i) {
        tokens.push_back("w" + std::to_string(i % 5));
        heads.push_back(i); // chain
        labels.push_back(i % 2 == 0 ? Label::Keep : Label::Delete);
    }
    return sentence_from_record(tokens, heads, labels);
}

FeatureSet contextual_features(const std::vector<Sentence>& corpus, size_t dim, size_t layers,
                               uint64_t seed) {
    FeatureSet set;
    set.contextuals.push_back(synthetic_contextual_features(corpus, dim, layers, seed));
    return set;
}

ModelConfig small_config(Variant variant, const FeatureSet& feats, size_t hidden = 3,
                         std::vector<int> orders = {1, 2}) {
    ModelConfig cfg;
    cfg.variant = variant;
    cfg.orders = std::move(orders);
    cfg.hidden_dim = hidden;
    cfg.attention_dim = hidden;
    cfg.lstm_depth = 1;
    cfg.dropout = 0.0;
    cfg.features = feats.layout();
    return cfg;
}

void zero_all_params(SlahanModel& model) {
    for (auto& [name, e] : model.params().entries())
        std::fill(e.value.v.begin(), e.value.v.end(), 0.0);
}

} // namespace

TEST(Embed, SingleLayerSourcePassesThrough) {
    auto corpus = std::vector<Sentence>{chain_sentence(2)};
    FeatureSet feats = contextual_features(corpus, 4, 1, 3);
    SlahanModel model(small_config(Variant::Base, feats));
    model.init_parameters(1);
    Tape t;
    auto embeds = model.embed_tokens(t, corpus[0], {&feats, 0});
    ASSERT_EQ(embeds.size(), 3u);
    for (size_t i = 0; i < 3; ++i)
        for (size_t c = 0; c < 4; ++c)
            EXPECT_EQ(t.value(embeds[i]).v[c], feats.contextuals[0].per_sentence[0][0].at(i, c));
}

TEST(Embed, IdenticalLayersCollapseToThatVector) {
    auto corpus = std::vector<Sentence>{chain_sentence(2)};
    FeatureSet feats = contextual_features(corpus, 3, 2, 3);
    feats.contextuals[0].per_sentence[0][1] = feats.contextuals[0].per_sentence[0][0];
    SlahanModel model(small_config(Variant::Base, feats));
    model.init_parameters(1);
    Tape t;
    auto embeds = model.embed_tokens(t, corpus[0], {&feats, 0});
    for (size_t i = 0; i < 3; ++i)
        for (size_t c = 0; c < 3; ++c)
            EXPECT_NEAR(t.value(embeds[i]).v[c],
                        feats.contextuals[0].per_sentence[0][0].at(i, c), 1e-12);
}

TEST(Embed, LayerWeightingMatchesHandSoftmax) {
    // layers u = (1,0), w = (0,1); phi0.u = ln 3, phi1.w = 0
    // -> psi = (0.75, 0.25) and F = 0.75 u + 0.25 w
    auto corpus = std::vector<Sentence>{chain_sentence(1)};
    FeatureSet feats = contextual_features(corpus, 2, 2, 3);
    for (size_t i = 0; i < 2; ++i) {
        feats.contextuals[0].per_sentence[0][0].at(i, 0) = 1.0;
        feats.contextuals[0].per_sentence[0][0].at(i, 1) = 0.0;
        feats.contextuals[0].per_sentence[0][1].at(i, 0) = 0.0;
        feats.contextuals[0].per_sentence[0][1].at(i, 1) = 1.0;
    }
    SlahanModel model(small_config(Variant::Base, feats));
    model.init_parameters(1);
    model.params().value("embed.synth.phi0") = Tensor::vec({std::log(3.0), 0.0});
    model.params().value("embed.synth.phi1") = Tensor::vec({0.0, 0.0});
    Tape t;
    auto embeds = model.embed_tokens(t, corpus[0], {&feats, 0});
    EXPECT_NEAR(t.value(embeds[1]).v[0], 0.75, 1e-12);
    EXPECT_NEAR(t.value(embeds[1]).v[1], 0.25, 1e-12);
}

TEST(Embed, UnknownTokensResolveToTrainedUnkVector) {
    auto corpus = std::vector<Sentence>{chain_sentence(2)};
    FeatureSet feats;
    StaticSource table;
    table.name = "glove";
    table.dim = 3;
    table.table["w0"] = Tensor::vec({1, 2, 3}); // w1 and the root are missing
    feats.statics.push_back(std::move(table));
    SlahanModel model(small_config(Variant::Base, feats));
    model.init_parameters(1);
    const Tensor& unk = model.params().value("embed.glove.unk");
    Tape t;
    auto embeds = model.embed_tokens(t, corpus[0], {&feats, 0});
    EXPECT_EQ(t.value(embeds[0]).v, unk.v); // root
    EXPECT_EQ(t.value(embeds[1]).v, (std::vector<double>{1, 2, 3}));
    EXPECT_EQ(t.value(embeds[2]).v, unk.v); // "w1" not in the table
}

TEST(Embed, MisalignedContextualFeaturesAreAnError) {
    auto corpus = std::vector<Sentence>{chain_sentence(2), chain_sentence(5)};
    FeatureSet feats = contextual_features({corpus[0]}, 4, 1, 3);
    SlahanModel model(small_config(Variant::Base, feats));
    model.init_parameters(1);
    Tape t;
    EXPECT_THROW(model.embed_tokens(t, corpus[1], {&feats, 0}), data_error); // wrong length
    EXPECT_THROW(model.embed_tokens(t, corpus[0], {&feats, 5}), data_error); // no such index
}

TEST(OrderGate, TiedWeightsShareOneMatrixAcrossSides) {
    auto corpus = std::vector<Sentence>{chain_sentence(3)};
    FeatureSet feats = contextual_features(corpus, 3, 1, 5);
    ModelConfig cfg = small_config(Variant::Slahan, feats, /*hidden=*/2, {1, 2});
    cfg.tie_order_weights = true;
    SlahanModel model(cfg);
    model.init_parameters(2);
    EXPECT_TRUE(model.params().has("order.tied.d1"));
    EXPECT_TRUE(model.params().has("order.tied.d2"));
    EXPECT_FALSE(model.params().has("order.parent.d1"));
    EXPECT_FALSE(model.params().has("order.child.d1"));
    DecodeResult res = model.greedy_decode(corpus[0], {&feats, 0});
    EXPECT_EQ(res.labels.size(), 3u);
}

TEST(Encode, RootOnlySentenceGivesOneRow) {
    Sentence s;
    s.tokens = {kRootSymbol};
    auto corpus = std::vector<Sentence>{s};
    FeatureSet feats = contextual_features(corpus, 3, 1, 5);
    SlahanModel model(small_config(Variant::Base, feats));
    model.init_parameters(2);
    Tape t;
    EncoderOut enc = model.encode(t, model.embed_tokens(t, s, {&feats, 0}), false, nullptr);
    EXPECT_EQ(t.value(enc.H).rows(), 1u);
    EXPECT_EQ(t.value(enc.H).cols(), 6u);
}

TEST(Encode, DropoutDiffersInTrainModeAndEvalIsDeterministic) {
    auto corpus = std::vector<Sentence>{chain_sentence(4)};
    FeatureSet feats = contextual_features(corpus, 4, 1, 7);
    ModelConfig cfg = small_config(Variant::Base, feats);
    cfg.dropout = 0.3;
    SlahanModel model(cfg);
    model.init_parameters(3);
    auto run_H = [&](bool train, uint64_t seed) {
        Rng rng(seed);
        Tape t;
        EncoderOut enc =
            model.encode(t, model.embed_tokens(t, corpus[0], {&feats, 0}), train, &rng);
        return t.value(enc.H).v;
    };
    EXPECT_EQ(run_H(false, 0), run_H(false, 1)); // eval ignores the rng
    EXPECT_NE(run_H(true, 0), run_H(false, 0));
    EXPECT_EQ(run_H(true, 42), run_H(true, 42)); // train is a function of the seed
}

TEST(Encode, TwoLayerBiLstmPassesGradientCheck) {
    auto corpus = std::vector<Sentence>{chain_sentence(3)};
    FeatureSet feats = contextual_features(corpus, 3, 2, 11);
    ModelConfig cfg = small_config(Variant::Base, feats, /*hidden=*/4);
    cfg.lstm_depth = 2;
    SlahanModel model(cfg);
    model.init_parameters(5);
    Rng mix_rng(1);
    Tensor weights = glorot_init({4, 8}, mix_rng); // fixed mixing matrix
    auto fwd = [&](Tape& t) {
        EncoderOut enc =
            model.encode(t, model.embed_tokens(t, corpus[0], {&feats, 0}), false, nullptr);
        return sum(t, mul(t, enc.H, t.constant(weights)));
    };
    auto res = gradient_check(model.params(), fwd);
    EXPECT_LT(res.max_rel_error, 1e-4) << res.worst;
}

TEST(HeadAttention, ZeroScoreVectorGivesUniformLegalHeads) {
    auto corpus = std::vector<Sentence>{chain_sentence(3)};
    FeatureSet feats = contextual_features(corpus, 3, 1, 13);
    SlahanModel model(small_config(Variant::Slahan, feats));
    model.init_parameters(7);
    std::fill(model.params().value("attn.va").v.begin(),
              model.params().value("attn.va").v.end(), 0.0);
    Tape t;
    EncoderOut enc = model.encode(t, model.embed_tokens(t, corpus[0], {&feats, 0}), false,
                                  nullptr);
    const Tensor& a1 = t.value(model.head_distribution(t, enc.H));
    // column t >= 1 has n legal heads (everything but itself), all equal
    for (size_t pos = 1; pos < 4; ++pos)
        for (size_t j = 0; j < 4; ++j)
            EXPECT_NEAR(a1.at(j, pos), j == pos ? 0.0 : 1.0 / 3.0, 1e-12);
}

TEST(HeadAttention, HandSetParametersMatchClosedForm) {
    auto corpus = std::vector<Sentence>{chain_sentence(2)};
    FeatureSet feats = contextual_features(corpus, 2, 1, 17);
    ModelConfig cfg = small_config(Variant::Slahan, feats, /*hidden=*/1);
    cfg.attention_dim = 1;
    SlahanModel model(cfg);
    model.init_parameters(9);
    model.params().value("attn.Ua") = Tensor::matrix(1, 2, {0.5, -0.25});
    model.params().value("attn.Wa") = Tensor::matrix(1, 2, {0.125, 1.0});
    model.params().value("attn.va") = Tensor::vec({2.0});
    Tensor h = Tensor::matrix(3, 2, {0.1, -0.2, 0.4, 0.3, -0.6, 0.5});
    Tape t;
    const Tensor& scores = t.value(model.head_attention_scores(t, t.leaf(h)));
    for (size_t j = 0; j < 3; ++j)
        for (size_t pos = 0; pos < 3; ++pos) {
            const double u = 0.5 * h.at(j, 0) - 0.25 * h.at(j, 1);
            const double w = 0.125 * h.at(pos, 0) + 1.0 * h.at(pos, 1);
            EXPECT_NEAR(scores.at(j, pos), 2.0 * std::tanh(u + w), 1e-12);
        }
}

TEST(HeadAttention, ScoresAreAFunctionOfEncoderStatesOnly) {
    auto corpus = std::vector<Sentence>{chain_sentence(3)};
    FeatureSet feats = contextual_features(corpus, 3, 1, 19);
    ModelConfig cfg = small_config(Variant::Slahan, feats);
    cfg.syntax_lambda = 1.0;
    SlahanModel model(cfg);
    model.init_parameters(11);
    ForwardTrace trace;
    {
        Tape t;
        model.sentence_loss(t, corpus[0], {&feats, 0}, 1.0, false, nullptr, &trace);
    }
    Tape t;
    EncoderOut enc = model.encode(t, model.embed_tokens(t, corpus[0], {&feats, 0}), false,
                                  nullptr);
    const Tensor& a1 = t.value(model.head_distribution(t, enc.H));
    ASSERT_EQ(a1.numel(), trace.a1.numel());
    for (size_t i = 0; i < a1.numel(); ++i) EXPECT_EQ(a1.v[i], trace.a1.v[i]);
}

TEST(OrderGate, SingletonAndIdenticalCandidates) {
    auto corpus = std::vector<Sentence>{chain_sentence(2)};
    FeatureSet feats = contextual_features(corpus, 2, 1, 23);
    SlahanModel model(small_config(Variant::Slahan, feats, /*hidden=*/1, {1}));
    model.init_parameters(13);
    Tape t;
    NodeId cand = t.leaf(Tensor::vec({0.3, -0.7}));
    NodeId c_t = t.leaf(Tensor::vec({1, 0, 0, 0, 0}));
    auto g = model.order_gated_summary(t, {cand}, c_t, {"order.parent.d1"});
    EXPECT_EQ(t.value(g.eta).v[0], 1.0);
    EXPECT_EQ(t.value(g.mu).v, t.value(cand).v);

    SlahanModel two(small_config(Variant::Slahan, feats, /*hidden=*/1, {1, 2}));
    two.init_parameters(13);
    Tape t2;
    NodeId same = t2.leaf(Tensor::vec({0.4, 0.2}));
    auto g2 = two.order_gated_summary(t2, {same, same}, t2.leaf(Tensor::vec({1, 1, 1, 1, 1})),
                                      {"order.parent.d1", "order.parent.d2"});
    EXPECT_NEAR(t2.value(g2.mu).v[0], 0.4, 1e-12);
    EXPECT_NEAR(t2.value(g2.mu).v[1], 0.2, 1e-12);
}

TEST(OrderGate, HandSetScoresGiveSoftmaxWeights) {
    // scores (ln 4, 0) -> eta = (0.8, 0.2)
    auto corpus = std::vector<Sentence>{chain_sentence(2)};
    FeatureSet feats = contextual_features(corpus, 2, 1, 29);
    SlahanModel model(small_config(Variant::Slahan, feats, /*hidden=*/1, {1, 2}));
    model.init_parameters(17);
    // c_t = e0, candidate1 = e0 -> score = W[0][0]
    Tensor w1 = Tensor::zeros({2, 5});
    w1.at(0, 0) = std::log(4.0);
    model.params().value("order.parent.d1") = w1;
    model.params().value("order.parent.d2") = Tensor::zeros({2, 5});
    Tape t;
    NodeId cand1 = t.leaf(Tensor::vec({1.0, 0.0}));
    NodeId cand2 = t.leaf(Tensor::vec({0.0, 1.0}));
    NodeId c_t = t.leaf(Tensor::vec({1, 0, 0, 0, 0}));
    auto g = model.order_gated_summary(t, {cand1, cand2}, c_t,
                                       {"order.parent.d1", "order.parent.d2"});
    EXPECT_NEAR(t.value(g.eta).v[0], 0.8, 1e-12);
    EXPECT_NEAR(t.value(g.eta).v[1], 0.2, 1e-12);
    EXPECT_NEAR(t.value(g.mu).v[0], 0.8, 1e-12);
    EXPECT_NEAR(t.value(g.mu).v[1], 0.2, 1e-12);
}

TEST(SelectiveGate, ZeroWeightsGiveHalfGateAndMean) {
    auto corpus = std::vector<Sentence>{chain_sentence(2)};
    FeatureSet feats = contextual_features(corpus, 2, 1, 31);
    SlahanModel model(small_config(Variant::Slahan, feats, /*hidden=*/1));
    model.init_parameters(19);
    auto& wz = model.params().value("gate.Wz");
    std::fill(wz.v.begin(), wz.v.end(), 0.0);
    Tape t;
    NodeId mu_p = t.leaf(Tensor::vec({0.6, -0.4}));
    NodeId mu_c = t.leaf(Tensor::vec({0.2, 0.8}));
    auto out = model.selective_gate(t, mu_p, mu_c, t.leaf(Tensor::vec({0, 0, 0, 0, 0})));
    EXPECT_DOUBLE_EQ(t.value(out.z).v[0], 0.5);
    EXPECT_NEAR(t.value(out.omega).v[0], 0.4, 1e-12);
    EXPECT_NEAR(t.value(out.omega).v[1], 0.2, 1e-12);
}

TEST(SelectiveGate, EqualSummariesPassThroughForAnyGate) {
    auto corpus = std::vector<Sentence>{chain_sentence(2)};
    FeatureSet feats = contextual_features(corpus, 2, 1, 37);
    SlahanModel model(small_config(Variant::Slahan, feats, /*hidden=*/1));
    model.init_parameters(23);
    Tape t;
    NodeId v = t.leaf(Tensor::vec({0.33, -0.77}));
    auto out = model.selective_gate(t, v, v, t.leaf(Tensor::vec({0.4, 1, -2, 0.1, 3})));
    EXPECT_NEAR(t.value(out.omega).v[0], 0.33, 1e-12);
    EXPECT_NEAR(t.value(out.omega).v[1], -0.77, 1e-12);
}

TEST(SelectiveGate, HandSetWeightsMatchScalarSigmoid) {
    auto corpus = std::vector<Sentence>{chain_sentence(2)};
    FeatureSet feats = contextual_features(corpus, 2, 1, 41);
    SlahanModel model(small_config(Variant::Slahan, feats, /*hidden=*/1));
    model.init_parameters(29);
    Tensor wz = Tensor::zeros({2, 9}); // [mu_p(2), mu_c(2), c_t(5)]
    wz.at(0, 0) = 1.5;
    wz.at(1, 3) = -2.0;
    model.params().value("gate.Wz") = wz;
    Tape t;
    NodeId mu_p = t.leaf(Tensor::vec({0.5, 0.1}));
    NodeId mu_c = t.leaf(Tensor::vec({0.2, 0.6}));
    auto out = model.selective_gate(t, mu_p, mu_c, t.leaf(Tensor::zeros({5})));
    const double z0 = 1.0 / (1.0 + std::exp(-1.5 * 0.5));
    const double z1 = 1.0 / (1.0 + std::exp(2.0 * 0.6));
    EXPECT_NEAR(t.value(out.z).v[0], z0, 1e-12);
    EXPECT_NEAR(t.value(out.z).v[1], z1, 1e-12);
    EXPECT_NEAR(t.value(out.omega).v[0], z0 * 0.5 + (1 - z0) * 0.2, 1e-12);
}

TEST(SelectiveGate, OmegaIsCoordinateWiseBetweenSummaries) {
    auto corpus = std::vector<Sentence>{chain_sentence(2)};
    FeatureSet feats = contextual_features(corpus, 2, 1, 43);
    SlahanModel model(small_config(Variant::Slahan, feats, /*hidden=*/2));
    model.init_parameters(31);
    Rng rng(57);
    for (int rep = 0; rep < 30; ++rep) {
        Tape t;
        Tensor p = Tensor::zeros({4}), c = Tensor::zeros({4}), ctx = Tensor::zeros({10});
        for (double& x : p.v) x = rng.uniform(-2, 2);
        for (double& x : c.v) x = rng.uniform(-2, 2);
        for (double& x : ctx.v) x = rng.uniform(-2, 2);
        auto out = model.selective_gate(t, t.leaf(p), t.leaf(c), t.leaf(ctx));
        for (size_t k = 0; k < 4; ++k) {
            const double lo = std::min(p.v[k], c.v[k]), hi = std::max(p.v[k], c.v[k]);
            EXPECT_GE(t.value(out.omega).v[k], lo - 1e-12);
            EXPECT_LE(t.value(out.omega).v[k], hi + 1e-12);
            EXPECT_GT(t.value(out.z).v[k], 0.0);
            EXPECT_LT(t.value(out.z).v[k], 1.0);
        }
    }
}

TEST(DecodeStep, LabelDistributionsSumToOne) {
    auto corpus = std::vector<Sentence>{chain_sentence(4)};
    FeatureSet feats = contextual_features(corpus, 3, 2, 47);
    ModelConfig cfg = small_config(Variant::Slahan, feats);
    SlahanModel model(cfg);
    model.init_parameters(37);
    ForwardTrace trace;
    model.greedy_decode(corpus[0], {&feats, 0}, &trace);
    ASSERT_EQ(trace.steps.size(), 4u);
    for (const auto& step : trace.steps) {
        double s = 0.0;
        for (double v : step.label_dist.v) s += v;
        EXPECT_NEAR(s, 1.0, 1e-12);
        EXPECT_FALSE(step.used_gold);
    }
}

TEST(DecodeStep, BaseFeedbackStaysInTanhRange) {
    auto corpus = std::vector<Sentence>{chain_sentence(5)};
    FeatureSet feats = contextual_features(corpus, 3, 1, 53);
    SlahanModel model(small_config(Variant::Base, feats));
    model.init_parameters(41);
    ForwardTrace trace;
    model.greedy_decode(corpus[0], {&feats, 0}, &trace);
    for (const auto& step : trace.steps)
        for (double v : step.feedback.v) {
            EXPECT_GT(v, -1.0);
            EXPECT_LT(v, 1.0);
        }
}

TEST(GreedyDecode, ForcedAllKeepAndAllDeleteAndEos) {
    auto corpus = std::vector<Sentence>{chain_sentence(5)};
    FeatureSet feats = contextual_features(corpus, 3, 1, 59);
    ModelConfig cfg = small_config(Variant::Base, feats, /*hidden=*/1);
    SlahanModel model(cfg);
    model.init_parameters(43);
    // d_t = tanh(Wd [h_t, s_t] + bd) with Wd = 0, bd big -> d_t ~ 1 for every step
    std::fill(model.params().value("out.Wd").v.begin(),
              model.params().value("out.Wd").v.end(), 0.0);
    model.params().value("out.bd") = Tensor::vec({30.0});
    auto set_logit_row = [&](int row) {
        model.params().value("out.Wo") = Tensor::zeros({3, 1});
        model.params().value("out.Wo").at(row, 0) = 5.0;
    };
    set_logit_row(LabelCodec::to_index(Label::Keep));
    DecodeResult keep = model.greedy_decode(corpus[0], {&feats, 0});
    EXPECT_EQ(keep.compression,
              std::vector<std::string>(corpus[0].tokens.begin() + 1, corpus[0].tokens.end()));

    set_logit_row(LabelCodec::to_index(Label::Delete));
    DecodeResult del = model.greedy_decode(corpus[0], {&feats, 0});
    EXPECT_TRUE(del.compression.empty());

    // a predicted EOS acts like DELETE for reconstruction
    set_logit_row(LabelCodec::to_index(Label::Eos));
    DecodeResult eos = model.greedy_decode(corpus[0], {&feats, 0});
    EXPECT_EQ(eos.labels, std::vector<Label>(5, Label::Eos));
    EXPECT_TRUE(eos.compression.empty());
}

TEST(GreedyDecode, DeterministicAcrossRuns) {
    auto corpus = std::vector<Sentence>{chain_sentence(6)};
    FeatureSet feats = contextual_features(corpus, 4, 2, 61);
    SlahanModel model(small_config(Variant::Slahan, feats));
    model.init_parameters(47);
    DecodeResult a = model.greedy_decode(corpus[0], {&feats, 0});
    DecodeResult b = model.greedy_decode(corpus[0], {&feats, 0});
    EXPECT_EQ(a.labels, b.labels);
    EXPECT_EQ(a.compression, b.compression);
}

TEST(SentenceLoss, UntrainedUniformDistributionsGiveNLogThree) {
    auto corpus = std::vector<Sentence>{chain_sentence(4)};
    FeatureSet feats = contextual_features(corpus, 3, 1, 67);
    SlahanModel model(small_config(Variant::Base, feats));
    model.init_parameters(53);
    zero_all_params(model);
    Tape t;
    NodeId loss = model.sentence_loss(t, corpus[0], {&feats, 0}, 0.0, false);
    EXPECT_NEAR(t.value(loss).v[0], 4.0 * std::log(3.0), 1e-12);
}

TEST(SentenceLoss, SyntaxTermCountsGoldEdgeLogProbability) {
    // zero parameters -> uniform legal heads; n=2 columns are (0.5, ., 0.5),
    // so each gold edge contributes exactly -ln 0.5
    auto corpus = std::vector<Sentence>{chain_sentence(2)};
    FeatureSet feats = contextual_features(corpus, 3, 1, 71);
    ModelConfig cfg = small_config(Variant::Slahan, feats);
    cfg.syntax_lambda = 1.0;
    SlahanModel model(cfg);
    model.init_parameters(59);
    zero_all_params(model);
    Tape t;
    NodeId loss = model.sentence_loss(t, corpus[0], {&feats, 0}, 1.0, false);
    const double expected = 2.0 * std::log(3.0) + 2.0 * std::log(2.0);
    EXPECT_NEAR(t.value(loss).v[0], expected, 1e-12);

    Tape t0;
    NodeId label_only = model.sentence_loss(t0, corpus[0], {&feats, 0}, 0.0, false);
    EXPECT_NEAR(t0.value(label_only).v[0], 2.0 * std::log(3.0), 1e-12);
}

TEST(SentenceLoss, LambdaWithoutHeadsIsError) {
    Sentence s = chain_sentence(3);
    s.gold_heads.clear();
    auto corpus = std::vector<Sentence>{s};
    FeatureSet feats = contextual_features(corpus, 3, 1, 73);
    ModelConfig cfg = small_config(Variant::Slahan, feats);
    SlahanModel model(cfg);
    model.init_parameters(61);
    Tape t;
    EXPECT_THROW(model.sentence_loss(t, s, {&feats, 0}, 1.0, false), data_error);
}

TEST(SentenceLoss, TeacherForcingIsInstrumented) {
    auto corpus = std::vector<Sentence>{chain_sentence(3)};
    FeatureSet feats = contextual_features(corpus, 3, 1, 79);
    SlahanModel model(small_config(Variant::Slahan, feats));
    model.init_parameters(67);
    ForwardTrace trace;
    Tape t;
    model.sentence_loss(t, corpus[0], {&feats, 0}, 0.0, false, nullptr, &trace);
    for (size_t k = 0; k < trace.steps.size(); ++k) {
        EXPECT_TRUE(trace.steps[k].used_gold);
        EXPECT_EQ(trace.steps[k].chosen,
                  LabelCodec::to_index(corpus[0].gold_labels[k]));
    }
}

TEST(Variants, ZeroedChildSideMakesSlahanMatchParentBitwise) {
    auto corpus = std::vector<Sentence>{chain_sentence(5)};
    FeatureSet feats = contextual_features(corpus, 4, 2, 83);
    const uint64_t seed = 71;

    ModelConfig parent_cfg = small_config(Variant::Parent, feats);
    SlahanModel parent(parent_cfg);
    parent.init_parameters(seed);

    ModelConfig hooked = small_config(Variant::Slahan, feats);
    hooked.zero_child_summary = true;
    SlahanModel slahan(hooked);
    slahan.init_parameters(seed);

    ForwardTrace tp, ts;
    Tape t1, t2;
    NodeId lp = parent.sentence_loss(t1, corpus[0], {&feats, 0}, 0.0, false, nullptr, &tp);
    NodeId lsl = slahan.sentence_loss(t2, corpus[0], {&feats, 0}, 0.0, false, nullptr, &ts);
    EXPECT_EQ(t1.value(lp).v[0], t2.value(lsl).v[0]);
    ASSERT_EQ(tp.steps.size(), ts.steps.size());
    for (size_t k = 0; k < tp.steps.size(); ++k) {
        EXPECT_EQ(tp.steps[k].label_dist.v, ts.steps[k].label_dist.v);
        EXPECT_EQ(tp.steps[k].gate.v, ts.steps[k].gate.v);
        EXPECT_EQ(tp.steps[k].feedback.v, ts.steps[k].feedback.v);
    }
}

TEST(Variants, ZeroedParentSideMakesSlahanMatchChildBitwise) {
    auto corpus = std::vector<Sentence>{chain_sentence(5)};
    FeatureSet feats = contextual_features(corpus, 4, 2, 89);
    const uint64_t seed = 73;

    SlahanModel child(small_config(Variant::Child, feats));
    child.init_parameters(seed);

    ModelConfig hooked = small_config(Variant::Slahan, feats);
    hooked.zero_parent_summary = true;
    SlahanModel slahan(hooked);
    slahan.init_parameters(seed);

    ForwardTrace tc, ts;
    Tape t1, t2;
    NodeId lc = child.sentence_loss(t1, corpus[0], {&feats, 0}, 0.0, false, nullptr, &tc);
    NodeId lsl = slahan.sentence_loss(t2, corpus[0], {&feats, 0}, 0.0, false, nullptr, &ts);
    EXPECT_EQ(t1.value(lc).v[0], t2.value(lsl).v[0]);
    for (size_t k = 0; k < tc.steps.size(); ++k)
        EXPECT_EQ(tc.steps[k].label_dist.v, ts.steps[k].label_dist.v);
}

TEST(GatePaths, OrderGatingAndSelectiveGatePassFiniteDifferences) {
    auto corpus = std::vector<Sentence>{chain_sentence(2)};
    FeatureSet feats = contextual_features(corpus, 2, 1, 107);
    SlahanModel model(small_config(Variant::Slahan, feats, /*hidden=*/2, {1, 2}));
    model.init_parameters(71);
    ParameterStore& store = model.params();
    Rng rng(5);
    Tensor cand1 = Tensor::zeros({4}), cand2 = Tensor::zeros({4}), ctx = Tensor::zeros({10});
    for (double& x : cand1.v) x = rng.uniform(-1, 1);
    for (double& x : cand2.v) x = rng.uniform(-1, 1);
    for (double& x : ctx.v) x = rng.uniform(-1, 1);
    store.create("test.cand1", cand1);
    store.create("test.cand2", cand2);
    store.create("test.ctx", ctx);
    auto fwd = [&](Tape& t) {
        NodeId c_t = t.param(store, "test.ctx");
        auto p = model.order_gated_summary(t, {t.param(store, "test.cand1"),
                                               t.param(store, "test.cand2")},
                                           c_t, {"order.parent.d1", "order.parent.d2"});
        auto c = model.order_gated_summary(t, {t.param(store, "test.cand2"),
                                               t.param(store, "test.cand1")},
                                           c_t, {"order.child.d1", "order.child.d2"});
        auto gate = model.selective_gate(t, p.mu, c.mu, c_t);
        return sum(t, tanh(t, gate.omega));
    };
    auto res = gradient_check(store, fwd);
    EXPECT_LT(res.max_rel_error, 1e-4) << res.worst;
}

TEST(FullModel, GradientCheckBothLossTerms) {
    auto corpus = std::vector<Sentence>{chain_sentence(2)};
    FeatureSet feats = contextual_features(corpus, 2, 2, 97);
    ModelConfig cfg = small_config(Variant::Slahan, feats, /*hidden=*/2);
    cfg.syntax_lambda = 1.0;
    SlahanModel model(cfg);
    model.init_parameters(79);
    auto fwd = [&](Tape& t) {
        return model.sentence_loss(t, corpus[0], {&feats, 0}, 1.0, false);
    };
    auto res = gradient_check(model.params(), fwd);
    EXPECT_LT(res.max_rel_error, 1e-4) << res.worst;
}

// Bitwise regression of a full SLAHAN decode pass at fixed seeds. The frozen
// words were produced by this implementation once (set SLAHAN_REGEN_GOLDEN=1
// to print replacements after an intentional change).
TEST(DecodeStep, GoldenSlahanPassIsBitwiseStable) {
    auto corpus = std::vector<Sentence>{chain_sentence(3)};
    FeatureSet feats = contextual_features(corpus, 3, 2, 2027);
    ModelConfig cfg = small_config(Variant::Slahan, feats, /*hidden=*/4);
    SlahanModel model(cfg);
    model.init_parameters(424242);
    ForwardTrace trace;
    model.greedy_decode(corpus[0], {&feats, 0}, &trace);
    ASSERT_EQ(trace.steps.size(), 3u);

    std::vector<double> got;
    for (const auto& step : trace.steps) {
        got.insert(got.end(), step.label_dist.v.begin(), step.label_dist.v.end());
        got.insert(got.end(), step.gate.v.begin(), step.gate.v.end());
    }
    if (std::getenv("SLAHAN_REGEN_GOLDEN")) {
        for (double v : got) {
            uint64_t bits;
            std::memcpy(&bits, &v, sizeof(bits));
            std::printf("0x%016llxull,\n", static_cast<unsigned long long>(bits));
        }
        GTEST_SKIP() << "golden regeneration mode";
    }
    static const uint64_t kGolden[] = {
        // regenerate with SLAHAN_REGEN_GOLDEN=1
        0x3fd44d8169bc2966ull,
        0x3fd5dd6417037bdfull,
        0x3fd5d51a7f405abbull,
        0x3fe01a6d7884a36full,
        0x3fe13bb054605d14ull,
        0x3fdf0f95cb97ac59ull,
        0x3fdfc3152d9191e8ull,
        0x3fe09b1e8acc87bbull,
        0x3fdfd9d0a99ae950ull,
        0x3fdfea5d4c1edb7full,
        0x3fde145a3fb6fefbull,
        0x3fd53411e6867379ull,
        0x3fd39dad03a21c5cull,
        0x3fd72e4115d7702bull,
        0x3fdf29a249cb1ba8ull,
        0x3fe0c6413adeeec4ull,
        0x3fdf95c1aa330984ull,
        0x3fdf70f02331608aull,
        0x3fe0514e629cf8e1ull,
        0x3fe0a9509e83eb67ull,
        0x3fdfde31683277eaull,
        0x3fde936c580ccbebull,
        0x3fd6848231dbed49ull,
        0x3fd4d0e8fb824ef0ull,
        0x3fd4aa94d2a1c3c7ull,
        0x3fddd23e0fa19233ull,
        0x3fe0d85b186cf047ull,
        0x3fdfb23a303c7b58ull,
        0x3fdf2f4251531c20ull,
        0x3fe082a336a89a82ull,
        0x3fe0e68b4d6e7d5bull,
        0x3fdff8ddd7fe6d61ull,
        0x3fdeac15fb455f32ull,
    };
    ASSERT_EQ(got.size(), sizeof(kGolden) / sizeof(kGolden[0]));
    for (size_t i = 0; i < got.size(); ++i) {
        uint64_t bits;
        std::memcpy(&bits, &got[i], sizeof(bits));
        EXPECT_EQ(bits, kGolden[i]) << "value index " << i;
    }
}

TEST(Checkpoint, RoundTripPreservesDecodingExactly) {
    auto corpus = std::vector<Sentence>{chain_sentence(5)};
    FeatureSet feats = contextual_features(corpus, 4, 2, 101);
    ModelConfig cfg = small_config(Variant::Slahan, feats);
    SlahanModel model(cfg);
    model.init_parameters(83);

    const std::string path =
        (std::filesystem::temp_directory_path() / "slahan_ckpt_test.ckpt").string();
    save_checkpoint(path, model.config(), feats.layout_hash(), model.params());
    Checkpoint ckpt = load_checkpoint(path);
    EXPECT_EQ(ckpt.feature_hash, feats.layout_hash());
    SlahanModel restored = model_from_checkpoint(std::move(ckpt));

    ForwardTrace a, b;
    model.greedy_decode(corpus[0], {&feats, 0}, &a);
    restored.greedy_decode(corpus[0], {&feats, 0}, &b);
    ASSERT_EQ(a.steps.size(), b.steps.size());
    for (size_t k = 0; k < a.steps.size(); ++k)
        EXPECT_EQ(a.steps[k].label_dist.v, b.steps[k].label_dist.v);
    std::remove(path.c_str());
}

TEST(Checkpoint, RejectsBadVersionAndConfigMismatch) {
    auto corpus = std::vector<Sentence>{chain_sentence(3)};
    FeatureSet feats = contextual_features(corpus, 3, 1, 103);
    SlahanModel model(small_config(Variant::Slahan, feats));
    model.init_parameters(89);
    const std::string path =
        (std::filesystem::temp_directory_path() / "slahan_ckpt_bad.ckpt").string();
    save_checkpoint(path, model.config(), 0, model.params());

    // corrupt the version field
    std::ifstream in(path, std::ios::binary);
    std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    in.close();
    auto pos = content.find("\"version\":1");
    ASSERT_NE(pos, std::string::npos);
    content.replace(pos, 11, "\"version\":9");
    std::ofstream out(path, std::ios::binary);
    out << content;
    out.close();
    EXPECT_THROW(load_checkpoint(path), data_error);
    std::remove(path.c_str());
}
