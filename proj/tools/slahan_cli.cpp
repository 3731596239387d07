// slahan: deletion-based sentence compression with syntactically look-ahead
// attention. Subcommands: convert, synth, train, compress, eval, inspect,
// selfcheck.

#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "slahan/checkpoint.hpp"
#include "slahan/gradcheck.hpp"
#include "slahan/metrics.hpp"
#include "slahan/synthetic.hpp"
#include "slahan/trainer.hpp"

namespace fs = std::filesystem;
using namespace slahan;

namespace {

// Shared feature-source flags. Synthetic features are deterministic in the
// token strings and the seed, so train/compress/eval agree as long as the
// flags agree.
struct FeatureOpts {
    std::string static_path;
    std::string contextual_base;
    size_t synth_dim = 0;
    size_t synth_layers = 2;
    uint64_t feature_seed = 7;

    void attach(CLI::App* cmd, bool with_dev = false, std::string* dev_base = nullptr) {
        cmd->add_option("--static", static_path,
                        "GloVe-format static embedding table (token v1 .. vd per line)");
        cmd->add_option("--contextual", contextual_base,
                        "contextual feature container base path (expects .bin and .json)");
        if (with_dev)
            cmd->add_option("--contextual-dev", *dev_base,
                            "contextual container base path for the dev corpus");
        cmd->add_option("--synthetic-features", synth_dim,
                        "generate deterministic per-token random features of this dimension");
        cmd->add_option("--synthetic-layers", synth_layers,
                        "layer count for --synthetic-features")
            ->default_val(2);
        cmd->add_option("--feature-seed", feature_seed, "seed for --synthetic-features")
            ->default_val(7);
    }

    FeatureSet build(const std::vector<Sentence>& corpus,
                     const std::string& contextual_override = "") const {
        FeatureSet set;
        if (!static_path.empty())
            set.statics.push_back(load_static_embeddings(static_path, "static"));
        const std::string base =
            contextual_override.empty() ? contextual_base : contextual_override;
        if (!base.empty()) set.contextuals.push_back(load_feature_container(base));
        if (synth_dim > 0)
            set.contextuals.push_back(
                synthetic_contextual_features(corpus, synth_dim, synth_layers, feature_seed));
        if (set.statics.empty() && set.contextuals.empty())
            throw CLI::ValidationError(
                "features", "no feature source given (--static / --contextual / "
                            "--synthetic-features)");
        for (const auto& c : set.contextuals)
            if (c.per_sentence.size() < corpus.size())
                throw data_error("contextual source '" + c.name + "' covers " +
                                 std::to_string(c.per_sentence.size()) +
                                 " sentences, corpus has " + std::to_string(corpus.size()));
        return set;
    }
};

std::vector<int> parse_orders(const std::string& csv) {
    std::vector<int> out;
    std::istringstream is(csv);
    std::string item;
    while (std::getline(is, item, ','))
        if (!item.empty()) out.push_back(std::stoi(item));
    return out;
}

std::vector<std::vector<Label>> read_system_labels(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw data_error("cannot open system output " + path);
    std::vector<std::vector<Label>> out;
    std::string line;
    size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        try {
            auto rec = nlohmann::json::parse(line);
            std::vector<Label> labels;
            for (const auto& l : rec.at("labels"))
                labels.push_back(LabelCodec::parse(l.get<std::string>()));
            out.push_back(std::move(labels));
        } catch (const nlohmann::json::exception& e) {
            throw data_error("system output line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    return out;
}

nlohmann::json matrix_to_json(const Tensor& m) {
    nlohmann::json rows = nlohmann::json::array();
    for (size_t i = 0; i < m.rows(); ++i) {
        nlohmann::json row = nlohmann::json::array();
        for (size_t j = 0; j < m.cols(); ++j) row.push_back(m.at(i, j));
        rows.push_back(std::move(row));
    }
    return rows;
}

int cmd_convert(const std::string& in_path, const std::string& out_path) {
    std::ifstream in(in_path);
    if (!in) throw data_error("cannot open " + in_path);
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    std::ofstream out(out_path);
    if (!out) throw data_error("cannot open " + out_path + " for writing");
    ConvertStats stats = convert_public_dataset(text, out, &std::cerr);
    std::cout << "converted " << stats.converted << " sentences (" << stats.without_heads
              << " without heads), skipped " << stats.skipped << "\n";
    return 0;
}

int cmd_synth(const std::string& out_dir, size_t sentences, uint64_t seed, size_t dim,
              size_t layers) {
    fs::create_directories(out_dir);
    SyntheticSpec spec;
    spec.sentences = sentences;
    spec.seed = seed;
    auto corpus = synthetic_paren_corpus(spec);
    save_corpus(corpus, (fs::path(out_dir) / "corpus.jsonl").string());
    auto feats = synthetic_contextual_features(corpus, dim, layers, seed + 1);
    write_feature_container(feats, (fs::path(out_dir) / "features").string());
    std::cout << "wrote " << corpus.size() << " sentences and a " << layers << "x" << dim
              << " feature container under " << out_dir << "\n";
    return 0;
}

int run_selfcheck() {
    int failures = 0;
    auto report = [&](const char* name, bool ok, const std::string& detail = "") {
        std::cout << (ok ? "[ ok ] " : "[FAIL] ") << name;
        if (!detail.empty()) std::cout << " (" << detail << ")";
        std::cout << "\n";
        if (!ok) ++failures;
    };

    { // primitive gradient checks
        Rng rng(1);
        ParameterStore store;
        Tensor a = Tensor::zeros({4, 3}), v = Tensor::zeros({3});
        for (double& x : a.v) x = rng.uniform(-1, 1);
        for (double& x : v.v) x = rng.uniform(-1, 1);
        store.create("a", a);
        store.create("v", v);
        auto res = gradient_check(store, [&](Tape& t) {
            NodeId y = tanh(t, matvec(t, t.param(store, "a"), t.param(store, "v")));
            return sum(t, mul(t, y, sigmoid(t, y)));
        });
        report("primitive gradient check", res.max_rel_error < 1e-4,
               "max rel err " + std::to_string(res.max_rel_error));
    }

    { // graph oracle equivalence + constraints + transpose
        Rng rng(2);
        bool ok = true;
        std::string detail;
        for (int rep = 0; rep < 25 && ok; ++rep) {
            Tape t;
            const size_t n1 = 2 + rng.below(5);
            Tensor scores = Tensor::zeros({n1, n1});
            for (double& x : scores.v) x = rng.uniform(-3, 3);
            NodeId a1 = constrained_head_distribution(t, t.leaf(scores));
            auto parents = compose_parent_graphs(t, a1, {1, 2, 3, 4});
            auto children = child_graphs_from_parent(t, parents);
            for (size_t tt = 0; tt < n1 && ok; ++tt) {
                double col = 0.0;
                for (size_t j = 0; j < n1; ++j) col += t.value(a1).at(j, tt);
                if (std::abs(col - 1.0) > 1e-12) {
                    ok = false;
                    detail = "column sum";
                }
            }
            for (const auto& [d, g] : parents) {
                for (size_t tt = 0; tt < n1 && ok; ++tt)
                    for (size_t j = 0; j < n1 && ok; ++j) {
                        if (std::abs(path_sum_oracle(t.value(a1), d, tt, j) -
                                     t.value(g).at(j, tt)) > 1e-10) {
                            ok = false;
                            detail = "oracle mismatch at d=" + std::to_string(d);
                        }
                        if (t.value(children.at(d)).at(tt, j) != t.value(g).at(j, tt)) {
                            ok = false;
                            detail = "transpose mismatch";
                        }
                    }
            }
        }
        report("parent-graph enumeration oracle (25 instances)", ok, detail);
    }

    { // full-model gradient check, both loss terms
        std::vector<Sentence> corpus{sentence_from_record(
            {"a", "b", "c"}, {{0, 1, 2}}, {{Label::Keep, Label::Delete, Label::Keep}})};
        FeatureSet feats;
        feats.contextuals.push_back(synthetic_contextual_features(corpus, 2, 2, 3));
        ModelConfig cfg;
        cfg.variant = Variant::Slahan;
        cfg.syntax_lambda = 1.0;
        cfg.orders = {1, 2};
        cfg.hidden_dim = 2;
        cfg.attention_dim = 2;
        cfg.lstm_depth = 1;
        cfg.dropout = 0.0;
        cfg.features = feats.layout();
        SlahanModel model(cfg);
        model.init_parameters(5);
        auto res = gradient_check(model.params(), [&](Tape& t) {
            return model.sentence_loss(t, corpus[0], {&feats, 0}, 1.0, false);
        });
        report("full-model gradient check", res.max_rel_error < 1e-4,
               "max rel err " + std::to_string(res.max_rel_error) + " at " + res.worst);
    }

    std::cout << (failures ? "selfcheck FAILED\n" : "selfcheck passed\n");
    return failures ? 3 : 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"SLAHAN sentence compression"};
    app.require_subcommand(1);
    app.set_config("--config", "", "TOML-like key=value config file; flags override it");

    // convert
    auto* convert = app.add_subcommand(
        "convert", "convert public sentence-compression JSON records to canonical JSONL");
    std::string conv_in, conv_out;
    convert->add_option("--in", conv_in, "public dataset JSON file")->required();
    convert->add_option("--out", conv_out, "canonical JSONL output")->required();

    // synth
    auto* synth = app.add_subcommand(
        "synth", "generate the rule-based toy corpus and matching feature container");
    std::string synth_dir;
    size_t synth_sentences = 50, synth_dim = 16, synth_layers = 2;
    uint64_t synth_seed = 7;
    synth->add_option("--out-dir", synth_dir)->required();
    synth->add_option("--sentences", synth_sentences)->default_val(50);
    synth->add_option("--seed", synth_seed)->default_val(7);
    synth->add_option("--dim", synth_dim)->default_val(16);
    synth->add_option("--layers", synth_layers)->default_val(2);

    // train
    auto* train_cmd = app.add_subcommand("train", "train a model");
    std::string train_path, dev_path, out_dir, variant_str = "slahan", orders_csv = "1,2,3,4";
    std::string contextual_dev;
    double lambda = 0.0, dropout = 0.3, lr = 0.001, clip = 5.0;
    size_t hidden = 200, attention = 0, depth = 2, batch = 16, max_epochs = 20;
    uint64_t seed = 1;
    bool tie_orders = false, clip_per_value = false;
    FeatureOpts train_feats;
    train_cmd->add_option("--train", train_path, "training corpus (JSONL)")->required();
    train_cmd->add_option("--dev", dev_path, "development corpus (JSONL)")->required();
    train_cmd->add_option("--out", out_dir, "output directory")->required();
    train_cmd->add_option("--variant", variant_str, "base|parent|child|slahan")
        ->default_val("slahan");
    train_cmd->add_option("--lambda", lambda, "syntax loss weight")->default_val(0.0);
    train_cmd->add_option("--orders", orders_csv, "dependency orders, e.g. 1,2,3,4")
        ->default_val("1,2,3,4");
    train_cmd->add_option("--hidden", hidden)->default_val(200);
    train_cmd->add_option("--attention-dim", attention,
                          "attention layer width (defaults to --hidden)");
    train_cmd->add_option("--depth", depth, "LSTM depth")->default_val(2);
    train_cmd->add_option("--dropout", dropout)->default_val(0.3);
    train_cmd->add_option("--lr", lr)->default_val(0.001);
    train_cmd->add_option("--clip", clip, "global-norm gradient clip")->default_val(5.0);
    train_cmd->add_flag("--clip-per-value", clip_per_value, "clamp each gradient coordinate");
    train_cmd->add_option("--batch", batch)->default_val(16);
    train_cmd->add_option("--max-epochs", max_epochs)->default_val(20);
    train_cmd->add_option("--seed", seed)->default_val(1);
    train_cmd->add_flag("--tie-orders", tie_orders, "share order weights across sides");
    train_feats.attach(train_cmd, true, &contextual_dev);

    // compress
    auto* compress = app.add_subcommand("compress", "greedy-decode a corpus");
    std::string ckpt_path, comp_in, comp_out;
    FeatureOpts comp_feats;
    compress->add_option("--checkpoint", ckpt_path)->required();
    compress->add_option("--in", comp_in, "input corpus (JSONL)")->required();
    compress->add_option("--out", comp_out, "output JSONL")->required();
    comp_feats.attach(compress);

    // eval
    auto* eval_cmd = app.add_subcommand("eval", "score system output against gold labels");
    std::string eval_gold, eval_system, eval_ckpt, eval_out_dir, eval_baseline;
    size_t bootstrap_samples = 100000;
    uint64_t bootstrap_seed = 1;
    FeatureOpts eval_feats;
    eval_cmd->add_option("--gold", eval_gold, "gold corpus (JSONL with labels)")->required();
    eval_cmd->add_option("--system", eval_system, "compress output to score");
    eval_cmd->add_option("--checkpoint", eval_ckpt, "decode this checkpoint instead");
    eval_cmd->add_option("--out-dir", eval_out_dir, "write eval/report.{json,txt} here");
    eval_cmd->add_option("--baseline", eval_baseline,
                         "second system output; adds a paired-bootstrap p-value on F1");
    eval_cmd->add_option("--bootstrap-samples", bootstrap_samples)->default_val(100000);
    eval_cmd->add_option("--bootstrap-seed", bootstrap_seed)->default_val(1);
    eval_feats.attach(eval_cmd);

    // inspect
    auto* inspect = app.add_subcommand(
        "inspect", "dump attention graphs and gate activity for one sentence");
    std::string ins_ckpt, ins_in, ins_out;
    size_t ins_index = 0;
    bool ins_gold_tree = false;
    std::string ins_orders_csv = "1,2,3,4";
    FeatureOpts ins_feats;
    inspect->add_option("--checkpoint", ins_ckpt, "model checkpoint");
    inspect->add_flag("--gold-tree", ins_gold_tree,
                      "build the head matrix from gold heads instead of a model");
    inspect->add_option("--in", ins_in, "corpus (JSONL)")->required();
    inspect->add_option("--index", ins_index, "sentence index")->default_val(0);
    inspect->add_option("--orders", ins_orders_csv)->default_val("1,2,3,4");
    inspect->add_option("--out", ins_out, "write JSON here instead of stdout");
    ins_feats.attach(inspect);

    // selfcheck
    app.add_subcommand("selfcheck",
                       "run the gradient-check and graph-oracle verification suites");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1; // usage errors
    }

    try {
        if (app.got_subcommand("convert")) return cmd_convert(conv_in, conv_out);
        if (app.got_subcommand("synth"))
            return cmd_synth(synth_dir, synth_sentences, synth_seed, synth_dim, synth_layers);
        if (app.got_subcommand("selfcheck")) return run_selfcheck();

        if (app.got_subcommand("train")) {
            auto train_corpus = load_corpus(train_path);
            auto dev_corpus = load_corpus(dev_path);
            FeatureSet tf = train_feats.build(train_corpus);
            FeatureSet df = train_feats.build(
                dev_corpus,
                contextual_dev.empty() ? train_feats.contextual_base : contextual_dev);
            ModelConfig mc;
            mc.variant = parse_variant(variant_str);
            mc.syntax_lambda = lambda;
            mc.orders = parse_orders(orders_csv);
            mc.hidden_dim = hidden;
            mc.attention_dim = attention ? attention : hidden;
            mc.lstm_depth = depth;
            mc.dropout = dropout;
            mc.tie_order_weights = tie_orders;
            mc.features = tf.layout();
            SlahanModel model(mc);
            model.init_parameters(seed);

            fs::create_directories(fs::path(out_dir) / "logs");
            std::ofstream log((fs::path(out_dir) / "logs" / "epochs.jsonl").string());
            std::ofstream echo((fs::path(out_dir) / "config.echo.toml").string());
            echo << app.config_to_str(true, false);
            TrainConfig tc;
            tc.lr = lr;
            tc.clip_threshold = clip;
            tc.clip_per_value = clip_per_value;
            tc.max_epochs = max_epochs;
            tc.batch_size = batch;
            tc.seed = seed;
            tc.checkpoint_dir = (fs::path(out_dir) / "checkpoints").string();
            tc.epoch_log = &log;
            TrainResult result = train(model, train_corpus, tf, dev_corpus, df, tc);
            std::cout << "best dev per-sentence accuracy " << result.best_accuracy
                      << " at epoch " << result.best_epoch << "\n"
                      << "checkpoint: " << result.best_checkpoint_path << "\n";
            return 0;
        }

        if (app.got_subcommand("compress")) {
            auto corpus = load_corpus(comp_in);
            FeatureSet feats = comp_feats.build(corpus);
            Checkpoint ckpt = load_checkpoint(ckpt_path);
            if (ckpt.feature_hash != feats.layout_hash())
                throw data_error("feature sources do not match the checkpoint");
            SlahanModel model = model_from_checkpoint(std::move(ckpt));
            std::ofstream out(comp_out);
            if (!out) throw data_error("cannot open " + comp_out + " for writing");
            for (size_t i = 0; i < corpus.size(); ++i) {
                DecodeResult res = model.greedy_decode(corpus[i], {&feats, i});
                nlohmann::json rec;
                std::vector<std::string> labels;
                for (Label l : res.labels) labels.emplace_back(LabelCodec::to_string(l));
                rec["labels"] = labels;
                std::string text;
                for (size_t k = 0; k < res.compression.size(); ++k)
                    text += (k ? " " : "") + res.compression[k];
                rec["compression"] = text;
                out << rec.dump() << "\n";
            }
            std::cout << "compressed " << corpus.size() << " sentences -> " << comp_out << "\n";
            return 0;
        }

        if (app.got_subcommand("eval")) {
            auto gold = load_corpus(eval_gold);
            std::vector<std::vector<Label>> system;
            if (!eval_system.empty()) {
                system = read_system_labels(eval_system);
            } else if (!eval_ckpt.empty()) {
                FeatureSet feats = eval_feats.build(gold);
                Checkpoint ckpt = load_checkpoint(eval_ckpt);
                if (ckpt.feature_hash != feats.layout_hash())
                    throw data_error("feature sources do not match the checkpoint");
                SlahanModel model = model_from_checkpoint(std::move(ckpt));
                for (size_t i = 0; i < gold.size(); ++i)
                    system.push_back(model.greedy_decode(gold[i], {&feats, i}).labels);
            } else {
                throw CLI::ValidationError("eval", "need --system or --checkpoint");
            }
            EvaluationReport rep = evaluate_labels(gold, system);
            if (!eval_baseline.empty()) {
                auto base_labels = read_system_labels(eval_baseline);
                EvaluationReport base = evaluate_labels(gold, base_labels);
                std::vector<double> a, b;
                for (const auto& s : rep.per_sentence) a.push_back(s.f1);
                for (const auto& s : base.per_sentence) b.push_back(s.f1);
                rep.p_value = paired_bootstrap(a, b, bootstrap_samples, bootstrap_seed);
                rep.bootstrap_samples = bootstrap_samples;
            }
            const std::string table = report_to_table(rep);
            std::cout << table;
            if (!eval_out_dir.empty()) {
                fs::create_directories(fs::path(eval_out_dir) / "eval");
                std::ofstream js((fs::path(eval_out_dir) / "eval" / "report.json").string());
                js << report_to_json(rep).dump(2) << "\n";
                std::ofstream txt((fs::path(eval_out_dir) / "eval" / "report.txt").string());
                txt << table;
            }
            return 0;
        }

        if (app.got_subcommand("inspect")) {
            auto corpus = load_corpus(ins_in);
            if (ins_index >= corpus.size())
                throw data_error("sentence index " + std::to_string(ins_index) +
                                 " out of range (corpus has " + std::to_string(corpus.size()) +
                                 ")");
            const Sentence& s = corpus[ins_index];
            nlohmann::json dump;
            dump["tokens"] = s.tokens;
            if (ins_gold_tree) {
                if (!s.has_heads()) throw data_error("--gold-tree needs gold heads");
                const size_t n1 = s.tokens.size();
                Tensor a = Tensor::zeros({n1, n1});
                a.at(0, 0) = 1.0;
                for (size_t pos = 1; pos < n1; ++pos) a.at(s.gold_heads[pos], pos) = 1.0;
                Tape t;
                auto parents =
                    compose_parent_graphs(t, t.leaf(a), parse_orders(ins_orders_csv));
                auto children = child_graphs_from_parent(t, parents);
                for (const auto& [d, g] : parents)
                    dump["parent_graphs"][std::to_string(d)] = matrix_to_json(t.value(g));
                for (const auto& [d, g] : children)
                    dump["child_graphs"][std::to_string(d)] = matrix_to_json(t.value(g));
            } else {
                if (ins_ckpt.empty())
                    throw CLI::ValidationError("inspect", "need --checkpoint or --gold-tree");
                FeatureSet feats = ins_feats.build(corpus);
                Checkpoint ckpt = load_checkpoint(ins_ckpt);
                if (ckpt.feature_hash != feats.layout_hash())
                    throw data_error("feature sources do not match the checkpoint");
                SlahanModel model = model_from_checkpoint(std::move(ckpt));
                ForwardTrace trace;
                DecodeResult res = model.greedy_decode(s, {&feats, ins_index}, &trace);
                dump["a1"] = matrix_to_json(trace.a1);
                for (const auto& [d, g] : trace.parent_graphs)
                    dump["parent_graphs"][std::to_string(d)] = matrix_to_json(g);
                for (const auto& [d, g] : trace.child_graphs)
                    dump["child_graphs"][std::to_string(d)] = matrix_to_json(g);
                dump["steps"] = nlohmann::json::array();
                for (size_t k = 0; k < trace.steps.size(); ++k) {
                    const auto& st = trace.steps[k];
                    nlohmann::json step;
                    step["t"] = k + 1;
                    step["label"] = LabelCodec::to_string(LabelCodec::from_index(st.chosen));
                    step["label_dist"] = st.label_dist.v;
                    step["gate_z"] = st.gate.v;
                    step["eta_parent"] = st.eta_parent;
                    step["eta_child"] = st.eta_child;
                    dump["steps"].push_back(std::move(step));
                }
                std::string text;
                for (size_t k = 0; k < res.compression.size(); ++k)
                    text += (k ? " " : "") + res.compression[k];
                dump["compression"] = text;
            }
            if (ins_out.empty()) {
                std::cout << dump.dump(2) << "\n";
            } else {
                std::ofstream out(ins_out);
                out << dump.dump(2) << "\n";
            }
            return 0;
        }
    } catch (const CLI::Error& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 1;
    } catch (const numeric_error& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return 3;
    } catch (const data_error& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 2;
    } catch (const std::invalid_argument& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
