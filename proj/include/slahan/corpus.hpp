#pragma once

#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "slahan/common.hpp"

namespace slahan {

inline constexpr const char* kRootSymbol = "<root>";

enum class Label : int { Keep = 0, Delete = 1, Eos = 2 };

// Fixed 3-way mapping; one-hot width is exactly 3.
struct LabelCodec {
    static constexpr int kWidth = 3;

    static int to_index(Label l) { return static_cast<int>(l); }

    static Label from_index(int i) {
        if (i < 0 || i > 2) throw std::invalid_argument("LabelCodec: index out of range");
        return static_cast<Label>(i);
    }

    static const char* to_string(Label l) {
        switch (l) {
            case Label::Keep: return "keep";
            case Label::Delete: return "delete";
            case Label::Eos: return "eos";
        }
        throw std::invalid_argument("LabelCodec: bad label");
    }

    static Label parse(const std::string& s) {
        if (s == "keep") return Label::Keep;
        if (s == "delete") return Label::Delete;
        if (s == "eos") return Label::Eos;
        throw data_error("LabelCodec: unknown label '" + s + "'");
    }
};

// A tokenized sentence with the root symbol prepended at index 0. Gold head
// indices live in the shifted coordinate space (head 0 = root); gold labels
// cover positions 1..n.
struct Sentence {
    std::vector<std::string> tokens;
    std::vector<size_t> gold_heads; // size n+1 when present (entry 0 is 0), empty otherwise
    std::vector<Label> gold_labels; // size n when present, empty otherwise

    size_t n() const { return tokens.size() - 1; }
    bool has_heads() const { return !gold_heads.empty(); }
    bool has_labels() const { return !gold_labels.empty(); }

    bool operator==(const Sentence& o) const {
        return tokens == o.tokens && gold_heads == o.gold_heads && gold_labels == o.gold_labels;
    }
};

// Heads must form a tree rooted at 0: no self-heads, every token reaches the
// root without cycling.
inline void validate_tree(const Sentence& s, size_t line_no = 0) {
    const std::string where = line_no ? " (line " + std::to_string(line_no) + ")" : "";
    if (!s.has_heads()) return;
    const size_t n1 = s.tokens.size();
    if (s.gold_heads.size() != n1)
        throw data_error("heads length does not match token count" + where);
    for (size_t t = 1; t < n1; ++t) {
        if (s.gold_heads[t] >= n1)
            throw data_error("head index " + std::to_string(s.gold_heads[t]) +
                             " out of range" + where);
        if (s.gold_heads[t] == t) throw data_error("token is its own head" + where);
    }
    for (size_t t = 1; t < n1; ++t) {
        size_t u = t, steps = 0;
        while (u != 0) {
            u = s.gold_heads[u];
            if (++steps > n1) throw data_error("head cycle detected" + where);
        }
    }
}

// Build a Sentence from record-space data (no root yet, heads 0 = root,
// j >= 1 = j-th token).
inline Sentence sentence_from_record(std::vector<std::string> tokens,
                                     std::optional<std::vector<size_t>> heads,
                                     std::optional<std::vector<Label>> labels,
                                     size_t line_no = 0) {
    const std::string where = line_no ? " (line " + std::to_string(line_no) + ")" : "";
    if (tokens.empty()) throw data_error("empty token list" + where);
    Sentence s;
    s.tokens.reserve(tokens.size() + 1);
    s.tokens.emplace_back(kRootSymbol);
    for (auto& t : tokens) s.tokens.push_back(std::move(t));
    if (heads) {
        if (heads->size() != s.n())
            throw data_error("heads length does not match token count" + where);
        s.gold_heads.reserve(s.n() + 1);
        s.gold_heads.push_back(0);
        s.gold_heads.insert(s.gold_heads.end(), heads->begin(), heads->end());
    }
    if (labels) {
        if (labels->size() != s.n())
            throw data_error("labels length does not match token count" + where);
        s.gold_labels = std::move(*labels);
    }
    validate_tree(s, line_no);
    return s;
}

// Canonical corpus format: UTF-8 JSONL, one record per line:
//   {"tokens": [...], "heads": [...]?, "labels": [...]?}
inline std::vector<Sentence> load_corpus(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw data_error("cannot open corpus file " + path);
    std::vector<Sentence> out;
    std::string line;
    size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        nlohmann::json rec;
        try {
            rec = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw data_error("malformed JSON at line " + std::to_string(line_no) + ": " +
                             e.what());
        }
        try {
            if (!rec.contains("tokens") || !rec["tokens"].is_array())
                throw data_error("record has no token array");
            std::vector<std::string> tokens = rec["tokens"].get<std::vector<std::string>>();
            std::optional<std::vector<size_t>> heads;
            if (rec.contains("heads") && !rec["heads"].is_null()) {
                heads.emplace();
                for (const auto& h : rec["heads"]) {
                    const long long v = h.get<long long>();
                    if (v < 0) throw data_error("negative head index");
                    heads->push_back(static_cast<size_t>(v));
                }
            }
            std::optional<std::vector<Label>> labels;
            if (rec.contains("labels") && !rec["labels"].is_null()) {
                labels.emplace();
                for (const auto& l : rec["labels"])
                    labels->push_back(LabelCodec::parse(l.get<std::string>()));
            }
            out.push_back(sentence_from_record(std::move(tokens), std::move(heads),
                                               std::move(labels), line_no));
        } catch (const nlohmann::json::exception& e) {
            throw data_error("malformed record at line " + std::to_string(line_no) + ": " +
                             e.what());
        }
    }
    return out;
}

inline nlohmann::json sentence_to_record(const Sentence& s) {
    nlohmann::json rec;
    rec["tokens"] = std::vector<std::string>(s.tokens.begin() + 1, s.tokens.end());
    if (s.has_heads())
        rec["heads"] = std::vector<size_t>(s.gold_heads.begin() + 1, s.gold_heads.end());
    if (s.has_labels()) {
        std::vector<std::string> ls;
        for (Label l : s.gold_labels) ls.emplace_back(LabelCodec::to_string(l));
        rec["labels"] = ls;
    }
    return rec;
}

inline void save_corpus(const std::vector<Sentence>& corpus, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw data_error("cannot open " + path + " for writing");
    for (const auto& s : corpus) out << sentence_to_record(s).dump() << "\n";
}

// Deterministic function of (seed, epoch): every index appears exactly once.
inline std::vector<std::vector<size_t>> make_batches(size_t count, size_t batch_size,
                                                     uint64_t seed, uint64_t epoch) {
    if (batch_size < 1) throw std::invalid_argument("make_batches: batch_size must be >= 1");
    std::vector<size_t> order(count);
    for (size_t i = 0; i < count; ++i) order[i] = i;
    Rng rng(seed ^ splitmix64(0x9e3779b97f4a7c15ull * (epoch + 1)));
    for (size_t i = count; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
    std::vector<std::vector<size_t>> batches;
    for (size_t pos = 0; pos < count; pos += batch_size) {
        batches.emplace_back(order.begin() + pos,
                             order.begin() + std::min(count, pos + batch_size));
    }
    return batches;
}

// ---------------------------------------------------------------------------
// Converter from the public sentence-compression dataset's JSON records
// (pretty-printed objects concatenated in one file).
// ---------------------------------------------------------------------------

namespace detail {

// Scan the next top-level JSON object in text starting at pos; returns
// [start, end) or nullopt at end of input. Brace counting respects strings.
inline std::optional<std::pair<size_t, size_t>> next_json_object(const std::string& text,
                                                                 size_t& pos) {
    while (pos < text.size() && text[pos] != '{') ++pos;
    if (pos >= text.size()) return std::nullopt;
    const size_t start = pos;
    int depth = 0;
    bool in_string = false, escaped = false;
    for (; pos < text.size(); ++pos) {
        const char c = text[pos];
        if (in_string) {
            if (escaped)
                escaped = false;
            else if (c == '\\')
                escaped = true;
            else if (c == '"')
                in_string = false;
            continue;
        }
        if (c == '"')
            in_string = true;
        else if (c == '{')
            ++depth;
        else if (c == '}') {
            if (--depth == 0) return std::make_pair(start, ++pos);
        }
    }
    return std::nullopt; // unterminated object
}

} // namespace detail

struct ConvertStats {
    size_t converted = 0;
    size_t skipped = 0;
    size_t without_heads = 0;
};

// Converts one public-format record to a canonical Sentence. Tokens and the
// tree come from the word-level "source_tree"; kept tokens from the edges of
// "compression_untransformed" (fallback "compression"). Records without a
// usable tree are emitted without heads.
inline std::optional<Sentence> convert_public_record(const nlohmann::json& rec) {
    std::vector<std::string> tokens;
    std::map<long long, std::string> words; // word id -> form
    const nlohmann::json* tree = nullptr;
    if (rec.contains("source_tree") && rec["source_tree"].contains("node"))
        tree = &rec["source_tree"];
    else if (rec.contains("graph") && rec["graph"].contains("node"))
        tree = &rec["graph"];
    if (!tree) return std::nullopt;

    for (const auto& node : (*tree)["node"]) {
        if (!node.contains("word")) continue;
        for (const auto& w : node["word"]) {
            const long long id = w.value("id", static_cast<long long>(-1));
            if (id < 0) continue; // ROOT placeholder
            words[id] = w.value("form", "");
        }
    }
    if (words.empty()) return std::nullopt;
    // word ids must be contiguous from 0 for the label/head alignment to hold
    long long expect = 0;
    for (const auto& [id, form] : words)
        if (id != expect++) return std::nullopt;
    for (const auto& [id, form] : words) tokens.push_back(form);

    std::optional<std::vector<size_t>> heads;
    if (tree->contains("edge")) {
        std::vector<long long> parent_of(tokens.size(), -2);
        for (const auto& e : (*tree)["edge"]) {
            const long long child = e.value("child", static_cast<long long>(-2));
            const long long parent = e.value("parent", static_cast<long long>(-2));
            if (child < 0 || child >= static_cast<long long>(tokens.size())) continue;
            parent_of[child] = parent;
        }
        bool complete = true;
        for (long long p : parent_of)
            if (p == -2) complete = false;
        if (complete) {
            heads.emplace();
            for (long long p : parent_of)
                heads->push_back(p < 0 ? 0 : static_cast<size_t>(p) + 1);
        }
    }

    std::optional<std::vector<Label>> labels;
    const char* comp_key = rec.contains("compression_untransformed")
                               ? "compression_untransformed"
                               : (rec.contains("compression") ? "compression" : nullptr);
    if (comp_key && rec[comp_key].contains("edge")) {
        std::vector<Label> ls(tokens.size(), Label::Delete);
        for (const auto& e : rec[comp_key]["edge"]) {
            const long long child = e.value("child", static_cast<long long>(-2));
            if (child >= 0 && child < static_cast<long long>(tokens.size()))
                ls[child] = Label::Keep;
        }
        labels = std::move(ls);
    }
    return sentence_from_record(std::move(tokens), std::move(heads), std::move(labels));
}

// Reads concatenated public-format JSON objects and writes canonical JSONL.
// Unparseable records are skipped and counted; tree-less records are flagged.
inline ConvertStats convert_public_dataset(const std::string& text, std::ostream& out,
                                           std::ostream* warnings = nullptr) {
    ConvertStats stats;
    size_t pos = 0;
    size_t record_no = 0;
    while (auto span = detail::next_json_object(text, pos)) {
        ++record_no;
        try {
            nlohmann::json rec =
                nlohmann::json::parse(text.begin() + span->first, text.begin() + span->second);
            auto sentence = convert_public_record(rec);
            if (!sentence) throw data_error("no usable token source");
            if (!sentence->has_heads()) {
                ++stats.without_heads;
                if (warnings)
                    *warnings << "record " << record_no << ": no dependency tree, emitted "
                              << "without heads\n";
            }
            out << sentence_to_record(*sentence).dump() << "\n";
            ++stats.converted;
        } catch (const std::exception& e) {
            ++stats.skipped;
            if (warnings) *warnings << "record " << record_no << " skipped: " << e.what() << "\n";
        }
    }
    return stats;
}

} // namespace slahan
