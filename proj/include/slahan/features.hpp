#pragma once

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>
#include <unordered_map>

#include <json.hpp>

#include "slahan/corpus.hpp"
#include "slahan/tensor.hpp"

namespace slahan {

static_assert(std::endian::native == std::endian::little,
              "feature container I/O assumes a little-endian host");

// Single-layer token -> vector table (GloVe-style). Tokens missing from the
// table resolve to a trained UNK parameter owned by the model.
struct StaticSource {
    std::string name;
    size_t dim = 0;
    std::unordered_map<std::string, Tensor> table;

    const Tensor* lookup(const std::string& token) const {
        auto it = table.find(token);
        return it == table.end() ? nullptr : &it->second;
    }
};

// Per-sentence multi-layer contextual features, aligned 1:1 with token
// positions (root included at position 0) after any sub-word merging.
struct ContextualSource {
    std::string name;
    size_t dim = 0;
    size_t layers = 0;
    // per_sentence[i][k] is an (n_i+1) x dim matrix for layer k
    std::vector<std::vector<Tensor>> per_sentence;
};

struct FeatureSourceMeta {
    enum class Kind { Static, Contextual };
    Kind kind;
    std::string name;
    size_t dim = 0;
    size_t layers = 1;
};

struct FeatureSet {
    std::vector<StaticSource> statics;
    std::vector<ContextualSource> contextuals;

    std::vector<FeatureSourceMeta> layout() const {
        std::vector<FeatureSourceMeta> out;
        for (const auto& s : statics)
            out.push_back({FeatureSourceMeta::Kind::Static, s.name, s.dim, 1});
        for (const auto& c : contextuals)
            out.push_back({FeatureSourceMeta::Kind::Contextual, c.name, c.dim, c.layers});
        return out;
    }

    size_t embedding_dim() const {
        size_t d = 0;
        for (const auto& m : layout()) d += m.dim;
        return d;
    }

    // Guards checkpoints against being loaded with different feature data.
    uint64_t layout_hash() const {
        uint64_t h = 14695981039346656037ull;
        for (const auto& m : layout()) {
            h = fnv1a(m.name, h);
            h = splitmix64(h ^ (static_cast<uint64_t>(m.dim) << 8) ^ m.layers ^
                           (m.kind == FeatureSourceMeta::Kind::Static ? 1 : 2));
        }
        uint64_t vocab = 0;
        for (const auto& s : statics)
            for (const auto& [tok, vec] : s.table) vocab ^= fnv1a(tok); // order-independent
        return splitmix64(h ^ vocab);
    }
};

// GloVe-format text: one token per line followed by its vector components.
inline StaticSource load_static_embeddings(const std::string& path, const std::string& name) {
    std::ifstream in(path);
    if (!in) throw data_error("cannot open embeddings file " + path);
    StaticSource src;
    src.name = name;
    std::string line;
    size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::istringstream is(line);
        std::string token;
        is >> token;
        std::vector<double> vals;
        double x;
        while (is >> x) vals.push_back(x);
        if (vals.empty())
            throw data_error("embeddings line " + std::to_string(line_no) + ": no values");
        if (src.dim == 0) src.dim = vals.size();
        if (vals.size() != src.dim)
            throw data_error("embeddings line " + std::to_string(line_no) +
                             ": dimension mismatch");
        src.table[token] = Tensor::vec(std::move(vals));
    }
    return src;
}

// Mean of each contiguous sub-word group; groups are (start, length) pairs
// that must partition the sub-word positions in order.
inline std::vector<Tensor> merge_subword_vectors(
    const std::vector<Tensor>& subword, const std::vector<std::pair<size_t, size_t>>& groups) {
    std::vector<Tensor> out;
    size_t cursor = 0;
    for (const auto& [start, len] : groups) {
        if (len == 0) throw data_error("merge_subword_vectors: empty group");
        if (start != cursor || start + len > subword.size())
            throw data_error("merge_subword_vectors: groups must partition positions in order");
        Tensor mean = Tensor::zeros(subword[start].shape);
        for (size_t i = start; i < start + len; ++i) {
            require_same_shape("merge_subword_vectors", subword[start], subword[i]);
            accumulate(mean, subword[i]);
        }
        for (double& x : mean.v) x /= static_cast<double>(len);
        out.push_back(std::move(mean));
        cursor = start + len;
    }
    if (cursor != subword.size())
        throw data_error("merge_subword_vectors: groups do not cover all positions");
    return out;
}

// ---------------------------------------------------------------------------
// Contextual feature container: <base>.bin holds little-endian float32
// arrays, one (layers x positions x dim) block per sentence; <base>.json is
// the manifest mapping sentence index -> byte offset.
// ---------------------------------------------------------------------------

inline void write_feature_container(const ContextualSource& src, const std::string& base_path) {
    std::ofstream bin(base_path + ".bin", std::ios::binary);
    if (!bin) throw data_error("cannot open " + base_path + ".bin for writing");
    nlohmann::json manifest;
    manifest["version"] = 1;
    manifest["name"] = src.name;
    manifest["layers"] = src.layers;
    manifest["dim"] = src.dim;
    manifest["sentences"] = nlohmann::json::array();
    size_t offset = 0;
    for (const auto& layers : src.per_sentence) {
        if (layers.size() != src.layers)
            throw data_error("write_feature_container: layer count mismatch");
        const size_t positions = layers[0].rows();
        for (const auto& layer : layers) {
            for (double x : layer.v) {
                const float f = static_cast<float>(x);
                bin.write(reinterpret_cast<const char*>(&f), sizeof(float));
            }
        }
        manifest["sentences"].push_back(
            {{"offset", offset}, {"positions", positions}});
        offset += src.layers * positions * src.dim * sizeof(float);
    }
    std::ofstream mf(base_path + ".json");
    if (!mf) throw data_error("cannot open " + base_path + ".json for writing");
    mf << manifest.dump(2) << "\n";
}

inline ContextualSource load_feature_container(const std::string& base_path) {
    std::ifstream mf(base_path + ".json");
    if (!mf) throw data_error("cannot open feature manifest " + base_path + ".json");
    nlohmann::json manifest;
    try {
        mf >> manifest;
    } catch (const nlohmann::json::exception& e) {
        throw data_error("malformed feature manifest: " + std::string(e.what()));
    }
    ContextualSource src;
    src.name = manifest.value("name", "contextual");
    src.layers = manifest.at("layers").get<size_t>();
    src.dim = manifest.at("dim").get<size_t>();

    std::ifstream bin(base_path + ".bin", std::ios::binary);
    if (!bin) throw data_error("cannot open feature data " + base_path + ".bin");
    std::vector<char> raw((std::istreambuf_iterator<char>(bin)),
                          std::istreambuf_iterator<char>());
    for (const auto& rec : manifest.at("sentences")) {
        const size_t offset = rec.at("offset").get<size_t>();
        const size_t positions = rec.at("positions").get<size_t>();
        const size_t count = src.layers * positions * src.dim;
        if (offset + count * sizeof(float) > raw.size())
            throw data_error("feature container truncated at offset " + std::to_string(offset));
        std::vector<Tensor> layers;
        const char* p = raw.data() + offset;
        for (size_t k = 0; k < src.layers; ++k) {
            Tensor layer = Tensor::zeros({positions, src.dim});
            for (size_t i = 0; i < positions * src.dim; ++i) {
                float f;
                std::memcpy(&f, p, sizeof(float));
                p += sizeof(float);
                layer.v[i] = static_cast<double>(f); // upcast to 64-bit in memory
            }
            layers.push_back(std::move(layer));
        }
        src.per_sentence.push_back(std::move(layers));
    }
    return src;
}

} // namespace slahan
