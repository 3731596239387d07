#pragma once

#include <fstream>

#include "slahan/model.hpp"

namespace slahan {

inline constexpr int kCheckpointVersion = 1;

// Single-file checkpoint: one JSON header line (version, config, feature
// hash, tensor directory), then the tensors' raw little-endian doubles in
// directory order.
inline void save_checkpoint(const std::string& path, const ModelConfig& cfg,
                            uint64_t feature_hash, const ParameterStore& store) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw data_error("cannot open checkpoint " + path + " for writing");
    nlohmann::json header;
    header["version"] = kCheckpointVersion;
    header["config"] = cfg.to_json();
    header["feature_hash"] = feature_hash;
    header["tensors"] = nlohmann::json::array();
    for (const auto& [name, e] : store.entries())
        header["tensors"].push_back({{"name", name}, {"shape", e.value.shape}});
    out << header.dump() << "\n";
    for (const auto& [name, e] : store.entries())
        out.write(reinterpret_cast<const char*>(e.value.v.data()),
                  static_cast<std::streamsize>(e.value.v.size() * sizeof(double)));
    if (!out) throw data_error("failed writing checkpoint " + path);
}

struct Checkpoint {
    ModelConfig config;
    uint64_t feature_hash = 0;
    ParameterStore params;
};

inline Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw data_error("cannot open checkpoint " + path);
    std::string header_line;
    if (!std::getline(in, header_line)) throw data_error("checkpoint has no header: " + path);
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(header_line);
    } catch (const nlohmann::json::exception& e) {
        throw data_error("malformed checkpoint header: " + std::string(e.what()));
    }
    if (header.value("version", -1) != kCheckpointVersion)
        throw data_error("unsupported checkpoint version in " + path);
    Checkpoint ckpt;
    try {
        ckpt.config = ModelConfig::from_json(header.at("config"));
    } catch (const std::exception& e) {
        throw data_error("invalid checkpoint config: " + std::string(e.what()));
    }
    ckpt.feature_hash = header.value("feature_hash", uint64_t{0});
    for (const auto& rec : header.at("tensors")) {
        const std::string name = rec.at("name").get<std::string>();
        Tensor t = Tensor::zeros(rec.at("shape").get<std::vector<size_t>>());
        in.read(reinterpret_cast<char*>(t.v.data()),
                static_cast<std::streamsize>(t.v.size() * sizeof(double)));
        if (!in) throw data_error("checkpoint truncated while reading tensor " + name);
        ckpt.params.create(name, std::move(t));
    }
    return ckpt;
}

// Rebuild a model from a checkpoint, verifying the stored tensors cover
// exactly what the config requires with the right shapes.
inline SlahanModel model_from_checkpoint(Checkpoint ckpt) {
    SlahanModel model(ckpt.config);
    model.init_parameters(0); // establishes the expected parameter directory
    auto& dst = model.params().entries();
    auto& src = ckpt.params.entries();
    if (dst.size() != src.size())
        throw data_error("checkpoint parameters do not match its config");
    for (auto& [name, e] : dst) {
        auto it = src.find(name);
        if (it == src.end() || !it->second.value.same_shape(e.value))
            throw data_error("checkpoint tensor mismatch for " + name);
        e.value = std::move(it->second.value);
    }
    return model;
}

} // namespace slahan
