#pragma once

#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "regulargpt/model.hpp"

namespace regulargpt {

struct CheckpointMeta {
    std::string task;
    uint64_t seed = 0;
    int64_t step = 0;
};

inline uint32_t crc32(const void* buf, size_t len) {
    static uint32_t table[256];
    static bool init = false;
    if (!init) {
        for (uint32_t i = 0; i < 256; ++i) {
            uint32_t c = i;
            for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xedb88320u ^ (c >> 1) : c >> 1;
            table[i] = c;
        }
        init = true;
    }
    uint32_t c = 0xffffffffu;
    const uint8_t* p = static_cast<const uint8_t*>(buf);
    for (size_t i = 0; i < len; ++i) c = table[(c ^ p[i]) & 0xffu] ^ (c >> 8);
    return c ^ 0xffffffffu;
}

inline nlohmann::json config_to_json(const ModelConfig& c) {
    return {{"chunk", c.chunk},
            {"thickness", c.thickness},
            {"dModel", c.d_model},
            {"nHeads", c.n_heads},
            {"dFFN", c.d_ffn},
            {"vocabSize", c.vocab_size},
            {"maxGroups", c.max_groups},
            {"padSymbol", c.pad_symbol},
            {"kind", c.kind},
            {"vanillaLayers", c.vanilla_layers},
            {"relBuckets", c.rel_buckets}};
}

inline ModelConfig config_from_json(const nlohmann::json& j) {
    ModelConfig c;
    c.chunk = j.at("chunk");
    c.thickness = j.at("thickness");
    c.d_model = j.at("dModel");
    c.n_heads = j.at("nHeads");
    c.d_ffn = j.at("dFFN");
    c.vocab_size = j.at("vocabSize");
    c.max_groups = j.at("maxGroups");
    c.pad_symbol = j.at("padSymbol");
    c.kind = j.at("kind");
    c.vanilla_layers = j.at("vanillaLayers");
    c.rel_buckets = j.at("relBuckets");
    return c;
}

inline std::string basename_of(const std::string& path) {
    size_t p = path.find_last_of('/');
    return p == std::string::npos ? path : path.substr(p + 1);
}

// Manifest JSON at <prefix>.json plus a sibling raw little-endian float32
// payload at <prefix>.bin, parameters concatenated in manifest order.
// save -> load -> save is byte identical.
template <typename T>
void save_checkpoint(Model<T>& model, const CheckpointMeta& meta, const std::string& prefix) {
    std::vector<float> payload;
    nlohmann::json params = nlohmann::json::array();
    for (auto* p : model.params()) {
        nlohmann::json entry;
        entry["name"] = p->name;
        entry["shape"] = p->value.shape;
        entry["offset"] = payload.size() * sizeof(float);
        entry["dtype"] = "f32";
        params.push_back(entry);
        for (T v : p->value.data) payload.push_back(static_cast<float>(v));
    }
    nlohmann::json manifest;
    manifest["format"] = "regulargpt-checkpoint-v1";
    manifest["config"] = config_to_json(model.cfg);
    manifest["task"] = meta.task;
    manifest["seed"] = meta.seed;
    manifest["step"] = meta.step;
    manifest["payload"] = basename_of(prefix) + ".bin";
    manifest["payload_crc32"] = crc32(payload.data(), payload.size() * sizeof(float));
    manifest["params"] = params;

    std::ofstream bin(prefix + ".bin", std::ios::binary);
    if (!bin) throw std::runtime_error("save_checkpoint: cannot write " + prefix + ".bin");
    bin.write(reinterpret_cast<const char*>(payload.data()),
              static_cast<std::streamsize>(payload.size() * sizeof(float)));
    std::ofstream js(prefix + ".json");
    if (!js) throw std::runtime_error("save_checkpoint: cannot write " + prefix + ".json");
    js << manifest.dump(2) << "\n";
}

template <typename T>
std::pair<Model<T>, CheckpointMeta> load_checkpoint(const std::string& prefix) {
    std::ifstream js(prefix + ".json");
    if (!js) throw std::runtime_error("load_checkpoint: cannot open " + prefix + ".json");
    nlohmann::json manifest = nlohmann::json::parse(js);
    if (manifest.at("format") != "regulargpt-checkpoint-v1")
        throw std::runtime_error("load_checkpoint: unknown format " +
                                 manifest.at("format").get<std::string>());
    ModelConfig cfg = config_from_json(manifest.at("config"));

    std::string dir;
    size_t slash = prefix.find_last_of('/');
    if (slash != std::string::npos) dir = prefix.substr(0, slash + 1);
    std::ifstream bin(dir + manifest.at("payload").get<std::string>(), std::ios::binary);
    if (!bin) throw std::runtime_error("load_checkpoint: cannot open payload " +
                                       manifest.at("payload").get<std::string>());
    bin.seekg(0, std::ios::end);
    size_t bytes = static_cast<size_t>(bin.tellg());
    bin.seekg(0);
    std::vector<float> raw(bytes / sizeof(float));
    bin.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(bytes));

    uint32_t crc = crc32(raw.data(), bytes);
    if (crc != manifest.at("payload_crc32").get<uint32_t>())
        throw std::runtime_error("load_checkpoint: payload checksum mismatch");

    Model<T> model(cfg, /*init_seed=*/0);
    auto params = model.params();
    const auto& entries = manifest.at("params");
    if (entries.size() != params.size())
        throw std::runtime_error("load_checkpoint: manifest has " + std::to_string(entries.size()) +
                                 " parameters, model wants " + std::to_string(params.size()));
    for (size_t i = 0; i < params.size(); ++i) {
        const auto& e = entries[i];
        Parameter<T>* p = params[i];
        if (e.at("name").get<std::string>() != p->name)
            throw std::runtime_error("load_checkpoint: parameter order mismatch at '" + p->name + "'");
        std::vector<int64_t> shape = e.at("shape").get<std::vector<int64_t>>();
        if (shape != p->value.shape)
            throw std::runtime_error("load_checkpoint: shape mismatch for parameter '" + p->name + "'");
        size_t offset = e.at("offset").get<size_t>() / sizeof(float);
        size_t count = p->value.data.size();
        if (offset + count > raw.size())
            throw std::runtime_error("load_checkpoint: payload truncated at parameter '" + p->name + "'");
        for (size_t j = 0; j < count; ++j) p->value.data[j] = static_cast<T>(raw[offset + j]);
    }

    CheckpointMeta meta;
    meta.task = manifest.at("task");
    meta.seed = manifest.at("seed");
    meta.step = manifest.at("step");
    return {std::move(model), meta};
}

}  // namespace regulargpt
