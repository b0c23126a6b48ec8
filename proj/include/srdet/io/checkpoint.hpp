#pragma once

#include <bit>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>

#include <json.hpp>

#include "srdet/core/param_store.hpp"

namespace srdet {

/// Single-file checkpoint container: an 8-byte magic, a length-prefixed
/// JSON manifest (version, config snapshot, epoch, metrics, array table),
/// then the raw little-endian float32 arrays in manifest order. Arrays are
/// listed by sorted name, so save -> load -> save is byte-identical.
struct CheckpointMeta {
    int version = 1;
    int epoch = 0;
    std::string config_snapshot; // canonical config text
    nlohmann::json metrics = nlohmann::json::object();
};

struct Checkpoint {
    CheckpointMeta meta;
    ParameterStore<float> params;
    std::map<std::string, TensorF> extra; // optimizer state and similar
};

namespace detail {

inline constexpr char kCheckpointMagic[8] = {'S', 'R', 'D', 'E', 'T', 'C', 'K', '1'};

static_assert(std::endian::native == std::endian::little,
              "checkpoint container assumes a little-endian host");

inline void write_u64(std::ostream& out, std::uint64_t v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

} // namespace detail

inline void save_checkpoint(const std::filesystem::path& path, const ParameterStore<float>& params,
                            const CheckpointMeta& meta,
                            const std::map<std::string, TensorF>& extra = {}) {
    nlohmann::json manifest;
    manifest["version"] = meta.version;
    manifest["epoch"] = meta.epoch;
    manifest["config"] = meta.config_snapshot;
    manifest["metrics"] = meta.metrics;

    nlohmann::json arrays = nlohmann::json::array();
    std::uint64_t offset = 0;
    auto add_entry = [&](const std::string& name, const TensorF& t, const char* kind) {
        nlohmann::json e;
        e["name"] = name;
        e["kind"] = kind;
        e["dtype"] = "f32";
        e["shape"] = {t.shape().c, t.shape().h, t.shape().w};
        e["offset"] = offset;
        e["count"] = t.size();
        arrays.push_back(e);
        offset += t.size() * sizeof(float);
    };
    for (const auto& [name, entry] : params) add_entry(name, entry.value, "param");
    for (const auto& [name, tensor] : extra) add_entry(name, tensor, "extra");
    manifest["arrays"] = arrays;

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write checkpoint: " + path.string());
    out.write(detail::kCheckpointMagic, sizeof(detail::kCheckpointMagic));
    const std::string json_text = manifest.dump();
    detail::write_u64(out, json_text.size());
    out.write(json_text.data(), static_cast<std::streamsize>(json_text.size()));
    for (const auto& [name, entry] : params)
        out.write(reinterpret_cast<const char*>(entry.value.data()),
                  static_cast<std::streamsize>(entry.value.size() * sizeof(float)));
    for (const auto& [name, tensor] : extra)
        out.write(reinterpret_cast<const char*>(tensor.data()),
                  static_cast<std::streamsize>(tensor.size() * sizeof(float)));
    if (!out) throw IoError("checkpoint write failed: " + path.string());
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint: " + path.string());
    char magic[8];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, detail::kCheckpointMagic, sizeof(magic)) != 0)
        throw IoError("not a checkpoint file: " + path.string());
    std::uint64_t json_len = 0;
    in.read(reinterpret_cast<char*>(&json_len), sizeof(json_len));
    std::string json_text(json_len, '\0');
    in.read(json_text.data(), static_cast<std::streamsize>(json_len));
    if (!in) throw IoError("truncated checkpoint manifest: " + path.string());

    nlohmann::json manifest;
    try {
        manifest = nlohmann::json::parse(json_text);
    } catch (const nlohmann::json::exception& e) {
        throw IoError("corrupt checkpoint manifest: " + std::string(e.what()));
    }

    Checkpoint ck;
    ck.meta.version = manifest.at("version").get<int>();
    ck.meta.epoch = manifest.at("epoch").get<int>();
    ck.meta.config_snapshot = manifest.at("config").get<std::string>();
    ck.meta.metrics = manifest.value("metrics", nlohmann::json::object());

    for (const auto& e : manifest.at("arrays")) {
        const std::string name = e.at("name").get<std::string>();
        const auto shape = e.at("shape");
        TensorF t(Shape{shape.at(0).get<int>(), shape.at(1).get<int>(), shape.at(2).get<int>()});
        if (t.size() != e.at("count").get<std::uint64_t>())
            throw IoError("checkpoint array size mismatch for " + name);
        in.read(reinterpret_cast<char*>(t.data()),
                static_cast<std::streamsize>(t.size() * sizeof(float)));
        if (!in) throw IoError("truncated checkpoint data for " + name);
        if (e.at("kind").get<std::string>() == "param") ck.params.add(name, std::move(t));
        else ck.extra[name] = std::move(t);
    }
    return ck;
}

} // namespace srdet
