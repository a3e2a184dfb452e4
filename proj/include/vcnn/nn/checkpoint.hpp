#pragma once

// Model checkpoints share the record container conventions: a magic, a
// version, a JSON parameter manifest (name, shape, trainable flag, CRC), then
// each tensor as little-endian f32 followed by its CRC-32.

#include <array>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "vcnn/error.hpp"
#include "vcnn/io/binary.hpp"
#include "vcnn/nn/model.hpp"

namespace vcnn {

inline constexpr std::array<char, 4> kCheckpointMagic{'V', 'C', 'K', '1'};
inline constexpr std::uint16_t kCheckpointVersion = 1;

namespace detail {

template <class T>
std::vector<float> as_f32(const std::vector<T>& v) {
    return std::vector<float>(v.begin(), v.end());
}

}  // namespace detail

template <class T>
std::vector<std::uint8_t> encode_checkpoint(const Model<T>& model, const nlohmann::json& extra = {}) {
    nlohmann::json manifest;
    manifest["spec"] = to_json(model.spec());
    manifest["params"] = nlohmann::json::array();
    manifest["state"] = nlohmann::json::array();
    std::vector<std::vector<float>> payloads;
    for (auto* p : model.parameters()) {
        payloads.push_back(detail::as_f32(p->value));
        manifest["params"].push_back({{"name", p->name},
                                      {"role", to_string(p->role)},
                                      {"shape", p->shape},
                                      {"trainable", p->trainable},
                                      {"l2", p->l2},
                                      {"crc", io::crc32(payloads.back())}});
    }
    for (auto* s : model.state()) {
        payloads.push_back(detail::as_f32(s->value));
        manifest["state"].push_back(
            {{"name", s->name}, {"size", s->value.size()}, {"crc", io::crc32(payloads.back())}});
    }
    if (!extra.is_null()) manifest["meta"] = extra;
    const std::string text = manifest.dump();

    io::Writer w;
    for (char ch : kCheckpointMagic) w.u8(static_cast<std::uint8_t>(ch));
    w.u16(kCheckpointVersion);
    w.u32(static_cast<std::uint32_t>(text.size()));
    w.str(text);
    for (const auto& p : payloads) {
        w.floats(p);
        w.u32(io::crc32(p));
    }
    return w.buffer();
}

template <class T = float>
Model<T> decode_checkpoint(std::span<const std::uint8_t> bytes, const std::string& where = "checkpoint",
                           nlohmann::json* manifest_out = nullptr) {
    if (bytes.empty()) throw TruncationError(where + ": empty file");
    io::Reader r(bytes);
    for (char ch : kCheckpointMagic) {
        if (r.remaining() == 0) throw TruncationError(where + ": truncated magic");
        if (r.u8() != static_cast<std::uint8_t>(ch)) throw FormatError(where + ": not a checkpoint (bad magic)");
    }
    const auto version = r.u16();
    if (version != kCheckpointVersion) {
        throw VersionError(where + ": unsupported checkpoint version " + std::to_string(version));
    }
    nlohmann::json manifest;
    try {
        manifest = nlohmann::json::parse(r.str(r.u32()));
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(where + ": malformed manifest: " + e.what());
    }
    ModelSpec spec;
    try {
        spec = model_spec_from_json(manifest.at("spec"));
    } catch (const SpecError& e) {
        throw FormatError(where + ": " + e.what());
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(where + ": " + e.what());
    }
    Model<T> model(spec);
    model.initialize(0);

    auto read_tensor = [&](const nlohmann::json& entry, std::vector<T>& dst, const std::string& name) {
        std::vector<float> v = r.floats(dst.size());
        const std::uint32_t stored = r.u32();
        const std::uint32_t actual = io::crc32(v);
        if (actual != stored || entry.at("crc").get<std::uint32_t>() != actual) {
            throw ChecksumError(where + ": CRC mismatch in tensor '" + name + "'");
        }
        std::copy(v.begin(), v.end(), dst.begin());
    };
    try {
        const auto& ps = manifest.at("params");
        if (ps.size() != model.parameters().size()) throw FormatError(where + ": parameter count mismatch");
        for (std::size_t i = 0; i < ps.size(); ++i) {
            auto* p = model.parameters()[i];
            if (ps[i].at("name").get<std::string>() != p->name ||
                ps[i].at("shape").get<std::vector<std::size_t>>() != p->shape) {
                throw FormatError(where + ": tensor '" + p->name + "' does not match the stored layout");
            }
            read_tensor(ps[i], p->value, p->name);
            p->trainable = ps[i].at("trainable").get<bool>();
        }
        const auto& st = manifest.at("state");
        if (st.size() != model.state().size()) throw FormatError(where + ": state count mismatch");
        for (std::size_t i = 0; i < st.size(); ++i) {
            auto* s = model.state()[i];
            if (st[i].at("name").get<std::string>() != s->name ||
                st[i].at("size").get<std::size_t>() != s->value.size()) {
                throw FormatError(where + ": state '" + s->name + "' does not match the stored layout");
            }
            read_tensor(st[i], s->value, s->name);
        }
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(where + ": " + e.what());
    }
    if (r.remaining() != 0) throw FormatError(where + ": trailing bytes");
    if (manifest_out) *manifest_out = std::move(manifest);
    return model;
}

template <class T>
void save_checkpoint(const Model<T>& model, const std::filesystem::path& path, const nlohmann::json& extra = {}) {
    io::write_file_atomic(path, encode_checkpoint(model, extra));
}

template <class T = float>
Model<T> load_checkpoint(const std::filesystem::path& path, nlohmann::json* manifest_out = nullptr) {
    return decode_checkpoint<T>(io::read_file(path), path.string(), manifest_out);
}

}  // namespace vcnn
