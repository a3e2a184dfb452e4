#pragma once

// Record directories: the JSON manifest, whole-directory loading, and the
// conversion from patient records to model-ready examples.

#include <algorithm>
#include <array>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "vcnn/data/record.hpp"
#include "vcnn/error.hpp"
#include "vcnn/io/binary.hpp"
#include "vcnn/nn/spec.hpp"

namespace vcnn {

inline constexpr const char* kManifestFile = "manifest.json";
inline constexpr int kManifestVersion = 1;

struct ManifestEntry {
    std::string file;  // relative to the dataset directory
    std::string subject_id;
    Label label = Label::CN;
};

struct DatasetManifest {
    int version = kManifestVersion;
    std::vector<ManifestEntry> entries;
    std::array<std::size_t, kClassCount> class_counts{};
    std::map<std::string, Dims> modality_dims;

    std::vector<Label> labels() const {
        std::vector<Label> out;
        for (const auto& e : entries) out.push_back(e.label);
        return out;
    }
};

inline nlohmann::json to_json(const DatasetManifest& m) {
    nlohmann::json j;
    j["format_version"] = m.version;
    j["records"] = nlohmann::json::array();
    for (const auto& e : m.entries) {
        j["records"].push_back({{"file", e.file}, {"id", e.subject_id}, {"label", to_string(e.label)}});
    }
    for (std::size_t c = 0; c < kClassCount; ++c) j["class_counts"][kClassNames[c]] = m.class_counts[c];
    j["modality_dims"] = nlohmann::json::object();
    for (const auto& [mod, d] : m.modality_dims) j["modality_dims"][mod] = dims_to_json(d);
    return j;
}

inline DatasetManifest manifest_from_json(const nlohmann::json& j) {
    try {
        DatasetManifest m;
        m.version = j.at("format_version").get<int>();
        if (m.version != kManifestVersion) {
            throw VersionError("unsupported manifest version " + std::to_string(m.version));
        }
        for (const auto& r : j.at("records")) {
            m.entries.push_back({r.at("file").get<std::string>(), r.at("id").get<std::string>(),
                                 parse_label(r.at("label").get<std::string>())});
        }
        for (std::size_t c = 0; c < kClassCount; ++c) {
            m.class_counts[c] = j.at("class_counts").at(kClassNames[c]).get<std::size_t>();
        }
        for (const auto& [mod, d] : j.at("modality_dims").items()) m.modality_dims[mod] = dims_from_json(d);
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("malformed manifest: ") + e.what());
    } catch (const SpecError& e) {
        throw FormatError(std::string("malformed manifest: ") + e.what());
    } catch (const InputError& e) {
        throw FormatError(std::string("malformed manifest: ") + e.what());
    }
}

/// Adds one record to a manifest under construction, enforcing per-modality
/// dimension homogeneity.
inline void manifest_add(DatasetManifest& m, const PatientRecord& r, const std::string& file) {
    m.entries.push_back({file, r.subject_id, r.label});
    ++m.class_counts[static_cast<std::size_t>(r.label)];
    for (const auto& mv : r.volumes) {
        const std::string mod = to_string(mv.modality);
        auto [it, inserted] = m.modality_dims.emplace(mod, mv.volume.dims());
        if (!inserted && it->second != mv.volume.dims()) {
            throw DataError("record '" + r.subject_id + "' " + mod + " dims " + mv.volume.dims().str() +
                            " differ from " + it->second.str());
        }
    }
}

inline std::vector<std::filesystem::path> list_record_files(const std::filesystem::path& dir) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(dir)) throw StorageError("'" + dir.string() + "' is not a directory");
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(dir)) {
        if (e.is_regular_file() && e.path().extension() == kRecordExtension) files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    return files;
}

inline DatasetManifest scan_directory(const std::filesystem::path& dir) {
    DatasetManifest m;
    for (const auto& f : list_record_files(dir)) manifest_add(m, read_record(f), f.filename().string());
    return m;
}

inline void write_manifest(const std::filesystem::path& dir, const DatasetManifest& m) {
    io::write_text_atomic(dir / kManifestFile, to_json(m).dump(2) + "\n");
}

inline DatasetManifest read_manifest(const std::filesystem::path& dir) {
    const auto bytes = io::read_file(dir / kManifestFile);
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(bytes.begin(), bytes.end());
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("cannot parse manifest in '" + dir.string() + "': " + e.what());
    }
    auto m = manifest_from_json(j);
    std::array<std::size_t, kClassCount> counts{};
    for (const auto& e : m.entries) {
        ++counts[static_cast<std::size_t>(e.label)];
        if (!std::filesystem::is_regular_file(dir / e.file)) {
            throw DataError("manifest lists missing record '" + e.file + "'");
        }
    }
    if (counts != m.class_counts) throw DataError("manifest class counts disagree with its record list");
    return m;
}

struct LoadedDataset {
    DatasetManifest manifest;
    std::vector<PatientRecord> records;
};

/// Reads the manifest and every record it lists, cross-checking labels,
/// ids and dims against the manifest.
inline LoadedDataset load_dataset(const std::filesystem::path& dir) {
    LoadedDataset ds;
    ds.manifest = read_manifest(dir);
    for (const auto& e : ds.manifest.entries) {
        PatientRecord r = read_record(dir / e.file);
        if (r.label != e.label || r.subject_id != e.subject_id) {
            throw DataError("record '" + e.file + "' disagrees with the manifest");
        }
        for (const auto& mv : r.volumes) {
            auto it = ds.manifest.modality_dims.find(to_string(mv.modality));
            if (it == ds.manifest.modality_dims.end() || it->second != mv.volume.dims()) {
                throw DataError("record '" + e.file + "' has unexpected " + to_string(mv.modality) + " dims");
            }
        }
        ds.records.push_back(std::move(r));
    }
    return ds;
}

/// Writes records as <dir>/<id>.avr plus the manifest.
inline DatasetManifest write_dataset(const std::filesystem::path& dir, const std::vector<PatientRecord>& records) {
    std::filesystem::create_directories(dir);
    DatasetManifest m;
    for (const auto& r : records) {
        const std::string file = r.subject_id + kRecordExtension;
        manifest_add(m, r, file);
        write_record(r, dir / file);
    }
    write_manifest(dir, m);
    return m;
}

/// Model input tuple (one volume per branch) with its class index.
template <class T>
struct Example {
    std::vector<Volume<T>> inputs;
    std::size_t label = 0;
};

template <class T>
using ExampleSet = std::vector<Example<T>>;

/// Picks, per branch, the volume of the modality the branch declares (or the
/// record's only volume when a single-input spec names no modality).
template <class T = float>
ExampleSet<T> to_examples(const std::vector<PatientRecord>& records, const ModelSpec& spec) {
    ExampleSet<T> out;
    for (const auto& r : records) {
        Example<T> ex;
        ex.label = static_cast<std::size_t>(r.label);
        for (const auto& br : spec.branches) {
            const Volume<float>* v = nullptr;
            if (!br.modality.empty()) {
                v = &r.get(parse_modality(br.modality));
            } else if (r.volumes.size() == 1) {
                v = &r.volumes.front().volume;
            } else {
                throw DataError("branch '" + br.name + "' declares no modality and record '" + r.subject_id +
                                "' holds several volumes");
            }
            if (v->dims() != br.input) {
                throw DataError("record '" + r.subject_id + "' volume " + v->dims().str() +
                                " does not match branch input " + br.input.str());
            }
            ex.inputs.push_back(v->template cast<T>());
        }
        out.push_back(std::move(ex));
    }
    return out;
}

}  // namespace vcnn
