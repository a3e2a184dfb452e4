#pragma once

// One file per patient: the paired modality volumes and the label travel
// together, so reshuffling can never mix subjects across modalities.
//
// Layout (little-endian):
//   "AVR1" | u16 version | u8 label | u16 id_len | id bytes | u8 n_volumes
//   per volume: u8 modality | 4 x u32 dims (x, y, z, c) | u8 dtype (0 = f32)
//               | payload (x*y*z*c floats, channel fastest) | u32 CRC-32 of payload

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "vcnn/error.hpp"
#include "vcnn/io/binary.hpp"
#include "vcnn/volume.hpp"

namespace vcnn {

enum class Label : std::uint8_t { CN = 0, AD = 1, MCI = 2 };
inline constexpr std::size_t kClassCount = 3;
inline constexpr std::array<const char*, kClassCount> kClassNames{"CN", "AD", "MCI"};

inline const char* to_string(Label l) { return kClassNames.at(static_cast<std::size_t>(l)); }

inline Label label_from_index(std::size_t i) {
    if (i >= kClassCount) throw InputError("unknown class index " + std::to_string(i));
    return static_cast<Label>(i);
}

inline Label parse_label(const std::string& s) {
    for (std::size_t i = 0; i < kClassCount; ++i) {
        if (s == kClassNames[i]) return static_cast<Label>(i);
    }
    throw InputError("unknown class label '" + s + "'");
}

enum class Modality : std::uint8_t { PET = 0, MRI = 1, OTHER = 2 };

inline const char* to_string(Modality m) {
    switch (m) {
        case Modality::PET: return "PET";
        case Modality::MRI: return "MRI";
        case Modality::OTHER: return "OTHER";
    }
    return "?";
}

inline Modality parse_modality(const std::string& s) {
    if (s == "PET" || s == "pet") return Modality::PET;
    if (s == "MRI" || s == "mri") return Modality::MRI;
    if (s == "OTHER" || s == "other") return Modality::OTHER;
    throw InputError("unknown modality '" + s + "'");
}

struct ModalityVolume {
    Modality modality = Modality::OTHER;
    Volume<float> volume;
};

struct PatientRecord {
    std::string subject_id;
    Label label = Label::CN;
    std::vector<ModalityVolume> volumes;

    const Volume<float>* find(Modality m) const {
        for (const auto& v : volumes) {
            if (v.modality == m) return &v.volume;
        }
        return nullptr;
    }

    const Volume<float>& get(Modality m) const {
        if (const auto* v = find(m)) return *v;
        throw DataError("record '" + subject_id + "' has no " + to_string(m) + " volume");
    }

    void validate() const {
        if (subject_id.empty()) throw InputError("record subject id must be non-empty");
        if (subject_id.size() > 0xFFFF) throw InputError("record subject id too long");
        if (volumes.empty()) throw InputError("record '" + subject_id + "' holds no volumes");
        if (volumes.size() > 0xFF) throw InputError("record '" + subject_id + "' holds too many volumes");
        for (std::size_t i = 0; i < volumes.size(); ++i) {
            for (std::size_t j = i + 1; j < volumes.size(); ++j) {
                if (volumes[i].modality == volumes[j].modality) {
                    throw InputError("record '" + subject_id + "' repeats modality " +
                                     to_string(volumes[i].modality));
                }
            }
        }
        if (static_cast<std::size_t>(label) >= kClassCount) throw InputError("record label out of range");
    }

    friend bool operator==(const PatientRecord& a, const PatientRecord& b) {
        if (a.subject_id != b.subject_id || a.label != b.label || a.volumes.size() != b.volumes.size()) {
            return false;
        }
        for (std::size_t i = 0; i < a.volumes.size(); ++i) {
            if (a.volumes[i].modality != b.volumes[i].modality) return false;
            if (!(a.volumes[i].volume == b.volumes[i].volume)) return false;
        }
        return true;
    }
};

inline constexpr std::array<char, 4> kRecordMagic{'A', 'V', 'R', '1'};
inline constexpr std::uint16_t kRecordVersion = 1;
inline constexpr std::uint8_t kDtypeF32 = 0;
inline constexpr const char* kRecordExtension = ".avr";

inline std::vector<std::uint8_t> encode_record(const PatientRecord& r) {
    r.validate();
    io::Writer w;
    for (char ch : kRecordMagic) w.u8(static_cast<std::uint8_t>(ch));
    w.u16(kRecordVersion);
    w.u8(static_cast<std::uint8_t>(r.label));
    w.u16(static_cast<std::uint16_t>(r.subject_id.size()));
    w.str(r.subject_id);
    w.u8(static_cast<std::uint8_t>(r.volumes.size()));
    for (const auto& mv : r.volumes) {
        const Dims d = mv.volume.dims();
        for (std::size_t e : {d.x, d.y, d.z, d.c}) {
            if (e > 0xFFFFFFFFull) throw InputError("volume extent does not fit u32");
        }
        w.u8(static_cast<std::uint8_t>(mv.modality));
        w.u32(static_cast<std::uint32_t>(d.x));
        w.u32(static_cast<std::uint32_t>(d.y));
        w.u32(static_cast<std::uint32_t>(d.z));
        w.u32(static_cast<std::uint32_t>(d.c));
        w.u8(kDtypeF32);
        w.floats(mv.volume.data());
        w.u32(io::crc32(mv.volume.data()));
    }
    return w.buffer();
}

inline PatientRecord decode_record(std::span<const std::uint8_t> bytes, const std::string& where = "record") {
    if (bytes.empty()) throw TruncationError(where + ": empty file");
    io::Reader r(bytes);
    for (char ch : kRecordMagic) {
        if (r.remaining() == 0) throw TruncationError(where + ": truncated magic");
        if (r.u8() != static_cast<std::uint8_t>(ch)) throw FormatError(where + ": bad magic");
    }
    const auto version = r.u16();
    if (version != kRecordVersion) {
        throw VersionError(where + ": unsupported version " + std::to_string(version));
    }
    PatientRecord rec;
    const auto label = r.u8();
    if (label >= kClassCount) throw FormatError(where + ": label byte " + std::to_string(label));
    rec.label = static_cast<Label>(label);
    rec.subject_id = r.str(r.u16());
    if (rec.subject_id.empty()) throw FormatError(where + ": empty subject id");
    const auto n = r.u8();
    if (n == 0) throw FormatError(where + ": record holds no volumes");
    for (std::size_t i = 0; i < n; ++i) {
        const auto mod = r.u8();
        if (mod > static_cast<std::uint8_t>(Modality::OTHER)) {
            throw FormatError(where + ": modality byte " + std::to_string(mod));
        }
        Dims d;
        d.x = r.u32();
        d.y = r.u32();
        d.z = r.u32();
        d.c = r.u32();
        if (d.x == 0 || d.y == 0 || d.z == 0 || d.c == 0) throw FormatError(where + ": zero extent");
        const auto dtype = r.u8();
        if (dtype != kDtypeF32) throw FormatError(where + ": unsupported dtype " + std::to_string(dtype));
        std::vector<float> payload = r.floats(d.size());
        const std::uint32_t stored = r.u32();
        if (io::crc32(payload) != stored) {
            throw ChecksumError(where + ": CRC mismatch in " + to_string(static_cast<Modality>(mod)) +
                                " payload");
        }
        rec.volumes.push_back({static_cast<Modality>(mod), Volume<float>(d, std::move(payload))});
    }
    if (r.remaining() != 0) throw FormatError(where + ": trailing bytes after last volume");
    try {
        rec.validate();
    } catch (const InputError& e) {
        throw FormatError(where + ": " + e.what());
    }
    return rec;
}

inline void write_record(const PatientRecord& r, const std::filesystem::path& path) {
    io::write_file_atomic(path, encode_record(r));
}

inline PatientRecord read_record(const std::filesystem::path& path) {
    return decode_record(io::read_file(path), path.string());
}

}  // namespace vcnn
