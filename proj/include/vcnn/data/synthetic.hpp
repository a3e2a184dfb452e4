#pragma once

// Registered pseudo-PET / pseudo-MRI subjects with a class-dependent blob.
// Every class shares the smooth background; the blob location and amplitude
// identify the class, with per-subject jitter and voxel noise on top.

#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <numbers>
#include <string>
#include <vector>

#include "vcnn/data/dataset.hpp"
#include "vcnn/data/record.hpp"
#include "vcnn/error.hpp"
#include "vcnn/rng.hpp"

namespace vcnn {

struct SyntheticConfig {
    std::size_t per_class = 40;
    Dims dims{16, 16, 16, 1};
    double signal_strength = 1.0;
    double noise_sigma = 0.1;
    std::uint64_t seed = 7;
    bool with_pet = true;
    bool with_mri = true;
};

namespace detail {

struct ClassPattern {
    std::array<double, 3> center;  // fraction of each extent
    double amplitude;
};

inline constexpr std::array<ClassPattern, kClassCount> kPatterns{{
    {{0.30, 0.35, 0.50}, 1.00},  // CN
    {{0.70, 0.35, 0.50}, 1.30},  // AD
    {{0.50, 0.70, 0.45}, 0.75},  // MCI
}};

struct SubjectDraw {
    std::array<double, 3> center;
    double amplitude;
    double width;
    std::array<double, 3> phase;
};

inline Volume<float> render(const Dims& d, const SubjectDraw& s, double width_frac, double sharpness,
                            double baseline, double noise_sigma, Rng& noise) {
    Volume<float> v(d);
    const double min_extent = double(std::min({d.x, d.y, d.z}));
    const double w = width_frac * min_extent * s.width;
    const double two_pi = 2.0 * std::numbers::pi;
    for (std::size_t x = 0; x < d.x; ++x) {
        for (std::size_t y = 0; y < d.y; ++y) {
            for (std::size_t z = 0; z < d.z; ++z) {
                const double fx = double(x) / double(d.x);
                const double fy = double(y) / double(d.y);
                const double fz = double(z) / double(d.z);
                const double background =
                    baseline + 0.15 * std::sin(two_pi * fx + s.phase[0]) * std::cos(two_pi * fy + s.phase[1]) +
                    0.10 * std::sin(two_pi * fz + s.phase[2]);
                const double dx = (double(x) - s.center[0]) / w;
                const double dy = (double(y) - s.center[1]) / w;
                const double dz = (double(z) - s.center[2]) / w;
                const double r2 = dx * dx + dy * dy + dz * dz;
                const double blob = s.amplitude * std::exp(-0.5 * std::pow(r2, sharpness));
                for (std::size_t c = 0; c < d.c; ++c) {
                    v(x, y, z, c) = static_cast<float>(background + blob + noise_sigma * noise.normal());
                }
            }
        }
    }
    return v;
}

}  // namespace detail

inline std::vector<PatientRecord> generate_synthetic(const SyntheticConfig& cfg) {
    if (cfg.per_class < 1) throw InputError("per_class must be >= 1");
    if (cfg.dims.x < 8 || cfg.dims.y < 8 || cfg.dims.z < 8) {
        throw InputError("synthetic dims must be >= 8 per axis, got " + cfg.dims.str());
    }
    if (!cfg.with_pet && !cfg.with_mri) throw InputError("synthetic data needs at least one modality");
    if (cfg.noise_sigma < 0.0) throw InputError("noise sigma must be >= 0");

    std::vector<PatientRecord> out;
    const Dims d = cfg.dims;
    const std::array<double, 3> extent{double(d.x), double(d.y), double(d.z)};
    for (std::size_t cls = 0; cls < kClassCount; ++cls) {
        const auto& pat = detail::kPatterns[cls];
        for (std::size_t i = 0; i < cfg.per_class; ++i) {
            Rng rng = Rng::substream(cfg.seed, "synthetic", cls, i);
            detail::SubjectDraw s;
            for (int a = 0; a < 3; ++a) {
                s.center[a] = pat.center[a] * (extent[a] - 1.0) + rng.uniform(-0.06, 0.06) * extent[a];
                s.phase[a] = rng.uniform(0.0, 2.0 * std::numbers::pi);
            }
            s.amplitude = cfg.signal_strength * pat.amplitude * rng.uniform(0.9, 1.1);
            s.width = rng.uniform(0.9, 1.1);

            char id[32];
            std::snprintf(id, sizeof id, "%s_%04zu", kClassNames[cls], i);
            PatientRecord r;
            r.subject_id = id;
            r.label = label_from_index(cls);
            Rng pet_noise = Rng::substream(cfg.seed, "synthetic_noise_pet", cls, i);
            Rng mri_noise = Rng::substream(cfg.seed, "synthetic_noise_mri", cls, i);
            if (cfg.with_pet) {
                r.volumes.push_back({Modality::PET, detail::render(d, s, 0.16, 1.0, 0.2, cfg.noise_sigma, pet_noise)});
            }
            if (cfg.with_mri) {
                r.volumes.push_back({Modality::MRI, detail::render(d, s, 0.10, 3.0, 0.4, cfg.noise_sigma, mri_noise)});
            }
            out.push_back(std::move(r));
        }
    }
    return out;
}

inline DatasetManifest gen_synthetic(const std::filesystem::path& dir, const SyntheticConfig& cfg) {
    return write_dataset(dir, generate_synthetic(cfg));
}

}  // namespace vcnn
