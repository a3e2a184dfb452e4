#pragma once

// Random 3D augmentation: flip, then rotation, zoom and shift composed into
// one matrix and resampled once. Draws come from substreams of a per-sample
// seed, so the output is a pure function of (volume, config, seed).

#include <array>
#include <string>

#include <nlohmann/json.hpp>

#include "vcnn/augment/affine.hpp"
#include "vcnn/error.hpp"
#include "vcnn/rng.hpp"
#include "vcnn/volume.hpp"

namespace vcnn {

struct AugmentConfig {
    double max_rotation_deg = 0.0;
    double zoom_min = 1.0;
    double zoom_max = 1.0;
    std::array<bool, 3> flip{false, false, false};
    double max_shift_frac = 0.0;
    double fill_value = 0.0;

    void validate() const {
        if (!(max_rotation_deg >= 0.0)) throw InputError("max_rotation_deg must be >= 0");
        if (!(zoom_min > 0.0 && zoom_min <= zoom_max)) throw InputError("zoom bounds need 0 < min <= max");
        if (!(max_shift_frac >= 0.0 && max_shift_frac < 1.0)) throw InputError("max_shift_frac must lie in [0, 1)");
    }

    bool is_identity() const noexcept {
        return max_rotation_deg == 0.0 && zoom_min == 1.0 && zoom_max == 1.0 && !flip[0] && !flip[1] &&
               !flip[2] && max_shift_frac == 0.0;
    }

    /// Rotation up to 0.5 degrees and shifts up to 2%; no zoom or flips.
    static AugmentConfig pet() {
        AugmentConfig c;
        c.max_rotation_deg = 0.5;
        c.max_shift_frac = 0.02;
        return c;
    }
    static AugmentConfig mri() {
        AugmentConfig c;
        c.max_rotation_deg = 0.5;
        c.zoom_min = 0.95;
        c.zoom_max = 1.05;
        c.max_shift_frac = 0.02;
        return c;
    }
};

inline nlohmann::json to_json(const AugmentConfig& c) {
    return {{"max_rotation_deg", c.max_rotation_deg}, {"zoom_min", c.zoom_min},      {"zoom_max", c.zoom_max},
            {"flip", c.flip},                         {"max_shift_frac", c.max_shift_frac},
            {"fill_value", c.fill_value}};
}

inline AugmentConfig augment_config_from_json(const nlohmann::json& j) {
    AugmentConfig c;
    try {
        c.max_rotation_deg = j.value("max_rotation_deg", 0.0);
        c.zoom_min = j.value("zoom_min", 1.0);
        c.zoom_max = j.value("zoom_max", 1.0);
        if (j.contains("flip")) {
            const auto& f = j.at("flip");
            if (f.is_boolean()) {
                c.flip.fill(f.get<bool>());
            } else {
                if (f.size() != 3) throw InputError("\"flip\" needs three booleans");
                for (int a = 0; a < 3; ++a) c.flip[a] = f[a].get<bool>();
            }
        }
        c.max_shift_frac = j.value("max_shift_frac", 0.0);
        c.fill_value = j.value("fill_value", 0.0);
    } catch (const nlohmann::json::exception& e) {
        throw InputError(std::string("malformed augment block: ") + e.what());
    }
    c.validate();
    return c;
}

// Draws ---------------------------------------------------------------------

struct RotationDraw {
    int axis = 2;
    double degrees = 0.0;
};

inline RotationDraw draw_rotation(double max_deg, Rng& rng) {
    RotationDraw d;
    d.axis = static_cast<int>(rng.below(3));
    d.degrees = rng.uniform(-max_deg, max_deg);
    return d;
}

inline double draw_zoom(double zmin, double zmax, Rng& rng) {
    return zmin == zmax ? zmin : rng.uniform(zmin, zmax);
}

struct ShiftDraw {
    int axis = 0;
    double voxels = 0.0;
};

inline ShiftDraw draw_shift(double max_frac, const Dims& d, Rng& rng) {
    ShiftDraw s;
    s.axis = static_cast<int>(rng.below(3));
    const double limit = max_frac * double(d.axis(s.axis));
    s.voxels = rng.uniform(-limit, limit);
    return s;
}

inline Affine4 shift_matrix(const ShiftDraw& s) {
    std::array<double, 3> t{0, 0, 0};
    t[s.axis] = s.voxels;
    return Affine4::translation(t[0], t[1], t[2]);
}

// Individual transforms -------------------------------------------------------

template <class T>
Volume<T> random_rotation(const Volume<T>& vol, double max_deg, Rng& rng, T fill = T{0}) {
    if (max_deg < 0) throw InputError("max_deg must be >= 0");
    if (max_deg == 0) return vol;
    const auto d = draw_rotation(max_deg, rng);
    return affine_resample(vol, Affine4::rotation(d.axis, d.degrees), fill);
}

template <class T>
Volume<T> random_zoom(const Volume<T>& vol, double zmin, double zmax, Rng& rng, T fill = T{0}) {
    if (!(zmin > 0 && zmin <= zmax)) throw InputError("zoom bounds need 0 < min <= max");
    const double f = draw_zoom(zmin, zmax, rng);
    return affine_resample(vol, Affine4::scaling(f, f, f), fill);
}

template <class T>
Volume<T> random_flip(const Volume<T>& vol, const std::array<bool, 3>& axes, Rng& rng) {
    Volume<T> out = vol;
    for (int a = 0; a < 3; ++a) {
        if (axes[a] && rng.coin()) out = flip_axis(out, a);
    }
    return out;
}

template <class T>
Volume<T> random_shift(const Volume<T>& vol, double max_frac, Rng& rng, T fill = T{0}) {
    if (!(max_frac >= 0 && max_frac < 1)) throw InputError("max_frac must lie in [0, 1)");
    if (max_frac == 0) return vol;
    return affine_resample(vol, shift_matrix(draw_shift(max_frac, vol.dims(), rng)), fill);
}

/// The matrix that augment() resamples with, for a given seed.
inline Affine4 augment_matrix(const AugmentConfig& cfg, const Dims& dims, std::uint64_t sample_seed) {
    Affine4 m = Affine4::identity();
    if (cfg.max_rotation_deg > 0) {
        Rng rng = Rng::substream(sample_seed, "augment_rotation");
        const auto r = draw_rotation(cfg.max_rotation_deg, rng);
        m = Affine4::rotation(r.axis, r.degrees);
    }
    if (cfg.zoom_min != 1.0 || cfg.zoom_max != 1.0) {
        Rng rng = Rng::substream(sample_seed, "augment_zoom");
        const double f = draw_zoom(cfg.zoom_min, cfg.zoom_max, rng);
        m = Affine4::scaling(f, f, f) * m;
    }
    if (cfg.max_shift_frac > 0) {
        Rng rng = Rng::substream(sample_seed, "augment_shift");
        m = shift_matrix(draw_shift(cfg.max_shift_frac, dims, rng)) * m;
    }
    return m;
}

template <class T>
Volume<T> augment(const Volume<T>& vol, const AugmentConfig& cfg, std::uint64_t sample_seed) {
    cfg.validate();
    if (cfg.is_identity()) return vol;
    Rng flip_rng = Rng::substream(sample_seed, "augment_flip");
    Volume<T> out = random_flip(vol, cfg.flip, flip_rng);
    const Affine4 m = augment_matrix(cfg, vol.dims(), sample_seed);
    if (m.is_identity()) return out;
    return affine_resample(out, m, static_cast<T>(cfg.fill_value));
}

}  // namespace vcnn
