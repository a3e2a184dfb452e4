#pragma once

// Intensity normalizations, clamping, anti-aliased resizing, and JSON op
// chains of them. Statistics are accumulated in double.

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "vcnn/error.hpp"
#include "vcnn/nn/spec.hpp"
#include "vcnn/volume.hpp"

namespace vcnn {

inline constexpr double kImaxTopFraction = 0.01;

/// Mean of the ceil(top_frac * N) largest values, N counting every channel.
template <class T>
double imax_value(const Volume<T>& vol, double top_frac = kImaxTopFraction) {
    if (!(top_frac > 0.0 && top_frac <= 1.0)) throw InputError("top fraction must lie in (0, 1]");
    std::vector<T> v(vol.data().begin(), vol.data().end());
    std::sort(v.begin(), v.end(), std::greater<T>());
    const auto k = static_cast<std::size_t>(
        std::max(1.0, std::ceil(top_frac * double(v.size()) - 1e-9)));
    double sum = 0.0;
    for (std::size_t i = 0; i < k; ++i) sum += double(v[i]);
    return sum / double(k);
}

template <class T>
Volume<T> imax_normalize(const Volume<T>& vol, double top_frac = kImaxTopFraction) {
    const double imax = imax_value(vol, top_frac);
    if (!(imax > 0.0)) throw DataError("I_max must be positive, got " + std::to_string(imax));
    Volume<T> out = vol;
    for (auto& e : out.data()) e = static_cast<T>(double(e) / imax);
    return out;
}

template <class T>
std::pair<double, double> mean_and_std(const Volume<T>& vol) {
    double sum = 0.0;
    for (T e : vol.data()) sum += double(e);
    const double mean = sum / double(vol.size());
    double sq = 0.0;
    for (T e : vol.data()) sq += (double(e) - mean) * (double(e) - mean);
    return {mean, std::sqrt(sq / double(vol.size()))};
}

/// (x - mean) / std with the population standard deviation.
template <class T>
Volume<T> standardize(const Volume<T>& vol) {
    const auto [mean, sd] = mean_and_std(vol);
    if (!(sd > 0.0)) throw DataError("cannot standardize a constant volume");
    Volume<T> out = vol;
    for (auto& e : out.data()) e = static_cast<T>((double(e) - mean) / sd);
    return out;
}

template <class T>
Volume<T> minmax(const Volume<T>& vol) {
    const auto [lo_it, hi_it] = std::minmax_element(vol.data().begin(), vol.data().end());
    const double lo = double(*lo_it);
    const double hi = double(*hi_it);
    if (!(hi > lo)) throw DataError("cannot min-max normalize a constant volume");
    Volume<T> out = vol;
    for (auto& e : out.data()) {
        if (double(e) == lo) {
            e = T{0};
        } else if (double(e) == hi) {
            e = T{1};
        } else {
            e = static_cast<T>((double(e) - lo) / (hi - lo));
        }
    }
    return out;
}

template <class T>
Volume<T> clamp(const Volume<T>& vol, double lo, double hi) {
    if (!(lo < hi)) throw InputError("clamp needs lo < hi");
    Volume<T> out = vol;
    for (auto& e : out.data()) {
        if (double(e) < lo) {
            e = static_cast<T>(lo);
        } else if (double(e) > hi) {
            e = static_cast<T>(hi);
        }
    }
    return out;
}

namespace detail {

inline std::vector<double> gaussian_taps(double sigma) {
    const auto radius = static_cast<std::ptrdiff_t>(std::ceil(4.0 * sigma));
    std::vector<double> w(2 * radius + 1);
    double sum = 0.0;
    for (std::ptrdiff_t i = -radius; i <= radius; ++i) {
        w[i + radius] = std::exp(-0.5 * double(i * i) / (sigma * sigma));
        sum += w[i + radius];
    }
    for (auto& e : w) e /= sum;
    return w;
}

/// Half-sample symmetric boundary: ... c b a | a b c ... | z y x ...
inline std::size_t reflect_index(std::ptrdiff_t i, std::size_t n) {
    const auto period = static_cast<std::ptrdiff_t>(2 * n);
    i %= period;
    if (i < 0) i += period;
    return static_cast<std::size_t>(i < static_cast<std::ptrdiff_t>(n) ? i : period - 1 - i);
}

/// Blurs `v` in place along one axis of a (x, y, z, c) double buffer.
inline void blur_axis(std::vector<double>& v, const Dims& d, int axis, double sigma) {
    if (sigma <= 0.0) return;
    const auto taps = gaussian_taps(sigma);
    const auto radius = static_cast<std::ptrdiff_t>(taps.size() / 2);
    const std::size_t n = d.axis(axis);
    const std::size_t stride = axis == 0 ? d.y * d.z * d.c : axis == 1 ? d.z * d.c : d.c;
    std::vector<double> line(n);
    std::vector<double> out(v.size());
    for (std::size_t base = 0; base < v.size(); ++base) {
        if ((base / stride) % n != 0) continue;
        for (std::size_t i = 0; i < n; ++i) line[i] = v[base + i * stride];
        for (std::size_t i = 0; i < n; ++i) {
            double s = 0.0;
            for (std::ptrdiff_t k = -radius; k <= radius; ++k) {
                s += taps[k + radius] * line[reflect_index(static_cast<std::ptrdiff_t>(i) + k, n)];
            }
            out[base + i * stride] = s;
        }
    }
    v.swap(out);
}

}  // namespace detail

/// Anti-aliasing sigma for one axis: max(0, (in/out - 1) / 2).
inline double antialias_sigma(std::size_t in, std::size_t out) {
    return std::max(0.0, (double(in) / double(out) - 1.0) / 2.0);
}

/// Gaussian pre-blur per axis, then trilinear sampling at
/// (o + 0.5) * in/out - 0.5, clamped to the edge voxels.
template <class T>
Volume<T> resize(const Volume<T>& vol, Dims target) {
    const Dims d = vol.dims();
    target.c = d.c;
    if (target.x == 0 || target.y == 0 || target.z == 0) throw InputError("resize targets must be >= 1");
    if (target == d) return vol;
    std::vector<double> buf(vol.data().begin(), vol.data().end());
    for (int a = 0; a < 3; ++a) detail::blur_axis(buf, d, a, antialias_sigma(d.axis(a), target.axis(a)));

    auto coords = [](std::size_t in, std::size_t out) {
        std::vector<std::pair<std::size_t, double>> c(out);
        const double scale = double(in) / double(out);
        for (std::size_t o = 0; o < out; ++o) {
            double s = std::clamp((double(o) + 0.5) * scale - 0.5, 0.0, double(in - 1));
            const auto i0 = static_cast<std::size_t>(std::floor(s));
            c[o] = {i0, i0 + 1 < in ? s - double(i0) : 0.0};
        }
        return c;
    };
    const auto cx = coords(d.x, target.x);
    const auto cy = coords(d.y, target.y);
    const auto cz = coords(d.z, target.z);
    auto at = [&](std::size_t x, std::size_t y, std::size_t z, std::size_t c) {
        return buf[((std::min(x, d.x - 1) * d.y + std::min(y, d.y - 1)) * d.z + std::min(z, d.z - 1)) * d.c + c];
    };
    Volume<T> out(target);
    for (std::size_t x = 0; x < target.x; ++x) {
        const auto [x0, tx] = cx[x];
        for (std::size_t y = 0; y < target.y; ++y) {
            const auto [y0, ty] = cy[y];
            for (std::size_t z = 0; z < target.z; ++z) {
                const auto [z0, tz] = cz[z];
                for (std::size_t c = 0; c < d.c; ++c) {
                    double acc = 0.0;
                    for (int i = 0; i < 2; ++i) {
                        const double wx = i ? tx : 1.0 - tx;
                        if (wx == 0.0) continue;
                        for (int j = 0; j < 2; ++j) {
                            const double wy = j ? ty : 1.0 - ty;
                            if (wy == 0.0) continue;
                            for (int k = 0; k < 2; ++k) {
                                const double wz = k ? tz : 1.0 - tz;
                                if (wz == 0.0) continue;
                                acc += wx * wy * wz * at(x0 + i, y0 + j, z0 + k, c);
                            }
                        }
                    }
                    out(x, y, z, c) = static_cast<T>(acc);
                }
            }
        }
    }
    return out;
}

// Op chains -------------------------------------------------------------------

enum class PreprocessOp { imax_normalize, standardize, minmax, clamp, resize };

struct PreprocessOpSpec {
    PreprocessOp op = PreprocessOp::minmax;
    double lo = 0.0;
    double hi = 1.0;
    Dims target{1, 1, 1, 1};
    double top_fraction = kImaxTopFraction;

    void validate() const {
        if (op == PreprocessOp::clamp && !(lo < hi)) throw InputError("clamp needs lo < hi");
        if (op == PreprocessOp::resize && (target.x == 0 || target.y == 0 || target.z == 0)) {
            throw InputError("resize targets must be >= 1");
        }
        if (op == PreprocessOp::imax_normalize && !(top_fraction > 0.0 && top_fraction <= 1.0)) {
            throw InputError("top fraction must lie in (0, 1]");
        }
    }
};

using PreprocessChain = std::vector<PreprocessOpSpec>;

inline const char* to_string(PreprocessOp op) {
    switch (op) {
        case PreprocessOp::imax_normalize: return "imax_normalize";
        case PreprocessOp::standardize: return "standardize";
        case PreprocessOp::minmax: return "minmax";
        case PreprocessOp::clamp: return "clamp";
        case PreprocessOp::resize: return "resize";
    }
    return "?";
}

inline PreprocessOp parse_preprocess_op(const std::string& s) {
    for (auto op : {PreprocessOp::imax_normalize, PreprocessOp::standardize, PreprocessOp::minmax,
                    PreprocessOp::clamp, PreprocessOp::resize}) {
        if (s == to_string(op)) return op;
    }
    throw InputError("unknown preprocessing op '" + s + "'");
}

inline nlohmann::json to_json(const PreprocessOpSpec& s) {
    nlohmann::json j{{"op", to_string(s.op)}};
    switch (s.op) {
        case PreprocessOp::clamp:
            j["lo"] = s.lo;
            j["hi"] = s.hi;
            break;
        case PreprocessOp::resize: j["dims"] = {s.target.x, s.target.y, s.target.z}; break;
        case PreprocessOp::imax_normalize: j["top_fraction"] = s.top_fraction; break;
        default: break;
    }
    return j;
}

inline PreprocessChain preprocess_chain_from_json(const nlohmann::json& j) {
    try {
        const auto& ops = j.is_object() ? j.at("ops") : j;
        if (!ops.is_array()) throw InputError("preprocessing chain must be an array of ops");
        PreprocessChain chain;
        for (const auto& e : ops) {
            PreprocessOpSpec s;
            s.op = parse_preprocess_op(e.at("op").get<std::string>());
            s.lo = e.value("lo", 0.0);
            s.hi = e.value("hi", 1.0);
            if (s.op == PreprocessOp::resize) s.target = dims_from_json(e.at("dims"));
            s.top_fraction = e.value("top_fraction", kImaxTopFraction);
            s.validate();
            chain.push_back(s);
        }
        return chain;
    } catch (const nlohmann::json::exception& e) {
        throw InputError(std::string("malformed preprocessing chain: ") + e.what());
    } catch (const SpecError& e) {
        throw InputError(std::string("malformed preprocessing chain: ") + e.what());
    }
}

template <class T>
Volume<T> apply_op(const Volume<T>& v, const PreprocessOpSpec& s) {
    switch (s.op) {
        case PreprocessOp::imax_normalize: return imax_normalize(v, s.top_fraction);
        case PreprocessOp::standardize: return standardize(v);
        case PreprocessOp::minmax: return minmax(v);
        case PreprocessOp::clamp: return clamp(v, s.lo, s.hi);
        case PreprocessOp::resize: return resize(v, s.target);
    }
    return v;
}

template <class T>
Volume<T> apply_chain(Volume<T> v, const PreprocessChain& chain) {
    for (const auto& s : chain) v = apply_op(v, s);
    return v;
}

}  // namespace vcnn
