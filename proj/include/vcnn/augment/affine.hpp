#pragma once

// Homogeneous 4x4 transforms over voxel coordinates centered on the volume,
// and trilinear resampling through the inverse map.

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>

#include "vcnn/error.hpp"
#include "vcnn/volume.hpp"

namespace vcnn {

/// Row-major homogeneous matrix acting on centred voxel coordinates,
/// mapping source to destination: dst = M * src.
struct Affine4 {
    std::array<double, 16> m{1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1};

    double& operator()(int r, int c) noexcept { return m[r * 4 + c]; }
    double operator()(int r, int c) const noexcept { return m[r * 4 + c]; }

    static Affine4 identity() noexcept { return {}; }

    static Affine4 translation(double tx, double ty, double tz) noexcept {
        Affine4 a;
        a(0, 3) = tx;
        a(1, 3) = ty;
        a(2, 3) = tz;
        return a;
    }

    static Affine4 scaling(double sx, double sy, double sz) noexcept {
        Affine4 a;
        a(0, 0) = sx;
        a(1, 1) = sy;
        a(2, 2) = sz;
        return a;
    }

    /// Rotation by `deg` degrees about coordinate axis 0, 1 or 2.
    static Affine4 rotation(int axis, double deg) {
        if (axis < 0 || axis > 2) throw InputError("rotation axis must be 0, 1 or 2");
        const double r = deg * std::numbers::pi / 180.0;
        double c = std::cos(r);
        double s = std::sin(r);
        const double q = deg / 90.0;
        if (q == std::round(q)) {
            const long k = ((static_cast<long>(std::round(q)) % 4) + 4) % 4;
            constexpr std::array<double, 4> cs{1, 0, -1, 0};
            constexpr std::array<double, 4> sn{0, 1, 0, -1};
            c = cs[k];
            s = sn[k];
        }
        const int i = (axis + 1) % 3;
        const int j = (axis + 2) % 3;
        Affine4 a;
        a(i, i) = c;
        a(i, j) = -s;
        a(j, i) = s;
        a(j, j) = c;
        return a;
    }

    bool is_identity() const noexcept { return m == identity().m; }
    bool is_affine() const noexcept { return m[12] == 0 && m[13] == 0 && m[14] == 0 && m[15] == 1; }

    friend Affine4 operator*(const Affine4& a, const Affine4& b) noexcept {
        Affine4 out;
        for (int r = 0; r < 4; ++r) {
            for (int c = 0; c < 4; ++c) {
                double s = 0;
                for (int k = 0; k < 4; ++k) s += a(r, k) * b(k, c);
                out(r, c) = s;
            }
        }
        return out;
    }

    std::array<double, 3> apply(const std::array<double, 3>& p) const noexcept {
        std::array<double, 3> out{};
        for (int r = 0; r < 3; ++r) out[r] = m[r * 4] * p[0] + m[r * 4 + 1] * p[1] + m[r * 4 + 2] * p[2] + m[r * 4 + 3];
        return out;
    }

    /// Inverse of an affine matrix; InputError when the linear part is singular.
    Affine4 inverse() const {
        if (!is_affine()) throw InputError("matrix last row must be (0, 0, 0, 1)");
        const double a = m[0], b = m[1], c = m[2];
        const double d = m[4], e = m[5], f = m[6];
        const double g = m[8], h = m[9], i = m[10];
        const double A = e * i - f * h, B = -(d * i - f * g), C = d * h - e * g;
        const double det = a * A + b * B + c * C;
        const double scale = std::max({std::abs(a), std::abs(b), std::abs(c), std::abs(d), std::abs(e),
                                       std::abs(f), std::abs(g), std::abs(h), std::abs(i)});
        if (!(std::abs(det) > 1e-12 * scale * scale * scale)) throw InputError("affine matrix is singular");
        Affine4 inv;
        const double r = 1.0 / det;
        inv(0, 0) = A * r;
        inv(0, 1) = -(b * i - c * h) * r;
        inv(0, 2) = (b * f - c * e) * r;
        inv(1, 0) = B * r;
        inv(1, 1) = (a * i - c * g) * r;
        inv(1, 2) = -(a * f - c * d) * r;
        inv(2, 0) = C * r;
        inv(2, 1) = -(a * h - b * g) * r;
        inv(2, 2) = (a * e - b * d) * r;
        for (int row = 0; row < 3; ++row) {
            inv(row, 3) = -(inv(row, 0) * m[3] + inv(row, 1) * m[7] + inv(row, 2) * m[11]);
        }
        return inv;
    }
};

namespace detail {

inline constexpr double kGridSnap = 1e-6;

template <class T>
T lerp_bounded(T a, T b, double t) {
    const double v = double(a) + (double(b) - double(a)) * t;
    const double lo = std::min(double(a), double(b));
    const double hi = std::max(double(a), double(b));
    return static_cast<T>(std::clamp(v, lo, hi));
}

}  // namespace detail

/// Each output voxel takes the trilinear sample at M^{-1} applied to its
/// centred coordinate. Samples outside [0, n-1] on any axis take `fill`.
template <class T>
Volume<T> affine_resample(const Volume<T>& vol, const Affine4& m, T fill = T{0}) {
    const Affine4 inv = m.inverse();
    if (m.is_identity()) return vol;
    const Dims d = vol.dims();
    const std::array<double, 3> centre{(double(d.x) - 1) / 2, (double(d.y) - 1) / 2, (double(d.z) - 1) / 2};
    const std::array<std::size_t, 3> n{d.x, d.y, d.z};
    Volume<T> out(d, fill);
    for (std::size_t x = 0; x < d.x; ++x) {
        for (std::size_t y = 0; y < d.y; ++y) {
            for (std::size_t z = 0; z < d.z; ++z) {
                auto p = inv.apply({double(x) - centre[0], double(y) - centre[1], double(z) - centre[2]});
                std::array<std::size_t, 3> i0{};
                std::array<double, 3> t{};
                bool inside = true;
                for (int a = 0; a < 3 && inside; ++a) {
                    double s = p[a] + centre[a];
                    const double r = std::round(s);
                    if (std::abs(s - r) < detail::kGridSnap) s = r;
                    if (s < 0 || s > double(n[a] - 1)) {
                        inside = false;
                        break;
                    }
                    const double fl = std::floor(s);
                    i0[a] = static_cast<std::size_t>(fl);
                    t[a] = s - fl;
                    if (i0[a] == n[a] - 1) t[a] = 0;
                }
                if (!inside) continue;
                for (std::size_t c = 0; c < d.c; ++c) {
                    if (t[0] == 0 && t[1] == 0 && t[2] == 0) {
                        out(x, y, z, c) = vol(i0[0], i0[1], i0[2], c);
                        continue;
                    }
                    auto at = [&](std::size_t dx, std::size_t dy, std::size_t dz) {
                        return vol(std::min(i0[0] + dx, n[0] - 1), std::min(i0[1] + dy, n[1] - 1),
                                   std::min(i0[2] + dz, n[2] - 1), c);
                    };
                    using detail::lerp_bounded;
                    const T c00 = lerp_bounded(at(0, 0, 0), at(1, 0, 0), t[0]);
                    const T c01 = lerp_bounded(at(0, 0, 1), at(1, 0, 1), t[0]);
                    const T c10 = lerp_bounded(at(0, 1, 0), at(1, 1, 0), t[0]);
                    const T c11 = lerp_bounded(at(0, 1, 1), at(1, 1, 1), t[0]);
                    const T c0 = lerp_bounded(c00, c10, t[1]);
                    const T c1 = lerp_bounded(c01, c11, t[1]);
                    out(x, y, z, c) = lerp_bounded(c0, c1, t[2]);
                }
            }
        }
    }
    return out;
}

/// Reverses one spatial axis by index manipulation.
template <class T>
Volume<T> flip_axis(const Volume<T>& vol, int axis) {
    if (axis < 0 || axis > 2) throw InputError("flip axis must be 0, 1 or 2");
    const Dims d = vol.dims();
    Volume<T> out(d);
    for (std::size_t x = 0; x < d.x; ++x) {
        for (std::size_t y = 0; y < d.y; ++y) {
            for (std::size_t z = 0; z < d.z; ++z) {
                const std::size_t sx = axis == 0 ? d.x - 1 - x : x;
                const std::size_t sy = axis == 1 ? d.y - 1 - y : y;
                const std::size_t sz = axis == 2 ? d.z - 1 - z : z;
                for (std::size_t c = 0; c < d.c; ++c) out(x, y, z, c) = vol(sx, sy, sz, c);
            }
        }
    }
    return out;
}

}  // namespace vcnn
