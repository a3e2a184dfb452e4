#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "vcnn/error.hpp"

namespace vcnn {

/// Extents of a volume: three spatial axes plus channels.
struct Dims {
    std::size_t x = 1;
    std::size_t y = 1;
    std::size_t z = 1;
    std::size_t c = 1;

    constexpr std::size_t spatial() const noexcept { return x * y * z; }
    constexpr std::size_t size() const noexcept { return x * y * z * c; }
    constexpr std::size_t axis(int a) const noexcept { return a == 0 ? x : a == 1 ? y : z; }
    constexpr bool is_vector() const noexcept { return x == 1 && y == 1 && z == 1; }

    static constexpr Dims vector(std::size_t n) noexcept { return {1, 1, 1, n}; }

    friend constexpr bool operator==(const Dims&, const Dims&) = default;

    std::string str() const {
        std::ostringstream os;
        os << '(' << x << ", " << y << ", " << z << ", " << c << ')';
        return os.str();
    }
};

/// Dense (x, y, z, c) array, row-major with the channel axis fastest.
template <class T>
class Volume {
public:
    using value_type = T;

    Volume() : Volume(Dims{}) {}

    explicit Volume(Dims dims, T fill = T{0}) : dims_(dims) {
        check_dims(dims);
        data_.assign(dims.size(), fill);
    }

    Volume(Dims dims, std::vector<T> data) : dims_(dims), data_(std::move(data)) {
        check_dims(dims);
        if (data_.size() != dims.size()) {
            throw ShapeError("volume data length " + std::to_string(data_.size()) +
                             " does not match dims " + dims.str());
        }
    }

    const Dims& dims() const noexcept { return dims_; }
    std::size_t size() const noexcept { return data_.size(); }

    std::size_t index(std::size_t x, std::size_t y, std::size_t z, std::size_t c = 0) const noexcept {
        return ((x * dims_.y + y) * dims_.z + z) * dims_.c + c;
    }

    T& operator()(std::size_t x, std::size_t y, std::size_t z, std::size_t c = 0) noexcept {
        return data_[index(x, y, z, c)];
    }
    const T& operator()(std::size_t x, std::size_t y, std::size_t z, std::size_t c = 0) const noexcept {
        return data_[index(x, y, z, c)];
    }

    T& operator[](std::size_t i) noexcept { return data_[i]; }
    const T& operator[](std::size_t i) const noexcept { return data_[i]; }

    std::span<T> data() noexcept { return data_; }
    std::span<const T> data() const noexcept { return data_; }
    std::vector<T>& storage() noexcept { return data_; }
    const std::vector<T>& storage() const noexcept { return data_; }

    /// Same payload, new extents of equal element count.
    Volume reshaped(Dims dims) const {
        if (dims.size() != data_.size()) {
            throw ShapeError("cannot reshape " + dims_.str() + " to " + dims.str());
        }
        return Volume(dims, data_);
    }

    template <class U>
    Volume<U> cast() const {
        std::vector<U> out(data_.begin(), data_.end());
        return Volume<U>(dims_, std::move(out));
    }

    bool all_finite() const noexcept {
        return std::all_of(data_.begin(), data_.end(), [](T v) { return std::isfinite(v); });
    }

    void fill(T v) noexcept { std::fill(data_.begin(), data_.end(), v); }

    friend bool operator==(const Volume& a, const Volume& b) {
        return a.dims_ == b.dims_ && a.data_ == b.data_;
    }

private:
    static void check_dims(const Dims& d) {
        if (d.x == 0 || d.y == 0 || d.z == 0 || d.c == 0) {
            throw ShapeError("volume dims must be >= 1, got " + d.str());
        }
    }

    Dims dims_;
    std::vector<T> data_;
};

/// Cubic k x k x k filter bank. Weights are laid out (kx, ky, kz, c_in, c_out)
/// with c_out fastest.
template <class T>
struct Kernel {
    std::size_t k = 1;
    std::size_t c_in = 1;
    std::size_t c_out = 1;
    std::vector<T> weights;
    std::vector<T> bias;

    Kernel() : Kernel(1, 1, 1) {}

    Kernel(std::size_t k_, std::size_t c_in_, std::size_t c_out_)
        : k(k_), c_in(c_in_), c_out(c_out_), weights(k_ * k_ * k_ * c_in_ * c_out_, T{0}),
          bias(c_out_, T{0}) {
        validate();
    }

    std::size_t weight_count() const noexcept { return k * k * k * c_in * c_out; }

    std::size_t weight_index(std::size_t kx, std::size_t ky, std::size_t kz, std::size_t ci,
                             std::size_t co) const noexcept {
        return (((kx * k + ky) * k + kz) * c_in + ci) * c_out + co;
    }

    void validate() const {
        if (k == 0 || c_in == 0 || c_out == 0) throw ShapeError("kernel extents must be >= 1");
        if (weights.size() != weight_count()) throw ShapeError("kernel weight length mismatch");
        if (bias.size() != c_out) throw ShapeError("kernel bias length mismatch");
    }
};

/// Non-owning view of a kernel's weights and bias in the same layout.
template <class T>
struct KernelRef {
    std::size_t k = 1;
    std::size_t c_in = 1;
    std::size_t c_out = 1;
    std::span<const T> weights;
    std::span<const T> bias;

    KernelRef() = default;
    KernelRef(std::size_t k_, std::size_t c_in_, std::size_t c_out_, std::span<const T> w,
              std::span<const T> b)
        : k(k_), c_in(c_in_), c_out(c_out_), weights(w), bias(b) {
        validate();
    }
    KernelRef(const Kernel<T>& kernel)  // NOLINT(google-explicit-constructor)
        : KernelRef(kernel.k, kernel.c_in, kernel.c_out, kernel.weights, kernel.bias) {}

    std::size_t weight_count() const noexcept { return k * k * k * c_in * c_out; }
    std::size_t weight_index(std::size_t kx, std::size_t ky, std::size_t kz, std::size_t ci,
                             std::size_t co) const noexcept {
        return (((kx * k + ky) * k + kz) * c_in + ci) * c_out + co;
    }
    void validate() const {
        if (k == 0 || c_in == 0 || c_out == 0) throw ShapeError("kernel extents must be >= 1");
        if (weights.size() != weight_count()) throw ShapeError("kernel weight length mismatch");
        if (bias.size() != c_out) throw ShapeError("kernel bias length mismatch");
    }
};

/// Minibatch: n >= 1 volumes of identical dims.
template <class T>
using Batch = std::vector<Volume<T>>;

template <class T>
Dims batch_dims(const Batch<T>& batch) {
    if (batch.empty()) throw ShapeError("batch must hold at least one volume");
    const Dims d = batch.front().dims();
    for (const auto& v : batch) {
        if (v.dims() != d) throw ShapeError("batch members differ in dims");
    }
    return d;
}

}  // namespace vcnn
