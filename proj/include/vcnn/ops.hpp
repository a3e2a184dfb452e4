#pragma once

// Raw 3D sliding-window kernels: cross-correlation, max pooling, global
// average pooling, and their vector-Jacobian products. All functions are pure;
// accumulation happens in the volume's scalar type.

#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "vcnn/error.hpp"
#include "vcnn/volume.hpp"

namespace vcnn {

/// floor((in + 2*padding - window) / stride) + 1, or ShapeError when the
/// window does not fit the padded extent.
inline std::size_t output_extent(std::size_t in, std::size_t window, std::size_t stride,
                                 std::size_t padding = 0) {
    if (window == 0) throw ShapeError("window must be >= 1");
    if (stride == 0) throw ShapeError("stride must be >= 1");
    const std::size_t padded = in + 2 * padding;
    if (padded < window) {
        throw ShapeError("window " + std::to_string(window) + " exceeds padded extent " +
                         std::to_string(padded));
    }
    return (padded - window) / stride + 1;
}

inline Dims conv_output_dims(const Dims& in, std::size_t k, std::size_t c_out, std::size_t stride,
                             std::size_t padding) {
    return {output_extent(in.x, k, stride, padding), output_extent(in.y, k, stride, padding),
            output_extent(in.z, k, stride, padding), c_out};
}

inline Dims pool_output_dims(const Dims& in, std::size_t window, std::size_t stride) {
    return {output_extent(in.x, window, stride), output_extent(in.y, window, stride),
            output_extent(in.z, window, stride), in.c};
}

template <class T>
Volume<T> correlate3d(const Volume<T>& input, const KernelRef<T>& kernel, std::size_t stride,
                      std::size_t padding) {
    kernel.validate();
    const Dims in = input.dims();
    if (in.c != kernel.c_in) {
        throw ShapeError("input has " + std::to_string(in.c) + " channels, kernel expects " +
                         std::to_string(kernel.c_in));
    }
    const Dims od = conv_output_dims(in, kernel.k, kernel.c_out, stride, padding);
    Volume<T> out(od);
    const std::size_t k = kernel.k;
    const std::size_t cin = kernel.c_in;
    const std::size_t cout = kernel.c_out;
    const auto ip = static_cast<std::ptrdiff_t>(padding);
    std::vector<T> acc(cout);

    for (std::size_t ox = 0; ox < od.x; ++ox) {
        for (std::size_t oy = 0; oy < od.y; ++oy) {
            for (std::size_t oz = 0; oz < od.z; ++oz) {
                std::copy(kernel.bias.begin(), kernel.bias.end(), acc.begin());
                for (std::size_t kx = 0; kx < k; ++kx) {
                    const auto ix = static_cast<std::ptrdiff_t>(ox * stride + kx) - ip;
                    if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(in.x)) continue;
                    for (std::size_t ky = 0; ky < k; ++ky) {
                        const auto iy = static_cast<std::ptrdiff_t>(oy * stride + ky) - ip;
                        if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(in.y)) continue;
                        for (std::size_t kz = 0; kz < k; ++kz) {
                            const auto iz = static_cast<std::ptrdiff_t>(oz * stride + kz) - ip;
                            if (iz < 0 || iz >= static_cast<std::ptrdiff_t>(in.z)) continue;
                            const T* src = &input(ix, iy, iz, 0);
                            const T* w = &kernel.weights[kernel.weight_index(kx, ky, kz, 0, 0)];
                            for (std::size_t ci = 0; ci < cin; ++ci) {
                                const T v = src[ci];
                                const T* wr = w + ci * cout;
                                for (std::size_t co = 0; co < cout; ++co) acc[co] += v * wr[co];
                            }
                        }
                    }
                }
                std::copy(acc.begin(), acc.end(), &out(ox, oy, oz, 0));
            }
        }
    }
    return out;
}

template <class T>
struct CorrelateGrads {
    Volume<T> grad_input;
    std::vector<T> grad_weights;
    std::vector<T> grad_bias;
};

/// Accumulating form used by layers: adds this sample's contribution to
/// grad_weights / grad_bias and, when grad_input is non-null, writes the input
/// cotangent into it (which must be zero-initialised with input dims).
template <class T>
void correlate3d_vjp_accumulate(const Volume<T>& input, const KernelRef<T>& kernel,
                                const Volume<T>& grad_out, std::size_t stride, std::size_t padding,
                                Volume<T>* grad_input, std::span<T> grad_weights,
                                std::span<T> grad_bias) {
    const Dims in = input.dims();
    const Dims od = conv_output_dims(in, kernel.k, kernel.c_out, stride, padding);
    if (in.c != kernel.c_in) throw ShapeError("input/kernel channel mismatch");
    if (grad_out.dims() != od) {
        throw ShapeError("grad_out dims " + grad_out.dims().str() + " != forward output dims " +
                         od.str());
    }
    if (grad_weights.size() != kernel.weight_count() || grad_bias.size() != kernel.c_out) {
        throw ShapeError("gradient buffers do not match kernel");
    }
    if (grad_input && grad_input->dims() != in) throw ShapeError("grad_input dims mismatch");

    const std::size_t k = kernel.k;
    const std::size_t cin = kernel.c_in;
    const std::size_t cout = kernel.c_out;
    const auto ip = static_cast<std::ptrdiff_t>(padding);

    for (std::size_t ox = 0; ox < od.x; ++ox) {
        for (std::size_t oy = 0; oy < od.y; ++oy) {
            for (std::size_t oz = 0; oz < od.z; ++oz) {
                const T* g = &grad_out(ox, oy, oz, 0);
                for (std::size_t co = 0; co < cout; ++co) grad_bias[co] += g[co];
                for (std::size_t kx = 0; kx < k; ++kx) {
                    const auto ix = static_cast<std::ptrdiff_t>(ox * stride + kx) - ip;
                    if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(in.x)) continue;
                    for (std::size_t ky = 0; ky < k; ++ky) {
                        const auto iy = static_cast<std::ptrdiff_t>(oy * stride + ky) - ip;
                        if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(in.y)) continue;
                        for (std::size_t kz = 0; kz < k; ++kz) {
                            const auto iz = static_cast<std::ptrdiff_t>(oz * stride + kz) - ip;
                            if (iz < 0 || iz >= static_cast<std::ptrdiff_t>(in.z)) continue;
                            const std::size_t woff = kernel.weight_index(kx, ky, kz, 0, 0);
                            const T* src = &input(ix, iy, iz, 0);
                            const T* w = &kernel.weights[woff];
                            T* gw = &grad_weights[woff];
                            T* gi = grad_input ? &(*grad_input)(ix, iy, iz, 0) : nullptr;
                            for (std::size_t ci = 0; ci < cin; ++ci) {
                                const T v = src[ci];
                                const T* wr = w + ci * cout;
                                T* gwr = gw + ci * cout;
                                T s{0};
                                for (std::size_t co = 0; co < cout; ++co) {
                                    gwr[co] += v * g[co];
                                    s += wr[co] * g[co];
                                }
                                if (gi) gi[ci] += s;
                            }
                        }
                    }
                }
            }
        }
    }
}

template <class T>
CorrelateGrads<T> correlate3d_vjp(const Volume<T>& input, const KernelRef<T>& kernel,
                                  const Volume<T>& grad_out, std::size_t stride,
                                  std::size_t padding) {
    CorrelateGrads<T> g{Volume<T>(input.dims()), std::vector<T>(kernel.weight_count(), T{0}),
                        std::vector<T>(kernel.c_out, T{0})};
    correlate3d_vjp_accumulate(input, kernel, grad_out, stride, padding, &g.grad_input,
                               std::span<T>(g.grad_weights), std::span<T>(g.grad_bias));
    return g;
}

template <class T>
Volume<T> correlate3d(const Volume<T>& input, const Kernel<T>& kernel, std::size_t stride,
                      std::size_t padding) {
    return correlate3d(input, KernelRef<T>(kernel), stride, padding);
}

template <class T>
CorrelateGrads<T> correlate3d_vjp(const Volume<T>& input, const Kernel<T>& kernel,
                                  const Volume<T>& grad_out, std::size_t stride,
                                  std::size_t padding) {
    return correlate3d_vjp(input, KernelRef<T>(kernel), grad_out, stride, padding);
}

/// Where each pooled value came from, for routing gradients back.
struct PoolIndices {
    Dims input_dims;
    Dims output_dims;
    std::vector<std::size_t> argmax;  // flat input index per output element
};

template <class T>
struct MaxPoolResult {
    Volume<T> output;
    PoolIndices indices;
};

/// Valid (unpadded) max pooling with cubic windows. Ties resolve to the first
/// maximal element in (x, y, z) scan order.
template <class T>
MaxPoolResult<T> maxpool3d(const Volume<T>& input, std::size_t window, std::size_t stride) {
    const Dims in = input.dims();
    const Dims od = pool_output_dims(in, window, stride);
    MaxPoolResult<T> r{Volume<T>(od), PoolIndices{in, od, std::vector<std::size_t>(od.size())}};
    for (std::size_t ox = 0; ox < od.x; ++ox) {
        for (std::size_t oy = 0; oy < od.y; ++oy) {
            for (std::size_t oz = 0; oz < od.z; ++oz) {
                for (std::size_t c = 0; c < in.c; ++c) {
                    T best = -std::numeric_limits<T>::infinity();
                    std::size_t best_idx = input.index(ox * stride, oy * stride, oz * stride, c);
                    for (std::size_t wx = 0; wx < window; ++wx) {
                        for (std::size_t wy = 0; wy < window; ++wy) {
                            for (std::size_t wz = 0; wz < window; ++wz) {
                                const std::size_t idx = input.index(
                                    ox * stride + wx, oy * stride + wy, oz * stride + wz, c);
                                if (input[idx] > best) {
                                    best = input[idx];
                                    best_idx = idx;
                                }
                            }
                        }
                    }
                    const std::size_t o = r.output.index(ox, oy, oz, c);
                    r.output[o] = input[best_idx];
                    r.indices.argmax[o] = best_idx;
                }
            }
        }
    }
    return r;
}

template <class T>
Volume<T> maxpool3d_vjp(const PoolIndices& indices, const Volume<T>& grad_out) {
    if (grad_out.dims() != indices.output_dims || indices.argmax.size() != grad_out.size()) {
        throw ShapeError("grad_out dims " + grad_out.dims().str() +
                         " do not match pooling indices " + indices.output_dims.str());
    }
    Volume<T> gi(indices.input_dims);
    for (std::size_t o = 0; o < grad_out.size(); ++o) gi[indices.argmax[o]] += grad_out[o];
    return gi;
}

/// Per-channel mean over all spatial positions (summed in double).
template <class T>
std::vector<T> global_avg_pool3d(const Volume<T>& input) {
    const Dims d = input.dims();
    std::vector<double> sum(d.c, 0.0);
    for (std::size_t s = 0; s < d.spatial(); ++s) {
        for (std::size_t c = 0; c < d.c; ++c) sum[c] += static_cast<double>(input[s * d.c + c]);
    }
    std::vector<T> out(d.c);
    for (std::size_t c = 0; c < d.c; ++c) out[c] = static_cast<T>(sum[c] / double(d.spatial()));
    return out;
}

template <class T>
Volume<T> global_avg_pool3d_vjp(const Dims& input_dims, std::span<const T> grad_out) {
    if (grad_out.size() != input_dims.c) throw ShapeError("GAP grad length != channel count");
    Volume<T> gi(input_dims);
    const T scale = T{1} / static_cast<T>(input_dims.spatial());
    for (std::size_t s = 0; s < input_dims.spatial(); ++s) {
        for (std::size_t c = 0; c < input_dims.c; ++c) gi[s * input_dims.c + c] = grad_out[c] * scale;
    }
    return gi;
}

/// Row-major (channel fastest) copy of the payload.
template <class T>
std::vector<T> flatten(const Volume<T>& input) {
    return input.storage();
}

template <class T>
Volume<T> reshape(std::vector<T> values, Dims dims) {
    return Volume<T>(dims, std::move(values));
}

}  // namespace vcnn
