#pragma once

// Runtime layers. A layer transforms a whole minibatch so batch normalization
// can see batch statistics; activations are cached by the owning Sequential.

#include <cmath>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "vcnn/error.hpp"
#include "vcnn/nn/spec.hpp"
#include "vcnn/ops.hpp"
#include "vcnn/rng.hpp"
#include "vcnn/volume.hpp"

namespace vcnn {

enum class Mode { train, inference };

enum class ParamRole { conv_weights, conv_bias, dense_weights, dense_bias, bn_gamma, bn_beta };

inline const char* to_string(ParamRole r) {
    switch (r) {
        case ParamRole::conv_weights: return "conv_weights";
        case ParamRole::conv_bias: return "conv_bias";
        case ParamRole::dense_weights: return "dense_weights";
        case ParamRole::dense_bias: return "dense_bias";
        case ParamRole::bn_gamma: return "bn_gamma";
        case ParamRole::bn_beta: return "bn_beta";
    }
    return "?";
}

/// Learnable tensor with its accumulated gradient.
template <class T>
struct Param {
    std::string name;
    ParamRole role = ParamRole::conv_weights;
    std::vector<std::size_t> shape;
    std::vector<T> value;
    std::vector<T> grad;
    bool trainable = true;
    bool l2 = false;
    std::optional<double> l2_lambda;  // unset: use the hyperparameter default
    std::size_t fan_in = 0;
    std::size_t fan_out = 0;

    Param(std::string n, ParamRole r, std::vector<std::size_t> s, T init = T{0})
        : name(std::move(n)), role(r), shape(std::move(s)) {
        std::size_t count = 1;
        for (auto e : shape) count *= e;
        value.assign(count, init);
        grad.assign(count, T{0});
    }

    std::size_t size() const noexcept { return value.size(); }
    bool is_weight() const noexcept {
        return role == ParamRole::conv_weights || role == ParamRole::dense_weights;
    }
};

/// Non-trainable layer state (batch-norm moving statistics).
template <class T>
struct StateTensor {
    std::string name;
    std::vector<T> value;
};

struct ForwardContext {
    Mode mode = Mode::inference;
    std::uint64_t seed = 0;  // drives dropout masks
};

template <class T>
class Layer {
public:
    Layer(LayerSpec spec, std::string qualified_name)
        : spec_(std::move(spec)), name_(std::move(qualified_name)), id_(fnv1a(name_)) {}
    virtual ~Layer() = default;
    Layer(const Layer&) = delete;
    Layer& operator=(const Layer&) = delete;

    const LayerSpec& spec() const noexcept { return spec_; }
    const std::string& name() const noexcept { return name_; }

    virtual void forward(const Batch<T>& in, Batch<T>& out, const ForwardContext& ctx) = 0;

    /// Adds parameter gradients; writes the input cotangent when grad_in != nullptr.
    virtual void backward(const Batch<T>& in, const Batch<T>& out, const Batch<T>& grad_out,
                          Batch<T>* grad_in) = 0;

    virtual void collect_params(std::vector<Param<T>*>&) {}
    virtual void collect_state(std::vector<StateTensor<T>*>&) {}

    /// Folds the discrete activation pattern (ReLU signs, argmax choices) of
    /// the last forward into h; used to detect kink crossings in gradient checks.
    virtual void signature(const Batch<T>& /*in*/, std::uint64_t& /*h*/) const {}

    bool has_trainable_params() {
        std::vector<Param<T>*> ps;
        collect_params(ps);
        for (auto* p : ps) {
            if (p->trainable) return true;
        }
        return false;
    }

protected:
    static void mix(std::uint64_t& h, std::uint64_t v) noexcept { h = splitmix64(h ^ v); }

    std::uint64_t id() const noexcept { return id_; }

    LayerSpec spec_;
    std::string name_;
    std::uint64_t id_;
};

// ---------------------------------------------------------------------------

template <class T>
class Conv3dLayer final : public Layer<T> {
public:
    Conv3dLayer(const LayerSpec& spec, std::string name, std::size_t c_in)
        : Layer<T>(spec, std::move(name)),
          weights_(this->name_ + "/kernel", ParamRole::conv_weights,
                   {spec.kernel, spec.kernel, spec.kernel, c_in, spec.filters}),
          bias_(this->name_ + "/bias", ParamRole::conv_bias, {spec.filters}),
          c_in_(c_in) {
        const std::size_t k3 = spec.kernel * spec.kernel * spec.kernel;
        weights_.fan_in = k3 * c_in;
        weights_.fan_out = k3 * spec.filters;
        weights_.trainable = bias_.trainable = spec.trainable;
        weights_.l2 = spec.has_l2();
        weights_.l2_lambda = spec.l2;
    }

    KernelRef<T> kernel() const {
        return KernelRef<T>(this->spec_.kernel, c_in_, this->spec_.filters, weights_.value, bias_.value);
    }

    void forward(const Batch<T>& in, Batch<T>& out, const ForwardContext&) override {
        out.resize(in.size());
        const auto k = kernel();
        for (std::size_t i = 0; i < in.size(); ++i) {
            out[i] = correlate3d(in[i], k, this->spec_.stride, this->spec_.padding);
        }
    }

    void backward(const Batch<T>& in, const Batch<T>&, const Batch<T>& grad_out,
                  Batch<T>* grad_in) override {
        const auto k = kernel();
        if (grad_in) grad_in->assign(in.size(), Volume<T>(in.front().dims()));
        for (std::size_t i = 0; i < in.size(); ++i) {
            correlate3d_vjp_accumulate(in[i], k, grad_out[i], this->spec_.stride, this->spec_.padding,
                                       grad_in ? &(*grad_in)[i] : nullptr,
                                       std::span<T>(weights_.grad), std::span<T>(bias_.grad));
        }
    }

    void collect_params(std::vector<Param<T>*>& ps) override {
        ps.push_back(&weights_);
        ps.push_back(&bias_);
    }

private:
    Param<T> weights_;
    Param<T> bias_;
    std::size_t c_in_;
};

template <class T>
class DenseLayer final : public Layer<T> {
public:
    DenseLayer(const LayerSpec& spec, std::string name, std::size_t in_units)
        : Layer<T>(spec, std::move(name)),
          weights_(this->name_ + "/kernel", ParamRole::dense_weights, {in_units, spec.units}),
          bias_(this->name_ + "/bias", ParamRole::dense_bias, {spec.units}),
          in_units_(in_units) {
        weights_.fan_in = in_units;
        weights_.fan_out = spec.units;
        weights_.trainable = bias_.trainable = spec.trainable;
        weights_.l2 = spec.has_l2();
        weights_.l2_lambda = spec.l2;
    }

    void forward(const Batch<T>& in, Batch<T>& out, const ForwardContext&) override {
        const std::size_t units = this->spec_.units;
        out.assign(in.size(), Volume<T>(Dims::vector(units)));
        for (std::size_t n = 0; n < in.size(); ++n) {
            const auto x = in[n].data();
            if (x.size() != in_units_) throw ShapeError("dense input width mismatch");
            T* y = out[n].data().data();
            std::copy(bias_.value.begin(), bias_.value.end(), y);
            for (std::size_t i = 0; i < in_units_; ++i) {
                const T xi = x[i];
                const T* w = &weights_.value[i * units];
                for (std::size_t j = 0; j < units; ++j) y[j] += xi * w[j];
            }
        }
    }

    void backward(const Batch<T>& in, const Batch<T>&, const Batch<T>& grad_out,
                  Batch<T>* grad_in) override {
        const std::size_t units = this->spec_.units;
        if (grad_in) grad_in->assign(in.size(), Volume<T>(in.front().dims()));
        for (std::size_t n = 0; n < in.size(); ++n) {
            const auto x = in[n].data();
            const auto g = grad_out[n].data();
            for (std::size_t j = 0; j < units; ++j) bias_.grad[j] += g[j];
            T* gx = grad_in ? (*grad_in)[n].data().data() : nullptr;
            for (std::size_t i = 0; i < in_units_; ++i) {
                const T xi = x[i];
                T* gw = &weights_.grad[i * units];
                const T* w = &weights_.value[i * units];
                T s{0};
                for (std::size_t j = 0; j < units; ++j) {
                    gw[j] += xi * g[j];
                    s += w[j] * g[j];
                }
                if (gx) gx[i] = s;
            }
        }
    }

    void collect_params(std::vector<Param<T>*>& ps) override {
        ps.push_back(&weights_);
        ps.push_back(&bias_);
    }

private:
    Param<T> weights_;
    Param<T> bias_;
    std::size_t in_units_;
};

template <class T>
class ActivationLayer final : public Layer<T> {
public:
    ActivationLayer(const LayerSpec& spec, std::string name, Activation fn)
        : Layer<T>(spec, std::move(name)), fn_(fn) {}

    void forward(const Batch<T>& in, Batch<T>& out, const ForwardContext&) override {
        out = in;
        for (auto& v : out) {
            auto d = v.data();
            switch (fn_) {
                case Activation::relu:
                    for (auto& e : d) e = e > T{0} ? e : T{0};
                    break;
                case Activation::sigmoid:
                    for (auto& e : d) e = T{1} / (T{1} + std::exp(-e));
                    break;
                case Activation::softmax: softmax_rows(v); break;
                case Activation::none: break;
            }
        }
    }

    void backward(const Batch<T>& in, const Batch<T>& out, const Batch<T>& grad_out,
                  Batch<T>* grad_in) override {
        if (!grad_in) return;
        *grad_in = grad_out;
        for (std::size_t n = 0; n < in.size(); ++n) {
            auto g = (*grad_in)[n].data();
            const auto x = in[n].data();
            const auto y = out[n].data();
            switch (fn_) {
                case Activation::relu:
                    for (std::size_t i = 0; i < g.size(); ++i) {
                        if (!(x[i] > T{0})) g[i] = T{0};
                    }
                    break;
                case Activation::sigmoid:
                    for (std::size_t i = 0; i < g.size(); ++i) g[i] *= y[i] * (T{1} - y[i]);
                    break;
                case Activation::softmax: {
                    const std::size_t c = in[n].dims().c;
                    for (std::size_t s = 0; s < g.size(); s += c) {
                        T dot{0};
                        for (std::size_t j = 0; j < c; ++j) dot += g[s + j] * y[s + j];
                        for (std::size_t j = 0; j < c; ++j) g[s + j] = y[s + j] * (g[s + j] - dot);
                    }
                    break;
                }
                case Activation::none: break;
            }
        }
    }

    void signature(const Batch<T>& in, std::uint64_t& h) const override {
        if (fn_ != Activation::relu) return;
        for (const auto& v : in) {
            std::uint64_t word = 0;
            int bits = 0;
            for (const T e : v.data()) {
                word = (word << 1) | (e > T{0} ? 1u : 0u);
                if (++bits == 64) {
                    this->mix(h, word);
                    word = 0;
                    bits = 0;
                }
            }
            this->mix(h, word);
        }
    }

    /// Softmax over the channel axis at every spatial position, with max subtraction.
    static void softmax_rows(Volume<T>& v) {
        const std::size_t c = v.dims().c;
        auto d = v.data();
        for (std::size_t s = 0; s < d.size(); s += c) {
            T mx = d[s];
            for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, d[s + j]);
            T sum{0};
            for (std::size_t j = 0; j < c; ++j) {
                d[s + j] = std::exp(d[s + j] - mx);
                sum += d[s + j];
            }
            for (std::size_t j = 0; j < c; ++j) d[s + j] /= sum;
        }
    }

private:
    Activation fn_;
};

template <class T>
class MaxPoolLayer final : public Layer<T> {
public:
    using Layer<T>::Layer;

    void forward(const Batch<T>& in, Batch<T>& out, const ForwardContext&) override {
        out.resize(in.size());
        indices_.resize(in.size());
        for (std::size_t i = 0; i < in.size(); ++i) {
            auto r = maxpool3d(in[i], this->spec_.window, this->spec_.stride);
            out[i] = std::move(r.output);
            indices_[i] = std::move(r.indices);
        }
    }

    void backward(const Batch<T>&, const Batch<T>&, const Batch<T>& grad_out,
                  Batch<T>* grad_in) override {
        if (!grad_in) return;
        grad_in->resize(grad_out.size());
        for (std::size_t i = 0; i < grad_out.size(); ++i) {
            (*grad_in)[i] = maxpool3d_vjp(indices_[i], grad_out[i]);
        }
    }

    void signature(const Batch<T>&, std::uint64_t& h) const override {
        for (const auto& idx : indices_) {
            for (auto a : idx.argmax) this->mix(h, a);
        }
    }

private:
    std::vector<PoolIndices> indices_;
};

template <class T>
class GlobalAvgPoolLayer final : public Layer<T> {
public:
    using Layer<T>::Layer;

    void forward(const Batch<T>& in, Batch<T>& out, const ForwardContext&) override {
        out.clear();
        for (const auto& v : in) out.emplace_back(Dims::vector(v.dims().c), global_avg_pool3d(v));
    }

    void backward(const Batch<T>& in, const Batch<T>&, const Batch<T>& grad_out,
                  Batch<T>* grad_in) override {
        if (!grad_in) return;
        grad_in->clear();
        for (std::size_t i = 0; i < in.size(); ++i) {
            grad_in->push_back(global_avg_pool3d_vjp<T>(in[i].dims(), grad_out[i].data()));
        }
    }
};

template <class T>
class FlattenLayer final : public Layer<T> {
public:
    using Layer<T>::Layer;

    void forward(const Batch<T>& in, Batch<T>& out, const ForwardContext&) override {
        out.clear();
        for (const auto& v : in) out.emplace_back(Dims::vector(v.size()), flatten(v));
    }

    void backward(const Batch<T>& in, const Batch<T>&, const Batch<T>& grad_out,
                  Batch<T>* grad_in) override {
        if (!grad_in) return;
        grad_in->clear();
        for (std::size_t i = 0; i < in.size(); ++i) grad_in->push_back(grad_out[i].reshaped(in[i].dims()));
    }
};

/// Inverted dropout: kept units are scaled by 1/(1 - rate) in train mode.
template <class T>
class DropoutLayer final : public Layer<T> {
public:
    using Layer<T>::Layer;

    void forward(const Batch<T>& in, Batch<T>& out, const ForwardContext& ctx) override {
        out = in;
        active_ = ctx.mode == Mode::train && this->spec_.rate > 0.0;
        if (!active_) return;
        const double keep = 1.0 - this->spec_.rate;
        const T scale = static_cast<T>(1.0 / keep);
        masks_.assign(in.size(), {});
        for (std::size_t n = 0; n < in.size(); ++n) {
            Rng rng = Rng::substream(ctx.seed, "dropout", this->id(), n);
            auto& mask = masks_[n];
            mask.resize(in[n].size());
            auto d = out[n].data();
            for (std::size_t i = 0; i < d.size(); ++i) {
                mask[i] = rng.uniform() < keep ? scale : T{0};
                d[i] *= mask[i];
            }
        }
    }

    void backward(const Batch<T>&, const Batch<T>&, const Batch<T>& grad_out,
                  Batch<T>* grad_in) override {
        if (!grad_in) return;
        *grad_in = grad_out;
        if (!active_) return;
        for (std::size_t n = 0; n < grad_in->size(); ++n) {
            auto g = (*grad_in)[n].data();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] *= masks_[n][i];
        }
    }

private:
    bool active_ = false;
    std::vector<std::vector<T>> masks_;
};

/// Per-channel batch normalization over (batch, x, y, z).
template <class T>
class BatchNormLayer final : public Layer<T> {
public:
    BatchNormLayer(const LayerSpec& spec, std::string name, std::size_t channels)
        : Layer<T>(spec, std::move(name)),
          gamma_(this->name_ + "/gamma", ParamRole::bn_gamma, {channels}, T{1}),
          beta_(this->name_ + "/beta", ParamRole::bn_beta, {channels}, T{0}),
          moving_mean_{this->name_ + "/moving_mean", std::vector<T>(channels, T{0})},
          moving_var_{this->name_ + "/moving_variance", std::vector<T>(channels, T{1})},
          channels_(channels) {
        gamma_.trainable = beta_.trainable = spec.trainable;
    }

    bool pinned() const noexcept { return this->spec_.bn_pinned; }

    void forward(const Batch<T>& in, Batch<T>& out, const ForwardContext& ctx) override {
        const std::size_t c = channels_;
        use_batch_stats_ = ctx.mode == Mode::train && !pinned();
        mean_.assign(c, 0.0);
        inv_std_.assign(c, 0.0);
        if (use_batch_stats_) {
            std::vector<double> sum(c, 0.0);
            std::vector<double> sq(c, 0.0);
            std::size_t count = 0;
            for (const auto& v : in) {
                const auto d = v.data();
                for (std::size_t i = 0; i < d.size(); i += c) {
                    for (std::size_t j = 0; j < c; ++j) sum[j] += static_cast<double>(d[i + j]);
                }
                count += v.dims().spatial();
            }
            for (std::size_t j = 0; j < c; ++j) mean_[j] = sum[j] / double(count);
            for (const auto& v : in) {
                const auto d = v.data();
                for (std::size_t i = 0; i < d.size(); i += c) {
                    for (std::size_t j = 0; j < c; ++j) {
                        const double e = static_cast<double>(d[i + j]) - mean_[j];
                        sq[j] += e * e;
                    }
                }
            }
            const double m = this->spec_.momentum;
            for (std::size_t j = 0; j < c; ++j) {
                const double var = sq[j] / double(count);
                inv_std_[j] = 1.0 / std::sqrt(var + kBatchNormEpsilon);
                moving_mean_.value[j] =
                    static_cast<T>(m * double(moving_mean_.value[j]) + (1.0 - m) * mean_[j]);
                moving_var_.value[j] =
                    static_cast<T>(m * double(moving_var_.value[j]) + (1.0 - m) * var);
            }
        } else {
            for (std::size_t j = 0; j < c; ++j) {
                mean_[j] = static_cast<double>(moving_mean_.value[j]);
                inv_std_[j] = 1.0 / std::sqrt(static_cast<double>(moving_var_.value[j]) + kBatchNormEpsilon);
            }
        }
        out = in;
        for (auto& v : out) {
            auto d = v.data();
            for (std::size_t i = 0; i < d.size(); i += c) {
                for (std::size_t j = 0; j < c; ++j) {
                    const double xhat = (static_cast<double>(d[i + j]) - mean_[j]) * inv_std_[j];
                    d[i + j] = static_cast<T>(xhat * double(gamma_.value[j]) + double(beta_.value[j]));
                }
            }
        }
    }

    void backward(const Batch<T>& in, const Batch<T>&, const Batch<T>& grad_out,
                  Batch<T>* grad_in) override {
        const std::size_t c = channels_;
        std::vector<double> sum_g(c, 0.0);
        std::vector<double> sum_gx(c, 0.0);
        std::size_t count = 0;
        for (std::size_t n = 0; n < in.size(); ++n) {
            const auto x = in[n].data();
            const auto g = grad_out[n].data();
            for (std::size_t i = 0; i < x.size(); i += c) {
                for (std::size_t j = 0; j < c; ++j) {
                    const double xhat = (static_cast<double>(x[i + j]) - mean_[j]) * inv_std_[j];
                    sum_g[j] += static_cast<double>(g[i + j]);
                    sum_gx[j] += static_cast<double>(g[i + j]) * xhat;
                }
            }
            count += in[n].dims().spatial();
        }
        for (std::size_t j = 0; j < c; ++j) {
            gamma_.grad[j] += static_cast<T>(sum_gx[j]);
            beta_.grad[j] += static_cast<T>(sum_g[j]);
        }
        if (!grad_in) return;
        *grad_in = grad_out;
        const double inv_n = 1.0 / double(count);
        for (std::size_t n = 0; n < in.size(); ++n) {
            const auto x = in[n].data();
            auto g = (*grad_in)[n].data();
            for (std::size_t i = 0; i < x.size(); i += c) {
                for (std::size_t j = 0; j < c; ++j) {
                    const double scale = double(gamma_.value[j]) * inv_std_[j];
                    const double gv = static_cast<double>(g[i + j]);
                    if (use_batch_stats_) {
                        const double xhat = (static_cast<double>(x[i + j]) - mean_[j]) * inv_std_[j];
                        g[i + j] = static_cast<T>(scale * (gv - inv_n * sum_g[j] - xhat * inv_n * sum_gx[j]));
                    } else {
                        g[i + j] = static_cast<T>(scale * gv);
                    }
                }
            }
        }
    }

    void collect_params(std::vector<Param<T>*>& ps) override {
        ps.push_back(&gamma_);
        ps.push_back(&beta_);
    }
    void collect_state(std::vector<StateTensor<T>*>& st) override {
        st.push_back(&moving_mean_);
        st.push_back(&moving_var_);
    }

private:
    Param<T> gamma_;
    Param<T> beta_;
    StateTensor<T> moving_mean_;
    StateTensor<T> moving_var_;
    std::size_t channels_;
    bool use_batch_stats_ = false;
    std::vector<double> mean_;
    std::vector<double> inv_std_;
};

// ---------------------------------------------------------------------------

template <class T>
std::unique_ptr<Layer<T>> make_layer(const LayerSpec& spec, const std::string& name, const Dims& in);

/// Ordered layer stack that caches every intermediate activation.
template <class T>
class Sequential {
public:
    Sequential() = default;

    Sequential(const std::vector<LayerSpec>& specs, Dims input, const std::string& prefix)
        : input_dims_(input) {
        Dims d = input;
        for (const auto& s : specs) {
            const std::string base = prefix + s.name;
            if (s.kind == LayerKind::conv3d || s.kind == LayerKind::dense) {
                layers_.push_back(make_layer<T>(s, base, d));
                d = layer_output_dims(s, d);
                if (s.activation != Activation::none) {
                    layers_.push_back(std::make_unique<ActivationLayer<T>>(
                        LayerSpec::act(s.activation), base + "/" + to_string(s.activation),
                        s.activation));
                }
            } else {
                layers_.push_back(make_layer<T>(s, base, d));
                d = layer_output_dims(s, d);
            }
        }
        output_dims_ = d;
        acts_.resize(layers_.size() + 1);
    }

    Sequential(Sequential&&) noexcept = default;
    Sequential& operator=(Sequential&&) noexcept = default;

    const Dims& input_dims() const noexcept { return input_dims_; }
    const Dims& output_dims() const noexcept { return output_dims_; }
    std::size_t size() const noexcept { return layers_.size(); }
    bool empty() const noexcept { return layers_.empty(); }
    Layer<T>& layer(std::size_t i) { return *layers_[i]; }

    const Batch<T>& forward(const Batch<T>& in, const ForwardContext& ctx) {
        if (batch_dims(in) != input_dims_) {
            throw ShapeError("input dims " + in.front().dims().str() + " != declared " +
                             input_dims_.str());
        }
        acts_[0] = in;
        return forward_from(0, ctx);
    }

    /// Recomputes layers [start, end) from the cached input of layer `start`.
    const Batch<T>& forward_from(std::size_t start, const ForwardContext& ctx) {
        for (std::size_t i = start; i < layers_.size(); ++i) {
            layers_[i]->forward(acts_[i], acts_[i + 1], ctx);
            for (const auto& v : acts_[i + 1]) {
                if (!v.all_finite()) {
                    throw NumericError("non-finite activation after layer '" + layers_[i]->name() + "'");
                }
            }
        }
        return acts_.back();
    }

    const Batch<T>& output() const { return acts_.back(); }

    /// Returns the input cotangent when need_input_grad, otherwise an empty batch.
    Batch<T> backward(const Batch<T>& grad_out, bool need_input_grad) {
        std::size_t first_trainable = layers_.size();
        for (std::size_t i = 0; i < layers_.size(); ++i) {
            if (layers_[i]->has_trainable_params()) {
                first_trainable = i;
                break;
            }
        }
        const std::size_t stop = need_input_grad ? 0 : first_trainable;
        Batch<T> g = grad_out;
        Batch<T> gin;
        for (std::size_t i = layers_.size(); i-- > stop;) {
            const bool want_input = i > stop || need_input_grad;
            layers_[i]->backward(acts_[i], acts_[i + 1], g, want_input ? &gin : nullptr);
            if (want_input) g.swap(gin);
        }
        if (!need_input_grad) return {};
        if (layers_.empty()) return grad_out;
        return g;
    }

    void collect_params(std::vector<Param<T>*>& ps) {
        for (auto& l : layers_) l->collect_params(ps);
    }
    void collect_state(std::vector<StateTensor<T>*>& st) {
        for (auto& l : layers_) l->collect_state(st);
    }
    void signature(std::uint64_t& h) const {
        for (std::size_t i = 0; i < layers_.size(); ++i) layers_[i]->signature(acts_[i], h);
    }

private:
    std::vector<std::unique_ptr<Layer<T>>> layers_;
    std::vector<Batch<T>> acts_;
    Dims input_dims_;
    Dims output_dims_;
};

/// y = F(x) + shortcut(x) with F = conv3(stride) -> BN -> ReLU -> conv3 -> BN
/// and shortcut = identity or conv1(stride) -> BN when extents change. The
/// post-addition ReLU is a separate layer in the model description.
template <class T>
class ResidualBlockLayer final : public Layer<T> {
public:
    ResidualBlockLayer(const LayerSpec& spec, std::string name, const Dims& in)
        : Layer<T>(spec, std::move(name)) {
        auto inner = [&](LayerSpec s, const char* n) {
            s.name = n;
            s.trainable = spec.trainable;
            s.bn_pinned = spec.bn_pinned;
            return s;
        };
        std::vector<LayerSpec> path = {
            inner(LayerSpec::conv(spec.filters, 3, 1, spec.stride, Activation::none), "conv1"),
            inner(LayerSpec::batch_norm(spec.momentum), "bn1"),
            inner(LayerSpec::act(Activation::relu), "relu1"),
            inner(LayerSpec::conv(spec.filters, 3, 1, 1, Activation::none), "conv2"),
            inner(LayerSpec::batch_norm(spec.momentum), "bn2"),
        };
        path_ = Sequential<T>(path, in, this->name_ + "/");
        if (residual_needs_projection(spec, in)) {
            std::vector<LayerSpec> proj = {
                inner(LayerSpec::conv(spec.filters, 1, 0, spec.stride, Activation::none), "proj"),
                inner(LayerSpec::batch_norm(spec.momentum), "proj_bn"),
            };
            shortcut_ = Sequential<T>(proj, in, this->name_ + "/");
            projected_ = true;
        }
    }

    bool projected() const noexcept { return projected_; }
    Sequential<T>& path() noexcept { return path_; }
    Sequential<T>& shortcut() noexcept { return shortcut_; }

    void forward(const Batch<T>& in, Batch<T>& out, const ForwardContext& ctx) override {
        out = path_.forward(in, ctx);
        const Batch<T>& skip = projected_ ? shortcut_.forward(in, ctx) : in;
        for (std::size_t n = 0; n < out.size(); ++n) {
            auto o = out[n].data();
            const auto s = skip[n].data();
            for (std::size_t i = 0; i < o.size(); ++i) o[i] += s[i];
        }
    }

    void backward(const Batch<T>&, const Batch<T>&, const Batch<T>& grad_out,
                  Batch<T>* grad_in) override {
        const bool need = grad_in != nullptr;
        Batch<T> g_path = path_.backward(grad_out, need);
        Batch<T> g_skip = projected_ ? shortcut_.backward(grad_out, need) : grad_out;
        if (!need) return;
        for (std::size_t n = 0; n < g_path.size(); ++n) {
            auto a = g_path[n].data();
            const auto b = g_skip[n].data();
            for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
        }
        *grad_in = std::move(g_path);
    }

    void collect_params(std::vector<Param<T>*>& ps) override {
        path_.collect_params(ps);
        shortcut_.collect_params(ps);
    }
    void collect_state(std::vector<StateTensor<T>*>& st) override {
        path_.collect_state(st);
        shortcut_.collect_state(st);
    }
    void signature(const Batch<T>&, std::uint64_t& h) const override {
        path_.signature(h);
        shortcut_.signature(h);
    }

private:
    Sequential<T> path_;
    Sequential<T> shortcut_;
    bool projected_ = false;
};

template <class T>
std::unique_ptr<Layer<T>> make_layer(const LayerSpec& spec, const std::string& name, const Dims& in) {
    switch (spec.kind) {
        case LayerKind::conv3d: return std::make_unique<Conv3dLayer<T>>(spec, name, in.c);
        case LayerKind::dense: return std::make_unique<DenseLayer<T>>(spec, name, in.c);
        case LayerKind::maxpool3d: return std::make_unique<MaxPoolLayer<T>>(spec, name);
        case LayerKind::global_avg_pool3d: return std::make_unique<GlobalAvgPoolLayer<T>>(spec, name);
        case LayerKind::flatten: return std::make_unique<FlattenLayer<T>>(spec, name);
        case LayerKind::batch_norm: return std::make_unique<BatchNormLayer<T>>(spec, name, in.c);
        case LayerKind::dropout: return std::make_unique<DropoutLayer<T>>(spec, name);
        case LayerKind::activation:
            return std::make_unique<ActivationLayer<T>>(spec, name, spec.activation);
        case LayerKind::residual_block: return std::make_unique<ResidualBlockLayer<T>>(spec, name, in);
        case LayerKind::concatenate: break;
    }
    throw SpecError("layer kind '" + std::string(to_string(spec.kind)) + "' cannot be instantiated");
}

}  // namespace vcnn
