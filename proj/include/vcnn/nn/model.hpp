#pragma once

// A materialized network: one or two branch stacks, an optional fusion head,
// and the flat parameter/state lists the optimizer and checkpoints work on.

#include <cmath>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "vcnn/error.hpp"
#include "vcnn/nn/layers.hpp"
#include "vcnn/nn/spec.hpp"
#include "vcnn/rng.hpp"

namespace vcnn {

/// Where a parameter lives: stage < branch count is a branch, otherwise the head.
template <class T>
struct ParamSite {
    std::size_t stage = 0;
    std::size_t layer = 0;
    Param<T>* param = nullptr;
};

template <class T>
struct ModelSnapshot {
    std::vector<std::vector<T>> params;
    std::vector<std::vector<T>> state;
};

template <class T>
class Model {
public:
    explicit Model(ModelSpec spec) : spec_(std::move(spec)) {
        validate(spec_);
        const bool two = spec_.two_branch();
        std::size_t fused = 0;
        for (const auto& br : spec_.branches) {
            branches_.emplace_back(br.layers, br.input, two ? br.name + "/" : "");
            fused += branches_.back().output_dims().c;
        }
        if (two) head_ = Sequential<T>(spec_.head, Dims::vector(fused), "");
        collect();
    }

    Model(const Model&) = delete;
    Model& operator=(const Model&) = delete;
    Model(Model&&) noexcept = default;
    Model& operator=(Model&&) noexcept = default;

    const ModelSpec& spec() const noexcept { return spec_; }
    std::size_t input_count() const noexcept { return branches_.size(); }
    std::size_t stage_count() const noexcept { return branches_.size() + (head_.empty() ? 0 : 1); }
    Sequential<T>& stage(std::size_t s) { return s < branches_.size() ? branches_[s] : head_; }
    Sequential<T>& branch(std::size_t b) { return branches_.at(b); }
    Sequential<T>& head() { return head_; }

    const std::vector<Param<T>*>& parameters() const noexcept { return params_; }
    const std::vector<StateTensor<T>*>& state() const noexcept { return state_; }
    const std::vector<ParamSite<T>>& param_sites() const noexcept { return sites_; }

    Param<T>* find_param(const std::string& name) const {
        auto it = by_name_.find(name);
        return it == by_name_.end() ? nullptr : params_[it->second];
    }
    StateTensor<T>* find_state(const std::string& name) const {
        for (auto* s : state_) {
            if (s->name == name) return s;
        }
        return nullptr;
    }

    std::size_t parameter_count() const {
        std::size_t n = 0;
        for (auto* p : params_) n += p->size();
        for (auto* s : state_) n += s->value.size();
        return n;
    }
    std::size_t trainable_count() const {
        std::size_t n = 0;
        for (auto* p : params_) n += p->trainable ? p->size() : 0;
        return n;
    }

    /// Glorot-uniform weights, zero biases, unit gamma, zero beta, moving
    /// stats (0, 1). Each tensor draws from its own named substream.
    void initialize(std::uint64_t seed) {
        for (auto* p : params_) {
            switch (p->role) {
                case ParamRole::conv_weights:
                case ParamRole::dense_weights: {
                    Rng rng = Rng::substream(seed, "init", fnv1a(p->name));
                    const double limit = std::sqrt(6.0 / double(p->fan_in + p->fan_out));
                    for (auto& v : p->value) v = static_cast<T>(rng.uniform(-limit, limit));
                    break;
                }
                case ParamRole::bn_gamma: std::fill(p->value.begin(), p->value.end(), T{1}); break;
                default: std::fill(p->value.begin(), p->value.end(), T{0}); break;
            }
        }
        for (auto* s : state_) {
            const bool var = s->name.ends_with("moving_variance");
            std::fill(s->value.begin(), s->value.end(), var ? T{1} : T{0});
        }
    }

    const Batch<T>& forward(std::span<const Batch<T>> inputs, Mode mode, std::uint64_t seed = 0) {
        if (inputs.size() != branches_.size()) {
            throw ShapeError("model expects " + std::to_string(branches_.size()) + " inputs, got " +
                             std::to_string(inputs.size()));
        }
        ctx_ = ForwardContext{mode, seed};
        for (std::size_t b = 0; b < branches_.size(); ++b) {
            if (inputs[b].size() != inputs[0].size()) throw ShapeError("branch batch sizes differ");
            branches_[b].forward(inputs[b], ctx_);
        }
        return finish(0);
    }

    const Batch<T>& forward(const Batch<T>& input, Mode mode, std::uint64_t seed = 0) {
        return forward(std::span<const Batch<T>>(&input, 1), mode, seed);
    }

    /// Replays the last forward from (stage, layer) with the same mode and
    /// seed; upstream cached activations are reused.
    const Batch<T>& forward_from(std::size_t stage_index, std::size_t layer) {
        if (stage_index < branches_.size()) {
            branches_[stage_index].forward_from(layer, ctx_);
            return finish(0);
        }
        return finish(layer);
    }

    const Batch<T>& output() const {
        return head_.empty() ? branches_.front().output() : head_.output();
    }

    /// Backpropagates the cotangent of the model output into parameter grads.
    void backward(const Batch<T>& grad_out) {
        if (head_.empty()) {
            branches_.front().backward(grad_out, false);
            return;
        }
        const Batch<T> g = head_.backward(grad_out, true);
        std::size_t offset = 0;
        for (auto& br : branches_) {
            const std::size_t w = br.output_dims().c;
            Batch<T> slice;
            for (const auto& v : g) {
                const auto d = v.data();
                slice.emplace_back(Dims::vector(w),
                                   std::vector<T>(d.begin() + offset, d.begin() + offset + w));
            }
            br.backward(slice, false);
            offset += w;
        }
    }

    void zero_grad() {
        for (auto* p : params_) std::fill(p->grad.begin(), p->grad.end(), T{0});
    }

    /// Hash of the discrete activation pattern of the last forward.
    std::uint64_t kink_signature() const {
        std::uint64_t h = 0x6b696e6b;
        for (const auto& br : branches_) br.signature(h);
        head_.signature(h);
        return h;
    }

    ModelSnapshot<T> snapshot() const {
        ModelSnapshot<T> s;
        for (auto* p : params_) s.params.push_back(p->value);
        for (auto* st : state_) s.state.push_back(st->value);
        return s;
    }

    void restore(const ModelSnapshot<T>& s) {
        if (s.params.size() != params_.size() || s.state.size() != state_.size()) {
            throw ShapeError("snapshot does not match model layout");
        }
        for (std::size_t i = 0; i < params_.size(); ++i) params_[i]->value = s.params[i];
        for (std::size_t i = 0; i < state_.size(); ++i) state_[i]->value = s.state[i];
    }

    /// Copies every same-named, same-shaped tensor from `src`, with names in
    /// this model formed as prefix + source name. Returns the number copied.
    template <class U>
    std::size_t copy_from(const Model<U>& src, const std::string& prefix = "") {
        std::size_t copied = 0;
        for (auto* sp : src.parameters()) {
            if (auto* dp = find_param(prefix + sp->name); dp && dp->shape == sp->shape) {
                std::copy(sp->value.begin(), sp->value.end(), dp->value.begin());
                ++copied;
            }
        }
        for (auto* ss : src.state()) {
            if (auto* ds = find_state(prefix + ss->name); ds && ds->value.size() == ss->value.size()) {
                std::copy(ss->value.begin(), ss->value.end(), ds->value.begin());
                ++copied;
            }
        }
        return copied;
    }

private:
    const Batch<T>& finish(std::size_t head_layer) {
        if (head_.empty()) return check(branches_.front().output());
        if (head_layer > 0) return check(head_.forward_from(head_layer, ctx_));
        const std::size_t n = branches_.front().output().size();
        Batch<T> fused;
        fused.reserve(n);
        for (std::size_t i = 0; i < n; ++i) {
            std::vector<T> v;
            for (const auto& br : branches_) {
                const auto d = br.output()[i].data();
                v.insert(v.end(), d.begin(), d.end());
            }
            fused.emplace_back(Dims::vector(v.size()), std::move(v));
        }
        return check(head_.forward(fused, ctx_));
    }

    static const Batch<T>& check(const Batch<T>& out) {
        for (const auto& v : out) {
            if (!v.all_finite()) throw NumericError("non-finite activation in model output");
        }
        return out;
    }

    void collect() {
        params_.clear();
        state_.clear();
        sites_.clear();
        by_name_.clear();
        for (std::size_t s = 0; s < stage_count(); ++s) {
            auto& seq = stage(s);
            for (std::size_t l = 0; l < seq.size(); ++l) {
                std::vector<Param<T>*> ps;
                seq.layer(l).collect_params(ps);
                for (auto* p : ps) {
                    if (!by_name_.emplace(p->name, params_.size()).second) {
                        throw SpecError("duplicate parameter name '" + p->name + "'");
                    }
                    params_.push_back(p);
                    sites_.push_back({s, l, p});
                }
                seq.layer(l).collect_state(state_);
            }
        }
    }

    ModelSpec spec_;
    std::vector<Sequential<T>> branches_;
    Sequential<T> head_;
    ForwardContext ctx_;
    std::vector<Param<T>*> params_;
    std::vector<StateTensor<T>*> state_;
    std::vector<ParamSite<T>> sites_;
    std::map<std::string, std::size_t> by_name_;
};

template <class T = float>
Model<T> build(const ModelSpec& spec, std::uint64_t seed) {
    Model<T> m(spec);
    m.initialize(seed);
    return m;
}

}  // namespace vcnn
