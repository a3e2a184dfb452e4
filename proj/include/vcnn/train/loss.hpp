#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "vcnn/error.hpp"
#include "vcnn/nn/model.hpp"

namespace vcnn {

inline constexpr double kProbClampLo = 1e-7;
inline constexpr double kProbClampHi = 1.0 - 1e-7;

template <class T>
std::vector<T> softmax(std::span<const T> logits) {
    if (logits.empty()) throw InputError("softmax of an empty vector");
    for (T v : logits) {
        if (!std::isfinite(v)) throw NumericError("softmax input is not finite");
    }
    T mx = logits[0];
    for (T v : logits) mx = std::max(mx, v);
    std::vector<T> out(logits.size());
    T sum{0};
    for (std::size_t i = 0; i < logits.size(); ++i) {
        out[i] = std::exp(logits[i] - mx);
        sum += out[i];
    }
    for (auto& e : out) e /= sum;
    return out;
}

template <class T>
std::vector<T> softmax(const std::vector<T>& logits) {
    return softmax(std::span<const T>(logits));
}

inline void check_one_hot(std::span<const double> y) {
    std::size_t ones = 0;
    for (double v : y) {
        if (v == 1.0) {
            ++ones;
        } else if (v != 0.0) {
            throw InputError("target is not one-hot");
        }
    }
    if (ones != 1) throw InputError("target is not one-hot");
}

/// -sum y_j log p_j with p clamped to [1e-7, 1 - 1e-7].
template <class T>
double cross_entropy(std::span<const double> y, std::span<const T> p) {
    if (y.size() != p.size()) throw InputError("target and prediction widths differ");
    check_one_hot(y);
    double loss = 0.0;
    for (std::size_t j = 0; j < y.size(); ++j) {
        if (y[j] != 0.0) loss -= y[j] * std::log(std::clamp(double(p[j]), kProbClampLo, kProbClampHi));
    }
    return loss;
}

inline std::vector<double> one_hot(std::size_t label, std::size_t classes) {
    if (label >= classes) throw InputError("label " + std::to_string(label) + " out of range");
    std::vector<double> y(classes, 0.0);
    y[label] = 1.0;
    return y;
}

/// Mean cross-entropy over a batch of probability vectors, with the
/// cotangent of the mean loss w.r.t. the probabilities when `grad` is set.
template <class T>
double batch_cross_entropy(const Batch<T>& probs, std::span<const std::size_t> labels, Batch<T>* grad = nullptr) {
    if (probs.size() != labels.size()) throw InputError("batch and label counts differ");
    const double inv_n = 1.0 / double(probs.size());
    if (grad) *grad = probs;
    double total = 0.0;
    for (std::size_t i = 0; i < probs.size(); ++i) {
        const auto p = probs[i].data();
        const auto y = one_hot(labels[i], p.size());
        total += cross_entropy<T>(y, p);
        if (grad) {
            auto g = (*grad)[i].data();
            for (std::size_t j = 0; j < p.size(); ++j) {
                const double pj = double(p[j]);
                const bool clamped = pj < kProbClampLo || pj > kProbClampHi;
                g[j] = static_cast<T>(y[j] == 0.0 || clamped ? 0.0 : -y[j] / pj * inv_n);
            }
        }
    }
    return total * inv_n;
}

/// lambda_p * sum w^2 over every parameter flagged for L2 (weights only).
/// With `add_grad`, 2 lambda_p w is added to those gradients.
template <class T>
double l2_penalty(Model<T>& model, double default_lambda, bool add_grad = false) {
    double total = 0.0;
    for (auto* p : model.parameters()) {
        if (!p->l2 || !p->is_weight()) continue;
        const double lambda = p->l2_lambda.value_or(default_lambda);
        if (lambda == 0.0) continue;
        double sq = 0.0;
        for (T w : p->value) sq += double(w) * double(w);
        total += lambda * sq;
        if (add_grad && p->trainable) {
            for (std::size_t i = 0; i < p->size(); ++i) {
                p->grad[i] += static_cast<T>(2.0 * lambda * double(p->value[i]));
            }
        }
    }
    return total;
}

template <class T>
std::size_t argmax(std::span<const T> v) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < v.size(); ++i) {
        if (v[i] > v[best]) best = i;
    }
    return best;
}

}  // namespace vcnn
