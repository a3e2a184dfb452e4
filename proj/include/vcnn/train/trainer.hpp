#pragma once

// Minibatch training with Adam, per-epoch exponential LR decay, optional
// augmentation of training samples, and optional early stopping.

#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "vcnn/augment/augment.hpp"
#include "vcnn/data/dataset.hpp"
#include "vcnn/error.hpp"
#include "vcnn/nn/model.hpp"
#include "vcnn/rng.hpp"
#include "vcnn/train/adam.hpp"
#include "vcnn/train/hyper.hpp"
#include "vcnn/train/loss.hpp"

namespace vcnn {

struct CurveRow {
    std::size_t epoch = 0;  // 1-based
    double train_loss = 0.0;
    double train_acc = 0.0;
    std::optional<double> val_loss;
    std::optional<double> val_acc;
};

using LearningCurve = std::vector<CurveRow>;

inline void write_curve_csv(std::ostream& os, const LearningCurve& curve) {
    const bool val = !curve.empty() && curve.front().val_loss.has_value();
    os << "epoch,train_loss,train_acc";
    if (val) os << ",val_loss,val_acc";
    os << '\n';
    os.precision(9);
    for (const auto& r : curve) {
        os << r.epoch << ',' << r.train_loss << ',' << r.train_acc;
        if (val) os << ',' << r.val_loss.value_or(NAN) << ',' << r.val_acc.value_or(NAN);
        os << '\n';
    }
}

struct EvalResult {
    double loss = 0.0;
    double accuracy = 0.0;
    std::vector<std::size_t> predictions;
};

template <class T>
std::vector<Batch<T>> gather_batch(const ExampleSet<T>& set, std::span<const std::size_t> idx) {
    if (set.empty()) throw InputError("empty example set");
    std::vector<Batch<T>> inputs(set.front().inputs.size());
    for (auto i : idx) {
        for (std::size_t b = 0; b < inputs.size(); ++b) inputs[b].push_back(set[i].inputs[b]);
    }
    return inputs;
}

/// Inference-mode loss (cross-entropy plus the L2 term) and accuracy.
template <class T>
EvalResult evaluate(Model<T>& model, const ExampleSet<T>& set, std::size_t batch_size, double l2_lambda = 0.0) {
    EvalResult r;
    if (set.empty()) return r;
    double loss = 0.0;
    std::size_t correct = 0;
    for (std::size_t start = 0; start < set.size(); start += batch_size) {
        const std::size_t end = std::min(set.size(), start + batch_size);
        std::vector<std::size_t> idx(end - start);
        std::iota(idx.begin(), idx.end(), start);
        std::vector<std::size_t> labels;
        for (auto i : idx) labels.push_back(set[i].label);
        const auto inputs = gather_batch(set, idx);
        const auto& probs = model.forward(std::span<const Batch<T>>(inputs), Mode::inference);
        loss += batch_cross_entropy(probs, labels) * double(idx.size());
        for (std::size_t k = 0; k < probs.size(); ++k) {
            const auto pred = argmax(probs[k].data());
            r.predictions.push_back(pred);
            correct += pred == labels[k];
        }
    }
    r.loss = loss / double(set.size()) + l2_penalty(model, l2_lambda);
    r.accuracy = double(correct) / double(set.size());
    return r;
}

struct TrainOptions {
    std::function<void(const CurveRow&)> on_epoch;
};

struct TrainResult {
    LearningCurve curve;
    bool stopped_early = false;
    std::size_t best_epoch = 0;  // 1-based; 0 when early stopping was off
};

/// Seed of one training sample's augmentation for one branch.
inline std::uint64_t augment_seed(std::uint64_t run_seed, std::size_t epoch, std::size_t sample, std::size_t branch) {
    return Rng::derive(Rng::derive(run_seed, "augment", epoch, sample), "branch", branch);
}

template <class T>
TrainResult train(Model<T>& model, const ExampleSet<T>& train_set, const ExampleSet<T>& val_set,
                  const HyperParams& hyper, const TrainOptions& opts = {}) {
    hyper.validate();
    if (train_set.empty()) throw InputError("training set is empty");
    for (const auto& ex : train_set) {
        if (ex.inputs.size() != model.input_count()) throw InputError("example arity does not match the model");
    }
    TrainResult result;
    if (hyper.epochs == 0) return result;

    Adam<T> adam(model.parameters());
    const bool early = hyper.patience.has_value() && !val_set.empty();
    double best_loss = std::numeric_limits<double>::infinity();
    std::optional<ModelSnapshot<T>> best;
    std::size_t waited = 0;

    std::vector<std::size_t> order(train_set.size());
    for (std::size_t epoch = 0; epoch < hyper.epochs; ++epoch) {
        const double lr = exp_decay_lr(hyper.lr0, hyper.decay_rate, epoch, hyper.epochs);
        std::iota(order.begin(), order.end(), 0);
        if (hyper.shuffle) {
            Rng rng = Rng::substream(hyper.seed, "shuffle", epoch);
            rng.shuffle(std::span<std::size_t>(order));
        }
        double loss_sum = 0.0;
        std::size_t correct = 0;
        std::size_t batch_index = 0;
        for (std::size_t start = 0; start < order.size(); start += hyper.batch_size, ++batch_index) {
            const std::size_t end = std::min(order.size(), start + hyper.batch_size);
            const std::span<const std::size_t> idx(order.data() + start, end - start);
            auto inputs = gather_batch(train_set, idx);
            if (hyper.augment && !hyper.augment->is_identity()) {
                for (std::size_t b = 0; b < inputs.size(); ++b) {
                    for (std::size_t k = 0; k < idx.size(); ++k) {
                        inputs[b][k] = augment(inputs[b][k], *hyper.augment, augment_seed(hyper.seed, epoch, idx[k], b));
                    }
                }
            }
            std::vector<std::size_t> labels;
            for (auto i : idx) labels.push_back(train_set[i].label);

            auto fail = [&](const std::string& what) {
                throw NumericError(what + " at epoch " + std::to_string(epoch + 1) + ", batch " +
                                   std::to_string(batch_index + 1));
            };
            Batch<T> grad;
            double loss = 0.0;
            try {
                const auto& probs = model.forward(std::span<const Batch<T>>(inputs), Mode::train,
                                                  Rng::derive(hyper.seed, "dropout", epoch, batch_index));
                loss = batch_cross_entropy(probs, labels, &grad);
                for (std::size_t k = 0; k < probs.size(); ++k) correct += argmax(probs[k].data()) == labels[k];
            } catch (const NumericError& e) {
                fail(e.what());
            }
            model.zero_grad();
            model.backward(grad);
            const double penalty = l2_penalty(model, hyper.l2_lambda, true);
            if (!std::isfinite(loss + penalty)) fail("non-finite loss");
            try {
                adam.step(lr);
            } catch (const NumericError& e) {
                fail(e.what());
            }
            loss_sum += (loss + penalty) * double(idx.size());
        }

        CurveRow row;
        row.epoch = epoch + 1;
        row.train_loss = loss_sum / double(order.size());
        row.train_acc = double(correct) / double(order.size());
        if (!val_set.empty()) {
            const auto ev = evaluate(model, val_set, hyper.batch_size, hyper.l2_lambda);
            if (!std::isfinite(ev.loss)) throw NumericError("non-finite validation loss at epoch " + std::to_string(epoch + 1));
            row.val_loss = ev.loss;
            row.val_acc = ev.accuracy;
        }
        result.curve.push_back(row);
        if (opts.on_epoch) opts.on_epoch(row);

        if (early) {
            if (*row.val_loss < best_loss) {
                best_loss = *row.val_loss;
                best = model.snapshot();
                result.best_epoch = row.epoch;
                waited = 0;
            } else if (++waited > *hyper.patience) {
                result.stopped_early = true;
                break;
            }
        }
    }
    if (early && best) model.restore(*best);
    return result;
}

}  // namespace vcnn
