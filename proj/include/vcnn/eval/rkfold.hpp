#pragma once

// Repeated stratified k-fold orchestration. Every (rep, fold) run builds a
// fresh model and optimizer from its own derived seed; runs may execute on a
// bounded pool of workers and are assembled in plan order.

#include <atomic>
#include <cmath>
#include <exception>
#include <functional>
#include <mutex>
#include <string>
#include <thread>
#include <type_traits>
#include <vector>

#include <nlohmann/json.hpp>

#include "vcnn/data/dataset.hpp"
#include "vcnn/eval/metrics.hpp"
#include "vcnn/eval/split.hpp"
#include "vcnn/nn/model.hpp"
#include "vcnn/train/trainer.hpp"

namespace vcnn {

struct RunResult {
    std::size_t rep = 0;
    std::size_t fold = 0;
    std::uint64_t seed = 0;
    bool failed = false;
    std::string error;
    ConfusionMatrix confusion{3};
    double val_accuracy = 0.0;
    double val_loss = 0.0;
    LearningCurve curve;
};

struct EvalReport {
    std::size_t reps = 0;
    std::size_t k = 0;
    std::uint64_t seed = 0;
    std::vector<RunResult> runs;
    double mean_accuracy = 0.0;
    double std_accuracy = 0.0;
    std::size_t failed_runs = 0;
    bool flagged = false;
    LearningCurve mean_curve;
    nlohmann::json spec;
    nlohmann::json hyper;
};

inline std::uint64_t run_seed(std::uint64_t master, std::size_t rep, std::size_t fold) {
    return Rng::derive(master, "run", rep, fold);
}

/// Pointwise mean over the epochs every curve reached.
inline LearningCurve mean_curve(const std::vector<const LearningCurve*>& curves) {
    LearningCurve out;
    if (curves.empty()) return out;
    std::size_t len = curves.front()->size();
    for (auto* c : curves) len = std::min(len, c->size());
    for (std::size_t e = 0; e < len; ++e) {
        CurveRow row;
        row.epoch = e + 1;
        double vl = 0.0, va = 0.0;
        bool has_val = true;
        for (auto* c : curves) {
            row.train_loss += (*c)[e].train_loss;
            row.train_acc += (*c)[e].train_acc;
            has_val = has_val && (*c)[e].val_loss.has_value();
            vl += (*c)[e].val_loss.value_or(0.0);
            va += (*c)[e].val_acc.value_or(0.0);
        }
        const double n = double(curves.size());
        row.train_loss /= n;
        row.train_acc /= n;
        if (has_val) {
            row.val_loss = vl / n;
            row.val_acc = va / n;
        }
        out.push_back(row);
    }
    return out;
}

struct RkfoldOptions {
    std::size_t jobs = 1;
    std::function<void(const RunResult&)> on_run;  // called from the assembling thread
};

template <class T = float>
ExampleSet<T> subset(const ExampleSet<T>& data, const std::vector<std::size_t>& idx) {
    ExampleSet<T> out;
    out.reserve(idx.size());
    for (auto i : idx) out.push_back(data.at(i));
    return out;
}

/// Applied to every freshly built fold model, e.g. to load pretrained tensors.
template <class T>
using WarmStart = std::function<void(Model<T>&)>;

template <class T = float>
RunResult run_one(const ModelSpec& spec, const ExampleSet<T>& data, const HyperParams& hyper, const FoldPlan& plan,
                  std::size_t rep, std::size_t fold, const std::type_identity_t<WarmStart<T>>& warm_start = {}) {
    RunResult r;
    r.rep = rep;
    r.fold = fold;
    r.seed = run_seed(hyper.seed, rep, fold);
    const auto& val_idx = plan.val(rep, fold);
    const auto train_idx = plan.train(rep, fold);
    assert_disjoint(train_idx, val_idx);
    try {
        HyperParams h = hyper;
        h.seed = r.seed;
        Model<T> model = build<T>(spec, Rng::derive(r.seed, "init"));
        if (warm_start) warm_start(model);
        const auto train_set = subset(data, train_idx);
        const auto val_set = subset(data, val_idx);
        r.curve = train(model, train_set, val_set, h).curve;
        const auto ev = evaluate(model, val_set, h.batch_size, h.l2_lambda);
        std::vector<std::size_t> truth;
        for (const auto& ex : val_set) truth.push_back(ex.label);
        r.confusion = confusion_matrix(truth, ev.predictions, spec.classes);
        r.val_accuracy = ev.accuracy;
        r.val_loss = ev.loss;
    } catch (const NumericError& e) {
        r.failed = true;
        r.error = e.what();
    }
    return r;
}

template <class T = float>
EvalReport run_rkfold(const ModelSpec& spec_in, const ExampleSet<T>& data, const HyperParams& hyper,
                      const FoldPlan& plan, const RkfoldOptions& opts = {},
                      const std::type_identity_t<WarmStart<T>>& warm_start = {}) {
    if (plan.n != data.size()) throw InputError("fold plan does not cover the dataset");
    const ModelSpec spec = apply_overrides(spec_in, hyper);
    EvalReport rep;
    rep.reps = plan.reps;
    rep.k = plan.k;
    rep.seed = hyper.seed;
    rep.spec = to_json(spec);
    rep.hyper = to_json(hyper);
    rep.runs.resize(plan.runs());

    std::atomic<std::size_t> next{0};
    std::mutex mu;
    std::exception_ptr first_error;
    auto worker = [&] {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= plan.runs()) return;
            try {
                rep.runs[i] = run_one<T>(spec, data, hyper, plan, i / plan.k, i % plan.k, warm_start);
            } catch (...) {
                std::lock_guard lock(mu);
                if (!first_error) first_error = std::current_exception();
                next = plan.runs();
            }
        }
    };
    const std::size_t jobs = std::max<std::size_t>(1, std::min(opts.jobs, plan.runs()));
    if (jobs == 1) {
        for (std::size_t i = 0; i < plan.runs(); ++i) {
            rep.runs[i] = run_one<T>(spec, data, hyper, plan, i / plan.k, i % plan.k, warm_start);
            if (opts.on_run) opts.on_run(rep.runs[i]);
        }
    } else {
        std::vector<std::thread> pool;
        for (std::size_t j = 0; j < jobs; ++j) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
        if (first_error) std::rethrow_exception(first_error);
        if (opts.on_run) {
            for (const auto& r : rep.runs) opts.on_run(r);
        }
    }

    std::vector<const LearningCurve*> curves;
    double sum = 0.0, sq = 0.0;
    for (const auto& r : rep.runs) {
        if (r.failed) {
            ++rep.failed_runs;
            continue;
        }
        curves.push_back(&r.curve);
        sum += r.val_accuracy;
        sq += r.val_accuracy * r.val_accuracy;
    }
    const double n = double(curves.size());
    if (n > 0) {
        rep.mean_accuracy = sum / n;
        rep.std_accuracy = std::sqrt(std::max(0.0, sq / n - rep.mean_accuracy * rep.mean_accuracy));
    }
    rep.flagged = rep.failed_runs > 0;
    rep.mean_curve = mean_curve(curves);
    return rep;
}

inline nlohmann::json curve_json(const LearningCurve& c) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& r : c) {
        nlohmann::json j{{"epoch", r.epoch}, {"train_loss", r.train_loss}, {"train_acc", r.train_acc}};
        if (r.val_loss) j["val_loss"] = *r.val_loss;
        if (r.val_acc) j["val_acc"] = *r.val_acc;
        arr.push_back(j);
    }
    return arr;
}

inline nlohmann::json to_json(const EvalReport& r) {
    nlohmann::json j;
    j["repetitions"] = r.reps;
    j["folds"] = r.k;
    j["seed"] = r.seed;
    j["run_count"] = r.runs.size();
    j["failed_runs"] = r.failed_runs;
    j["flagged"] = r.flagged;
    j["mean_val_accuracy"] = r.mean_accuracy;
    j["std_val_accuracy"] = r.std_accuracy;
    j["runs"] = nlohmann::json::array();
    for (const auto& run : r.runs) {
        nlohmann::json rj{{"repetition", run.rep}, {"fold", run.fold}, {"seed", run.seed}, {"failed", run.failed}};
        if (run.failed) {
            rj["error"] = run.error;
        } else {
            rj["val_accuracy"] = run.val_accuracy;
            rj["val_loss"] = run.val_loss;
            rj["confusion_matrix"] = to_json(run.confusion);
            rj["curve"] = curve_json(run.curve);
        }
        j["runs"].push_back(rj);
    }
    j["mean_curve"] = curve_json(r.mean_curve);
    j["spec"] = r.spec;
    j["hyper"] = r.hyper;
    return j;
}

}  // namespace vcnn
