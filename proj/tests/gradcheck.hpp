#pragma once

// Whole-model central-difference gradient check in fp64, shared by the unit
// suite and the acceptance runner.

#include <cmath>
#include <string>
#include <vector>

#include "support.hpp"
#include "vcnn/nn/model.hpp"
#include "vcnn/train/loss.hpp"

namespace gradcheck {

struct Report {
    std::size_t checked = 0;
    std::size_t refined = 0;        // probe crossed a kink at `step`, passed at a finer step
    std::size_t skipped_kinks = 0;  // crossed a kink even at step / 100
    std::size_t failures = 0;
    double max_rel = 0.0;
    std::string worst;
};

struct Problem {
    std::vector<vcnn::Batch<double>> inputs;
    std::vector<std::size_t> labels;
};

inline Problem random_problem(const vcnn::ModelSpec& spec, std::size_t n, std::uint64_t seed) {
    Problem p;
    for (std::size_t b = 0; b < spec.branches.size(); ++b) {
        vcnn::Batch<double> batch;
        for (std::size_t i = 0; i < n; ++i) {
            batch.push_back(testing_support::random_volume(spec.branches[b].input, seed + 100 * b + i, 0.0, 1.0));
        }
        p.inputs.push_back(std::move(batch));
    }
    for (std::size_t i = 0; i < n; ++i) p.labels.push_back(i % spec.classes);
    return p;
}

/// Moves BN parameters and moving statistics off their initial values so
/// inference-mode checks exercise a non-trivial affine map.
inline void randomize_batch_norm(vcnn::Model<double>& model, std::uint64_t seed) {
    vcnn::Rng rng(seed);
    for (auto* p : model.parameters()) {
        if (p->role == vcnn::ParamRole::bn_gamma) {
            for (auto& v : p->value) v = rng.uniform(0.7, 1.3);
        } else if (p->role == vcnn::ParamRole::bn_beta) {
            for (auto& v : p->value) v = rng.uniform(-0.2, 0.2);
        }
    }
    for (auto* s : model.state()) {
        const bool var = s->name.ends_with("moving_variance");
        for (auto& v : s->value) v = var ? rng.uniform(0.5, 1.5) : rng.uniform(-0.2, 0.2);
    }
}

/// Loss = mean cross-entropy + L2 penalty under `mode`, with a fixed dropout
/// seed so the function being differentiated is deterministic. A probe that
/// changes the ReLU/argmax pattern is retried at step/10 and step/100; an
/// element still straddling a kink after that is skipped and counted.
inline Report check(vcnn::Model<double>& model, const Problem& prob, double step = 1e-3, double tol = 1e-4,
                    double floor = 1e-6, vcnn::Mode mode = vcnn::Mode::train,
                    std::uint64_t dropout_seed = 17) {
    using namespace vcnn;
    const double lambda = 1e-3;
    auto loss_now = [&](const Batch<double>& out) {
        return batch_cross_entropy(out, prob.labels) + l2_penalty(model, lambda);
    };

    model.zero_grad();
    Batch<double> g;
    batch_cross_entropy(model.forward(prob.inputs, mode, dropout_seed), prob.labels, &g);
    model.backward(g);
    l2_penalty(model, lambda, true);
    const std::uint64_t base_sig = model.kink_signature();

    Report rep;
    const ParamSite<double>* previous = nullptr;
    for (const auto& site : model.param_sites()) {
        if (previous && previous->stage != site.stage) model.forward(prob.inputs, mode, dropout_seed);
        previous = &site;
        Param<double>& p = *site.param;
        if (!p.trainable) continue;
        for (std::size_t i = 0; i < p.size(); ++i) {
            const double x0 = p.value[i];
            auto probe = [&](double h, double& numeric) {
                p.value[i] = x0 + h;
                const double up = loss_now(model.forward_from(site.stage, site.layer));
                const bool kink_up = model.kink_signature() != base_sig;
                p.value[i] = x0 - h;
                const double dn = loss_now(model.forward_from(site.stage, site.layer));
                const bool kink_dn = model.kink_signature() != base_sig;
                p.value[i] = x0;
                numeric = (up - dn) / (2 * h);
                return !(kink_up || kink_dn);
            };
            double numeric = 0.0;
            bool smooth = probe(step, numeric);
            for (int refine = 1; !smooth && refine <= 2; ++refine) {
                smooth = probe(step * std::pow(0.1, refine), numeric);
                if (smooth) ++rep.refined;
            }
            if (!smooth) {
                ++rep.skipped_kinks;
                continue;
            }
            const double err = testing_support::rel_err(p.grad[i], numeric, floor);
            ++rep.checked;
            if (err > rep.max_rel) {
                rep.max_rel = err;
                rep.worst = p.name + "[" + std::to_string(i) + "]";
            }
            if (err > tol) ++rep.failures;
        }
        model.forward_from(site.stage, site.layer);
    }
    return rep;
}

}  // namespace gradcheck
