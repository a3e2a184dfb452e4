#pragma once

#include <cstdint>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "vcnn/augment/augment.hpp"
#include "vcnn/error.hpp"
#include "vcnn/nn/spec.hpp"

namespace vcnn {

/// Replaces settings of one layer (by position in its stack) before build.
struct LayerOverride {
    std::string stack;  // branch name, "head", or empty for the only stack
    std::size_t index = 0;
    std::optional<double> rate;
    std::optional<double> momentum;
    std::optional<double> l2;
};

struct HyperParams {
    double lr0 = 1e-4;
    double decay_rate = 1.0;
    std::size_t epochs = 1;
    std::size_t batch_size = 4;
    double l2_lambda = 0.0;
    std::uint64_t seed = 0;
    bool shuffle = true;
    std::optional<std::size_t> patience;  // early stopping on validation loss
    std::optional<AugmentConfig> augment;
    std::vector<LayerOverride> overrides;

    void validate() const {
        if (!(lr0 > 0.0)) throw InputError("lr0 must be > 0");
        if (!(decay_rate > 0.0 && decay_rate <= 1.0)) throw InputError("decay_rate must lie in (0, 1]");
        if (batch_size < 1) throw InputError("batch_size must be >= 1");
        if (!(l2_lambda >= 0.0)) throw InputError("l2_lambda must be >= 0");
        if (augment) augment->validate();
    }
};

inline nlohmann::json to_json(const HyperParams& h) {
    nlohmann::json j{{"lr0", h.lr0},
                     {"decay_rate", h.decay_rate},
                     {"epochs", h.epochs},
                     {"batch_size", h.batch_size},
                     {"l2_lambda", h.l2_lambda},
                     {"seed", h.seed},
                     {"shuffle", h.shuffle}};
    if (h.patience) j["early_stopping"] = {{"patience", *h.patience}};
    if (h.augment) j["augment"] = to_json(*h.augment);
    for (const auto& o : h.overrides) {
        nlohmann::json oj{{"index", o.index}};
        if (!o.stack.empty()) oj["stack"] = o.stack;
        if (o.rate) oj["rate"] = *o.rate;
        if (o.momentum) oj["momentum"] = *o.momentum;
        if (o.l2) oj["l2"] = *o.l2;
        j["layer_overrides"].push_back(oj);
    }
    return j;
}

inline HyperParams hyper_from_json(const nlohmann::json& j) {
    HyperParams h;
    try {
        h.lr0 = j.at("lr0").get<double>();
        h.decay_rate = j.value("decay_rate", 1.0);
        h.epochs = j.at("epochs").get<std::size_t>();
        h.batch_size = j.at("batch_size").get<std::size_t>();
        h.l2_lambda = j.value("l2_lambda", 0.0);
        h.seed = j.value("seed", std::uint64_t{0});
        h.shuffle = j.value("shuffle", true);
        if (j.contains("early_stopping") && !j.at("early_stopping").is_null()) {
            h.patience = j.at("early_stopping").at("patience").get<std::size_t>();
        }
        if (j.contains("augment") && !j.at("augment").is_null()) h.augment = augment_config_from_json(j.at("augment"));
        if (j.contains("layer_overrides")) {
            for (const auto& oj : j.at("layer_overrides")) {
                LayerOverride o;
                o.stack = oj.value("stack", "");
                o.index = oj.at("index").get<std::size_t>();
                if (oj.contains("rate")) o.rate = oj.at("rate").get<double>();
                if (oj.contains("momentum")) o.momentum = oj.at("momentum").get<double>();
                if (oj.contains("l2")) o.l2 = oj.at("l2").get<double>();
                h.overrides.push_back(o);
            }
        }
    } catch (const nlohmann::json::exception& e) {
        throw InputError(std::string("malformed hyperparameters: ") + e.what());
    }
    h.validate();
    return h;
}

inline HyperParams load_hyper(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open hyperparameter file '" + path + "'");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw InputError("cannot parse '" + path + "': " + e.what());
    }
    return hyper_from_json(j);
}

/// Applies the layer overrides to a copy of the model description and revalidates it.
inline ModelSpec apply_overrides(ModelSpec spec, const HyperParams& h) {
    for (const auto& o : h.overrides) {
        std::vector<LayerSpec>* stack = nullptr;
        if (o.stack.empty() || o.stack == "head") {
            if (o.stack.empty() && spec.two_branch()) throw InputError("override on a two-branch model needs a stack");
            stack = o.stack == "head" ? &spec.head : &spec.branches.front().layers;
        } else {
            for (auto& br : spec.branches) {
                if (br.name == o.stack) stack = &br.layers;
            }
        }
        if (!stack) throw InputError("override names unknown stack '" + o.stack + "'");
        if (o.index >= stack->size()) throw InputError("override index " + std::to_string(o.index) + " out of range");
        auto& l = (*stack)[o.index];
        if (o.rate) {
            if (l.kind != LayerKind::dropout) throw InputError("rate override targets a non-dropout layer");
            l.rate = *o.rate;
        }
        if (o.momentum) {
            if (l.kind != LayerKind::batch_norm && l.kind != LayerKind::residual_block) {
                throw InputError("momentum override targets a layer without batch norm");
            }
            l.momentum = *o.momentum;
        }
        if (o.l2) {
            if (l.kind != LayerKind::conv3d && l.kind != LayerKind::dense) {
                throw InputError("l2 override targets a layer without weights");
            }
            l.l2 = *o.l2;
        }
    }
    try {
        validate(spec);
    } catch (const SpecError& e) {
        throw InputError(std::string("overrides produce an invalid model: ") + e.what());
    }
    return spec;
}

}  // namespace vcnn
