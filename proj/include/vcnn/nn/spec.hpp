#pragma once

// Declarative architecture descriptions: layer lists, residual blocks and the
// two-branch concatenation model, plus their JSON form and shape inference.

#include <cstddef>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "vcnn/error.hpp"
#include "vcnn/ops.hpp"
#include "vcnn/volume.hpp"

namespace vcnn {

enum class LayerKind {
    conv3d,
    maxpool3d,
    global_avg_pool3d,
    flatten,
    dense,
    batch_norm,
    dropout,
    activation,
    residual_block,
    concatenate,
};

enum class Activation { none, relu, sigmoid, softmax };

inline const char* to_string(LayerKind k) {
    switch (k) {
        case LayerKind::conv3d: return "conv3d";
        case LayerKind::maxpool3d: return "maxpool3d";
        case LayerKind::global_avg_pool3d: return "global_avg_pool3d";
        case LayerKind::flatten: return "flatten";
        case LayerKind::dense: return "dense";
        case LayerKind::batch_norm: return "batch_norm";
        case LayerKind::dropout: return "dropout";
        case LayerKind::activation: return "activation";
        case LayerKind::residual_block: return "residual_block";
        case LayerKind::concatenate: return "concatenate";
    }
    return "?";
}

inline const char* to_string(Activation a) {
    switch (a) {
        case Activation::none: return "none";
        case Activation::relu: return "relu";
        case Activation::sigmoid: return "sigmoid";
        case Activation::softmax: return "softmax";
    }
    return "?";
}

inline LayerKind parse_layer_kind(const std::string& s) {
    static const std::map<std::string, LayerKind> table = {
        {"conv3d", LayerKind::conv3d},
        {"maxpool3d", LayerKind::maxpool3d},
        {"global_avg_pool3d", LayerKind::global_avg_pool3d},
        {"flatten", LayerKind::flatten},
        {"dense", LayerKind::dense},
        {"batch_norm", LayerKind::batch_norm},
        {"dropout", LayerKind::dropout},
        {"activation", LayerKind::activation},
        {"residual_block", LayerKind::residual_block},
        {"concatenate", LayerKind::concatenate},
    };
    auto it = table.find(s);
    if (it == table.end()) throw SpecError("unknown layer type '" + s + "'");
    return it->second;
}

inline Activation parse_activation(const std::string& s) {
    if (s == "none" || s == "linear") return Activation::none;
    if (s == "relu") return Activation::relu;
    if (s == "sigmoid") return Activation::sigmoid;
    if (s == "softmax") return Activation::softmax;
    throw SpecError("unknown activation '" + s + "'");
}

/// Batch-norm epsilon and default momentum follow the TensorFlow 2.5 defaults.
inline constexpr double kBatchNormEpsilon = 1e-3;
inline constexpr double kDefaultMomentum = 0.99;

struct LayerSpec {
    LayerKind kind = LayerKind::activation;
    std::string name;
    std::string tag;  // free-form group label; the ResNet builder tags stages

    std::size_t filters = 0;  // conv3d, residual_block
    std::size_t kernel = 3;   // conv3d
    std::size_t stride = 1;   // conv3d, maxpool3d, residual_block
    std::size_t padding = 0;  // conv3d
    std::size_t window = 2;   // maxpool3d
    std::size_t units = 0;    // dense
    double rate = 0.0;        // dropout
    double momentum = kDefaultMomentum;  // batch_norm, residual_block
    Activation activation = Activation::none;

    std::optional<double> l2;  // explicit lambda on the weight tensor
    bool l2_default = false;   // "l2": true -> use the hyperparameter default

    bool trainable = true;
    bool bn_pinned = false;  // batch norm always runs in inference mode

    static LayerSpec conv(std::size_t filters, std::size_t k, std::size_t padding = 0,
                          std::size_t stride = 1, Activation act = Activation::relu) {
        LayerSpec s;
        s.kind = LayerKind::conv3d;
        s.filters = filters;
        s.kernel = k;
        s.padding = padding;
        s.stride = stride;
        s.activation = act;
        return s;
    }
    static LayerSpec maxpool(std::size_t window, std::size_t stride) {
        LayerSpec s;
        s.kind = LayerKind::maxpool3d;
        s.window = window;
        s.stride = stride;
        return s;
    }
    static LayerSpec dense(std::size_t units, Activation act) {
        LayerSpec s;
        s.kind = LayerKind::dense;
        s.units = units;
        s.activation = act;
        return s;
    }
    static LayerSpec batch_norm(double momentum) {
        LayerSpec s;
        s.kind = LayerKind::batch_norm;
        s.momentum = momentum;
        return s;
    }
    static LayerSpec dropout(double rate) {
        LayerSpec s;
        s.kind = LayerKind::dropout;
        s.rate = rate;
        return s;
    }
    static LayerSpec act(Activation a) {
        LayerSpec s;
        s.kind = LayerKind::activation;
        s.activation = a;
        return s;
    }
    static LayerSpec simple(LayerKind k) {
        LayerSpec s;
        s.kind = k;
        return s;
    }
    static LayerSpec residual(std::size_t filters, std::size_t stride, double momentum) {
        LayerSpec s;
        s.kind = LayerKind::residual_block;
        s.filters = filters;
        s.stride = stride;
        s.momentum = momentum;
        return s;
    }

    bool has_l2() const noexcept { return l2.has_value() || l2_default; }
};

struct BranchSpec {
    std::string name;
    Dims input;
    std::string modality;  // optional hint for data loading (PET / MRI)
    std::vector<LayerSpec> layers;
};

struct ModelSpec {
    std::string name;
    std::string family;  // e.g. "resnet18_3d"; empty for plain stacks
    std::size_t classes = 3;
    std::vector<BranchSpec> branches;  // one for plain models, two for fusion
    std::vector<LayerSpec> head;       // layers applied after concatenation

    bool two_branch() const noexcept { return branches.size() == 2; }
};

// ---------------------------------------------------------------------------
// Shape inference and parameter counting

inline bool residual_needs_projection(const LayerSpec& s, const Dims& in) {
    return s.stride != 1 || in.c != s.filters;
}

/// Output extents of one layer; throws SpecError naming the layer on misfit.
inline Dims layer_output_dims(const LayerSpec& s, const Dims& in) {
    try {
        switch (s.kind) {
            case LayerKind::conv3d:
                return conv_output_dims(in, s.kernel, s.filters, s.stride, s.padding);
            case LayerKind::maxpool3d:
                return pool_output_dims(in, s.window, s.stride);
            case LayerKind::global_avg_pool3d:
                return Dims::vector(in.c);
            case LayerKind::flatten:
                return Dims::vector(in.size());
            case LayerKind::dense:
                if (!in.is_vector()) {
                    throw ShapeError("dense layer needs a vector input, got " + in.str() +
                                     " (add flatten or global_avg_pool3d)");
                }
                return Dims::vector(s.units);
            case LayerKind::batch_norm:
            case LayerKind::dropout:
            case LayerKind::activation:
                return in;
            case LayerKind::residual_block:
                return conv_output_dims(in, 3, s.filters, s.stride, 1);
            case LayerKind::concatenate:
                throw SpecError("concatenate is only valid as the fusion of a two-branch model");
        }
    } catch (const ShapeError& e) {
        throw SpecError("layer '" + s.name + "' (" + to_string(s.kind) + "): " + e.what());
    }
    return in;
}

struct ParamCount {
    std::size_t total = 0;
    std::size_t trainable = 0;

    ParamCount& operator+=(const ParamCount& o) {
        total += o.total;
        trainable += o.trainable;
        return *this;
    }
};

inline ParamCount layer_param_count(const LayerSpec& s, const Dims& in) {
    auto conv = [](std::size_t k, std::size_t cin, std::size_t cout) {
        return k * k * k * cin * cout + cout;
    };
    ParamCount p;
    std::size_t learnable = 0;
    std::size_t state = 0;
    switch (s.kind) {
        case LayerKind::conv3d: learnable = conv(s.kernel, in.c, s.filters); break;
        case LayerKind::dense: learnable = in.c * s.units + s.units; break;
        case LayerKind::batch_norm:
            learnable = 2 * in.c;
            state = 2 * in.c;
            break;
        case LayerKind::residual_block: {
            const std::size_t f = s.filters;
            learnable = conv(3, in.c, f) + 2 * f + conv(3, f, f) + 2 * f;
            state = 4 * f;
            if (residual_needs_projection(s, in)) {
                learnable += conv(1, in.c, f) + 2 * f;
                state += 2 * f;
            }
            break;
        }
        default: break;
    }
    p.total = learnable + state;
    p.trainable = s.trainable ? learnable : 0;
    return p;
}

// ---------------------------------------------------------------------------
// Validation

inline void validate_layer_settings(const LayerSpec& s) {
    auto fail = [&](const std::string& what) {
        throw SpecError("layer '" + s.name + "' (" + to_string(s.kind) + "): " + what);
    };
    switch (s.kind) {
        case LayerKind::conv3d:
            if (s.filters < 1) fail("filters must be >= 1");
            if (s.kernel < 1) fail("kernel must be >= 1");
            if (s.stride < 1) fail("stride must be >= 1");
            break;
        case LayerKind::maxpool3d:
            if (s.window < 1 || s.stride < 1) fail("window and stride must be >= 1");
            break;
        case LayerKind::dense:
            if (s.units < 1) fail("units must be >= 1");
            break;
        case LayerKind::dropout:
            if (!(s.rate >= 0.0 && s.rate < 1.0)) fail("dropout rate must lie in [0, 1)");
            break;
        case LayerKind::batch_norm:
            if (!(s.momentum > 0.0 && s.momentum < 1.0)) fail("momentum must lie in (0, 1)");
            break;
        case LayerKind::residual_block:
            if (s.filters < 1 || s.stride < 1) fail("filters and stride must be >= 1");
            if (!(s.momentum > 0.0 && s.momentum < 1.0)) fail("momentum must lie in (0, 1)");
            break;
        case LayerKind::activation:
            if (s.activation == Activation::none) fail("activation layer needs a function");
            break;
        default: break;
    }
    if (s.l2 && *s.l2 < 0.0) fail("l2 lambda must be >= 0");
}

inline std::size_t softmax_count(const std::vector<LayerSpec>& layers) {
    std::size_t n = 0;
    for (const auto& l : layers) {
        if (l.activation == Activation::softmax) ++n;
    }
    return n;
}

/// Output dims of a layer stack starting at `in`.
inline Dims stack_output_dims(const std::vector<LayerSpec>& layers, Dims in) {
    for (const auto& l : layers) in = layer_output_dims(l, in);
    return in;
}

/// Assigns default names (kind_1, kind_2, ...) and checks uniqueness.
inline void assign_layer_names(std::vector<LayerSpec>& layers) {
    std::map<std::string, std::size_t> counters;
    std::set<std::string> used;
    for (const auto& l : layers) {
        if (!l.name.empty()) used.insert(l.name);
    }
    for (auto& l : layers) {
        if (!l.name.empty()) continue;
        std::string base = to_string(l.kind);
        std::string candidate;
        do {
            candidate = base + "_" + std::to_string(++counters[base]);
        } while (used.count(candidate));
        l.name = candidate;
        used.insert(candidate);
    }
    std::set<std::string> seen;
    for (const auto& l : layers) {
        if (!seen.insert(l.name).second) throw SpecError("duplicate layer name '" + l.name + "'");
    }
}

/// Normalizes names and checks that the model description composes end to end.
inline void validate(ModelSpec& spec) {
    if (spec.branches.empty() || spec.branches.size() > 2) {
        throw SpecError("model needs one layer stack or exactly two branches");
    }
    if (spec.classes < 2) throw SpecError("class count must be >= 2");
    for (std::size_t b = 0; b < spec.branches.size(); ++b) {
        auto& br = spec.branches[b];
        if (br.name.empty()) br.name = spec.two_branch() ? "branch_" + std::to_string(b) : "main";
        assign_layer_names(br.layers);
        for (const auto& l : br.layers) validate_layer_settings(l);
        if (br.input.size() == 0) throw SpecError("branch '" + br.name + "' has empty input");
    }
    assign_layer_names(spec.head);
    for (const auto& l : spec.head) validate_layer_settings(l);

    auto check_softmax_tail = [&](const std::vector<LayerSpec>& layers, const Dims& out,
                                  const std::string& where) {
        if (layers.empty() || softmax_count(layers) != 1 ||
            layers.back().activation != Activation::softmax) {
            throw SpecError(where + " must end in exactly one softmax output");
        }
        if (out != Dims::vector(spec.classes)) {
            throw SpecError(where + " output " + out.str() + " is not a softmax over " +
                            std::to_string(spec.classes) + " classes");
        }
    };

    if (!spec.two_branch()) {
        if (!spec.head.empty()) throw SpecError("head layers require a two-branch model");
        const auto& br = spec.branches.front();
        check_softmax_tail(br.layers, stack_output_dims(br.layers, br.input), "model");
        return;
    }
    std::size_t fused = 0;
    for (const auto& br : spec.branches) {
        const Dims out = stack_output_dims(br.layers, br.input);
        if (!out.is_vector()) {
            throw SpecError("branch '" + br.name + "' must end in a vector, got " + out.str());
        }
        if (softmax_count(br.layers) != 0) {
            throw SpecError("branch '" + br.name + "' still carries a softmax classifier");
        }
        fused += out.c;
    }
    check_softmax_tail(spec.head, stack_output_dims(spec.head, Dims::vector(fused)), "head");
}

// ---------------------------------------------------------------------------
// JSON

inline nlohmann::json to_json(const LayerSpec& s) {
    nlohmann::json j;
    j["type"] = to_string(s.kind);
    if (!s.name.empty()) j["name"] = s.name;
    if (!s.tag.empty()) j["tag"] = s.tag;
    switch (s.kind) {
        case LayerKind::conv3d:
            j["filters"] = s.filters;
            j["kernel"] = s.kernel;
            j["stride"] = s.stride;
            j["padding"] = s.padding;
            break;
        case LayerKind::maxpool3d:
            j["window"] = s.window;
            j["stride"] = s.stride;
            break;
        case LayerKind::dense: j["units"] = s.units; break;
        case LayerKind::batch_norm: j["momentum"] = s.momentum; break;
        case LayerKind::dropout: j["rate"] = s.rate; break;
        case LayerKind::residual_block:
            j["filters"] = s.filters;
            j["stride"] = s.stride;
            j["momentum"] = s.momentum;
            break;
        default: break;
    }
    if (s.activation != Activation::none) j["activation"] = to_string(s.activation);
    if (s.l2) {
        j["l2"] = *s.l2;
    } else if (s.l2_default) {
        j["l2"] = true;
    }
    if (!s.trainable) j["trainable"] = false;
    if (s.bn_pinned) j["bn_inference"] = true;
    return j;
}

inline LayerSpec layer_from_json(const nlohmann::json& j) {
    if (!j.is_object() || !j.contains("type")) throw SpecError("layer entry needs a \"type\"");
    LayerSpec s;
    s.kind = parse_layer_kind(j.at("type").get<std::string>());
    s.name = j.value("name", "");
    s.tag = j.value("tag", "");
    s.filters = j.value("filters", std::size_t{0});
    s.kernel = j.value("kernel", std::size_t{3});
    s.stride = j.value("stride", s.kind == LayerKind::maxpool3d ? j.value("window", std::size_t{2})
                                                                  : std::size_t{1});
    s.padding = j.value("padding", std::size_t{0});
    s.window = j.value("window", std::size_t{2});
    s.units = j.value("units", std::size_t{0});
    s.rate = j.value("rate", 0.0);
    s.momentum = j.value("momentum", kDefaultMomentum);
    if (j.contains("activation")) s.activation = parse_activation(j.at("activation"));
    if (j.contains("l2")) {
        const auto& l2 = j.at("l2");
        if (l2.is_boolean()) {
            s.l2_default = l2.get<bool>();
        } else if (l2.is_number()) {
            s.l2 = l2.get<double>();
        } else {
            throw SpecError("\"l2\" must be a number or a boolean");
        }
    }
    s.trainable = j.value("trainable", true);
    s.bn_pinned = j.value("bn_inference", false);
    return s;
}

inline nlohmann::json dims_to_json(const Dims& d) { return {d.x, d.y, d.z, d.c}; }

inline Dims dims_from_json(const nlohmann::json& j) {
    if (!j.is_array() || (j.size() != 3 && j.size() != 4)) {
        throw SpecError("dims must be [x, y, z] or [x, y, z, c]");
    }
    Dims d;
    d.x = j[0].get<std::size_t>();
    d.y = j[1].get<std::size_t>();
    d.z = j[2].get<std::size_t>();
    d.c = j.size() == 4 ? j[3].get<std::size_t>() : 1;
    if (d.size() == 0) throw SpecError("dims must all be >= 1");
    return d;
}

inline nlohmann::json layers_to_json(const std::vector<LayerSpec>& layers) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& l : layers) arr.push_back(to_json(l));
    return arr;
}

inline std::vector<LayerSpec> layers_from_json(const nlohmann::json& j) {
    if (!j.is_array()) throw SpecError("\"layers\" must be an array");
    std::vector<LayerSpec> out;
    for (const auto& e : j) out.push_back(layer_from_json(e));
    return out;
}

inline nlohmann::json to_json(const ModelSpec& spec) {
    nlohmann::json j;
    j["name"] = spec.name;
    if (!spec.family.empty()) j["family"] = spec.family;
    j["classes"] = spec.classes;
    auto branch_json = [](const BranchSpec& b) {
        nlohmann::json bj;
        if (!b.name.empty()) bj["name"] = b.name;
        bj["input"] = dims_to_json(b.input);
        if (!b.modality.empty()) bj["modality"] = b.modality;
        bj["layers"] = layers_to_json(b.layers);
        return bj;
    };
    if (spec.two_branch()) {
        j["branches"] = {branch_json(spec.branches[0]), branch_json(spec.branches[1])};
        j["fusion"] = "concatenate";
        j["head"] = layers_to_json(spec.head);
    } else {
        const auto& b = spec.branches.front();
        j["input"] = dims_to_json(b.input);
        if (!b.modality.empty()) j["modality"] = b.modality;
        j["layers"] = layers_to_json(b.layers);
    }
    return j;
}

inline ModelSpec model_spec_from_json(const nlohmann::json& j) {
    try {
        ModelSpec spec;
        spec.name = j.value("name", "");
        spec.family = j.value("family", "");
        spec.classes = j.value("classes", std::size_t{3});
        auto branch_from = [](const nlohmann::json& bj) {
            BranchSpec b;
            b.name = bj.value("name", "");
            b.input = dims_from_json(bj.at("input"));
            b.modality = bj.value("modality", "");
            b.layers = layers_from_json(bj.at("layers"));
            return b;
        };
        if (j.contains("branches")) {
            const auto& arr = j.at("branches");
            if (!arr.is_array() || arr.size() != 2) throw SpecError("\"branches\" must hold two entries");
            if (j.value("fusion", "concatenate") != "concatenate") {
                throw SpecError("only concatenate fusion is supported");
            }
            for (const auto& bj : arr) spec.branches.push_back(branch_from(bj));
            spec.head = layers_from_json(j.at("head"));
        } else {
            spec.branches.push_back(branch_from(j));
        }
        validate(spec);
        return spec;
    } catch (const nlohmann::json::exception& e) {
        throw SpecError(std::string("malformed architecture: ") + e.what());
    }
}

inline ModelSpec load_model_spec(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw SpecError("cannot open architecture file '" + path + "'");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw SpecError("cannot parse '" + path + "': " + e.what());
    }
    return model_spec_from_json(j);
}

}  // namespace vcnn
