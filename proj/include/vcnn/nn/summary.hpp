#pragma once

#include <cstddef>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "vcnn/nn/spec.hpp"

namespace vcnn {

struct SummaryRow {
    std::string layer;        // stage-qualified layer name
    std::string description;  // e.g. "3x3x3 Conv3D (16), pad 0"
    Dims output;
    std::size_t params = 0;
    std::size_t trainable = 0;
};

struct Summary {
    std::vector<SummaryRow> rows;
    std::size_t total = 0;
    std::size_t trainable = 0;
    std::size_t non_trainable() const noexcept { return total - trainable; }
};

inline std::string describe(const LayerSpec& s) {
    std::ostringstream os;
    switch (s.kind) {
        case LayerKind::conv3d:
            os << s.kernel << 'x' << s.kernel << 'x' << s.kernel << " Conv3D (" << s.filters
               << "), pad " << s.padding;
            if (s.stride != 1) os << ", stride " << s.stride;
            break;
        case LayerKind::maxpool3d:
            os << s.window << 'x' << s.window << 'x' << s.window << " MaxPooling3D, stride " << s.stride;
            break;
        case LayerKind::global_avg_pool3d: os << "GlobalAveragePooling3D"; break;
        case LayerKind::flatten: os << "Flatten"; break;
        case LayerKind::dense: os << "FC (" << s.units << ')'; break;
        case LayerKind::batch_norm: os << "BatchNorm, momentum " << s.momentum; break;
        case LayerKind::dropout: os << "Dropout (" << s.rate << ')'; break;
        case LayerKind::activation: os << "Activation"; break;
        case LayerKind::residual_block:
            os << "ResidualBlock (" << s.filters << ')';
            if (s.stride != 1) os << ", stride " << s.stride;
            break;
        case LayerKind::concatenate: os << "Concatenate"; break;
    }
    if (s.activation != Activation::none) os << ", " << to_string(s.activation);
    if (!s.trainable) os << " [frozen]";
    return os.str();
}

namespace detail {

inline void summarize_stack(const std::vector<LayerSpec>& layers, Dims in, const std::string& prefix,
                            Summary& out) {
    for (const auto& l : layers) {
        const ParamCount pc = layer_param_count(l, in);
        in = layer_output_dims(l, in);
        out.rows.push_back({prefix + l.name, describe(l), in, pc.total, pc.trainable});
        out.total += pc.total;
        out.trainable += pc.trainable;
    }
}

}  // namespace detail

/// Symbolic per-layer table (no parameter storage is allocated). Each branch
/// starts with an input row carrying zero parameters.
inline Summary summarize(const ModelSpec& spec) {
    ModelSpec s = spec;
    validate(s);
    Summary out;
    const bool two = s.two_branch();
    std::size_t fused = 0;
    for (const auto& br : s.branches) {
        const std::string prefix = two ? br.name + "/" : "";
        out.rows.push_back({prefix + "input", "Input", br.input, 0, 0});
        detail::summarize_stack(br.layers, br.input, prefix, out);
        fused += stack_output_dims(br.layers, br.input).c;
    }
    if (two) {
        out.rows.push_back({"concatenate", "Concatenate", Dims::vector(fused), 0, 0});
        detail::summarize_stack(s.head, Dims::vector(fused), "", out);
    }
    return out;
}

inline std::string with_thousands(std::size_t v) {
    std::string digits = std::to_string(v);
    std::string out;
    int count = 0;
    for (auto it = digits.rbegin(); it != digits.rend(); ++it) {
        if (count && count % 3 == 0) out.insert(out.begin(), ',');
        out.insert(out.begin(), *it);
        ++count;
    }
    return out;
}

inline std::string shape_text(const Dims& d) {
    std::ostringstream os;
    if (d.is_vector()) {
        os << "(None, " << d.c << ')';
    } else {
        os << "(None, " << d.x << ", " << d.y << ", " << d.z << ", " << d.c << ')';
    }
    return os.str();
}

inline void print_summary(std::ostream& os, const std::string& model_name, const Summary& s) {
    os << "Model: " << model_name << '\n';
    os << std::left << std::setw(28) << "Layer" << std::setw(40) << "Description" << std::setw(30)
       << "Output shape" << std::right << std::setw(14) << "# Params" << '\n';
    os << std::string(112, '-') << '\n';
    for (const auto& r : s.rows) {
        os << std::left << std::setw(28) << r.layer << std::setw(40) << r.description << std::setw(30)
           << shape_text(r.output) << std::right << std::setw(14) << r.params << '\n';
    }
    os << std::string(112, '-') << '\n';
    os << "Total params: " << with_thousands(s.total) << '\n';
    os << "Trainable params: " << with_thousands(s.trainable) << '\n';
    os << "Non-trainable params: " << with_thousands(s.non_trainable()) << '\n';
}

}  // namespace vcnn
