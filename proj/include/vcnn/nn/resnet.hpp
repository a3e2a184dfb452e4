#pragma once

// ResNet-18 in 3D, the two transfer-learning surgeries, and two-branch fusion.

#include <algorithm>
#include <array>
#include <string>
#include <vector>

#include "vcnn/error.hpp"
#include "vcnn/nn/model.hpp"
#include "vcnn/nn/spec.hpp"

namespace vcnn {

inline constexpr const char* kResnetFamily = "resnet18_3d";

struct ResnetOptions {
    std::array<std::size_t, 4> widths{64, 128, 256, 512};
    double momentum = 0.99;
};

/// Stem conv 7 stride 2 + BN + ReLU + maxpool 3 stride 2, four stages of two
/// residual blocks (ReLU after each), global average pool, dense softmax head.
inline ModelSpec build_resnet18_3d(const Dims& input, std::size_t classes, ResnetOptions opt = {}) {
    ModelSpec spec;
    spec.name = kResnetFamily;
    spec.family = kResnetFamily;
    spec.classes = classes;
    BranchSpec br;
    br.name = "main";
    br.input = input;
    auto& L = br.layers;
    auto tagged = [](LayerSpec s, const std::string& tag, const std::string& name) {
        s.tag = tag;
        s.name = name;
        return s;
    };
    L.push_back(tagged(LayerSpec::conv(opt.widths[0], 7, 3, 2, Activation::none), "stem", "stem_conv"));
    L.push_back(tagged(LayerSpec::batch_norm(opt.momentum), "stem", "stem_bn"));
    L.push_back(tagged(LayerSpec::act(Activation::relu), "stem", "stem_relu"));
    L.push_back(tagged(LayerSpec::maxpool(3, 2), "stem", "stem_pool"));
    for (int s = 0; s < 4; ++s) {
        const std::string tag = "stage" + std::to_string(s + 1);
        for (int b = 0; b < 2; ++b) {
            const std::size_t stride = (s > 0 && b == 0) ? 2 : 1;
            const std::string base = tag + "_block" + std::to_string(b + 1);
            L.push_back(tagged(LayerSpec::residual(opt.widths[s], stride, opt.momentum), tag, base));
            L.push_back(tagged(LayerSpec::act(Activation::relu), tag, base + "_relu"));
        }
    }
    L.push_back(tagged(LayerSpec::simple(LayerKind::global_avg_pool3d), "head", "head_gap"));
    L.push_back(tagged(LayerSpec::dense(classes, Activation::softmax), "head", "head_dense"));
    spec.branches.push_back(std::move(br));
    validate(spec);
    return spec;
}

enum class SurgeryRecipe { pet, mri };

inline SurgeryRecipe parse_recipe(const std::string& s) {
    if (s == "pet") return SurgeryRecipe::pet;
    if (s == "mri") return SurgeryRecipe::mri;
    throw InputError("unknown surgery recipe '" + s + "' (expected pet or mri)");
}

inline const char* to_string(SurgeryRecipe r) { return r == SurgeryRecipe::pet ? "pet" : "mri"; }

/// Spec-level surgery: drop the classifier (and stage 4 for pet), freeze and
/// pin everything kept, then attach a new pool + dense head.
inline ModelSpec surgery_spec(const ModelSpec& pretrained, SurgeryRecipe recipe, std::size_t classes = 3) {
    if (pretrained.family != kResnetFamily || pretrained.two_branch()) {
        throw SpecError("surgery needs a " + std::string(kResnetFamily) + " model, got '" +
                        (pretrained.family.empty() ? pretrained.name : pretrained.family) + "'");
    }
    ModelSpec out = pretrained;
    out.name = pretrained.name + "_transfer_" + to_string(recipe);
    out.family = std::string(kResnetFamily) + "_transfer";
    out.classes = classes;
    auto& L = out.branches.front().layers;
    std::erase_if(L, [&](const LayerSpec& l) {
        return l.tag == "head" || (recipe == SurgeryRecipe::pet && l.tag == "stage4");
    });
    for (auto& l : L) {
        l.trainable = false;
        if (l.kind == LayerKind::batch_norm || l.kind == LayerKind::residual_block) l.bn_pinned = true;
    }
    LayerSpec gap = LayerSpec::simple(LayerKind::global_avg_pool3d);
    gap.name = "transfer_gap";
    gap.tag = "transfer_head";
    LayerSpec dense = LayerSpec::dense(classes, Activation::softmax);
    dense.name = "transfer_dense";
    dense.tag = "transfer_head";
    L.push_back(gap);
    L.push_back(dense);
    validate(out);
    return out;
}

/// Truncates a pretrained ResNet, copying every retained tensor; the new
/// head is initialized from `seed`.
template <class T>
Model<T> surgery(const Model<T>& pretrained, SurgeryRecipe recipe, std::uint64_t seed,
                 std::size_t classes = 3) {
    Model<T> out = build<T>(surgery_spec(pretrained.spec(), recipe, classes), seed);
    out.copy_from(pretrained);
    return out;
}

/// Strips a trailing classifier (the last dense layer and anything after it)
/// so a trained single-input model can serve as a fusion branch.
inline std::vector<LayerSpec> strip_classifier(const std::vector<LayerSpec>& layers) {
    auto it = std::find_if(layers.rbegin(), layers.rend(),
                           [](const LayerSpec& l) { return l.activation == Activation::softmax; });
    if (it == layers.rend()) return layers;
    return {layers.begin(), std::prev(it.base())};
}

inline ModelSpec fuse_spec(const ModelSpec& pet, const ModelSpec& mri, std::vector<LayerSpec> head,
                           std::size_t classes = 3) {
    if (pet.two_branch() || mri.two_branch()) throw SpecError("fusion branches must be single-input models");
    ModelSpec out;
    out.name = "two_branch";
    out.classes = classes;
    BranchSpec a = pet.branches.front();
    BranchSpec b = mri.branches.front();
    a.name = "pet";
    b.name = "mri";
    if (a.modality.empty()) a.modality = "PET";
    if (b.modality.empty()) b.modality = "MRI";
    for (auto* br : {&a, &b}) {
        if (!stack_output_dims(br->layers, br->input).is_vector()) {
            throw SpecError("branch '" + br->name + "' is not vector-terminated");
        }
    }
    out.branches = {std::move(a), std::move(b)};
    out.head = std::move(head);
    validate(out);
    return out;
}

/// Concatenates two vector-terminated models under a new head; branch
/// tensors are copied under the "pet/" and "mri/" prefixes.
template <class T>
Model<T> fuse_two_branch(const Model<T>& pet, const Model<T>& mri, std::vector<LayerSpec> head,
                         std::uint64_t seed, std::size_t classes = 3) {
    Model<T> out = build<T>(fuse_spec(pet.spec(), mri.spec(), std::move(head), classes), seed);
    out.copy_from(pet, "pet/");
    out.copy_from(mri, "mri/");
    return out;
}

}  // namespace vcnn
