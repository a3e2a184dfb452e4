#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "golden_tables.hpp"
#include "support.hpp"
#include "vcnn/nn/checkpoint.hpp"
#include "vcnn/nn/model.hpp"
#include "vcnn/nn/resnet.hpp"
#include "vcnn/nn/summary.hpp"
#include "vcnn/train/adam.hpp"
#include "vcnn/train/loss.hpp"

using namespace vcnn;
using testing_support::arch;
using testing_support::random_volume;

namespace {

ModelSpec single(std::vector<LayerSpec> layers, Dims input, std::size_t classes = 3) {
    ModelSpec s;
    s.name = "test";
    s.classes = classes;
    s.branches.push_back(BranchSpec{"main", input, "", std::move(layers)});
    return s;
}

std::vector<std::size_t> golden_dims(const Dims& d) {
    if (d.is_vector()) return {d.c};
    return {d.x, d.y, d.z, d.c};
}

Batch<double> random_batch(const Dims& d, std::size_t n, std::uint64_t seed) {
    Batch<double> b;
    for (std::size_t i = 0; i < n; ++i) b.push_back(random_volume(d, seed + i));
    return b;
}

ModelSpec mini_resnet() {
    ResnetOptions opt;
    opt.widths = {2, 4, 6, 8};
    return build_resnet18_3d(Dims{16, 16, 16, 1}, 3, opt);
}

}  // namespace

class GoldenSummary : public ::testing::TestWithParam<std::string> {};

TEST_P(GoldenSummary, ReproducesEveryRowAndTotal) {
    const auto& tables = golden::tables();
    const auto it = std::find_if(tables.begin(), tables.end(), [&](const auto& t) { return t.model == GetParam(); });
    ASSERT_NE(it, tables.end());
    const Summary s = summarize(load_model_spec(arch(GetParam())));

    std::vector<const SummaryRow*> rows;
    for (const auto& r : s.rows) {
        if (r.description != "Activation") rows.push_back(&r);
    }
    ASSERT_EQ(rows.size(), it->rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        EXPECT_EQ(golden_dims(rows[i]->output), it->rows[i].dims) << GetParam() << " row " << i << " " << it->rows[i].layer;
        EXPECT_EQ(rows[i]->params, it->rows[i].params) << GetParam() << " row " << i << " " << it->rows[i].layer;
    }
    EXPECT_EQ(s.total, it->total);
    EXPECT_EQ(s.non_trainable(), it->non_trainable);
}

INSTANTIATE_TEST_SUITE_P(ReferenceArchitectures, GoldenSummary,
                         ::testing::Values("pet_1", "pet_2", "pet_3", "pet_6", "pet_8", "mri_1", "mri_3", "mri_4",
                                           "mri_6", "mri_9"));

TEST(Summary, Pet8Headline) {
    const Summary s = summarize(load_model_spec(arch("pet_8")));
    EXPECT_EQ(s.total, 3755795u);
    EXPECT_EQ(s.trainable, 3755667u);
    EXPECT_EQ(s.non_trainable(), 128u);
    EXPECT_EQ(s.rows[1].params, 448u);
    const auto flat = std::find_if(s.rows.begin(), s.rows.end(), [](const SummaryRow& r) { return r.description == "Flatten"; });
    ASSERT_NE(flat, s.rows.end());
    EXPECT_EQ(flat->output.c, 9216u);
    EXPECT_EQ(s.rows.back().params, 387u);
}

TEST(Summary, PrintedTotalsUseThousandsSeparators) {
    std::ostringstream os;
    print_summary(os, "pet_1", summarize(load_model_spec(arch("pet_1"))));
    EXPECT_NE(os.str().find("Total params: 436,474,819"), std::string::npos);
    EXPECT_NE(os.str().find("Non-trainable params: 0"), std::string::npos);
}

TEST(Summary, CountingLaws) {
    EXPECT_EQ(layer_param_count(LayerSpec::conv(7, 3), Dims{9, 9, 9, 5}).total, 27u * 5 * 7 + 7);
    EXPECT_EQ(layer_param_count(LayerSpec::dense(3, Activation::softmax), Dims::vector(128)).total, 387u);
    const auto bn = layer_param_count(LayerSpec::batch_norm(0.9), Dims{4, 4, 4, 6});
    EXPECT_EQ(bn.total, 24u);
    EXPECT_EQ(bn.trainable, 12u);
}

TEST(Spec, ShapeMisfitIsSpecError) {
    auto bad = single({LayerSpec::conv(4, 5), LayerSpec::simple(LayerKind::flatten),
                       LayerSpec::dense(3, Activation::softmax)},
                      Dims{3, 3, 3, 1});
    EXPECT_THROW(summarize(bad), SpecError);
    auto no_flatten = single({LayerSpec::conv(4, 3), LayerSpec::dense(3, Activation::softmax)}, Dims{5, 5, 5, 1});
    EXPECT_THROW(Model<float>{no_flatten}, SpecError);
    auto wrong_width = single({LayerSpec::simple(LayerKind::flatten), LayerSpec::dense(4, Activation::softmax)},
                              Dims{2, 2, 2, 1});
    EXPECT_THROW(summarize(wrong_width), SpecError);
}

TEST(Spec, SettingsOutOfRange) {
    auto dense = [](LayerSpec extra) {
        return single({LayerSpec::simple(LayerKind::flatten), extra, LayerSpec::dense(3, Activation::softmax)},
                      Dims{2, 2, 2, 1});
    };
    EXPECT_THROW(summarize(dense(LayerSpec::dropout(1.0))), SpecError);
    EXPECT_THROW(summarize(dense(LayerSpec::dropout(-0.1))), SpecError);
    EXPECT_THROW(summarize(dense(LayerSpec::batch_norm(1.0))), SpecError);
    EXPECT_THROW(summarize(dense(LayerSpec::dense(0, Activation::relu))), SpecError);
    EXPECT_NO_THROW(summarize(dense(LayerSpec::dropout(0.0))));
}

TEST(Spec, JsonRoundTrip) {
    for (const char* name : {"pet_8", "mri_9", "two_branch", "resnet18_3d"}) {
        const ModelSpec a = load_model_spec(arch(name));
        const ModelSpec b = model_spec_from_json(to_json(a));
        EXPECT_EQ(to_json(a), to_json(b)) << name;
    }
}

TEST(Build, GlorotBoundForConv5) {
    auto spec = single({LayerSpec::conv(32, 5), LayerSpec::simple(LayerKind::global_avg_pool3d),
                        LayerSpec::dense(3, Activation::softmax)},
                       Dims{6, 6, 6, 1});
    auto m = build<double>(spec, 11);
    const double limit = std::sqrt(6.0 / (125.0 + 4000.0));
    const Param<double>* w = m.parameters().front();
    ASSERT_EQ(w->role, ParamRole::conv_weights);
    ASSERT_EQ(w->size(), 4000u);
    double maxabs = 0, mean = 0;
    for (double v : w->value) {
        EXPECT_LE(std::abs(v), limit);
        maxabs = std::max(maxabs, std::abs(v));
        mean += v;
    }
    mean /= double(w->size());
    EXPECT_GT(maxabs, 0.98 * limit);
    EXPECT_LT(std::abs(mean), 4.0 * limit / std::sqrt(3.0 * 4000.0));
    for (double b : m.parameters()[1]->value) EXPECT_EQ(b, 0.0);
}

TEST(Build, InitializesBatchNormAndIsDeterministic) {
    const auto spec = load_model_spec(arch("pet_8_mini"));
    auto a = build<float>(spec, 5);
    auto b = build<float>(spec, 5);
    auto c = build<float>(spec, 6);
    ASSERT_EQ(a.parameters().size(), b.parameters().size());
    bool differs = false;
    for (std::size_t i = 0; i < a.parameters().size(); ++i) {
        EXPECT_EQ(a.parameters()[i]->value, b.parameters()[i]->value);
        differs |= a.parameters()[i]->value != c.parameters()[i]->value;
    }
    EXPECT_TRUE(differs);
    for (auto* p : a.parameters()) {
        if (p->role == ParamRole::bn_gamma) {
            for (float v : p->value) EXPECT_EQ(v, 1.0f);
        }
        if (p->role == ParamRole::bn_beta) {
            for (float v : p->value) EXPECT_EQ(v, 0.0f);
        }
    }
    ASSERT_EQ(a.state().size(), 2u);
    for (auto* s : a.state()) {
        const float expect = s->name.ends_with("moving_variance") ? 1.0f : 0.0f;
        for (float v : s->value) EXPECT_EQ(v, expect);
    }
}

TEST(Build, ParameterCountMatchesSummary) {
    for (const char* name : {"pet_8_mini", "mri_9_mini", "two_branch_mini"}) {
        const auto spec = load_model_spec(arch(name));
        const Summary s = summarize(spec);
        Model<float> m(spec);
        EXPECT_EQ(m.parameter_count(), s.total) << name;
        EXPECT_EQ(m.trainable_count(), s.trainable) << name;
    }
}

TEST(Build, L2FlagsFollowTheSpec) {
    auto m = Model<float>(load_model_spec(arch("pet_8")));
    std::size_t flagged = 0;
    for (auto* p : m.parameters()) {
        if (p->l2) {
            ++flagged;
            EXPECT_EQ(p->role, ParamRole::conv_weights) << p->name;
            ASSERT_TRUE(p->l2_lambda.has_value());
            EXPECT_DOUBLE_EQ(*p->l2_lambda, 1e-5);
        }
    }
    EXPECT_EQ(flagged, 8u);
}

TEST(Forward, SoftmaxRowsSumToOne) {
    auto m = build<float>(load_model_spec(arch("pet_8_mini")), 3);
    Batch<float> in;
    for (int i = 0; i < 3; ++i) in.push_back(random_volume<float>(Dims{16, 16, 16, 1}, 100 + i, 0, 1));
    for (Mode mode : {Mode::train, Mode::inference}) {
        const auto& out = m.forward(in, mode, 9);
        ASSERT_EQ(out.size(), 3u);
        for (const auto& v : out) {
            double s = 0;
            for (float p : v.data()) {
                EXPECT_GE(p, 0.0f);
                s += p;
            }
            EXPECT_NEAR(s, 1.0, 1e-6);
        }
    }
}

TEST(Forward, WrongInputDimsRejected) {
    auto m = build<float>(load_model_spec(arch("pet_8_mini")), 3);
    Batch<float> in{Volume<float>(Dims{16, 16, 15, 1})};
    EXPECT_THROW(m.forward(in, Mode::inference), ShapeError);
}

TEST(Forward, NanActivationIsNumericError) {
    auto m = build<float>(load_model_spec(arch("pet_8_mini")), 3);
    Batch<float> in{Volume<float>(Dims{16, 16, 16, 1}, 0.5f)};
    in[0][17] = std::numeric_limits<float>::quiet_NaN();
    EXPECT_THROW(m.forward(in, Mode::inference), NumericError);
}

TEST(Forward, ZeroRateDropoutMakesModesAgree) {
    auto spec = single({LayerSpec::simple(LayerKind::flatten), LayerSpec::dense(6, Activation::relu),
                        LayerSpec::dropout(0.0), LayerSpec::dense(3, Activation::softmax)},
                       Dims{2, 3, 2, 1});
    auto m = build<double>(spec, 4);
    const auto in = random_batch(Dims{2, 3, 2, 1}, 4, 8);
    const Batch<double> train = m.forward(in, Mode::train, 1);
    const Batch<double> infer = m.forward(in, Mode::inference);
    EXPECT_EQ(train, infer);
}

TEST(BatchNorm, MovingStatsAndInferenceMatchClosedForm) {
    const double m = 0.9, eps = 1e-3;
    LayerSpec bn = LayerSpec::batch_norm(m);
    bn.name = "bn";
    Sequential<double> seq({bn}, Dims{2, 2, 1, 3}, "");
    std::vector<Param<double>*> ps;
    seq.collect_params(ps);
    std::vector<StateTensor<double>*> st;
    seq.collect_state(st);
    ASSERT_EQ(ps.size(), 2u);
    ASSERT_EQ(st.size(), 2u);
    ps[0]->value = {1.5, 0.5, -2.0};
    ps[1]->value = {0.1, -0.3, 0.7};
    st[0]->value = {0.2, -0.1, 0.4};
    st[1]->value = {1.0, 2.0, 0.5};
    const auto old_mean = st[0]->value;
    const auto old_var = st[1]->value;

    const auto in = random_batch(Dims{2, 2, 1, 3}, 5, 21);
    const Batch<double> train_out = seq.forward(in, ForwardContext{Mode::train, 0});

    for (std::size_t c = 0; c < 3; ++c) {
        double mu = 0, var = 0;
        std::size_t n = 0;
        for (const auto& v : in)
            for (std::size_t i = c; i < v.size(); i += 3) mu += v[i], ++n;
        mu /= double(n);
        for (const auto& v : in)
            for (std::size_t i = c; i < v.size(); i += 3) var += (v[i] - mu) * (v[i] - mu);
        var /= double(n);
        EXPECT_NEAR(st[0]->value[c], m * old_mean[c] + (1 - m) * mu, 1e-12);
        EXPECT_NEAR(st[1]->value[c], m * old_var[c] + (1 - m) * var, 1e-12);
        for (std::size_t s = 0; s < in.size(); ++s)
            for (std::size_t i = c; i < in[s].size(); i += 3)
                EXPECT_NEAR(train_out[s][i], (in[s][i] - mu) / std::sqrt(var + eps) * ps[0]->value[c] + ps[1]->value[c],
                            1e-12);
    }

    const Batch<double> infer = seq.forward(in, ForwardContext{Mode::inference, 0});
    for (std::size_t s = 0; s < in.size(); ++s)
        for (std::size_t i = 0; i < in[s].size(); ++i) {
            const std::size_t c = i % 3;
            const double expect =
                (in[s][i] - st[0]->value[c]) / std::sqrt(st[1]->value[c] + eps) * ps[0]->value[c] + ps[1]->value[c];
            EXPECT_NEAR(infer[s][i], expect, 1e-12);
        }
}

TEST(BatchNorm, InferenceLeavesMovingStatsAlone) {
    LayerSpec bn = LayerSpec::batch_norm(0.5);
    bn.name = "bn";
    Sequential<double> seq({bn}, Dims{3, 1, 1, 2}, "");
    std::vector<StateTensor<double>*> st;
    seq.collect_state(st);
    seq.forward(random_batch(Dims{3, 1, 1, 2}, 4, 1), ForwardContext{Mode::inference, 0});
    EXPECT_EQ(st[0]->value, (std::vector<double>{0, 0}));
    EXPECT_EQ(st[1]->value, (std::vector<double>{1, 1}));
}

TEST(Dropout, TrainModeExpectationMatchesInference) {
    const double rate = 0.3, x = 2.0;
    LayerSpec d = LayerSpec::dropout(rate);
    d.name = "drop";
    Sequential<double> seq({d}, Dims::vector(1), "");
    const Batch<double> in{Volume<double>(Dims::vector(1), x)};
    const std::size_t n = 20000;
    double sum = 0;
    std::size_t zeros = 0;
    for (std::size_t s = 0; s < n; ++s) {
        const double y = seq.forward(in, ForwardContext{Mode::train, s})[0][0];
        sum += y;
        if (y == 0.0) {
            ++zeros;
        } else {
            EXPECT_DOUBLE_EQ(y, x / (1 - rate));
        }
    }
    const double sigma = x * std::sqrt(rate / (1 - rate)) / std::sqrt(double(n));
    EXPECT_NEAR(sum / double(n), seq.forward(in, ForwardContext{Mode::inference, 0})[0][0], 3 * sigma);
    const double zsig = std::sqrt(rate * (1 - rate) / double(n));
    EXPECT_NEAR(double(zeros) / double(n), rate, 3 * zsig);
}

TEST(Dropout, MasksAreSeedDeterministic) {
    LayerSpec d = LayerSpec::dropout(0.5);
    d.name = "drop";
    Sequential<double> seq({d}, Dims::vector(64), "");
    const Batch<double> in{Volume<double>(Dims::vector(64), 1.0)};
    const Batch<double> a = seq.forward(in, ForwardContext{Mode::train, 7});
    const Batch<double> b = seq.forward(in, ForwardContext{Mode::train, 7});
    const Batch<double> c = seq.forward(in, ForwardContext{Mode::train, 8});
    EXPECT_EQ(a, b);
    EXPECT_NE(a, c);
}

namespace {

Sequential<double> block(std::size_t filters, std::size_t stride, const Dims& in) {
    LayerSpec r = LayerSpec::residual(filters, stride, 0.9);
    r.name = "blk";
    return Sequential<double>({r}, in, "");
}

std::vector<Param<double>*> params_of(Sequential<double>& s) {
    std::vector<Param<double>*> ps;
    s.collect_params(ps);
    return ps;
}

}  // namespace

TEST(Residual, ZeroedPathIsIdentity) {
    const Dims d{4, 4, 4, 3};
    auto seq = block(3, 1, d);
    for (auto* p : params_of(seq)) std::fill(p->value.begin(), p->value.end(), 0.0);
    const auto in = random_batch(d, 2, 3);
    for (Mode mode : {Mode::inference, Mode::train}) EXPECT_EQ(seq.forward(in, ForwardContext{mode, 0}), in);
}

TEST(Residual, ZeroedPathWithProjectionGivesProjection) {
    const Dims d{4, 4, 4, 2};
    auto seq = block(5, 2, d);
    auto& blk = dynamic_cast<ResidualBlockLayer<double>&>(seq.layer(0));
    ASSERT_TRUE(blk.projected());
    Rng rng(4);
    for (auto* p : params_of(seq)) {
        const bool on_path = p->name.find("/proj") == std::string::npos;
        for (auto& v : p->value) v = on_path ? 0.0 : rng.uniform(-1, 1);
    }
    const auto in = random_batch(d, 2, 5);
    const ForwardContext ctx{Mode::inference, 0};
    const Batch<double> y = seq.forward(in, ctx);
    const Batch<double> proj = blk.shortcut().forward(in, ctx);
    EXPECT_EQ(y, proj);
}

TEST(Residual, PathDecomposition) {
    const Dims d{5, 5, 5, 3};
    auto seq = block(3, 1, d);
    std::vector<LayerSpec> plain = {
        LayerSpec::conv(3, 3, 1, 1, Activation::none), LayerSpec::batch_norm(0.9), LayerSpec::act(Activation::relu),
        LayerSpec::conv(3, 3, 1, 1, Activation::none), LayerSpec::batch_norm(0.9)};
    const char* names[] = {"c1", "b1", "r1", "c2", "b2"};
    for (std::size_t i = 0; i < plain.size(); ++i) plain[i].name = names[i];
    Sequential<double> alone(plain, d, "");

    auto a = params_of(seq);
    auto b = params_of(alone);
    ASSERT_EQ(a.size(), b.size());
    Rng rng(12);
    for (std::size_t i = 0; i < a.size(); ++i) {
        for (auto& v : a[i]->value) v = rng.uniform(-0.5, 0.5);
        b[i]->value = a[i]->value;
    }
    const auto in = random_batch(d, 2, 13);
    const ForwardContext ctx{Mode::train, 0};
    const Batch<double> y = seq.forward(in, ctx);
    const Batch<double> f = alone.forward(in, ctx);
    for (std::size_t s = 0; s < in.size(); ++s)
        for (std::size_t i = 0; i < in[s].size(); ++i) EXPECT_NEAR(y[s][i] - in[s][i], f[s][i], 1e-12);
}

TEST(Resnet, LayoutAndCounts) {
    const ModelSpec spec = build_resnet18_3d(Dims{64, 64, 64, 1}, 3);
    const Summary s = summarize(spec);
    std::size_t weighted = 0;
    for (const auto& l : spec.branches.front().layers) {
        if (l.kind == LayerKind::conv3d || l.kind == LayerKind::dense) weighted += 1;
        if (l.kind == LayerKind::residual_block) weighted += 2;
        if (l.kind == LayerKind::batch_norm || l.kind == LayerKind::residual_block) {
            EXPECT_DOUBLE_EQ(l.momentum, 0.99);
        }
    }
    EXPECT_EQ(weighted, 18u);
    const auto gap = std::find_if(s.rows.begin(), s.rows.end(), [](const SummaryRow& r) { return r.layer == "head_gap"; });
    ASSERT_NE(gap, s.rows.end());
    EXPECT_EQ(gap->output, Dims::vector(512));
    EXPECT_EQ(s.rows.back().params, 1539u);
    EXPECT_LT(s.rows.back().params, 2000u);
}

TEST(Resnet, InputTooSmallForStem) {
    EXPECT_THROW(build_resnet18_3d(Dims{3, 3, 3, 1}, 3), SpecError);
}

TEST(Surgery, TrainableCountsAtFullWidth) {
    const ModelSpec base = build_resnet18_3d(Dims{64, 64, 64, 1}, 3);
    EXPECT_EQ(summarize(surgery_spec(base, SurgeryRecipe::mri)).trainable, 1539u);
    EXPECT_EQ(summarize(surgery_spec(base, SurgeryRecipe::pet)).trainable, 771u);
    const ModelSpec pet = surgery_spec(base, SurgeryRecipe::pet);
    for (const auto& l : pet.branches.front().layers) EXPECT_NE(l.tag, "stage4") << l.name;
}

TEST(Surgery, RejectsNonResnet) {
    EXPECT_THROW(surgery_spec(load_model_spec(arch("pet_8_mini")), SurgeryRecipe::mri), SpecError);
    EXPECT_THROW(parse_recipe("ct"), InputError);
}

TEST(Surgery, BackboneAndMovingStatsStayBitwiseFrozen) {
    auto pre = build<float>(mini_resnet(), 1);
    for (auto* s : pre.state()) {
        for (auto& v : s->value) v = s->name.ends_with("variance") ? 1.5f : 0.25f;
    }
    for (auto recipe : {SurgeryRecipe::mri, SurgeryRecipe::pet}) {
        auto m = surgery(pre, recipe, 2);
        EXPECT_EQ(m.trainable_count(), recipe == SurgeryRecipe::mri ? 8u * 3 + 3 : 6u * 3 + 3);
        for (auto* p : m.parameters()) {
            const Param<float>* src = pre.find_param(p->name);
            if (p->trainable) {
                EXPECT_TRUE(p->name.starts_with("transfer_dense")) << p->name;
            } else {
                ASSERT_NE(src, nullptr) << p->name;
                EXPECT_EQ(p->value, src->value) << p->name;
            }
        }
        const auto before = m.snapshot();
        Adam<float> opt(m.parameters());
        Batch<float> in;
        for (int i = 0; i < 4; ++i) in.push_back(random_volume<float>(Dims{16, 16, 16, 1}, 50 + i));
        const std::vector<std::size_t> labels{0, 1, 2, 1};
        for (int step = 0; step < 10; ++step) {
            m.zero_grad();
            Batch<float> grad;
            batch_cross_entropy(m.forward(in, Mode::train, step), labels, &grad);
            m.backward(grad);
            opt.step(1e-2);
        }
        const auto after = m.snapshot();
        bool head_moved = false;
        for (std::size_t i = 0; i < m.parameters().size(); ++i) {
            if (m.parameters()[i]->trainable) {
                head_moved |= after.params[i] != before.params[i];
            } else {
                EXPECT_EQ(after.params[i], before.params[i]) << m.parameters()[i]->name;
            }
        }
        EXPECT_TRUE(head_moved);
        EXPECT_EQ(after.state, before.state);
    }
}

TEST(Fusion, WidthIsSumOfBranchWidths) {
    auto pet = single({LayerSpec::simple(LayerKind::flatten), LayerSpec::dense(256, Activation::relu),
                       LayerSpec::dense(3, Activation::softmax)},
                      Dims{2, 2, 2, 1});
    auto mri = single({LayerSpec::conv(512, 1), LayerSpec::simple(LayerKind::global_avg_pool3d),
                       LayerSpec::dense(3, Activation::softmax)},
                      Dims{2, 2, 2, 1});
    pet.branches[0].layers = strip_classifier(pet.branches[0].layers);
    mri.branches[0].layers = strip_classifier(mri.branches[0].layers);
    const ModelSpec fused = fuse_spec(pet, mri, {LayerSpec::dense(3, Activation::softmax)});
    const Summary s = summarize(fused);
    const auto cat = std::find_if(s.rows.begin(), s.rows.end(), [](const SummaryRow& r) { return r.layer == "concatenate"; });
    ASSERT_NE(cat, s.rows.end());
    EXPECT_EQ(cat->output, Dims::vector(768));
    EXPECT_EQ(s.rows.back().params, 768u * 3 + 3);
}

TEST(Fusion, BranchMustEndInVector) {
    auto pet = single({LayerSpec::conv(2, 1), LayerSpec::simple(LayerKind::flatten),
                       LayerSpec::dense(3, Activation::softmax)},
                      Dims{2, 2, 2, 1});
    auto raw = pet;
    raw.branches[0].layers = {LayerSpec::conv(2, 1)};
    EXPECT_THROW(fuse_spec(raw, raw, {LayerSpec::dense(3, Activation::softmax)}), SpecError);
}

TEST(Fusion, TrainedBranchesAreCopiedAndBothReceiveGradients) {
    auto pet = build<double>(load_model_spec(arch("pet_8_mini")), 1);
    auto mri = build<double>(load_model_spec(arch("mri_9_mini")), 2);
    auto pet_b = pet.spec();
    auto mri_b = mri.spec();
    pet_b.branches[0].layers = strip_classifier(pet_b.branches[0].layers);
    mri_b.branches[0].layers = strip_classifier(mri_b.branches[0].layers);
    const ModelSpec fused_spec = fuse_spec(pet_b, mri_b, {LayerSpec::dense(3, Activation::softmax)});
    auto fused = build<double>(fused_spec, 3);
    EXPECT_GT(fused.copy_from(pet, "pet/"), 0u);
    EXPECT_GT(fused.copy_from(mri, "mri/"), 0u);
    EXPECT_EQ(fused.find_param("pet/conv3d_1/kernel")->value, pet.find_param("conv3d_1/kernel")->value);
    EXPECT_EQ(fused.find_param("mri/conv3d_1/kernel")->value, mri.find_param("conv3d_1/kernel")->value);

    std::vector<Batch<double>> in(2);
    for (int i = 0; i < 2; ++i) {
        in[0].push_back(random_volume(fused_spec.branches[0].input, 10 + i, 0, 1));
        in[1].push_back(random_volume(fused_spec.branches[1].input, 20 + i, 0, 1));
    }
    fused.zero_grad();
    Batch<double> grad;
    batch_cross_entropy(fused.forward(in, Mode::inference), std::vector<std::size_t>{0, 2}, &grad);
    fused.backward(grad);
    auto norm = [](const Param<double>* p) {
        double s = 0;
        for (double g : p->grad) s += g * g;
        return s;
    };
    EXPECT_GT(norm(fused.find_param("pet/conv3d_1/kernel")), 0.0);
    EXPECT_GT(norm(fused.find_param("mri/conv3d_1/kernel")), 0.0);
}

TEST(Checkpoint, RoundTripIsBitwise) {
    auto m = build<float>(load_model_spec(arch("two_branch_mini")), 9);
    for (auto* s : m.state())
        for (auto& v : s->value) v = 0.125f;
    const auto bytes = encode_checkpoint(m, {{"note", "x"}});
    nlohmann::json manifest;
    auto back = decode_checkpoint<float>(bytes, "ckpt", &manifest);
    EXPECT_EQ(manifest["meta"]["note"], "x");
    ASSERT_EQ(back.parameters().size(), m.parameters().size());
    for (std::size_t i = 0; i < m.parameters().size(); ++i) {
        EXPECT_EQ(back.parameters()[i]->name, m.parameters()[i]->name);
        EXPECT_EQ(back.parameters()[i]->value, m.parameters()[i]->value);
        EXPECT_EQ(back.parameters()[i]->trainable, m.parameters()[i]->trainable);
    }
    for (std::size_t i = 0; i < m.state().size(); ++i) EXPECT_EQ(back.state()[i]->value, m.state()[i]->value);
    EXPECT_EQ(encode_checkpoint(back, {{"note", "x"}}), bytes);
}

TEST(Checkpoint, CorruptionIsDetected) {
    auto m = build<float>(load_model_spec(arch("pet_8_mini")), 9);
    const auto bytes = encode_checkpoint(m);
    EXPECT_THROW(decode_checkpoint<float>(std::span<const std::uint8_t>{}), TruncationError);
    EXPECT_THROW(decode_checkpoint<float>(std::span(bytes).first(bytes.size() - 3)), TruncationError);
    auto magic = bytes;
    magic[0] ^= 1;
    EXPECT_THROW(decode_checkpoint<float>(magic), FormatError);
    auto version = bytes;
    version[4] = 7;
    EXPECT_THROW(decode_checkpoint<float>(version), VersionError);
    Rng rng(3);
    for (int t = 0; t < 40; ++t) {
        auto flipped = bytes;
        const std::size_t pos = bytes.size() - 1 - rng.below(bytes.size() / 2);
        flipped[pos] ^= std::uint8_t(1u << rng.below(8));
        EXPECT_THROW(decode_checkpoint<float>(flipped), StorageError) << pos;
    }
}
