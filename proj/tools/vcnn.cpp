// vcnn: command-line driver for the volumetric CNN toolkit.
//
// Exit codes: 0 success, 1 usage or configuration error, 2 data or format
// error, 3 numeric failure.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "vcnn/vcnn.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace vcnn;

namespace {

enum Exit : int { kOk = 0, kUsage = 1, kData = 2, kNumeric = 3 };

Dims parse_dims(const std::vector<std::size_t>& v) {
    if (v.size() != 3 && v.size() != 4) throw InputError("dims need 3 or 4 comma-separated extents");
    Dims d{v[0], v[1], v[2], v.size() == 4 ? v[3] : 1};
    if (d.x == 0 || d.y == 0 || d.z == 0 || d.c == 0) throw InputError("dims must be >= 1");
    return d;
}

json read_json_file(const std::string& path, const char* what) {
    std::ifstream in(path);
    if (!in) throw InputError(std::string("cannot open ") + what + " '" + path + "'");
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw InputError("cannot parse " + std::string(what) + " '" + path + "': " + e.what());
    }
}

void write_json(const std::string& path, const json& j) { io::write_text_atomic(path, j.dump(2) + "\n"); }

void write_curve(const std::string& path, const LearningCurve& curve) {
    std::ostringstream os;
    write_curve_csv(os, curve);
    io::write_text_atomic(path, os.str());
}

bool is_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    char magic[4] = {};
    return in.read(magic, 4) && std::equal(magic, magic + 4, kCheckpointMagic.begin());
}

bool same_path(const fs::path& a, const fs::path& b) {
    std::error_code ec;
    return fs::exists(a) && fs::exists(b) && fs::equivalent(a, b, ec);
}

// Split files ---------------------------------------------------------------

struct SplitFile {
    std::vector<std::size_t> train;
    std::vector<std::size_t> test;
};

json split_json(const DatasetManifest& m, const SplitIndices& s, double frac, std::uint64_t seed) {
    json j{{"format", "vcnn-split"}, {"version", 1}, {"seed", seed}, {"test_fraction", frac}};
    for (const auto& [key, idx] : {std::pair{"train", &s.train}, std::pair{"test", &s.test}}) {
        std::array<std::size_t, kClassCount> counts{};
        json ids = json::array();
        for (auto i : *idx) {
            ids.push_back(m.entries[i].subject_id);
            ++counts[static_cast<std::size_t>(m.entries[i].label)];
        }
        j[key] = {{"indices", *idx}, {"ids", ids}};
        for (std::size_t c = 0; c < kClassCount; ++c) j[key]["class_counts"][kClassNames[c]] = counts[c];
    }
    return j;
}

SplitFile load_split(const std::string& path, const DatasetManifest& m) {
    const json j = read_json_file(path, "split file");
    SplitFile s;
    try {
        if (j.at("format") != "vcnn-split") throw FormatError("'" + path + "' is not a split file");
        for (auto [key, dst] : {std::pair{"train", &s.train}, std::pair{"test", &s.test}}) {
            const auto& part = j.at(key);
            *dst = part.at("indices").get<std::vector<std::size_t>>();
            const auto ids = part.at("ids").get<std::vector<std::string>>();
            if (ids.size() != dst->size()) throw FormatError("split '" + path + "' has mismatched id list");
            for (std::size_t k = 0; k < dst->size(); ++k) {
                const auto i = (*dst)[k];
                if (i >= m.entries.size() || m.entries[i].subject_id != ids[k]) {
                    throw DataError("split '" + path + "' does not belong to this dataset (index " +
                                    std::to_string(i) + ")");
                }
            }
        }
    } catch (const json::exception& e) {
        throw FormatError("malformed split file '" + path + "': " + e.what());
    }
    assert_disjoint(s.train, s.test);
    return s;
}

std::vector<std::size_t> all_indices(std::size_t n) {
    std::vector<std::size_t> v(n);
    for (std::size_t i = 0; i < n; ++i) v[i] = i;
    return v;
}

std::vector<PatientRecord> pick(const std::vector<PatientRecord>& recs, const std::vector<std::size_t>& idx) {
    std::vector<PatientRecord> out;
    out.reserve(idx.size());
    for (auto i : idx) out.push_back(recs.at(i));
    return out;
}

// Model sources -------------------------------------------------------------

struct ModelSource {
    ModelSpec spec;
    std::optional<Model<float>> pretrained;
};

ModelSource model_source(const std::string& arch, const std::string& init) {
    if (arch.empty() == init.empty()) throw InputError("give exactly one of --arch or --init");
    ModelSource src;
    if (!arch.empty()) {
        src.spec = load_model_spec(arch);
    } else {
        src.pretrained.emplace(load_checkpoint<float>(init));
        src.spec = src.pretrained->spec();
    }
    return src;
}

// Commands ------------------------------------------------------------------

struct InspectArgs {
    std::string file;
    std::string out;
};

int cmd_inspect(const InspectArgs& a) {
    const ModelSpec spec = is_checkpoint(a.file) ? load_checkpoint<float>(a.file).spec() : load_model_spec(a.file);
    std::ostringstream os;
    print_summary(os, spec.name, summarize(spec));
    if (!a.out.empty()) io::write_text_atomic(a.out, os.str());
    std::cout << os.str();
    return kOk;
}

struct InitArgs {
    std::string arch;
    std::string out;
    std::uint64_t seed = 0;
};

int cmd_init(const InitArgs& a) {
    const auto model = build<float>(load_model_spec(a.arch), Rng::derive(a.seed, "init"));
    save_checkpoint(model, a.out, json{{"command", "init"}, {"seed", a.seed}});
    std::cout << "wrote " << a.out << " (" << with_thousands(model.parameter_count()) << " params)\n";
    return kOk;
}

struct GenArgs {
    std::string out;
    std::size_t per_class = 40;
    std::vector<std::size_t> dims{16, 16, 16};
    double signal = 1.0;
    double noise = 0.1;
    std::uint64_t seed = 7;
    std::vector<std::string> modalities{"pet", "mri"};
    std::vector<std::size_t> class_counts;  // CN, AD, MCI; overrides per_class
};

int cmd_gen_synth(const GenArgs& a) {
    SyntheticConfig cfg;
    cfg.per_class = a.per_class;
    cfg.dims = parse_dims(a.dims);
    cfg.signal_strength = a.signal;
    cfg.noise_sigma = a.noise;
    cfg.seed = a.seed;
    cfg.with_pet = cfg.with_mri = false;
    for (const auto& m : a.modalities) {
        switch (parse_modality(m)) {
            case Modality::PET: cfg.with_pet = true; break;
            case Modality::MRI: cfg.with_mri = true; break;
            default: throw InputError("synthetic data supports pet and mri only");
        }
    }
    if (!a.class_counts.empty()) {
        if (a.class_counts.size() != kClassCount) throw InputError("--class-counts needs CN,AD,MCI");
        cfg.per_class = *std::max_element(a.class_counts.begin(), a.class_counts.end());
    }
    const auto all = generate_synthetic(cfg);
    std::vector<PatientRecord> recs;
    for (std::size_t k = 0; k < all.size(); ++k) {
        // Records come out class by class, per_class each.
        if (a.class_counts.empty() || k % cfg.per_class < a.class_counts[k / cfg.per_class]) recs.push_back(all[k]);
    }
    const auto m = write_dataset(a.out, recs);
    std::cout << "wrote " << m.entries.size() << " records to " << a.out << " (CN " << m.class_counts[0] << ", AD "
              << m.class_counts[1] << ", MCI " << m.class_counts[2] << ")\n";
    return kOk;
}

struct SplitArgs {
    std::string data;
    std::string out;
    double test_frac = 0.2;
    std::uint64_t seed = 0;
};

int cmd_split(const SplitArgs& a) {
    const auto m = read_manifest(a.data);
    std::vector<std::size_t> labels;
    for (auto l : m.labels()) labels.push_back(static_cast<std::size_t>(l));
    const auto s = stratified_split(labels, a.test_frac, a.seed);
    const json j = split_json(m, s, a.test_frac, a.seed);
    write_json(a.out, j);
    std::cout << "train " << s.train.size() << ", test " << s.test.size() << " (CN "
              << j["test"]["class_counts"]["CN"] << ", AD " << j["test"]["class_counts"]["AD"] << ", MCI "
              << j["test"]["class_counts"]["MCI"] << ")\n";
    return kOk;
}

struct TrainArgs {
    std::string arch;
    std::string init;
    std::string hyper;
    std::string data;
    std::string split;
    std::string out;
    std::string curve;
    double val_frac = 0.0;
    std::optional<std::uint64_t> seed;
};

int cmd_train(const TrainArgs& a) {
    HyperParams h = load_hyper(a.hyper);
    if (a.seed) h.seed = *a.seed;
    auto src = model_source(a.arch, a.init);
    const ModelSpec spec = apply_overrides(src.spec, h);
    const auto ds = load_dataset(a.data);
    const auto pool = a.split.empty() ? all_indices(ds.records.size()) : load_split(a.split, ds.manifest).train;

    std::vector<std::size_t> train_idx = pool, val_idx;
    if (a.val_frac > 0.0) {
        std::vector<std::size_t> labels;
        for (auto i : pool) labels.push_back(static_cast<std::size_t>(ds.records[i].label));
        const auto s = stratified_split(labels, a.val_frac, Rng::derive(h.seed, "validation"));
        train_idx.clear();
        for (auto k : s.train) train_idx.push_back(pool[k]);
        for (auto k : s.test) val_idx.push_back(pool[k]);
    }
    const auto train_set = to_examples<float>(pick(ds.records, train_idx), spec);
    const auto val_set = to_examples<float>(pick(ds.records, val_idx), spec);

    Model<float> model = build<float>(spec, Rng::derive(h.seed, "init"));
    if (src.pretrained) model.copy_from(*src.pretrained);
    TrainOptions opts;
    opts.on_epoch = [&](const CurveRow& r) {
        std::printf("epoch %3zu  loss %.4f  acc %.4f", r.epoch, r.train_loss, r.train_acc);
        if (r.val_loss) std::printf("  val_loss %.4f  val_acc %.4f", *r.val_loss, *r.val_acc);
        std::printf("\n");
    };
    const auto res = train(model, train_set, val_set, h, opts);
    save_checkpoint(model, a.out,
                    json{{"command", "train"},
                         {"hyper", to_json(h)},
                         {"epochs_run", res.curve.size()},
                         {"best_epoch", res.best_epoch},
                         {"stopped_early", res.stopped_early}});
    if (!a.curve.empty()) write_curve(a.curve, res.curve);
    return kOk;
}

struct RkfoldArgs {
    std::string arch;
    std::string init;
    std::string hyper;
    std::string data;
    std::string split;
    std::string report;
    std::string curve;
    std::size_t k = 10;
    std::size_t reps = 5;
    std::size_t jobs = 1;
    std::optional<std::uint64_t> seed;
};

int cmd_rkfold(const RkfoldArgs& a) {
    HyperParams h = load_hyper(a.hyper);
    if (a.seed) h.seed = *a.seed;
    auto src = model_source(a.arch, a.init);
    const auto ds = load_dataset(a.data);
    const auto pool = a.split.empty() ? all_indices(ds.records.size()) : load_split(a.split, ds.manifest).train;
    const auto data = to_examples<float>(pick(ds.records, pool), apply_overrides(src.spec, h));
    std::vector<std::size_t> labels;
    for (const auto& ex : data) labels.push_back(ex.label);
    const auto plan = repeated_stratified_kfold(labels, a.k, a.reps, Rng::derive(h.seed, "folds"));

    RkfoldOptions opts;
    opts.jobs = a.jobs;
    opts.on_run = [](const RunResult& r) {
        if (r.failed) {
            std::printf("rep %zu fold %zu  FAILED: %s\n", r.rep + 1, r.fold + 1, r.error.c_str());
        } else {
            std::printf("rep %zu fold %zu  val_acc %.4f  val_loss %.4f\n", r.rep + 1, r.fold + 1, r.val_accuracy,
                        r.val_loss);
        }
    };
    WarmStart<float> warm;
    if (src.pretrained) warm = [&](Model<float>& m) { m.copy_from(*src.pretrained); };
    const auto report = run_rkfold<float>(src.spec, data, h, plan, opts, warm);

    json j = to_json(report);
    j["dataset_indices"] = pool;
    write_json(a.report, j);
    if (!a.curve.empty()) write_curve(a.curve, report.mean_curve);
    std::printf("mean val accuracy %.4f (std %.4f) over %zu runs\n", report.mean_accuracy, report.std_accuracy,
                report.runs.size() - report.failed_runs);
    if (report.flagged) {
        std::fprintf(stderr, "error: %zu of %zu runs failed numerically\n", report.failed_runs, report.runs.size());
        return kNumeric;
    }
    return kOk;
}

struct TestEvalArgs {
    std::string checkpoint;
    std::string data;
    std::string split;
    std::string out;
    std::size_t batch_size = 8;
};

int cmd_test_eval(const TestEvalArgs& a) {
    auto model = load_checkpoint<float>(a.checkpoint);
    const auto ds = load_dataset(a.data);
    const auto idx = a.split.empty() ? all_indices(ds.records.size()) : load_split(a.split, ds.manifest).test;
    const auto set = to_examples<float>(pick(ds.records, idx), model.spec());
    if (set.empty()) throw DataError("no samples to evaluate");
    const auto ev = evaluate(model, set, a.batch_size);
    std::vector<std::size_t> truth;
    for (const auto& ex : set) truth.push_back(ex.label);
    const auto cm = confusion_matrix(truth, ev.predictions, model.spec().classes);
    json j = metrics_json(cm, static_cast<std::size_t>(Label::AD));
    j["loss"] = ev.loss;
    j["positive_class"] = "AD";
    j["class_order"] = kClassNames;
    j["samples_evaluated"] = json::array();
    for (std::size_t k = 0; k < idx.size(); ++k) {
        j["samples_evaluated"].push_back({{"id", ds.records[idx[k]].subject_id},
                                          {"label", kClassNames[truth[k]]},
                                          {"predicted", kClassNames.at(ev.predictions[k])}});
    }
    write_json(a.out, j);
    std::printf("accuracy %.4f  sensitivity %.4f  specificity %.4f  (%zu samples)\n", j["accuracy"].get<double>(),
                j["sensitivity"].get<double>(), j["specificity"].get<double>(), set.size());
    return kOk;
}

struct PreprocessArgs {
    std::string chain;
    std::string data;
    std::string out;
    std::vector<std::string> modalities;
};

int cmd_preprocess(const PreprocessArgs& a) {
    const auto chain = preprocess_chain_from_json(read_json_file(a.chain, "preprocessing chain"));
    if (same_path(a.data, a.out)) throw InputError("--out must differ from --data");
    std::vector<Modality> only;
    for (const auto& m : a.modalities) only.push_back(parse_modality(m));
    auto recs = load_dataset(a.data).records;
    for (auto& r : recs) {
        for (auto& mv : r.volumes) {
            if (only.empty() || std::find(only.begin(), only.end(), mv.modality) != only.end()) {
                mv.volume = apply_chain(mv.volume, chain);
                if (!mv.volume.all_finite()) {
                    throw NumericError("preprocessing produced non-finite values for '" + r.subject_id + "'");
                }
            }
        }
    }
    const auto m = write_dataset(a.out, recs);
    std::cout << "wrote " << m.entries.size() << " preprocessed records to " << a.out << "\n";
    return kOk;
}

struct AugmentArgs {
    std::string config;
    std::string preset;
    std::string data;
    std::string subject;
    std::string out;
    std::size_t count = 4;
    std::uint64_t seed = 0;
};

int cmd_augment_preview(const AugmentArgs& a) {
    if (a.config.empty() == a.preset.empty()) throw InputError("give exactly one of --config or --preset");
    AugmentConfig cfg;
    if (!a.config.empty()) {
        cfg = augment_config_from_json(read_json_file(a.config, "augmentation config"));
    } else if (a.preset == "pet") {
        cfg = AugmentConfig::pet();
    } else if (a.preset == "mri") {
        cfg = AugmentConfig::mri();
    } else {
        throw InputError("unknown preset '" + a.preset + "' (expected pet or mri)");
    }
    if (same_path(a.data, a.out)) throw InputError("--out must differ from --data");
    const auto ds = load_dataset(a.data);
    const PatientRecord* src = &ds.records.front();
    if (!a.subject.empty()) {
        auto it = std::find_if(ds.records.begin(), ds.records.end(),
                               [&](const PatientRecord& r) { return r.subject_id == a.subject; });
        if (it == ds.records.end()) throw DataError("no subject '" + a.subject + "' in " + a.data);
        src = &*it;
    }
    std::vector<PatientRecord> out;
    for (std::size_t n = 0; n < a.count; ++n) {
        PatientRecord r = *src;
        r.subject_id = src->subject_id + "_aug" + std::to_string(n);
        for (std::size_t b = 0; b < r.volumes.size(); ++b) {
            r.volumes[b].volume = augment(src->volumes[b].volume, cfg, augment_seed(a.seed, 0, n, b));
        }
        out.push_back(std::move(r));
    }
    write_dataset(a.out, out);
    std::cout << "wrote " << out.size() << " augmented copies of " << src->subject_id << " to " << a.out << "\n";
    return kOk;
}

struct SurgeryArgs {
    std::string checkpoint;
    std::string mode;
    std::string out;
    std::size_t classes = 3;
    std::uint64_t seed = 0;
};

int cmd_surgery(const SurgeryArgs& a) {
    const auto recipe = parse_recipe(a.mode);
    const auto pretrained = load_checkpoint<float>(a.checkpoint);
    const auto model = surgery(pretrained, recipe, Rng::derive(a.seed, "init"), a.classes);
    save_checkpoint(model, a.out, json{{"command", "surgery"}, {"mode", a.mode}, {"source", pretrained.spec().name}});
    std::cout << "trainable params: " << with_thousands(model.trainable_count()) << "\n"
              << "frozen params: " << with_thousands(model.parameter_count() - model.trainable_count()) << "\n";
    return kOk;
}

int report(const char* kind, const std::exception& e, int code) {
    std::fprintf(stderr, "%s: %s\n", kind, e.what());
    return code;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"vcnn: 3D CNN training, evaluation and data tools"};
    app.require_subcommand(1);
    std::function<int()> run;

    InspectArgs inspect;
    auto* c = app.add_subcommand("inspect", "Print the layer table of an architecture or checkpoint");
    c->add_option("file", inspect.file, "Architecture JSON or checkpoint")->required();
    c->add_option("--out", inspect.out, "Also write the table to this file");
    c->callback([&] { run = [&] { return cmd_inspect(inspect); }; });

    InitArgs init;
    c = app.add_subcommand("init", "Build and initialize a model, saving it as a checkpoint");
    c->add_option("--arch", init.arch)->required();
    c->add_option("--out", init.out)->required();
    c->add_option("--seed", init.seed);
    c->callback([&] { run = [&] { return cmd_init(init); }; });

    GenArgs gen;
    c = app.add_subcommand("gen-synth", "Write a synthetic separable dataset");
    c->add_option("--out", gen.out)->required();
    c->add_option("--per-class", gen.per_class);
    c->add_option("--dims", gen.dims)->delimiter(',');
    c->add_option("--signal", gen.signal);
    c->add_option("--noise", gen.noise);
    c->add_option("--seed", gen.seed);
    c->add_option("--modalities", gen.modalities)->delimiter(',');
    c->add_option("--class-counts", gen.class_counts, "Per-class sizes CN,AD,MCI")->delimiter(',');
    c->callback([&] { run = [&] { return cmd_gen_synth(gen); }; });

    SplitArgs split;
    c = app.add_subcommand("split", "Stratified train/test split of a dataset");
    c->add_option("--data", split.data)->required();
    c->add_option("--out", split.out)->required();
    c->add_option("--test-frac", split.test_frac);
    c->add_option("--seed", split.seed);
    c->callback([&] { run = [&] { return cmd_split(split); }; });

    TrainArgs tr;
    c = app.add_subcommand("train", "Train a model and save a checkpoint plus learning curve");
    c->add_option("--arch", tr.arch);
    c->add_option("--init", tr.init, "Start from this checkpoint");
    c->add_option("--hyper", tr.hyper)->required();
    c->add_option("--data", tr.data)->required();
    c->add_option("--split", tr.split, "Train on the split's train indices");
    c->add_option("--val-frac", tr.val_frac, "Hold out this stratified fraction for validation");
    c->add_option("--out", tr.out)->required();
    c->add_option("--curve", tr.curve);
    c->add_option("--seed", tr.seed);
    c->callback([&] { run = [&] { return cmd_train(tr); }; });

    RkfoldArgs rk;
    c = app.add_subcommand("rkfold", "Repeated stratified k-fold evaluation");
    c->add_option("--arch", rk.arch);
    c->add_option("--init", rk.init, "Warm-start every fold from this checkpoint");
    c->add_option("--hyper", rk.hyper)->required();
    c->add_option("--data", rk.data)->required();
    c->add_option("--split", rk.split, "Restrict to the split's train indices");
    c->add_option("--report", rk.report)->required();
    c->add_option("--curve", rk.curve, "Averaged learning curve CSV");
    c->add_option("--k", rk.k);
    c->add_option("--reps", rk.reps);
    c->add_option("--jobs", rk.jobs);
    c->add_option("--seed", rk.seed);
    c->callback([&] { run = [&] { return cmd_rkfold(rk); }; });

    TestEvalArgs te;
    c = app.add_subcommand("test-eval", "Confusion matrix and metrics of a checkpoint on held-out data");
    c->add_option("--checkpoint", te.checkpoint)->required();
    c->add_option("--data", te.data)->required();
    c->add_option("--split", te.split, "Evaluate the split's test indices");
    c->add_option("--out", te.out)->required();
    c->add_option("--batch-size", te.batch_size);
    c->callback([&] { run = [&] { return cmd_test_eval(te); }; });

    PreprocessArgs pp;
    c = app.add_subcommand("preprocess", "Apply a preprocessing chain to every record");
    c->add_option("--chain", pp.chain)->required();
    c->add_option("--data", pp.data)->required();
    c->add_option("--out", pp.out)->required();
    c->add_option("--modalities", pp.modalities, "Only these modalities (default all)")->delimiter(',');
    c->callback([&] { run = [&] { return cmd_preprocess(pp); }; });

    AugmentArgs au;
    c = app.add_subcommand("augment-preview", "Write augmented copies of one subject");
    c->add_option("--config", au.config);
    c->add_option("--preset", au.preset);
    c->add_option("--data", au.data)->required();
    c->add_option("--subject", au.subject);
    c->add_option("--out", au.out)->required();
    c->add_option("--count", au.count);
    c->add_option("--seed", au.seed);
    c->callback([&] { run = [&] { return cmd_augment_preview(au); }; });

    SurgeryArgs sg;
    c = app.add_subcommand("surgery", "Truncate and freeze a pretrained ResNet, attaching a new head");
    c->add_option("--checkpoint", sg.checkpoint)->required();
    c->add_option("--mode", sg.mode)->required()->check(CLI::IsMember({"pet", "mri"}));
    c->add_option("--out", sg.out)->required();
    c->add_option("--classes", sg.classes);
    c->add_option("--seed", sg.seed);
    c->callback([&] { run = [&] { return cmd_surgery(sg); }; });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? kOk : kUsage;
    }

    try {
        return run();
    } catch (const NumericError& e) {
        return report("numeric error", e, kNumeric);
    } catch (const StorageError& e) {
        return report("storage error", e, kData);
    } catch (const DataError& e) {
        return report("data error", e, kData);
    } catch (const InputError& e) {
        return report("error", e, kUsage);
    } catch (const SpecError& e) {
        return report("spec error", e, kUsage);
    } catch (const ShapeError& e) {
        return report("shape error", e, kUsage);
    } catch (const std::exception& e) {
        return report("error", e, kData);
    }
}
