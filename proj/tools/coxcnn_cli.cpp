/*
 * coxcnn - imaging-based survival analysis with convolutional networks.
 *
 * File: tools/coxcnn_cli.cpp
 *
 * Copyright 2026 The coxcnn authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 * http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// The `coxcnn` command line: simulate -> train -> crossval -> gradcheck.
//
// Configuration precedence is CLI flags > --config JSON file > built-in
// defaults, and every command writes the full effective configuration as
// config.json next to its outputs, so any artifact can be reproduced
// bit-identically from the saved file alone (same platform).
//
// Every command takes a single global --seed; all internal random streams
// (model init, SGD shuffling/dropout, augmentation, fold assignment) are
// derived from it, so results are independent of e.g. the --jobs count.
//
// Exit codes: 0 success, 2 invalid arguments, 3 data/format error,
// 4 numerical failure (divergence, gradcheck tolerance violation, ...).

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "coxcnn/augment.hpp"
#include "coxcnn/baseline.hpp"
#include "coxcnn/errors.hpp"
#include "coxcnn/eval.hpp"
#include "coxcnn/model.hpp"
#include "coxcnn/pipeline.hpp"
#include "coxcnn/rng.hpp"
#include "coxcnn/simdata.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace coxcnn;

namespace {

constexpr const char* kVersion = "coxcnn 0.1.0";

// ---------------------------------------------------------------------------
// Config file overlay (flags > file > defaults)
// ---------------------------------------------------------------------------

// Holds the parsed --config JSON (if any) for one subcommand. Fields start
// at their built-in defaults and CLI11 has already written any parsed flag
// values into them; merge() then fills from the file only the fields whose
// flag was not passed, completing the flags > file > defaults precedence.
struct ConfigFile {
    json data; // null when no --config was given
    const CLI::App* cmd = nullptr;

    bool has(const char* pointer) const {
        return !data.is_null() && data.contains(json::json_pointer(pointer));
    }

    // Overlay a field that has no corresponding flag.
    template <typename T>
    void merge_key(const char* pointer, T& field) const {
        if (has(pointer)) data.at(json::json_pointer(pointer)).get_to(field);
    }

    // Overlay a field whose flag, when passed, wins over the file.
    template <typename T>
    void merge(const char* flag, const char* pointer, T& field) const {
        if (cmd->count(flag) > 0) return;
        merge_key(pointer, field);
    }
};

ConfigFile load_config(const CLI::App* cmd, const std::string& path) {
    ConfigFile file;
    file.cmd = cmd;
    if (path.empty()) return file;
    std::ifstream in(path);
    if (!in) throw FormatError("cannot read config file: " + path);
    try {
        in >> file.data;
    } catch (const json::exception& e) {
        throw FormatError("config file " + path + ": " + e.what());
    }
    if (!file.data.is_object()) throw FormatError("config file " + path + ": not a JSON object");
    return file;
}

// ---------------------------------------------------------------------------
// Shared model/augment/baseline flags (train and crossval)
// ---------------------------------------------------------------------------

struct ModelFlags {
    int epochs = 100;
    double lr = 1e-3;
    double momentum = 0.9;
    int batch_size = 64;
    double dropout = 0.5;
    int spp_out = 8;
    bool augment = false;
    int shift_pixels = 2;
    double time_jitter_frac = 0.05;
    int pca_dim = 8;
};

void add_model_flags(CLI::App* cmd, ModelFlags& f) {
    cmd->add_option("--epochs", f.epochs, "SGD epochs (cnn)");
    cmd->add_option("--lr", f.lr, "SGD learning rate (cnn); 0 is a warned no-op");
    cmd->add_option("--momentum", f.momentum, "SGD momentum in [0, 1) (cnn)");
    cmd->add_option("--batch-size", f.batch_size, "SGD mini-batch size, >= 2 (cnn)");
    cmd->add_option("--dropout", f.dropout, "Dropout rate on the FC layers (cnn)");
    cmd->add_option("--spp-out", f.spp_out, "SPP output grid side (cnn)");
    cmd->add_flag("--augment", f.augment, "Expand the training set with shifted copies (cnn)");
    cmd->add_option("--shift-pixels", f.shift_pixels, "Augmentation shift distance in pixels");
    cmd->add_option("--time-jitter-frac", f.time_jitter_frac,
                    "Augmentation survival-time jitter fraction");
    cmd->add_option("--pca-dim", f.pca_dim, "PCA dimension for the CPH baseline (cph)");
}

// Model config from defaults, then the file's /model section, then flags.
// sgd.seed is not configurable: it is always derived from the global seed.
CoxCnnConfig make_cnn_config(const ConfigFile& file, const ModelFlags& f) {
    const CLI::App* cmd = file.cmd;
    CoxCnnConfig cfg;
    file.merge_key("/model/conv_filters", cfg.conv_filters);
    file.merge_key("/model/conv_kernels", cfg.conv_kernels);
    file.merge_key("/model/fc_sizes", cfg.fc_sizes);
    file.merge_key("/model/dropout_both_fc", cfg.dropout_both_fc);
    file.merge_key("/model/standardize_input", cfg.standardize_input);
    file.merge("--spp-out", "/model/spp_out", cfg.spp_out);
    file.merge("--dropout", "/model/dropout_rate", cfg.dropout_rate);
    file.merge("--epochs", "/model/sgd/epochs", cfg.sgd.epochs);
    file.merge("--lr", "/model/sgd/learning_rate", cfg.sgd.learning_rate);
    file.merge("--momentum", "/model/sgd/momentum", cfg.sgd.momentum);
    file.merge("--batch-size", "/model/sgd/batch_size", cfg.sgd.batch_size);
    if (cmd->count("--epochs")) cfg.sgd.epochs = f.epochs;
    if (cmd->count("--lr")) cfg.sgd.learning_rate = f.lr;
    if (cmd->count("--momentum")) cfg.sgd.momentum = f.momentum;
    if (cmd->count("--batch-size")) cfg.sgd.batch_size = f.batch_size;
    if (cmd->count("--dropout")) cfg.dropout_rate = f.dropout;
    if (cmd->count("--spp-out")) cfg.spp_out = f.spp_out;
    return cfg;
}

AugmentConfig make_augment_config(const ConfigFile& file, const ModelFlags& f, bool& enabled) {
    const CLI::App* cmd = file.cmd;
    AugmentConfig aug;
    file.merge("--augment", "/augment/enabled", enabled);
    file.merge("--shift-pixels", "/augment/shift_pixels", aug.shift_pixels);
    file.merge("--time-jitter-frac", "/augment/time_jitter_frac", aug.time_jitter_frac);
    file.merge_key("/augment/rotations_deg", aug.rotations_deg);
    file.merge_key("/augment/zooms", aug.zooms);
    if (cmd->count("--augment")) enabled = true;
    if (cmd->count("--shift-pixels")) aug.shift_pixels = f.shift_pixels;
    if (cmd->count("--time-jitter-frac")) aug.time_jitter_frac = f.time_jitter_frac;
    return aug;
}

BaselineConfig make_baseline_config(const ConfigFile& file, const ModelFlags& f) {
    BaselineConfig cfg;
    file.merge("--pca-dim", "/baseline/pca_components", cfg.pca_components);
    file.merge_key("/baseline/max_iter", cfg.cph.max_iter);
    file.merge_key("/baseline/tolerance", cfg.cph.tolerance);
    file.merge_key("/baseline/ridge", cfg.cph.ridge);
    if (file.cmd->count("--pca-dim")) cfg.pca_components = f.pca_dim;
    return cfg;
}

json augment_json(bool enabled, const AugmentConfig& aug) {
    return json{{"enabled", enabled},
                {"shift_pixels", aug.shift_pixels},
                {"time_jitter_frac", aug.time_jitter_frac},
                {"rotations_deg", aug.rotations_deg},
                {"zooms", aug.zooms}};
}

json baseline_json(const BaselineConfig& cfg) {
    return json{{"pca_components", cfg.pca_components},
                {"max_iter", cfg.cph.max_iter},
                {"tolerance", cfg.cph.tolerance},
                {"ridge", cfg.cph.ridge}};
}

// ---------------------------------------------------------------------------
// Artifact helpers
// ---------------------------------------------------------------------------

void write_text_file(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError("cannot open for writing: " + path.string());
    out << text;
    if (!out) throw FormatError("write failed: " + path.string());
}

void write_effective_config(const fs::path& out_dir, const json& run) {
    write_text_file(out_dir / "config.json", run.dump(2) + "\n");
}

void write_loss_history(const fs::path& path, const char* step_name,
                        const std::vector<double>& losses) {
    std::string text = std::string(step_name) + ",loss\n";
    char line[64];
    for (std::size_t i = 0; i < losses.size(); ++i) {
        std::snprintf(line, sizeof(line), "%zu,%.17g\n", i + 1, losses[i]);
        text += line;
    }
    write_text_file(path, text);
}

// Refuse to write artifacts into the input dataset directory.
void guard_output_dir(const std::string& data, const std::string& out) {
    if (fs::exists(out) && fs::exists(data) && fs::equivalent(data, out))
        throw std::invalid_argument(
            "--out must differ from --data: input datasets are never mutated");
}

std::vector<SurvivalRecord> records_of(const std::vector<SimulatedSample>& samples) {
    std::vector<SurvivalRecord> records;
    records.reserve(samples.size());
    for (const auto& s : samples) records.push_back(s.record);
    return records;
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

struct SimulateArgs {
    std::string out;
    std::string config_path;
    std::uint64_t seed = 0;
    int n = 200;
    bool synthetic = false;
    std::string idx_images;
    std::string idx_labels;
    std::vector<int> classes{0, 6};
    double lambda0 = 5.0;
    double event_fraction = 0.5;
};

std::vector<SynthClass> synth_classes_of(const std::vector<int>& digits) {
    std::vector<SynthClass> classes;
    classes.reserve(digits.size());
    for (int d : digits) {
        if (d == 0)
            classes.push_back(SynthClass::Ring);
        else if (d == 6)
            classes.push_back(SynthClass::Spiral);
        else
            throw std::invalid_argument(
                "simulate: synthetic classes are 0 (ring) and 6 (spiral); got " +
                std::to_string(d));
    }
    return classes;
}

int cmd_simulate(SimulateArgs& a, const ConfigFile& file) {
    file.merge("--seed", "/seed", a.seed);
    file.merge("--out", "/out", a.out);
    file.merge("--n", "/simulate/n", a.n);
    file.merge("--synthetic", "/simulate/synthetic", a.synthetic);
    file.merge("--idx-images", "/simulate/idx_images", a.idx_images);
    file.merge("--idx-labels", "/simulate/idx_labels", a.idx_labels);
    file.merge("--classes", "/simulate/classes", a.classes);
    file.merge("--lambda0", "/simulate/lambda0", a.lambda0);
    file.merge("--event-fraction", "/simulate/event_fraction", a.event_fraction);

    if (a.out.empty())
        throw std::invalid_argument("simulate: --out is required (flag or config file)");
    const bool has_idx = !a.idx_images.empty() || !a.idx_labels.empty();
    if (a.synthetic == has_idx)
        throw std::invalid_argument(
            "simulate: choose exactly one image source: --synthetic or "
            "--idx-images/--idx-labels");

    SimulateOptions opts;
    opts.n = a.n;
    opts.lambda0 = a.lambda0;
    opts.non_censored_fraction = a.event_fraction;
    opts.seed = a.seed;
    if (a.synthetic) {
        opts.classes = synth_classes_of(a.classes);
    } else {
        opts.idx_images = a.idx_images;
        opts.idx_labels = a.idx_labels;
        opts.keep_labels = std::set<int>(a.classes.begin(), a.classes.end());
    }

    const Dataset dataset = simulate_dataset(opts);
    write_dataset(dataset, a.out);

    json run;
    run["command"] = "simulate";
    run["seed"] = a.seed;
    run["out"] = a.out;
    run["simulate"] = {{"n", a.n},
                       {"synthetic", a.synthetic},
                       {"idx_images", a.idx_images},
                       {"idx_labels", a.idx_labels},
                       {"classes", a.classes},
                       {"lambda0", a.lambda0},
                       {"event_fraction", a.event_fraction}};
    write_effective_config(a.out, run);

    std::cout << "wrote dataset to " << a.out << "\n"
              << render_dataset_summary(summarize_dataset(dataset));
    return 0;
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

struct TrainArgs {
    std::string data;
    std::string out;
    std::string config_path;
    std::string method = "cnn";
    std::uint64_t seed = 0;
    ModelFlags mf;
};

int cmd_train(TrainArgs& a, const ConfigFile& file) {
    file.merge("--seed", "/seed", a.seed);
    file.merge("--data", "/data", a.data);
    file.merge("--out", "/out", a.out);
    file.merge("--method", "/train/method", a.method);

    if (a.data.empty() || a.out.empty())
        throw std::invalid_argument("train: --data and --out are required (flag or config file)");
    if (a.method != "cnn" && a.method != "cph")
        throw std::invalid_argument("train: --method must be cnn or cph, got '" + a.method + "'");
    guard_output_dir(a.data, a.out);

    const Dataset dataset = read_dataset(a.data);
    if (dataset.samples.empty()) throw FormatError("train: dataset is empty: " + a.data);
    fs::create_directories(a.out);
    const Rng root(a.seed);

    json run;
    run["command"] = "train";
    run["seed"] = a.seed;
    run["data"] = a.data;
    run["out"] = a.out;
    run["train"] = {{"method", a.method}};

    if (a.method == "cnn") {
        CoxCnnConfig cfg = make_cnn_config(file, a.mf);
        cfg.sgd.seed = root.derive(1).next_u64();
        cfg.validate();
        bool augment_enabled = false;
        AugmentConfig aug = make_augment_config(file, a.mf, augment_enabled);
        if (augment_enabled) aug.validate();
        if (cfg.sgd.learning_rate == 0.0)
            std::cerr << "warning: learning rate is 0; parameters will not change\n";

        std::vector<SimulatedSample> samples = dataset.samples;
        if (augment_enabled) {
            aug.seed = root.derive(2).next_u64();
            int dropped = 0;
            samples = augment_training_set(samples, aug, &dropped);
            std::cerr << "augmented training set: " << samples.size() << " samples (" << dropped
                      << " out-of-bounds copies dropped)\n";
        }

        auto model = build_model<float>(cfg, dataset.samples.front().image.channels,
                                        root.derive(0).next_u64());
        const TrainReport report =
            train_model(model, samples, [&cfg](int epoch, double loss) {
                std::fprintf(stderr, "epoch %d/%d: loss/event %.6f\n", epoch, cfg.sgd.epochs,
                             loss);
            });

        const fs::path model_path = fs::path(a.out) / "model.cxnn";
        const fs::path history_path = fs::path(a.out) / "loss_history.csv";
        save_model(model, model_path);
        write_loss_history(history_path, "epoch", report.loss_history);
        run["model"] = json::parse(config_to_json(cfg));
        run["augment"] = augment_json(augment_enabled, aug);
        write_effective_config(a.out, run);

        std::cout << "trained " << report.epochs_run << " epochs (" << report.skipped_batches
                  << " zero-event batches skipped)\n";
        char line[64];
        std::snprintf(line, sizeof(line), "final loss per event: %.6f\n", model.final_loss);
        std::cout << line << "wrote " << model_path.string() << "\n"
                  << "wrote " << history_path.string() << "\n";
    } else {
        const BaselineConfig cfg = make_baseline_config(file, a.mf);
        const BaselineModel model = fit_baseline(dataset.samples, cfg);
        if (!model.fit.converged)
            throw TrainingDivergedError("train: CPH Newton did not converge within " +
                                        std::to_string(cfg.cph.max_iter) + " iterations");

        const fs::path model_path = fs::path(a.out) / "baseline.json";
        const fs::path history_path = fs::path(a.out) / "loss_history.csv";
        save_baseline(model, model_path);
        write_loss_history(history_path, "iteration", model.fit.loss_history);
        run["baseline"] = baseline_json(cfg);
        write_effective_config(a.out, run);

        std::cout << "baseline converged in " << model.fit.iterations << " iterations\n";
        char line[80];
        std::snprintf(line, sizeof(line), "final negative log partial likelihood: %.6f\n",
                      model.fit.final_loss);
        std::cout << line << "wrote " << model_path.string() << "\n"
                  << "wrote " << history_path.string() << "\n";
    }
    return 0;
}

// ---------------------------------------------------------------------------
// crossval
// ---------------------------------------------------------------------------

struct CrossvalArgs {
    std::string data;
    std::string out;
    std::string config_path;
    std::vector<std::string> methods{"cnn", "cph"};
    int k = 10;
    int jobs = 1;
    bool no_stratify = false;
    std::uint64_t seed = 0;
    ModelFlags mf;
};

int cmd_crossval(CrossvalArgs& a, const ConfigFile& file) {
    file.merge("--seed", "/seed", a.seed);
    file.merge("--data", "/data", a.data);
    file.merge("--out", "/out", a.out);
    file.merge("--methods", "/crossval/methods", a.methods);
    file.merge("--k", "/crossval/k", a.k);
    file.merge("--jobs", "/crossval/jobs", a.jobs);
    bool stratified = true;
    file.merge_key("/crossval/stratified", stratified);
    if (file.cmd->count("--no-stratify")) stratified = false;

    if (a.data.empty() || a.out.empty())
        throw std::invalid_argument(
            "crossval: --data and --out are required (flag or config file)");
    if (a.methods.empty()) throw std::invalid_argument("crossval: --methods must not be empty");
    for (const auto& m : a.methods)
        if (m != "cnn" && m != "cph")
            throw std::invalid_argument("crossval: unknown method '" + m +
                                        "' (choices: cnn, cph)");
    if (std::set<std::string>(a.methods.begin(), a.methods.end()).size() != a.methods.size())
        throw std::invalid_argument("crossval: duplicate method in --methods");
    guard_output_dir(a.data, a.out);

    const Dataset dataset = read_dataset(a.data);
    if (dataset.samples.empty()) throw FormatError("crossval: dataset is empty: " + a.data);
    fs::create_directories(a.out);

    const auto records = records_of(dataset.samples);
    const FoldPlan plan = make_folds(records, a.k, stratified, a.seed);

    json run;
    run["command"] = "crossval";
    run["seed"] = a.seed;
    run["data"] = a.data;
    run["out"] = a.out;
    run["crossval"] = {
        {"methods", a.methods}, {"k", a.k}, {"jobs", a.jobs}, {"stratified", stratified}};

    std::vector<MethodResult> results;
    for (const std::string& method : a.methods) {
        char config_str[128];
        Trainer trainer;
        if (method == "cnn") {
            CnnTrainerOptions options;
            options.config = make_cnn_config(file, a.mf);
            options.config.validate();
            bool augment_enabled = false;
            options.augment_config = make_augment_config(file, a.mf, augment_enabled);
            options.augment = augment_enabled;
            if (augment_enabled) options.augment_config.validate();
            trainer = make_cnn_trainer(options);
            std::snprintf(config_str, sizeof(config_str), "epochs=%d lr=%g batch=%d dropout=%g%s",
                          options.config.sgd.epochs, options.config.sgd.learning_rate,
                          options.config.sgd.batch_size, options.config.dropout_rate,
                          augment_enabled ? " augment" : "");
            run["model"] = json::parse(config_to_json(options.config));
            run["augment"] = augment_json(augment_enabled, options.augment_config);
        } else {
            const BaselineConfig cfg = make_baseline_config(file, a.mf);
            trainer = make_baseline_trainer(cfg);
            std::snprintf(config_str, sizeof(config_str), "pca=%d", cfg.pca_components);
            run["baseline"] = baseline_json(cfg);
        }
        std::cerr << "cross-validating " << method << " (" << a.k << " folds, " << a.jobs
                  << " jobs)\n";
        CrossValidationReport report = cross_validate(dataset.samples, trainer, plan, a.jobs);
        for (const auto& warning : report.warnings) std::cerr << "warning: " << warning << "\n";
        results.push_back({method, config_str, std::move(report)});
    }

    const fs::path jsonl_path = fs::path(a.out) / "results.jsonl";
    {
        std::ofstream out(jsonl_path, std::ios::binary);
        if (!out) throw FormatError("cannot open for writing: " + jsonl_path.string());
        for (const auto& result : results) write_results_jsonl(out, result);
        if (!out) throw FormatError("write failed: " + jsonl_path.string());
    }
    const std::string table = render_results_table(results);
    const fs::path table_path = fs::path(a.out) / "table.txt";
    write_text_file(table_path, table);
    write_effective_config(a.out, run);

    std::cout << table << "wrote " << jsonl_path.string() << "\n"
              << "wrote " << table_path.string() << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// gradcheck
// ---------------------------------------------------------------------------

struct GradcheckArgs {
    std::string config_path;
    std::uint64_t seed = 1;
    int seeds = 20;
    bool skip_double = false;
    bool skip_float = false;
    bool inject_sign_flip = false;
};

int cmd_gradcheck(GradcheckArgs& a, const ConfigFile& file) {
    file.merge("--seed", "/seed", a.seed);
    file.merge("--seeds", "/gradcheck/seeds", a.seeds);

    GradcheckSuiteOptions opts;
    opts.base_seed = a.seed;
    opts.seeds = a.seeds;
    file.merge_key("/gradcheck/check_double", opts.check_double);
    file.merge_key("/gradcheck/check_float", opts.check_float);
    file.merge_key("/gradcheck/inject_sign_flip", opts.inject_sign_flip);
    if (file.cmd->count("--skip-double")) opts.check_double = false;
    if (file.cmd->count("--skip-float")) opts.check_float = false;
    if (file.cmd->count("--inject-sign-flip")) opts.inject_sign_flip = true;

    const GradcheckSuiteReport report = run_gradcheck_suite(opts);
    std::cout << render_gradcheck_report(report);
    return report.passed ? 0 : 4;
}

} // namespace

// ---------------------------------------------------------------------------
// Entry point
// ---------------------------------------------------------------------------

int main(int argc, char** argv) {
    CLI::App app{"coxcnn: imaging-based survival analysis with convolutional networks"};
    app.set_version_flag("--version", kVersion);
    app.require_subcommand(1);

    SimulateArgs sim_args;
    CLI::App* sim = app.add_subcommand("simulate", "Generate a simulated survival dataset");
    sim->add_option("--out", sim_args.out, "Output dataset directory");
    sim->add_option("--config", sim_args.config_path, "JSON config file (flags override it)");
    sim->add_option("--seed", sim_args.seed, "Global seed; all random streams derive from it");
    sim->add_option("--n", sim_args.n, "Number of samples");
    sim->add_flag("--synthetic", sim_args.synthetic, "Use the built-in synthetic digit source");
    sim->add_option("--idx-images", sim_args.idx_images, "IDX image file (MNIST layout)");
    sim->add_option("--idx-labels", sim_args.idx_labels, "IDX label file (MNIST layout)");
    sim->add_option("--classes", sim_args.classes,
                    "Digit classes to keep (synthetic source: 0=ring, 6=spiral)")
        ->delimiter(',');
    sim->add_option("--lambda0", sim_args.lambda0, "Baseline time scale");
    sim->add_option("--event-fraction", sim_args.event_fraction,
                    "Fraction of non-censored (event) samples");

    TrainArgs train_args;
    CLI::App* train = app.add_subcommand("train", "Train a model on a dataset directory");
    train->add_option("--data", train_args.data, "Input dataset directory");
    train->add_option("--out", train_args.out, "Output directory for model artifacts");
    train->add_option("--config", train_args.config_path, "JSON config file (flags override it)");
    train->add_option("--seed", train_args.seed,
                      "Global seed; model init/SGD/augmentation seeds derive from it");
    train->add_option("--method", train_args.method, "Model to train: cnn or cph");
    add_model_flags(train, train_args.mf);

    CrossvalArgs cv_args;
    CLI::App* crossval =
        app.add_subcommand("crossval", "Cross-validate one or more methods on a dataset");
    crossval->add_option("--data", cv_args.data, "Input dataset directory");
    crossval->add_option("--out", cv_args.out, "Output directory for results");
    crossval->add_option("--config", cv_args.config_path, "JSON config file (flags override it)");
    crossval->add_option("--seed", cv_args.seed,
                         "Global seed; fold assignment and per-fold seeds derive from it");
    crossval->add_option("--methods", cv_args.methods, "Comma-separated methods: cnn,cph")
        ->delimiter(',');
    crossval->add_option("--k", cv_args.k, "Number of folds");
    crossval->add_option("--jobs", cv_args.jobs,
                         "Folds trained in parallel (results are independent of this)");
    crossval->add_flag("--no-stratify", cv_args.no_stratify,
                       "Disable event-stratified fold assignment");
    add_model_flags(crossval, cv_args.mf);

    GradcheckArgs gc_args;
    CLI::App* gradcheck =
        app.add_subcommand("gradcheck", "Run the finite-difference gradient check suite");
    gradcheck->add_option("--config", gc_args.config_path, "JSON config file (flags override it)");
    gradcheck->add_option("--seed", gc_args.seed, "Base seed for the check scenarios");
    gradcheck->add_option("--seeds", gc_args.seeds, "Number of random scenarios per block");
    gradcheck->add_flag("--skip-double", gc_args.skip_double, "Skip the 64-bit engine checks");
    gradcheck->add_flag("--skip-float", gc_args.skip_float, "Skip the 32-bit engine checks");
    gradcheck->add_flag("--inject-sign-flip", gc_args.inject_sign_flip,
                        "Self-test: corrupt one gradient and expect the suite to fail");

    try {
        app.parse(argc, argv);
        if (sim->parsed()) return cmd_simulate(sim_args, load_config(sim, sim_args.config_path));
        if (train->parsed())
            return cmd_train(train_args, load_config(train, train_args.config_path));
        if (crossval->parsed())
            return cmd_crossval(cv_args, load_config(crossval, cv_args.config_path));
        if (gradcheck->parsed())
            return cmd_gradcheck(gc_args, load_config(gradcheck, gc_args.config_path));
        return 2; // unreachable: require_subcommand(1)
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    } catch (const std::invalid_argument& e) {
        std::cerr << "coxcnn: error: " << e.what() << "\n";
        return 2;
    } catch (const FormatError& e) {
        std::cerr << "coxcnn: data error: " << e.what() << "\n";
        return 3;
    } catch (const CorruptionError& e) {
        std::cerr << "coxcnn: data error: " << e.what() << "\n";
        return 3;
    } catch (const json::exception& e) {
        std::cerr << "coxcnn: data error: " << e.what() << "\n";
        return 3;
    } catch (const fs::filesystem_error& e) {
        std::cerr << "coxcnn: file error: " << e.what() << "\n";
        return 3;
    } catch (const TrainingDivergedError& e) {
        std::cerr << "coxcnn: numerical failure: " << e.what() << "\n";
        return 4;
    } catch (const NoEventsError& e) {
        std::cerr << "coxcnn: numerical failure: " << e.what() << "\n";
        return 4;
    } catch (const NoComparablePairsError& e) {
        std::cerr << "coxcnn: numerical failure: " << e.what() << "\n";
        return 4;
    } catch (const IllConditionedError& e) {
        std::cerr << "coxcnn: numerical failure: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "coxcnn: internal error: " << e.what() << "\n";
        return 1;
    }
}
