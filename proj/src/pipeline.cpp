/*
 * coxcnn - imaging-based survival analysis with convolutional networks.
 *
 * File: src/pipeline.cpp
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
#include "coxcnn/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <map>
#include <stdexcept>
#include <utility>

#include "coxcnn/cox.hpp"
#include "coxcnn/gradcheck.hpp"
#include "coxcnn/nn.hpp"
#include "coxcnn/rng.hpp"
#include "coxcnn/spp.hpp"

namespace coxcnn {

namespace {

// ---------------------------------------------------------------------------
// Gradient-check suite internals
// ---------------------------------------------------------------------------

struct BlockAggregate {
    double max_rel = 0.0;
    long long checks = 0;
    long long skipped = 0;
};

using AggregateMap = std::map<std::string, BlockAggregate>;

void fold_report(AggregateMap& agg, const GradCheckReport& report) {
    for (const BlockReport& br : report.blocks) {
        BlockAggregate& a = agg[br.name];
        a.max_rel = std::max(a.max_rel, br.max_rel_error);
        a.checks += br.checks;
        a.skipped += br.skipped;
    }
}

template <typename T>
std::vector<T> random_projection(std::size_t n, Rng& rng) {
    std::vector<T> r(n);
    for (auto& v : r) v = static_cast<T>(rng.normal(0.0, 1.0));
    return r;
}

template <typename T>
double project(const nn::TensorT<T>& t, const std::vector<T>& r) {
    double acc = 0.0;
    for (std::size_t i = 0; i < t.values.size(); ++i)
        acc += static_cast<double>(t.values[i]) * static_cast<double>(r[i]);
    return acc;
}

template <typename T>
GradCheckOptions base_options(Rng& rng) {
    GradCheckOptions opts = gradcheck_options_for(std::is_same_v<T, double>);
    opts.seed = rng.next_u64();
    return opts;
}

/// Isolated conv2d: loss = <r, conv(x)>; checks weight, bias, and input.
/// The optional sign flip corrupts the analytic bias gradient so the harness
/// can prove it catches planted bugs.
/// The isolated conv2d/dense/dropout objectives are exactly linear in every
/// checked buffer, so a larger step has zero truncation error and divides
/// away evaluation noise (which otherwise dominates near-cancelling gradient
/// coordinates).
template <typename T>
double linear_scenario_epsilon() {
    return std::is_same_v<T, double> ? 1e-3 : 1e-1;
}

template <typename T>
void check_conv2d(Rng rng, bool inject_sign_flip, AggregateMap& agg) {
    GradCheckOptions opts = base_options<T>(rng);
    opts.epsilon = linear_scenario_epsilon<T>();
    nn::TensorT<T> input({2, 2, 5, 5});
    for (auto& v : input.values) v = static_cast<T>(rng.normal(0.0, 1.0));
    auto params = nn::make_conv2d<T>(3, 2, 3, 3, rng);
    const auto r = random_projection<T>(2ULL * 3 * 5 * 5, rng);

    nn::TensorT<T> grad_out({2, 3, 5, 5});
    grad_out.values.assign(r.begin(), r.end());
    auto grads = nn::conv2d_backward(input, params, grad_out);
    if (inject_sign_flip)
        for (auto& v : grads.bias.values) v = -v;

    const auto eval = [&] { return LossEval{project(nn::conv2d_forward(input, params), r), 0}; };
    const std::vector<GradCheckBlock<T>> blocks{
        {"conv2d/weight", &params.weight.values, &grads.weight.values},
        {"conv2d/bias", &params.bias.values, &grads.bias.values},
        {"conv2d/input", &input.values, &grads.input.values},
    };
    fold_report(agg, check_gradients<T>(eval, blocks, opts));
}

/// Isolated dense layer: loss = <r, W x + b>.
template <typename T>
void check_dense(Rng rng, AggregateMap& agg) {
    GradCheckOptions opts = base_options<T>(rng);
    opts.epsilon = linear_scenario_epsilon<T>();
    nn::TensorT<T> input({3, 6});
    for (auto& v : input.values) v = static_cast<T>(rng.normal(0.0, 1.0));
    auto params = nn::make_dense<T>(4, 6, rng);
    const auto r = random_projection<T>(3ULL * 4, rng);

    nn::TensorT<T> grad_out({3, 4});
    grad_out.values.assign(r.begin(), r.end());
    auto grads = nn::dense_backward(input, params, grad_out);

    const auto eval = [&] { return LossEval{project(nn::dense_forward(input, params), r), 0}; };
    const std::vector<GradCheckBlock<T>> blocks{
        {"dense/weight", &params.weight.values, &grads.weight.values},
        {"dense/bias", &params.bias.values, &grads.bias.values},
        {"dense/input", &input.values, &grads.input.values},
    };
    fold_report(agg, check_gradients<T>(eval, blocks, opts));
}

/// Isolated ReLU: loss = <r, relu(x)>. The activation pattern feeds the
/// branch hash so coordinates that cross zero are skipped, not misjudged.
template <typename T>
void check_relu(Rng rng, AggregateMap& agg) {
    const GradCheckOptions opts = base_options<T>(rng);
    nn::TensorT<T> input({40});
    for (auto& v : input.values) v = static_cast<T>(rng.normal(0.0, 1.0));
    const auto r = random_projection<T>(40, rng);

    nn::TensorT<T> grad_out({40});
    grad_out.values.assign(r.begin(), r.end());
    const auto grad = nn::relu_backward(input, grad_out);

    const auto eval = [&] {
        LossEval e;
        std::uint64_t h = 0xcbf29ce484222325ULL;
        const auto out = nn::relu_forward(input);
        for (const auto& v : input.values) h = hash_mix(h, v > T(0) ? 1 : 0);
        e.value = project(out, r);
        e.branch_hash = h;
        return e;
    };
    const std::vector<GradCheckBlock<T>> blocks{{"relu/input", &input.values, &grad.values}};
    fold_report(agg, check_gradients<T>(eval, blocks, opts));
}

/// Isolated SPP: loss = <r, spp(x)> over a random valid bounding box. Argmax
/// choices feed the branch hash; perturbations that change a winner are
/// skipped.
template <typename T>
void check_spp(Rng rng, AggregateMap& agg) {
    const GradCheckOptions opts = base_options<T>(rng);
    const int c = 2, h = 10, w = 12;
    nn::TensorT<T> features({c, h, w});
    for (auto& v : features.values) v = static_cast<T>(rng.normal(0.0, 1.0));

    BoundingBox bbox;
    bbox.x0 = static_cast<int>(rng.bounded(static_cast<std::uint64_t>(w - 1)));
    bbox.y0 = static_cast<int>(rng.bounded(static_cast<std::uint64_t>(h - 1)));
    bbox.width = 1 + static_cast<int>(rng.bounded(static_cast<std::uint64_t>(w - bbox.x0)));
    bbox.height = 1 + static_cast<int>(rng.bounded(static_cast<std::uint64_t>(h - bbox.y0)));

    const SppConfig cfg{8, 8};
    std::vector<std::int64_t> argmax;
    const auto base = nn::spp_forward(features, bbox, cfg, &argmax);
    const auto r = random_projection<T>(base.values.size(), rng);

    nn::TensorT<T> grad_out(base.shape);
    grad_out.values.assign(r.begin(), r.end());
    const auto grad = nn::spp_backward(argmax, grad_out, c, h, w);

    const auto eval = [&] {
        LossEval e;
        std::vector<std::int64_t> am;
        const auto out = nn::spp_forward(features, bbox, cfg, &am);
        std::uint64_t hash = 0xcbf29ce484222325ULL;
        for (const std::int64_t idx : am) hash = hash_mix(hash, static_cast<std::uint64_t>(idx));
        e.value = project(out, r);
        e.branch_hash = hash;
        return e;
    };
    const std::vector<GradCheckBlock<T>> blocks{{"spp/input", &features.values, &grad.values}};
    fold_report(agg, check_gradients<T>(eval, blocks, opts));
}

/// Dropout with its mask frozen: loss = <r, mask .* x>. The random mask is
/// drawn once; the path is then linear and must check exactly.
template <typename T>
void check_dropout_mask(Rng rng, AggregateMap& agg) {
    GradCheckOptions opts = base_options<T>(rng);
    opts.epsilon = linear_scenario_epsilon<T>();
    nn::TensorT<T> input({30});
    for (auto& v : input.values) v = static_cast<T>(rng.normal(0.0, 1.0));
    Rng mask_rng(rng.next_u64());
    const auto fixed = nn::dropout_forward(input, 0.5, mask_rng, true);
    const auto r = random_projection<T>(30, rng);

    nn::TensorT<T> grad_out({30});
    grad_out.values.assign(r.begin(), r.end());
    const auto grad = nn::dropout_backward(fixed.mask, grad_out);

    const auto eval = [&] {
        double acc = 0.0;
        for (std::size_t i = 0; i < input.values.size(); ++i)
            acc += static_cast<double>(r[i]) * static_cast<double>(input.values[i]) *
                   static_cast<double>(fixed.mask.values[i]);
        return LossEval{acc, 0};
    };
    const std::vector<GradCheckBlock<T>> blocks{
        {"dropout/masked_input", &input.values, &grad.values}};
    fold_report(agg, check_gradients<T>(eval, blocks, opts));
}

/// Cox loss on raw scores: smooth in h (risk sets depend only on times), so
/// no branch hash is needed. Times land on a coarse grid so tied groups
/// exercise the shared-denominator path.
template <typename T>
void check_cox(Rng rng, AggregateMap& agg) {
    const GradCheckOptions opts = base_options<T>(rng);
    const int n = 12;
    std::vector<T> h(n);
    for (auto& v : h) v = static_cast<T>(rng.normal(0.0, 1.0));
    std::vector<SurvivalRecord> records;
    for (int i = 0; i < n; ++i)
        records.push_back({1.0 + static_cast<double>(rng.bounded(5)), rng.uniform() < 0.7});
    records[0].event = true;

    const auto to_double = [&] { return std::vector<double>(h.begin(), h.end()); };
    const auto gd = cox_loss_gradient(to_double(), records);
    const std::vector<T> grad(gd.begin(), gd.end());

    const auto eval = [&] {
        return LossEval{neg_log_partial_likelihood(to_double(), records), 0};
    };
    const std::vector<GradCheckBlock<T>> blocks{{"cox/scores", &h, &grad}};
    fold_report(agg, check_gradients<T>(eval, blocks, opts));
}

/// End-to-end tiny CoxCNN batch (dropout off): every parameter block against
/// the full backward pass, with branch hashing over ReLU patterns and SPP
/// argmax choices. Runs at 64-bit only: a float step large enough to clear
/// quantization noise nearly always flips some downstream ReLU/argmax branch
/// in a deep composition, leaving blocks with zero verified coordinates,
/// while the wiring under test is precision-agnostic template code and the
/// float engine is covered layer-by-layer above.
///
/// The floor is raised because several bias coordinates have exactly-zero
/// true gradients (the Cox loss is invariant to shifting all scores, so the
/// head bias gradient vanishes; ReLU units dead across the whole batch zero
/// FC bias coordinates) and a finite difference of an exact zero is pure
/// evaluation noise.
template <typename T>
void check_end_to_end(Rng rng, AggregateMap& agg) {
    GradCheckOptions opts = base_options<T>(rng);
    opts.max_per_block = 10; // layers get dense isolated coverage above
    opts.floor = 1e-3;

    CoxCnnConfig cfg;
    cfg.conv_filters = {2, 3, 4};
    cfg.conv_kernels = {3, 3, 3};
    cfg.spp_out = 2;
    cfg.fc_sizes = {8, 5};
    cfg.dropout_rate = 0.0;
    auto model = build_model<T>(cfg, 1, rng.next_u64());

    std::vector<SimulatedSample> samples;
    for (int i = 0; i < 4; ++i) {
        SimulatedSample s;
        s.image.width = 10;
        s.image.height = 10;
        s.image.channels = 1;
        s.image.pixels.resize(100);
        for (auto& p : s.image.pixels) p = static_cast<float>(rng.uniform(0.05, 1.0));
        s.image.bbox = {0, 0, 10, 10};
        s.true_risk = 0.5;
        s.record = {1.0 + 0.5 * i, i % 2 == 0};
        samples.push_back(std::move(s));
    }
    std::vector<const SimulatedSample*> batch;
    for (const auto& s : samples) batch.push_back(&s);

    model_batch_pass(model, batch, /*compute_grads=*/true, /*training=*/false, nullptr, nullptr);
    const auto eval = [&] {
        LossEval e;
        std::uint64_t h = 0;
        e.value = model_batch_pass(model, batch, false, false, nullptr, &h);
        e.branch_hash = h;
        return e;
    };

    static const char* names[] = {"model/conv1.w", "model/conv1.b", "model/conv2.w",
                                  "model/conv2.b", "model/conv3.w", "model/conv3.b",
                                  "model/fc1.w",   "model/fc1.b",   "model/fc2.w",
                                  "model/fc2.b",   "model/head.w",  "model/head.b"};
    std::vector<GradCheckBlock<T>> blocks;
    auto params = model.parameters();
    for (std::size_t i = 0; i < params.size(); ++i)
        blocks.push_back({names[i], &params[i]->values, &params[i]->grad});
    fold_report(agg, check_gradients<T>(eval, blocks, opts));
}

template <typename T>
void run_engine(const GradcheckSuiteOptions& options, const char* precision, double tolerance,
                GradcheckSuiteReport& report) {
    AggregateMap agg;
    const Rng root(options.base_seed);
    for (int s = 0; s < options.seeds; ++s) {
        const Rng scenario = root.derive(static_cast<std::uint64_t>(s));
        check_conv2d<T>(scenario.derive(0), options.inject_sign_flip, agg);
        check_dense<T>(scenario.derive(1), agg);
        check_relu<T>(scenario.derive(2), agg);
        check_spp<T>(scenario.derive(3), agg);
        check_dropout_mask<T>(scenario.derive(4), agg);
        check_cox<T>(scenario.derive(5), agg);
        if constexpr (std::is_same_v<T, double>) check_end_to_end<T>(scenario.derive(6), agg);
    }
    for (const auto& [name, a] : agg) {
        GradcheckBlockOutcome out;
        out.name = name;
        out.precision = precision;
        out.tolerance = tolerance;
        out.max_rel_error = a.max_rel;
        out.checks = a.checks;
        out.skipped = a.skipped;
        out.passed = a.checks > 0 && a.max_rel < tolerance;
        report.blocks.push_back(std::move(out));
    }
}

} // namespace

void GradcheckSuiteOptions::validate() const {
    if (seeds < 1) throw std::invalid_argument("gradcheck: seeds must be >= 1");
    if (!check_double && !check_float)
        throw std::invalid_argument("gradcheck: at least one precision must be enabled");
}

GradcheckSuiteReport run_gradcheck_suite(const GradcheckSuiteOptions& options) {
    options.validate();
    const auto start = std::chrono::steady_clock::now();
    GradcheckSuiteReport report;
    report.seeds = options.seeds;
    if (options.check_double) run_engine<double>(options, "f64", 1e-5, report);
    if (options.check_float) run_engine<float>(options, "f32", 1e-2, report);
    report.passed = !report.blocks.empty() &&
                    std::all_of(report.blocks.begin(), report.blocks.end(),
                                [](const GradcheckBlockOutcome& b) { return b.passed; });
    report.seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return report;
}

std::string render_gradcheck_report(const GradcheckSuiteReport& report) {
    std::size_t name_w = 5;
    for (const auto& b : report.blocks) name_w = std::max(name_w, b.name.size());

    char line[256];
    std::string text = "gradient check: " + std::to_string(report.seeds) + " seeds per block\n";
    std::snprintf(line, sizeof(line), "%-*s  %-4s  %8s  %8s  %12s  %10s  %s\n",
                  static_cast<int>(name_w), "block", "prec", "checks", "skipped", "max rel err",
                  "tolerance", "status");
    text += line;
    for (const auto& b : report.blocks) {
        std::snprintf(line, sizeof(line), "%-*s  %-4s  %8lld  %8lld  %12.3e  %10.1e  %s\n",
                      static_cast<int>(name_w), b.name.c_str(), b.precision.c_str(), b.checks,
                      b.skipped, b.max_rel_error, b.tolerance, b.passed ? "ok" : "FAIL");
        text += line;
    }
    std::snprintf(line, sizeof(line), "overall: %s (%.1f s)\n", report.passed ? "PASS" : "FAIL",
                  report.seconds);
    text += line;
    return text;
}

// ---------------------------------------------------------------------------
// Simulated dataset
// ---------------------------------------------------------------------------

void SimulateOptions::validate() const {
    if (n < 2) throw std::invalid_argument("simulate: n must be >= 2");
    if (!(lambda0 > 0.0) || !std::isfinite(lambda0))
        throw std::invalid_argument("simulate: lambda0 must be positive and finite");
    if (!(non_censored_fraction >= 0.0 && non_censored_fraction <= 1.0))
        throw std::invalid_argument("simulate: non-censored fraction must lie in [0, 1]");
    if (idx_images.empty() != idx_labels.empty())
        throw std::invalid_argument(
            "simulate: IDX image and label paths must be given together");
    if (idx_images.empty() && classes.empty())
        throw std::invalid_argument("simulate: at least one synthetic class is required");
}

Dataset simulate_dataset(const SimulateOptions& options) {
    options.validate();
    const Rng root(options.seed);

    std::vector<Image2D> images;
    if (!options.idx_images.empty()) {
        images = load_idx(options.idx_images, options.idx_labels, options.keep_labels);
        if (static_cast<int>(images.size()) < options.n)
            throw std::invalid_argument(
                "simulate: the IDX source holds " + std::to_string(images.size()) +
                " usable images after label filtering, fewer than the requested n=" +
                std::to_string(options.n));
        images.resize(static_cast<std::size_t>(options.n));
    } else {
        images = synth_digits(options.n, options.classes, root.derive(0).next_u64());
    }

    Dataset dataset;
    dataset.lambda0 = options.lambda0;
    dataset.seed = options.seed;
    dataset.mask =
        generate_mask(images.front().width, images.front().height, root.derive(1).next_u64());
    dataset.samples = simulate_survival(std::move(images), dataset.mask, options.lambda0,
                                        options.non_censored_fraction, root.derive(2).next_u64());
    return dataset;
}

DatasetSummary summarize_dataset(const Dataset& dataset) {
    DatasetSummary s;
    s.n = static_cast<int>(dataset.samples.size());
    bool first = true;
    for (const SimulatedSample& sample : dataset.samples) {
        if (sample.record.event) ++s.events;
        if (first) {
            s.time_min = s.time_max = sample.record.time;
            s.risk_min = s.risk_max = sample.true_risk;
            first = false;
        } else {
            s.time_min = std::min(s.time_min, sample.record.time);
            s.time_max = std::max(s.time_max, sample.record.time);
            s.risk_min = std::min(s.risk_min, sample.true_risk);
            s.risk_max = std::max(s.risk_max, sample.true_risk);
        }
    }
    return s;
}

std::string render_dataset_summary(const DatasetSummary& summary) {
    char line[256];
    std::string text;
    std::snprintf(line, sizeof(line), "samples: %d (%d events, %d censored)\n", summary.n,
                  summary.events, summary.n - summary.events);
    text += line;
    std::snprintf(line, sizeof(line), "observed time range: [%.6g, %.6g]\n", summary.time_min,
                  summary.time_max);
    text += line;
    std::snprintf(line, sizeof(line), "true risk range: [%.6g, %.6g]\n", summary.risk_min,
                  summary.risk_max);
    text += line;
    return text;
}

// ---------------------------------------------------------------------------
// Cross-validation trainers
// ---------------------------------------------------------------------------

Trainer make_cnn_trainer(const CnnTrainerOptions& options) {
    options.config.validate();
    if (options.augment) options.augment_config.validate();
    return [options](const FoldView& view) -> std::vector<double> {
        if (view.train.empty())
            throw std::invalid_argument("cnn trainer: empty training fold");
        const Rng fold_rng(view.seed);

        std::vector<SimulatedSample> train;
        train.reserve(view.train.size());
        for (const SimulatedSample* s : view.train) train.push_back(*s);
        if (options.augment) {
            AugmentConfig aug = options.augment_config;
            aug.seed = fold_rng.derive(2).next_u64();
            train = augment_training_set(train, aug);
        }

        CoxCnnConfig cfg = options.config;
        cfg.sgd.seed = fold_rng.derive(1).next_u64();
        auto model =
            build_model<float>(cfg, train.front().image.channels, fold_rng.derive(0).next_u64());
        train_model(model, train);

        std::vector<double> risks;
        risks.reserve(view.test.size());
        for (const SimulatedSample* s : view.test) risks.push_back(predict_risk(model, s->image));
        return risks;
    };
}

Trainer make_baseline_trainer(const BaselineConfig& config) {
    if (config.pca_components < 1)
        throw std::invalid_argument("baseline trainer: pca_components must be >= 1");
    return [config](const FoldView& view) -> std::vector<double> {
        if (view.train.empty())
            throw std::invalid_argument("baseline trainer: empty training fold");
        std::vector<SimulatedSample> train;
        train.reserve(view.train.size());
        for (const SimulatedSample* s : view.train) train.push_back(*s);
        const BaselineModel model = fit_baseline(train, config);

        std::vector<double> risks;
        risks.reserve(view.test.size());
        for (const SimulatedSample* s : view.test)
            risks.push_back(baseline_risk(model, s->image));
        return risks;
    };
}

} // namespace coxcnn
