/*
 * coxcnn - imaging-based survival analysis with convolutional networks.
 *
 * File: tests/test_model.cpp
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
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <random>
#include <vector>

#include <doctest.h>

#include "coxcnn/gradcheck.hpp"
#include "coxcnn/model.hpp"

using namespace coxcnn;

namespace {

/// Tiny architecture so the tests stay fast: 12x12 inputs, 2/3/4 filters,
/// 2x2 SPP grid, 8/5 FC units.
CoxCnnConfig tiny_config() {
    CoxCnnConfig cfg;
    cfg.conv_filters = {2, 3, 4};
    cfg.conv_kernels = {3, 3, 3};
    cfg.spp_out = 2;
    cfg.fc_sizes = {8, 5};
    cfg.dropout_rate = 0.0;
    cfg.sgd.learning_rate = 1e-2;
    cfg.sgd.momentum = 0.9;
    cfg.sgd.epochs = 1;
    cfg.sgd.batch_size = 8;
    return cfg;
}

Image2D random_image(Rng& rng, int width = 12, int height = 12, int channels = 1) {
    Image2D img;
    img.width = width;
    img.height = height;
    img.channels = channels;
    img.pixels.resize(static_cast<std::size_t>(width) * height * channels);
    for (auto& p : img.pixels) p = static_cast<float>(rng.uniform(0.05, 1.0));
    img.bbox = {0, 0, width, height};
    return img;
}

SimulatedSample make_sample(Rng& rng, double time, bool event) {
    SimulatedSample s;
    s.image = random_image(rng);
    s.record = {time, event};
    s.true_risk = std::numeric_limits<double>::quiet_NaN();
    return s;
}

std::vector<SimulatedSample> toy_training_set(int n, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<SimulatedSample> out;
    out.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i)
        out.push_back(make_sample(rng, 1.0 + 0.5 * i, i % 2 == 0));
    return out;
}

std::vector<GradCheckBlock<double>> model_blocks(CoxCnnModelT<double>& m) {
    static const char* names[] = {"conv1.w", "conv1.b", "conv2.w", "conv2.b",
                                  "conv3.w", "conv3.b", "fc1.w",   "fc1.b",
                                  "fc2.w",   "fc2.b",   "head.w",  "head.b"};
    std::vector<GradCheckBlock<double>> blocks;
    auto params = m.parameters();
    for (std::size_t i = 0; i < params.size(); ++i)
        blocks.push_back({names[i], &params[i]->values, &params[i]->grad});
    return blocks;
}

struct TempDir {
    std::filesystem::path path;

    TempDir() {
        path = std::filesystem::temp_directory_path() /
               ("coxcnn_model_test_" + std::to_string(Rng(std::random_device{}()).next_u64()));
        std::filesystem::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path, ec);
    }
};

} // namespace

TEST_CASE("config: validation rejects malformed architectures") {
    CHECK_NOTHROW(tiny_config().validate());
    CHECK_NOTHROW(CoxCnnConfig{}.validate()); // production default

    auto cfg = tiny_config();
    cfg.conv_filters = {2, 3};
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);

    cfg = tiny_config();
    cfg.conv_kernels = {3, 4, 3}; // even kernel
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);

    cfg = tiny_config();
    cfg.fc_sizes = {8};
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);

    cfg = tiny_config();
    cfg.dropout_rate = 1.0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);

    cfg = tiny_config();
    cfg.spp_out = 0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}

TEST_CASE("config: canonical JSON round-trip") {
    CoxCnnConfig cfg = tiny_config();
    cfg.dropout_rate = 0.25;
    cfg.dropout_both_fc = false;
    cfg.standardize_input = false;
    cfg.sgd.seed = 99;

    const std::string text = config_to_json(cfg);
    const CoxCnnConfig back = config_from_json(text);
    CHECK(back == cfg);
    CHECK(config_to_json(back) == text); // canonical: stable under round-trip

    CHECK_THROWS_AS(config_from_json("{not json"), FormatError);
    CHECK_THROWS_AS(config_from_json("{}"), FormatError); // missing fields
}

TEST_CASE("build: parameter shapes follow the architecture") {
    const auto cfg = tiny_config();
    auto m = build_model<float>(cfg, 1, 7);

    CHECK(m.conv1.weight.shape == std::vector<int>{2, 1, 3, 3});
    CHECK(m.conv2.weight.shape == std::vector<int>{3, 2, 3, 3});
    CHECK(m.conv3.weight.shape == std::vector<int>{4, 3, 3, 3});
    CHECK(m.fc1.weight.shape == std::vector<int>{8, 4 * 2 * 2});
    CHECK(m.fc2.weight.shape == std::vector<int>{5, 8});
    CHECK(m.head.weight.shape == std::vector<int>{1, 5});
    CHECK(m.parameters().size() == 12);
    for (auto* p : m.parameters()) CHECK(p->tracked());
    for (float b : m.conv1.bias.values) CHECK(b == 0.0f);

    auto m2 = build_model<float>(cfg, 2, 7); // multi-channel input
    CHECK(m2.conv1.weight.shape == std::vector<int>{2, 2, 3, 3});
}

TEST_CASE("build: deterministic under the seed") {
    const auto cfg = tiny_config();
    const auto a = build_model<float>(cfg, 1, 42);
    const auto b = build_model<float>(cfg, 1, 42);
    const auto c = build_model<float>(cfg, 1, 43);
    CHECK(a.conv2.weight.values == b.conv2.weight.values);
    CHECK(a.fc1.weight.values == b.fc1.weight.values);
    CHECK(a.conv2.weight.values != c.conv2.weight.values);
}

TEST_CASE("predict: constant image reduces to the head bias") {
    // Standardization turns a constant image into zeros; with zero biases the
    // whole network is exactly zero, so the risk equals the head bias.
    auto m = build_model<float>(tiny_config(), 1, 3);
    Image2D img;
    img.width = img.height = 12;
    img.channels = 1;
    img.pixels.assign(144, 0.7f);
    img.bbox = {2, 2, 6, 6};

    CHECK(predict_risk(m, img) == 0.0);
    m.head.bias.values[0] = 1.25f;
    CHECK(predict_risk(m, img) == 1.25);
}

TEST_CASE("predict: deterministic (dropout is inference-off)") {
    auto cfg = tiny_config();
    cfg.dropout_rate = 0.5; // must not matter at inference time
    auto m = build_model<float>(cfg, 1, 5);
    Rng rng(11);
    const Image2D img = random_image(rng);
    const double r1 = predict_risk(m, img);
    const double r2 = predict_risk(m, img);
    CHECK(r1 == r2);
    CHECK(std::isfinite(r1));
}

TEST_CASE("predict: translation of an interior ROI leaves the risk unchanged") {
    auto m = build_model<float>(tiny_config(), 1, 9);

    // A blob whose receptive field stays inside the image before and after a
    // 2-pixel diagonal shift: zero padding never touches the pooled features,
    // so the translated risk must match.
    auto blob_image = [](int ox, int oy) {
        Image2D img;
        img.width = img.height = 12;
        img.channels = 1;
        img.pixels.assign(144, 0.0f);
        Rng rng(77); // same blob content at either offset
        for (int y = 0; y < 4; ++y)
            for (int x = 0; x < 4; ++x)
                img.at(0, oy + y, ox + x) = static_cast<float>(rng.uniform(0.3, 1.0));
        img.bbox = {ox, oy, 4, 4};
        return img;
    };

    const double base = predict_risk(m, blob_image(5, 5));
    const double shifted = predict_risk(m, blob_image(3, 3));
    CHECK(std::abs(base - shifted) < 1e-4);
}

TEST_CASE("predict: rejects mismatched inputs") {
    auto m = build_model<float>(tiny_config(), 1, 3);
    Rng rng(1);
    CHECK_THROWS_AS(predict_risk(m, random_image(rng, 12, 12, 2)), std::invalid_argument);
    Image2D bad = random_image(rng);
    bad.bbox = {10, 10, 5, 5}; // spills past the right edge
    CHECK_THROWS_AS(predict_risk(m, bad), std::invalid_argument);
}

TEST_CASE("model gradcheck: analytic gradients match finite differences (64-bit)") {
    auto cfg = tiny_config();
    auto m = build_model<double>(cfg, 1, 21);
    const auto samples = toy_training_set(6, 31);
    std::vector<const SimulatedSample*> batch;
    for (const auto& s : samples) batch.push_back(&s);

    model_batch_pass(m, batch, /*compute_grads=*/true, /*training=*/false, nullptr, nullptr);
    const auto eval = [&] {
        LossEval e;
        std::uint64_t h = 0;
        e.value = model_batch_pass(m, batch, false, false, nullptr, &h);
        e.branch_hash = h;
        return e;
    };

    auto opts = gradcheck_options_for(true);
    opts.seed = 5;
    const GradCheckReport report = check_gradients<double>(eval, model_blocks(m), opts);
    INFO("max rel error ", report.max_rel_error, " checks ", report.checks, " skipped ",
         report.skipped);
    CHECK(report.checks > 100);
    CHECK(report.passed(1e-5));
}

TEST_CASE("model gradcheck: float engine stays within the 32-bit tolerance") {
    auto cfg = tiny_config();
    auto m = build_model<float>(cfg, 1, 22);
    const auto samples = toy_training_set(6, 32);
    std::vector<const SimulatedSample*> batch;
    for (const auto& s : samples) batch.push_back(&s);

    model_batch_pass(m, batch, true, false, nullptr, nullptr);
    const auto eval = [&] {
        LossEval e;
        std::uint64_t h = 0;
        e.value = model_batch_pass(m, batch, false, false, nullptr, &h);
        e.branch_hash = h;
        return e;
    };

    std::vector<GradCheckBlock<float>> blocks;
    static const char* names[] = {"conv1.w", "conv1.b", "conv2.w", "conv2.b",
                                  "conv3.w", "conv3.b", "fc1.w",   "fc1.b",
                                  "fc2.w",   "fc2.b",   "head.w",  "head.b"};
    auto params = m.parameters();
    for (std::size_t i = 0; i < params.size(); ++i)
        blocks.push_back({names[i], &params[i]->values, &params[i]->grad});

    auto opts = gradcheck_options_for(false);
    opts.seed = 6;
    const GradCheckReport report = check_gradients<float>(eval, blocks, opts);
    INFO("max rel error ", report.max_rel_error, " checks ", report.checks, " skipped ",
         report.skipped);
    // The float step is coarse (1e-2), so a fair share of coordinates lands
    // across a ReLU/argmax kink and is skipped; enough must still be checked.
    CHECK(report.checks > 50);
    CHECK(report.passed(1e-2));
}

TEST_CASE("train: learning rate zero leaves every parameter untouched") {
    auto cfg = tiny_config();
    cfg.sgd.learning_rate = 0.0;
    cfg.sgd.epochs = 3;
    auto m = build_model<float>(cfg, 1, 17);
    const auto before = m.parameters();
    std::vector<std::vector<float>> snapshot;
    for (auto* p : before) snapshot.push_back(p->values);

    const auto samples = toy_training_set(8, 50);
    const TrainReport report = train_model(m, samples);
    CHECK(report.epochs_run == 3);
    auto after = m.parameters();
    for (std::size_t i = 0; i < after.size(); ++i) CHECK(after[i]->values == snapshot[i]);
}

TEST_CASE("train: overfits a toy set (loss halves from epoch 1)") {
    auto cfg = tiny_config();
    cfg.sgd.epochs = 200;
    cfg.sgd.learning_rate = 1e-2;
    auto m = build_model<float>(cfg, 1, 8);
    const auto samples = toy_training_set(8, 51);

    int callbacks = 0;
    const TrainReport report =
        train_model(m, samples, [&](int epoch, double) { callbacks = epoch; });
    REQUIRE(report.loss_history.size() == 200);
    CHECK(callbacks == 200);
    const double first = report.loss_history.front();
    const double last = report.loss_history.back();
    INFO("loss epoch 1 = ", first, ", epoch 200 = ", last);
    CHECK(last < 0.5 * first);
    CHECK(m.epochs_run == 200);
    CHECK(m.final_loss == report.loss_history.back());
}

TEST_CASE("train: loss history and weights are deterministic") {
    auto cfg = tiny_config();
    cfg.sgd.epochs = 5;
    cfg.sgd.seed = 123;
    cfg.dropout_rate = 0.5; // exercise the dropout stream too
    const auto samples = toy_training_set(10, 52);

    auto m1 = build_model<float>(cfg, 1, 4);
    auto m2 = build_model<float>(cfg, 1, 4);
    const TrainReport r1 = train_model(m1, samples);
    const TrainReport r2 = train_model(m2, samples);
    CHECK(r1.loss_history == r2.loss_history);
    CHECK(m1.fc1.weight.values == m2.fc1.weight.values);
    CHECK(m1.conv3.weight.values == m2.conv3.weight.values);
}

TEST_CASE("train: rare events trigger stratified batching; event-free batches are skipped") {
    // 1 event in 8 samples (12.5% < 20%): stratification parks the event in
    // the first batch, so with batch_size 2 the other 3 batches are skipped.
    auto cfg = tiny_config();
    cfg.sgd.batch_size = 2;
    cfg.sgd.epochs = 2;
    Rng rng(60);
    std::vector<SimulatedSample> samples;
    for (int i = 0; i < 8; ++i) samples.push_back(make_sample(rng, 1.0 + i, i == 0));

    auto m = build_model<float>(cfg, 1, 2);
    const TrainReport report = train_model(m, samples);
    CHECK(report.skipped_batches == 3 * 2);
    REQUIRE(report.loss_history.size() == 2);
    for (double loss : report.loss_history) CHECK(std::isfinite(loss));
}

TEST_CASE("train: error paths") {
    auto cfg = tiny_config();
    auto m = build_model<float>(cfg, 1, 1);

    std::vector<SimulatedSample> empty;
    CHECK_THROWS_AS(train_model(m, empty), std::invalid_argument);

    Rng rng(61);
    std::vector<SimulatedSample> censored;
    for (int i = 0; i < 4; ++i) censored.push_back(make_sample(rng, 1.0 + i, false));
    CHECK_THROWS_AS(train_model(m, censored), NoEventsError);

    // NaN in the head bias reaches the scores unmasked (ReLU would clamp a
    // NaN hidden activation to zero), so the batch loss goes non-finite.
    auto samples = toy_training_set(8, 62);
    m.head.bias.values[0] = std::numeric_limits<float>::quiet_NaN();
    CHECK_THROWS_AS(train_model(m, samples), TrainingDivergedError);
}

TEST_CASE("serialization: CXNN round-trip is bit-exact") {
    TempDir tmp;
    auto cfg = tiny_config();
    cfg.sgd.epochs = 2;
    auto m = build_model<float>(cfg, 1, 77);
    const auto samples = toy_training_set(8, 70);
    train_model(m, samples);
    m.final_loss = 0.125;

    const auto path = tmp.path / "model.cxnn";
    save_model(m, path);
    const CoxCnnModel back = load_model(path);

    CHECK(back.config == m.config);
    CHECK(back.input_channels == m.input_channels);
    CHECK(back.epochs_run == m.epochs_run);
    CHECK(back.final_loss == m.final_loss);
    CHECK(back.seed == m.seed);
    const auto pa = m.parameters();
    const auto pb = back.parameters();
    for (std::size_t i = 0; i < pa.size(); ++i) {
        CHECK(pa[i]->shape == pb[i]->shape);
        CHECK(pa[i]->values == pb[i]->values); // bit-exact float round-trip
    }

    Rng rng(71);
    const Image2D probe = random_image(rng);
    CHECK(predict_risk(m, probe) == predict_risk(back, probe));
}

TEST_CASE("serialization: malformed files are rejected") {
    TempDir tmp;
    auto m = build_model<float>(tiny_config(), 1, 5);
    const auto path = tmp.path / "model.cxnn";
    save_model(m, path);

    const auto slurp = [&] {
        std::ifstream f(path, std::ios::binary);
        return std::string((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    };
    const auto spit = [&](const std::string& bytes, const char* name) {
        const auto p = tmp.path / name;
        std::ofstream f(p, std::ios::binary);
        f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        return p;
    };
    const std::string good = slurp();

    std::string bad_magic = good;
    bad_magic[0] = 'X';
    CHECK_THROWS_AS(load_model(spit(bad_magic, "bad_magic.cxnn")), FormatError);

    std::string bad_version = good;
    bad_version[4] = 9;
    CHECK_THROWS_AS(load_model(spit(bad_version, "bad_version.cxnn")), FormatError);

    const std::string truncated = good.substr(0, good.size() - 7);
    CHECK_THROWS_AS(load_model(spit(truncated, "truncated.cxnn")), FormatError);

    const std::string trailing = good + "junk";
    CHECK_THROWS_AS(load_model(spit(trailing, "trailing.cxnn")), FormatError);

    CHECK_THROWS_AS(load_model(tmp.path / "missing.cxnn"), FormatError);
}
