/*
 * coxcnn - imaging-based survival analysis with convolutional networks.
 *
 * File: src/model.cpp
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
#include "coxcnn/model.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "coxcnn/cox.hpp"
#include "coxcnn/errors.hpp"
#include "coxcnn/gradcheck.hpp"

namespace coxcnn {

static_assert(std::endian::native == std::endian::little,
              "CXNN serialization assumes a little-endian host");

// ---------------------------------------------------------------------------
// Config
// ---------------------------------------------------------------------------

void CoxCnnConfig::validate() const {
    if (conv_filters.size() != 3 || conv_kernels.size() != 3)
        throw std::invalid_argument("config: expected exactly 3 conv layers");
    if (fc_sizes.size() != 2) throw std::invalid_argument("config: expected exactly 2 FC layers");
    for (int f : conv_filters)
        if (f <= 0) throw std::invalid_argument("config: conv filter counts must be positive");
    for (int k : conv_kernels) {
        if (k <= 0) throw std::invalid_argument("config: conv kernel sizes must be positive");
        if (k % 2 == 0) throw std::invalid_argument("config: conv kernels must be odd");
    }
    for (int f : fc_sizes)
        if (f <= 0) throw std::invalid_argument("config: FC sizes must be positive");
    if (spp_out < 1) throw std::invalid_argument("config: spp_out must be >= 1");
    if (!(dropout_rate >= 0.0 && dropout_rate < 1.0))
        throw std::invalid_argument("config: dropout_rate must lie in [0, 1)");
    sgd.validate();
}

namespace {

nlohmann::json config_json_object(const CoxCnnConfig& cfg) {
    nlohmann::json j;
    j["conv_filters"] = cfg.conv_filters;
    j["conv_kernels"] = cfg.conv_kernels;
    j["dropout_both_fc"] = cfg.dropout_both_fc;
    j["dropout_rate"] = cfg.dropout_rate;
    j["fc_sizes"] = cfg.fc_sizes;
    j["sgd"] = {{"batch_size", cfg.sgd.batch_size},
                {"epochs", cfg.sgd.epochs},
                {"learning_rate", cfg.sgd.learning_rate},
                {"momentum", cfg.sgd.momentum},
                {"seed", cfg.sgd.seed}};
    j["spp_out"] = cfg.spp_out;
    j["standardize_input"] = cfg.standardize_input;
    return j;
}

CoxCnnConfig config_from_json_object(const nlohmann::json& j) {
    CoxCnnConfig cfg;
    cfg.conv_filters = j.at("conv_filters").get<std::vector<int>>();
    cfg.conv_kernels = j.at("conv_kernels").get<std::vector<int>>();
    cfg.dropout_both_fc = j.at("dropout_both_fc").get<bool>();
    cfg.dropout_rate = j.at("dropout_rate").get<double>();
    cfg.fc_sizes = j.at("fc_sizes").get<std::vector<int>>();
    const auto& s = j.at("sgd");
    cfg.sgd.batch_size = s.at("batch_size").get<int>();
    cfg.sgd.epochs = s.at("epochs").get<int>();
    cfg.sgd.learning_rate = s.at("learning_rate").get<double>();
    cfg.sgd.momentum = s.at("momentum").get<double>();
    cfg.sgd.seed = s.at("seed").get<std::uint64_t>();
    cfg.spp_out = j.at("spp_out").get<int>();
    cfg.standardize_input = j.at("standardize_input").get<bool>();
    return cfg;
}

} // namespace

std::string config_to_json(const CoxCnnConfig& cfg) {
    return config_json_object(cfg).dump(); // nlohmann objects keep keys sorted
}

CoxCnnConfig config_from_json(const std::string& text) {
    try {
        return config_from_json_object(nlohmann::json::parse(text));
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("config JSON: ") + e.what());
    }
}

// ---------------------------------------------------------------------------
// Model assembly
// ---------------------------------------------------------------------------

template <typename T>
std::vector<nn::TensorT<T>*> CoxCnnModelT<T>::parameters() {
    return {&conv1.weight, &conv1.bias, &conv2.weight, &conv2.bias,
            &conv3.weight, &conv3.bias, &fc1.weight,   &fc1.bias,
            &fc2.weight,   &fc2.bias,   &head.weight,  &head.bias};
}

template <typename T>
std::vector<const nn::TensorT<T>*> CoxCnnModelT<T>::parameters() const {
    return {&conv1.weight, &conv1.bias, &conv2.weight, &conv2.bias,
            &conv3.weight, &conv3.bias, &fc1.weight,   &fc1.bias,
            &fc2.weight,   &fc2.bias,   &head.weight,  &head.bias};
}

template <typename T>
CoxCnnModelT<T> build_model(const CoxCnnConfig& config, int input_channels, std::uint64_t seed) {
    config.validate();
    if (input_channels < 1) throw std::invalid_argument("build_model: input_channels must be >= 1");

    CoxCnnModelT<T> m;
    m.config = config;
    m.input_channels = input_channels;
    m.seed = seed;

    Rng rng(seed);
    m.conv1 = nn::make_conv2d<T>(config.conv_filters[0], input_channels, config.conv_kernels[0],
                                 config.conv_kernels[0], rng);
    m.conv2 = nn::make_conv2d<T>(config.conv_filters[1], config.conv_filters[0],
                                 config.conv_kernels[1], config.conv_kernels[1], rng);
    m.conv3 = nn::make_conv2d<T>(config.conv_filters[2], config.conv_filters[1],
                                 config.conv_kernels[2], config.conv_kernels[2], rng);
    m.fc1 = nn::make_dense<T>(config.fc_sizes[0], config.fc1_input_dim(), rng);
    m.fc2 = nn::make_dense<T>(config.fc_sizes[1], config.fc_sizes[0], rng);
    m.head = nn::make_dense<T>(1, config.fc_sizes[1], rng);
    for (auto* p : m.parameters()) p->track();
    return m;
}

// ---------------------------------------------------------------------------
// Forward pass
// ---------------------------------------------------------------------------

namespace {

/// Fold a tensor's sign pattern (x > 0, the branch ReLU takes) into the hash,
/// 64 elements per mixed word.
template <typename T>
void hash_sign_pattern(std::uint64_t& h, const nn::TensorT<T>& z) {
    std::uint64_t word = 0;
    int bits = 0;
    for (const T v : z.values) {
        word = (word << 1) | static_cast<std::uint64_t>(v > T(0));
        if (++bits == 64) {
            h = hash_mix(h, word);
            word = 0;
            bits = 0;
        }
    }
    if (bits > 0) h = hash_mix(h, word ^ (static_cast<std::uint64_t>(bits) << 57));
}

inline void hash_indices(std::uint64_t& h, const std::vector<std::int64_t>& idx) {
    for (const std::int64_t i : idx) h = hash_mix(h, static_cast<std::uint64_t>(i));
}

/// Everything the backward pass needs from one forward run.
template <typename T>
struct ForwardState {
    int n = 0, h = 0, w = 0;
    nn::TensorT<T> x;                   // standardized input [N,C,H,W]
    nn::TensorT<T> z1, a1, z2, a2, z3, a3;
    nn::TensorT<T> pooled;              // [N, F*spp*spp]
    nn::TensorT<T> d1, o1, d2, o2;      // FC pre-activations and block outputs
    nn::TensorT<T> mask1, mask2;        // dropout masks (when applied)
    bool dropped1 = false, dropped2 = false;
    nn::TensorT<T> scores;              // [N,1]
    std::vector<std::vector<std::int64_t>> argmax;
    nn::Conv2dCache<T> cache1, cache2, cache3;
};

template <typename T>
void forward_pass(const CoxCnnModelT<T>& model, std::span<const Image2D* const> images,
                  bool training, bool want_backward, Rng* dropout_rng,
                  std::uint64_t* branch_hash, ForwardState<T>& st) {
    const auto& cfg = model.config;
    if (images.empty()) throw std::invalid_argument("forward: empty batch");
    const Image2D& first = *images[0];
    if (!first.valid()) throw std::invalid_argument("forward: invalid image (dims or bounding box)");
    if (first.channels != model.input_channels)
        throw std::invalid_argument("forward: image channel count does not match the model");
    const int n = static_cast<int>(images.size());
    const int c = first.channels, h = first.height, w = first.width;
    for (const Image2D* img : images) {
        if (!img->valid() || img->width != w || img->height != h || img->channels != c)
            throw std::invalid_argument("forward: images in a batch must share dims and be valid");
    }
    const bool use_dropout = training && cfg.dropout_rate > 0.0;
    if (use_dropout && dropout_rng == nullptr)
        throw std::invalid_argument("forward: training with dropout requires an rng");

    st.n = n;
    st.h = h;
    st.w = w;

    // Input block: per-image standardization, float -> T.
    st.x = nn::TensorT<T>({n, c, h, w});
    const std::int64_t plane = static_cast<std::int64_t>(c) * h * w;
    for (int b = 0; b < n; ++b) {
        T* dst = st.x.data() + b * plane;
        if (cfg.standardize_input) {
            const Image2D std_img = standardized(*images[b]);
            for (std::int64_t i = 0; i < plane; ++i)
                dst[i] = static_cast<T>(std_img.pixels[static_cast<std::size_t>(i)]);
        } else {
            for (std::int64_t i = 0; i < plane; ++i)
                dst[i] = static_cast<T>(images[b]->pixels[static_cast<std::size_t>(i)]);
        }
    }

    // Convolution tower.
    st.z1 = nn::conv2d_forward(st.x, model.conv1, want_backward ? &st.cache1 : nullptr);
    if (branch_hash) hash_sign_pattern(*branch_hash, st.z1);
    st.a1 = nn::relu_forward(st.z1);
    st.z2 = nn::conv2d_forward(st.a1, model.conv2, want_backward ? &st.cache2 : nullptr);
    if (branch_hash) hash_sign_pattern(*branch_hash, st.z2);
    st.a2 = nn::relu_forward(st.z2);
    st.z3 = nn::conv2d_forward(st.a2, model.conv3, want_backward ? &st.cache3 : nullptr);
    if (branch_hash) hash_sign_pattern(*branch_hash, st.z3);
    st.a3 = nn::relu_forward(st.z3);

    // SPP over each sample's bounding box.
    const int f = cfg.conv_filters[2];
    const int pooled_dim = cfg.fc1_input_dim();
    const SppConfig spp_cfg{cfg.spp_out, cfg.spp_out};
    st.pooled = nn::TensorT<T>({n, pooled_dim});
    st.argmax.assign(static_cast<std::size_t>(n), {});
    nn::TensorT<T> sample_features({f, h, w});
    const std::int64_t fplane = static_cast<std::int64_t>(f) * h * w;
    for (int b = 0; b < n; ++b) {
        std::copy_n(st.a3.data() + b * fplane, fplane, sample_features.data());
        const nn::TensorT<T> out = nn::spp_forward(sample_features, images[b]->bbox, spp_cfg,
                                                   &st.argmax[static_cast<std::size_t>(b)]);
        std::copy_n(out.data(), pooled_dim, st.pooled.data() + static_cast<std::int64_t>(b) * pooled_dim);
        if (branch_hash) hash_indices(*branch_hash, st.argmax[static_cast<std::size_t>(b)]);
    }

    // FC block 1.
    st.d1 = nn::dense_forward(st.pooled, model.fc1);
    if (branch_hash) hash_sign_pattern(*branch_hash, st.d1);
    nn::TensorT<T> r1 = nn::relu_forward(st.d1);
    st.dropped1 = use_dropout && cfg.dropout_both_fc;
    if (st.dropped1) {
        auto dr = nn::dropout_forward(r1, cfg.dropout_rate, *dropout_rng, true);
        st.mask1 = std::move(dr.mask);
        st.o1 = std::move(dr.output);
    } else {
        st.o1 = std::move(r1);
    }

    // FC block 2.
    st.d2 = nn::dense_forward(st.o1, model.fc2);
    if (branch_hash) hash_sign_pattern(*branch_hash, st.d2);
    nn::TensorT<T> r2 = nn::relu_forward(st.d2);
    st.dropped2 = use_dropout;
    if (st.dropped2) {
        auto dr = nn::dropout_forward(r2, cfg.dropout_rate, *dropout_rng, true);
        st.mask2 = std::move(dr.mask);
        st.o2 = std::move(dr.output);
    } else {
        st.o2 = std::move(r2);
    }

    st.scores = nn::dense_forward(st.o2, model.head); // [N, 1]
}

} // namespace

template <typename T>
double predict_risk(const CoxCnnModelT<T>& model, const Image2D& image) {
    const Image2D* ptr = &image;
    ForwardState<T> st;
    forward_pass(model, std::span<const Image2D* const>(&ptr, 1), /*training=*/false,
                 /*want_backward=*/false, nullptr, nullptr, st);
    return static_cast<double>(st.scores.values[0]);
}

// ---------------------------------------------------------------------------
// Batch loss and gradients
// ---------------------------------------------------------------------------

template <typename T>
double model_batch_pass(CoxCnnModelT<T>& model, std::span<const SimulatedSample* const> batch,
                        bool compute_grads, bool training, Rng* dropout_rng,
                        std::uint64_t* branch_hash) {
    std::vector<const Image2D*> images;
    images.reserve(batch.size());
    std::vector<SurvivalRecord> records;
    records.reserve(batch.size());
    for (const SimulatedSample* s : batch) {
        images.push_back(&s->image);
        records.push_back(s->record);
    }

    ForwardState<T> st;
    forward_pass(model, images, training, compute_grads, dropout_rng, branch_hash, st);

    const int n = st.n;
    std::vector<double> scores(static_cast<std::size_t>(n));
    for (int b = 0; b < n; ++b)
        scores[static_cast<std::size_t>(b)] = static_cast<double>(st.scores.values[static_cast<std::size_t>(b)]);
    const double loss = neg_log_partial_likelihood(scores, records);
    if (!compute_grads) return loss;

    // Backward: Cox -> head -> FC blocks -> SPP -> conv tower.
    const std::vector<double> gh = cox_loss_gradient(scores, records);
    nn::TensorT<T> gscores({n, 1});
    for (int b = 0; b < n; ++b)
        gscores.values[static_cast<std::size_t>(b)] = static_cast<T>(gh[static_cast<std::size_t>(b)]);

    auto dg_head = nn::dense_backward(st.o2, model.head, gscores);
    nn::TensorT<T> g = std::move(dg_head.input);
    if (st.dropped2) g = nn::dropout_backward(st.mask2, g);
    g = nn::relu_backward(st.d2, g);
    auto dg_fc2 = nn::dense_backward(st.o1, model.fc2, g);
    g = std::move(dg_fc2.input);
    if (st.dropped1) g = nn::dropout_backward(st.mask1, g);
    g = nn::relu_backward(st.d1, g);
    auto dg_fc1 = nn::dense_backward(st.pooled, model.fc1, g);

    const auto& cfg = model.config;
    const int f = cfg.conv_filters[2];
    const int pooled_dim = cfg.fc1_input_dim();
    nn::TensorT<T> ga3({n, f, st.h, st.w});
    const std::int64_t fplane = static_cast<std::int64_t>(f) * st.h * st.w;
    nn::TensorT<T> bin_grad({f, cfg.spp_out, cfg.spp_out});
    for (int b = 0; b < n; ++b) {
        std::copy_n(dg_fc1.input.data() + static_cast<std::int64_t>(b) * pooled_dim, pooled_dim,
                    bin_grad.data());
        const nn::TensorT<T> gs =
            nn::spp_backward(st.argmax[static_cast<std::size_t>(b)], bin_grad, f, st.h, st.w);
        std::copy_n(gs.data(), fplane, ga3.data() + b * fplane);
    }

    nn::TensorT<T> gz3 = nn::relu_backward(st.z3, ga3);
    auto cg3 = nn::conv2d_backward(st.a2, model.conv3, gz3, &st.cache3);
    nn::TensorT<T> gz2 = nn::relu_backward(st.z2, cg3.input);
    auto cg2 = nn::conv2d_backward(st.a1, model.conv2, gz2, &st.cache2);
    nn::TensorT<T> gz1 = nn::relu_backward(st.z1, cg2.input);
    auto cg1 = nn::conv2d_backward(st.x, model.conv1, gz1, &st.cache1);

    model.conv1.weight.grad = std::move(cg1.weight.values);
    model.conv1.bias.grad = std::move(cg1.bias.values);
    model.conv2.weight.grad = std::move(cg2.weight.values);
    model.conv2.bias.grad = std::move(cg2.bias.values);
    model.conv3.weight.grad = std::move(cg3.weight.values);
    model.conv3.bias.grad = std::move(cg3.bias.values);
    model.fc1.weight.grad = std::move(dg_fc1.weight.values);
    model.fc1.bias.grad = std::move(dg_fc1.bias.values);
    model.fc2.weight.grad = std::move(dg_fc2.weight.values);
    model.fc2.bias.grad = std::move(dg_fc2.bias.values);
    model.head.weight.grad = std::move(dg_head.weight.values);
    model.head.bias.grad = std::move(dg_head.bias.values);
    return loss;
}

// ---------------------------------------------------------------------------
// Training loop
// ---------------------------------------------------------------------------

namespace {

/// Batch index lists for one epoch. Plain seeded shuffle-and-chunk normally;
/// when events are rare (< 20%) they are dealt round-robin so batches do not
/// end up event-free by chance, then censored samples fill the remaining
/// capacity.
std::vector<std::vector<std::size_t>> plan_batches(std::span<const SimulatedSample> samples,
                                                   int batch_size, Rng& rng) {
    const std::size_t n = samples.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    rng.shuffle(order.begin(), order.end());

    const std::size_t n_batches = (n + static_cast<std::size_t>(batch_size) - 1) /
                                  static_cast<std::size_t>(batch_size);
    std::vector<std::vector<std::size_t>> batches(n_batches);

    std::size_t n_events = 0;
    for (const auto& s : samples) n_events += s.record.event ? 1 : 0;
    const bool stratify = static_cast<double>(n_events) < 0.2 * static_cast<double>(n);

    if (!stratify) {
        for (std::size_t i = 0; i < n; ++i)
            batches[i / static_cast<std::size_t>(batch_size)].push_back(order[i]);
        return batches;
    }

    std::vector<std::size_t> events, censored;
    for (const std::size_t idx : order)
        (samples[idx].record.event ? events : censored).push_back(idx);
    for (std::size_t k = 0; k < events.size(); ++k) batches[k % n_batches].push_back(events[k]);

    // Nominal sizes: ceil for the first n % n_batches chunks, floor after.
    std::size_t next = 0;
    const std::size_t base = n / n_batches, extra = n % n_batches;
    for (std::size_t b = 0; b < n_batches; ++b) {
        const std::size_t want = base + (b < extra ? 1 : 0);
        while (batches[b].size() < want && next < censored.size())
            batches[b].push_back(censored[next++]);
    }
    for (std::size_t b = 0; next < censored.size(); b = (b + 1) % n_batches)
        batches[b].push_back(censored[next++]);
    return batches;
}

} // namespace

template <typename T>
TrainReport train_model(CoxCnnModelT<T>& model, std::span<const SimulatedSample> samples,
                        const std::function<void(int, double)>& on_epoch) {
    model.config.validate();
    const auto& sgd = model.config.sgd;
    if (samples.empty()) throw std::invalid_argument("train: empty training set");
    std::size_t n_events = 0;
    for (const auto& s : samples) {
        if (!s.image.valid()) throw std::invalid_argument("train: invalid image in training set");
        n_events += s.record.event ? 1 : 0;
    }
    if (n_events == 0) throw NoEventsError("train: no events in the training set");

    nn::SgdOptimizer<T> opt(sgd.learning_rate, sgd.momentum);
    const std::vector<nn::TensorT<T>*> params = model.parameters();
    const Rng root(sgd.seed);

    TrainReport report;
    for (int epoch = 1; epoch <= sgd.epochs; ++epoch) {
        Rng shuffle_rng = root.derive(2 * static_cast<std::uint64_t>(epoch));
        Rng dropout_rng = root.derive(2 * static_cast<std::uint64_t>(epoch) + 1);
        const auto batches = plan_batches(samples, sgd.batch_size, shuffle_rng);

        double loss_sum = 0.0;
        std::size_t counted_events = 0;
        for (const auto& batch_indices : batches) {
            std::size_t batch_events = 0;
            std::vector<const SimulatedSample*> batch;
            batch.reserve(batch_indices.size());
            for (const std::size_t idx : batch_indices) {
                batch.push_back(&samples[idx]);
                batch_events += samples[idx].record.event ? 1 : 0;
            }
            if (batch_events == 0) {
                ++report.skipped_batches;
                continue; // the Cox loss has no terms without an event
            }
            const double loss = model_batch_pass(model, batch, /*compute_grads=*/true,
                                                 /*training=*/true, &dropout_rng, nullptr);
            if (!std::isfinite(loss)) throw TrainingDivergedError("train: non-finite batch loss");
            opt.step(params); // throws TrainingDivergedError on non-finite gradients
            loss_sum += loss;
            counted_events += batch_events;
        }
        const double epoch_loss = loss_sum / static_cast<double>(counted_events);
        report.loss_history.push_back(epoch_loss);
        ++report.epochs_run;
        if (on_epoch) on_epoch(epoch, epoch_loss);
    }

    model.epochs_run += report.epochs_run;
    model.final_loss = report.loss_history.back();
    return report;
}

// ---------------------------------------------------------------------------
// CXNN container
// ---------------------------------------------------------------------------

namespace {

constexpr char kMagic[4] = {'C', 'X', 'N', 'N'};
constexpr std::uint16_t kVersion = 1;

void put_bytes(std::string& out, const void* p, std::size_t len) {
    out.append(static_cast<const char*>(p), len);
}

void put_u16(std::string& out, std::uint16_t v) { put_bytes(out, &v, 2); }
void put_u32(std::string& out, std::uint32_t v) { put_bytes(out, &v, 4); }

struct ByteReader {
    const std::string& buf;
    std::size_t pos = 0;

    void read(void* dst, std::size_t len) {
        if (pos + len > buf.size()) throw FormatError("model file truncated");
        std::memcpy(dst, buf.data() + pos, len);
        pos += len;
    }
    std::uint16_t u16() {
        std::uint16_t v;
        read(&v, 2);
        return v;
    }
    std::uint32_t u32() {
        std::uint32_t v;
        read(&v, 4);
        return v;
    }
};

std::vector<std::vector<int>> expected_tensor_shapes(const CoxCnnConfig& cfg, int input_channels) {
    const auto& f = cfg.conv_filters;
    const auto& k = cfg.conv_kernels;
    return {{f[0], input_channels, k[0], k[0]},
            {f[0]},
            {f[1], f[0], k[1], k[1]},
            {f[1]},
            {f[2], f[1], k[2], k[2]},
            {f[2]},
            {cfg.fc_sizes[0], cfg.fc1_input_dim()},
            {cfg.fc_sizes[0]},
            {cfg.fc_sizes[1], cfg.fc_sizes[0]},
            {cfg.fc_sizes[1]},
            {1, cfg.fc_sizes[1]},
            {1}};
}

} // namespace

void save_model(const CoxCnnModel& model, const std::filesystem::path& path) {
    model.config.validate();

    nlohmann::json header;
    header["config"] = config_json_object(model.config);
    header["input_channels"] = model.input_channels;
    header["metadata"] = {{"epochs_run", model.epochs_run},
                          {"final_loss", model.final_loss},
                          {"seed", model.seed}};
    const std::string json_text = header.dump();

    std::string out;
    put_bytes(out, kMagic, 4);
    put_u16(out, kVersion);
    put_u32(out, static_cast<std::uint32_t>(json_text.size()));
    out += json_text;

    for (const nn::TensorT<float>* t : model.parameters()) {
        out.push_back(static_cast<char>(t->rank()));
        for (const int d : t->shape) put_u32(out, static_cast<std::uint32_t>(d));
        put_bytes(out, t->values.data(), t->values.size() * sizeof(float));
    }

    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw FormatError("cannot open model file for writing: " + path.string());
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw FormatError("failed writing model file: " + path.string());
}

CoxCnnModel load_model(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw FormatError("cannot open model file: " + path.string());
    std::string buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());

    ByteReader r{buf};
    char magic[4];
    r.read(magic, 4);
    if (std::memcmp(magic, kMagic, 4) != 0) throw FormatError("not a CXNN model file");
    const std::uint16_t version = r.u16();
    if (version != kVersion)
        throw FormatError("unsupported CXNN version " + std::to_string(version));

    const std::uint32_t json_len = r.u32();
    if (r.pos + json_len > buf.size()) throw FormatError("model file truncated");
    const std::string json_text = buf.substr(r.pos, json_len);
    r.pos += json_len;

    CoxCnnModel model;
    try {
        const nlohmann::json header = nlohmann::json::parse(json_text);
        model.config = config_from_json_object(header.at("config"));
        model.input_channels = header.at("input_channels").get<int>();
        const auto& meta = header.at("metadata");
        model.epochs_run = meta.at("epochs_run").get<int>();
        model.final_loss = meta.at("final_loss").get<double>();
        model.seed = meta.at("seed").get<std::uint64_t>();
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("model header JSON: ") + e.what());
    }
    model.config.validate();
    if (model.input_channels < 1) throw FormatError("model header: invalid input_channels");

    const auto shapes = expected_tensor_shapes(model.config, model.input_channels);
    const std::vector<nn::TensorT<float>*> params = model.parameters();
    for (std::size_t i = 0; i < params.size(); ++i) {
        std::uint8_t rank;
        r.read(&rank, 1);
        if (rank != shapes[i].size())
            throw FormatError("model tensor " + std::to_string(i) + ": unexpected rank");
        std::vector<int> dims(rank);
        for (auto& d : dims) d = static_cast<int>(r.u32());
        if (dims != shapes[i])
            throw FormatError("model tensor " + std::to_string(i) +
                              ": shape does not match the config");
        *params[i] = nn::TensorT<float>(dims);
        r.read(params[i]->values.data(), params[i]->values.size() * sizeof(float));
        params[i]->track();
    }
    if (r.pos != buf.size()) throw FormatError("model file has trailing bytes");
    return model;
}

// ---------------------------------------------------------------------------
// Explicit instantiations: float is the production engine, double the
// gradient-check test mode.
// ---------------------------------------------------------------------------

template struct CoxCnnModelT<float>;
template struct CoxCnnModelT<double>;

template CoxCnnModelT<float> build_model<float>(const CoxCnnConfig&, int, std::uint64_t);
template CoxCnnModelT<double> build_model<double>(const CoxCnnConfig&, int, std::uint64_t);

template double predict_risk<float>(const CoxCnnModelT<float>&, const Image2D&);
template double predict_risk<double>(const CoxCnnModelT<double>&, const Image2D&);

template double model_batch_pass<float>(CoxCnnModelT<float>&,
                                        std::span<const SimulatedSample* const>, bool, bool, Rng*,
                                        std::uint64_t*);
template double model_batch_pass<double>(CoxCnnModelT<double>&,
                                         std::span<const SimulatedSample* const>, bool, bool, Rng*,
                                         std::uint64_t*);

template TrainReport train_model<float>(CoxCnnModelT<float>&, std::span<const SimulatedSample>,
                                        const std::function<void(int, double)>&);
template TrainReport train_model<double>(CoxCnnModelT<double>&, std::span<const SimulatedSample>,
                                         const std::function<void(int, double)>&);

} // namespace coxcnn
