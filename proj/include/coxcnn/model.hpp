/*
 * coxcnn - imaging-based survival analysis with convolutional networks.
 *
 * File: include/coxcnn/model.hpp
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
#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "coxcnn/nn.hpp"
#include "coxcnn/simdata.hpp"
#include "coxcnn/spp.hpp"

namespace coxcnn {

/// Architecture and training hyper-parameters:
/// conv(16,3x3) -> conv(36,5x5) -> conv(64,5x5) -> SPP(8x8) -> FC(500) ->
/// FC(100) -> scalar risk head, ReLU between layers, dropout on the FC
/// outputs.
struct CoxCnnConfig {
    std::vector<int> conv_filters{16, 36, 64};
    std::vector<int> conv_kernels{3, 5, 5}; // square, odd
    int spp_out = 8;
    std::vector<int> fc_sizes{500, 100};
    double dropout_rate = 0.5;
    bool dropout_both_fc = true;    // false: dropout on the second FC only
    bool standardize_input = true;  // per-image zero mean/unit variance
    nn::SgdConfig sgd;

    void validate() const;
    int fc1_input_dim() const { return conv_filters.back() * spp_out * spp_out; }

    friend bool operator==(const CoxCnnConfig&, const CoxCnnConfig&) = default;
};

/// Canonical JSON round-trip for the config (sorted keys, compact). The
/// canonical form is what the CXNN container embeds.
std::string config_to_json(const CoxCnnConfig& cfg);
CoxCnnConfig config_from_json(const std::string& text);

/// The assembled network. T is the storage scalar: float in production,
/// double in gradient-check test mode.
template <typename T>
struct CoxCnnModelT {
    CoxCnnConfig config;
    int input_channels = 1;
    std::uint64_t seed = 0; // build seed (initialization stream)
    int epochs_run = 0;
    double final_loss = 0.0;

    nn::Conv2dParams<T> conv1, conv2, conv3;
    nn::DenseParams<T> fc1, fc2, head;

    /// Fixed parameter order (also the serialization order): conv1.w,
    /// conv1.b, conv2.w, conv2.b, conv3.w, conv3.b, fc1.w, fc1.b, fc2.w,
    /// fc2.b, head.w, head.b.
    std::vector<nn::TensorT<T>*> parameters();
    std::vector<const nn::TensorT<T>*> parameters() const;
};

using CoxCnnModel = CoxCnnModelT<float>;

/// Fresh model with He-initialized weights; deterministic under seed.
template <typename T>
CoxCnnModelT<T> build_model(const CoxCnnConfig& config, int input_channels, std::uint64_t seed);

/// Inference-mode scalar risk h(x) for one image (dropout off).
template <typename T>
double predict_risk(const CoxCnnModelT<T>& model, const Image2D& image);

/// One full batch pass: forward to the Cox loss over within-batch risk sets,
/// and (optionally) backward into every parameter's grad buffer. `training`
/// enables dropout, which then draws from `dropout_rng` (required).
/// `branch_hash`, when given, accumulates every ReLU activation pattern and
/// SPP argmax choice so finite-difference harnesses can detect kink
/// crossings. Returns the batch loss.
template <typename T>
double model_batch_pass(CoxCnnModelT<T>& model, std::span<const SimulatedSample* const> batch,
                        bool compute_grads, bool training, Rng* dropout_rng,
                        std::uint64_t* branch_hash);

struct TrainReport {
    /// Per-epoch mean loss per event (total batch loss / events in counted
    /// batches; skipped batches excluded).
    std::vector<double> loss_history;
    int skipped_batches = 0; // zero-event batches contribute no gradient
    int epochs_run = 0;
};

/// Mini-batch SGD on the Cox loss: per epoch, seeded shuffle (stratified by
/// event status when the event rate is below 20%), per-batch forward/backward
/// over within-batch risk sets, momentum update. Throws TrainingDivergedError
/// on a non-finite loss or gradient.
template <typename T>
TrainReport train_model(CoxCnnModelT<T>& model, std::span<const SimulatedSample> samples,
                        const std::function<void(int, double)>& on_epoch = {});

/// CXNN container: "CXNN" magic, u16 format version, canonical JSON config,
/// then each parameter tensor as (u8 rank, u32 dims, float32 LE values).
/// Round-trips bit-exactly.
void save_model(const CoxCnnModel& model, const std::filesystem::path& path);
CoxCnnModel load_model(const std::filesystem::path& path);

} // namespace coxcnn
