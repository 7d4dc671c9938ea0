/*
 * coxcnn - imaging-based survival analysis with convolutional networks.
 *
 * File: include/coxcnn/simdata.hpp
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
#include <set>
#include <string>
#include <vector>

#include "coxcnn/cox.hpp"
#include "coxcnn/image.hpp"

namespace coxcnn {

/// The dataset-wide random weight image the simulator multiplies into every
/// digit. Stored as float32 so the in-memory mask and mask.bin agree bit for
/// bit.
struct WeightMask {
    int width = 0;
    int height = 0;
    std::vector<float> values; // row-major
    std::uint64_t seed = 0;

    friend bool operator==(const WeightMask&, const WeightMask&) = default;
};

struct SimulatedSample {
    Image2D image;
    double true_risk = 0.0; // in (0,1]; NaN once unknown (non-simulated data)
    SurvivalRecord record;

    friend bool operator==(const SimulatedSample&, const SimulatedSample&) = default;
};

/// Mask entries drawn i.i.d. uniform on [0,1).
WeightMask generate_mask(int width, int height, std::uint64_t seed);

/// exp(-sum_{i,j} (I_ij * M_ij)^2), computed on raw intensities in double.
/// Requires a single-channel image whose dims match the mask.
double risk_of(const Image2D& image, const WeightMask& mask);

/// Deterministic time assignment t = lambda0 * exp(-risk).
double survival_time(double risk, double lambda0 = 5.0);

/// Marks exactly round(non_censored_fraction * n) samples as events; the
/// remaining samples become right-censored with observed time u * t_true,
/// u ~ U(0.1, 1). Sample times must already be the deterministic event times.
void apply_censoring(std::vector<SimulatedSample>& samples, double non_censored_fraction,
                     std::uint64_t seed);

/// IDX (MNIST layout) ingestion: pixels scaled to [0,1], only labels in
/// keep_labels retained, bbox set to the tight nonzero bounding box. Images
/// with no nonzero pixel are skipped (counted in *skipped when given).
std::vector<Image2D> load_idx(const std::filesystem::path& images_path,
                              const std::filesystem::path& labels_path,
                              const std::set<int>& keep_labels, int* skipped = nullptr);

enum class SynthClass { Ring, Spiral };

/// Offline substitute for MNIST: 28x28 ring-shaped "0"-like and spiral
/// "6"-like blobs with jittered geometry and intensity. Class-balanced in
/// the order given, deterministic under seed, tight bboxes assigned.
std::vector<Image2D> synth_digits(int n, const std::vector<SynthClass>& classes,
                                  std::uint64_t seed);

/// Full simulated dataset: risks from the shared mask, deterministic times,
/// then random censoring. Pure function of (images, mask, lambda0, fraction,
/// seed).
std::vector<SimulatedSample> simulate_survival(std::vector<Image2D> images,
                                               const WeightMask& mask, double lambda0,
                                               double non_censored_fraction,
                                               std::uint64_t censor_seed);

struct Dataset {
    std::vector<SimulatedSample> samples;
    WeightMask mask;
    double lambda0 = 5.0;
    std::uint64_t seed = 0;
};

/// Directory layout: manifest.json + one float32-LE binary per image +
/// mask.bin, with a CRC32 per binary recorded in the manifest. Round-trips
/// losslessly.
void write_dataset(const Dataset& dataset, const std::filesystem::path& dir);
Dataset read_dataset(const std::filesystem::path& dir);

} // namespace coxcnn
