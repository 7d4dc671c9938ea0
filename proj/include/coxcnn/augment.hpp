/*
 * coxcnn - imaging-based survival analysis with convolutional networks.
 *
 * File: include/coxcnn/augment.hpp
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

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "coxcnn/rng.hpp"
#include "coxcnn/simdata.hpp"

namespace coxcnn {

/// Training-set augmentation: bounding-box shifts in the 8 axis/diagonal
/// directions plus Gaussian jitter of the copied survival times, with
/// optional pixel-level rotations and zooms.
struct AugmentConfig {
    int shift_pixels = 2;
    double time_jitter_frac = 0.05;
    std::vector<double> rotations_deg; // extra copies, one per angle
    std::vector<double> zooms;         // extra copies, one per scale factor
    std::uint64_t seed = 0;

    void validate() const;
};

/// The 8 unit offsets, fixed order (row-major around the center), as
/// (dy, dx) pairs.
inline constexpr std::array<std::array<int, 2>, 8> kShiftDirections{{
    {-1, -1}, {-1, 0}, {-1, +1}, {0, -1}, {0, +1}, {+1, -1}, {+1, 0}, {+1, +1}}};

/// Draw from Normal(t_original, frac * t_original), redrawn until positive.
/// frac == 0 returns t_original exactly.
double jitter_time(double t_original, double frac, Rng& rng);

/// Rotate about the image center by `degrees` (counterclockwise in pixel
/// coordinates), bilinear sampling, zero fill outside. Bbox is recomputed as
/// the tight nonzero box of the result.
Image2D rotate_image(const Image2D& image, double degrees);

/// Scale about the image center by `factor` (> 1 enlarges the content),
/// bilinear sampling, zero fill. Bbox recomputed.
Image2D zoom_image(const Image2D& image, double factor);

/// Augmented copies of one sample: one copy per shift direction whose
/// translated bbox stays inside the image (pixels untouched), then one copy
/// per configured rotation and zoom (pixels transformed, bbox recomputed;
/// copies whose transform leaves no nonzero pixel are dropped). Every copy
/// keeps the event flag and gets a jittered time. The original is NOT
/// included. Returns an empty list when nothing is applicable; when
/// `dropped` is given it counts copies that had to be discarded.
std::vector<SimulatedSample> augment_sample(const SimulatedSample& sample,
                                            const AugmentConfig& cfg, Rng& rng,
                                            int* dropped = nullptr);

/// Originals plus their augmented copies, in deterministic order (sample 0,
/// its copies, sample 1, ...). Per-sample rng streams are derived from
/// cfg.seed, so the result is independent of traversal or parallelism.
std::vector<SimulatedSample> augment_training_set(std::span<const SimulatedSample> samples,
                                                  const AugmentConfig& cfg, int* dropped = nullptr);

} // namespace coxcnn
