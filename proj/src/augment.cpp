/*
 * coxcnn - imaging-based survival analysis with convolutional networks.
 *
 * File: src/augment.cpp
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
#include "coxcnn/augment.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace coxcnn {

void AugmentConfig::validate() const {
    if (shift_pixels <= 0) throw std::invalid_argument("shift_pixels must be positive");
    if (time_jitter_frac < 0.0) throw std::invalid_argument("time_jitter_frac must be >= 0");
    for (double z : zooms)
        if (!(z > 0.0)) throw std::invalid_argument("zoom factors must be positive");
}

double jitter_time(double t_original, double frac, Rng& rng) {
    if (!(t_original > 0.0)) throw std::invalid_argument("jitter_time: time must be positive");
    if (frac < 0.0) throw std::invalid_argument("jitter_time: frac must be >= 0");
    if (frac == 0.0) return t_original;
    double t;
    do {
        t = rng.normal(t_original, frac * t_original);
    } while (!(t > 0.0));
    return t;
}

namespace {

/// Inverse-mapped bilinear resample: output pixel (x, y) reads the source at
/// the given affine preimage, zero outside the frame.
Image2D resample(const Image2D& image, double m00, double m01, double m10, double m11) {
    Image2D out = image;
    const double cx = (image.width - 1) / 2.0;
    const double cy = (image.height - 1) / 2.0;
    for (int c = 0; c < image.channels; ++c)
        for (int y = 0; y < image.height; ++y)
            for (int x = 0; x < image.width; ++x) {
                const double dx = x - cx, dy = y - cy;
                const double sx = cx + m00 * dx + m01 * dy;
                const double sy = cy + m10 * dx + m11 * dy;
                const int x0 = static_cast<int>(std::floor(sx));
                const int y0 = static_cast<int>(std::floor(sy));
                const double fx = sx - x0, fy = sy - y0;
                double acc = 0.0;
                for (int oy = 0; oy <= 1; ++oy)
                    for (int ox = 0; ox <= 1; ++ox) {
                        const int px = x0 + ox, py = y0 + oy;
                        if (px < 0 || px >= image.width || py < 0 || py >= image.height) continue;
                        const double wgt = (ox ? fx : 1.0 - fx) * (oy ? fy : 1.0 - fy);
                        acc += wgt * image.at(c, py, px);
                    }
                out.at(c, y, x) = static_cast<float>(acc);
            }
    const auto bbox = tight_bbox(out);
    out.bbox = bbox ? *bbox : BoundingBox{0, 0, 0, 0}; // callers test for validity
    return out;
}

} // namespace

Image2D rotate_image(const Image2D& image, double degrees) {
    const double rad = degrees * std::numbers::pi / 180.0;
    // inverse rotation: sample the source at R(-theta) * offset
    const double c = std::cos(rad), s = std::sin(rad);
    return resample(image, c, s, -s, c);
}

Image2D zoom_image(const Image2D& image, double factor) {
    if (!(factor > 0.0)) throw std::invalid_argument("zoom_image: factor must be positive");
    const double inv = 1.0 / factor;
    return resample(image, inv, 0.0, 0.0, inv);
}

std::vector<SimulatedSample> augment_sample(const SimulatedSample& sample,
                                            const AugmentConfig& cfg, Rng& rng, int* dropped) {
    cfg.validate();
    std::vector<SimulatedSample> out;
    int lost = 0;

    for (const auto& [dy, dx] : kShiftDirections) {
        BoundingBox shifted = sample.image.bbox;
        shifted.x0 += dx * cfg.shift_pixels;
        shifted.y0 += dy * cfg.shift_pixels;
        if (!shifted.valid_for(sample.image.width, sample.image.height)) {
            ++lost;
            continue;
        }
        SimulatedSample copy = sample;
        copy.image.bbox = shifted;
        copy.record.time = jitter_time(sample.record.time, cfg.time_jitter_frac, rng);
        out.push_back(std::move(copy));
    }

    for (double deg : cfg.rotations_deg) {
        SimulatedSample copy = sample;
        copy.image = rotate_image(sample.image, deg);
        if (!copy.image.valid()) {
            ++lost; // rotated everything out of frame
            continue;
        }
        copy.record.time = jitter_time(sample.record.time, cfg.time_jitter_frac, rng);
        out.push_back(std::move(copy));
    }
    for (double z : cfg.zooms) {
        SimulatedSample copy = sample;
        copy.image = zoom_image(sample.image, z);
        if (!copy.image.valid()) {
            ++lost;
            continue;
        }
        copy.record.time = jitter_time(sample.record.time, cfg.time_jitter_frac, rng);
        out.push_back(std::move(copy));
    }

    if (dropped) *dropped += lost;
    return out;
}

std::vector<SimulatedSample> augment_training_set(std::span<const SimulatedSample> samples,
                                                  const AugmentConfig& cfg, int* dropped) {
    cfg.validate();
    const Rng base(cfg.seed);
    std::vector<SimulatedSample> out;
    out.reserve(samples.size() * (1 + kShiftDirections.size() + cfg.rotations_deg.size() +
                                  cfg.zooms.size()));
    for (std::size_t i = 0; i < samples.size(); ++i) {
        out.push_back(samples[i]);
        Rng stream = base.derive(i);
        auto copies = augment_sample(samples[i], cfg, stream, dropped);
        for (auto& c : copies) out.push_back(std::move(c));
    }
    return out;
}

} // namespace coxcnn
