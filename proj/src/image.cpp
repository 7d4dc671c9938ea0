/*
 * coxcnn - imaging-based survival analysis with convolutional networks.
 *
 * File: src/image.cpp
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
#include "coxcnn/image.hpp"

#include <cmath>
#include <stdexcept>

namespace coxcnn {

Image2D standardized(const Image2D& image) {
    if (!image.valid()) throw std::invalid_argument("standardized: invalid image");
    const std::size_t n = image.pixels.size();
    double mean = 0.0;
    for (float p : image.pixels) mean += p;
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (float p : image.pixels) {
        const double d = p - mean;
        var += d * d;
    }
    var /= static_cast<double>(n);

    Image2D out = image;
    if (var < 1e-12) {
        for (auto& p : out.pixels) p = static_cast<float>(p - mean);
        return out;
    }
    const double inv_std = 1.0 / std::sqrt(var);
    for (auto& p : out.pixels) p = static_cast<float>((p - mean) * inv_std);
    return out;
}

std::optional<BoundingBox> tight_bbox(const Image2D& image, float threshold) {
    int x_lo = image.width, x_hi = -1, y_lo = image.height, y_hi = -1;
    for (int c = 0; c < image.channels; ++c)
        for (int y = 0; y < image.height; ++y)
            for (int x = 0; x < image.width; ++x)
                if (image.at(c, y, x) > threshold) {
                    x_lo = std::min(x_lo, x);
                    x_hi = std::max(x_hi, x);
                    y_lo = std::min(y_lo, y);
                    y_hi = std::max(y_hi, y);
                }
    if (x_hi < 0) return std::nullopt;
    return BoundingBox{x_lo, y_lo, x_hi - x_lo + 1, y_hi - y_lo + 1};
}

} // namespace coxcnn
