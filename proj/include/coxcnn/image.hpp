/*
 * coxcnn - imaging-based survival analysis with convolutional networks.
 *
 * File: include/coxcnn/image.hpp
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

#include <optional>
#include <vector>

#include "coxcnn/spp.hpp"

namespace coxcnn {

/// Single- or multi-channel floating-point image with a region-of-interest
/// bounding box. Pixels are row-major within a channel, channels outermost
/// (index (c*height + y)*width + x).
struct Image2D {
    int width = 0;
    int height = 0;
    int channels = 1;
    std::vector<float> pixels;
    BoundingBox bbox;

    std::size_t pixel_index(int c, int y, int x) const {
        return (static_cast<std::size_t>(c) * height + static_cast<std::size_t>(y)) * width + x;
    }
    float at(int c, int y, int x) const { return pixels[pixel_index(c, y, x)]; }
    float& at(int c, int y, int x) { return pixels[pixel_index(c, y, x)]; }

    bool valid() const {
        return width > 0 && height > 0 && channels > 0 &&
               pixels.size() == static_cast<std::size_t>(width) * height * channels &&
               bbox.valid_for(width, height);
    }

    friend bool operator==(const Image2D&, const Image2D&) = default;
};

/// Per-image standardization: zero mean, unit variance over all pixels of the
/// image (moments accumulated in double). Constant images come back with the
/// mean removed and no variance scaling.
Image2D standardized(const Image2D& image);

/// Tight bounding box of pixels strictly above `threshold` across all
/// channels, or nullopt when no pixel qualifies.
std::optional<BoundingBox> tight_bbox(const Image2D& image, float threshold = 0.0f);

} // namespace coxcnn
