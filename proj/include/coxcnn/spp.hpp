/*
 * coxcnn - imaging-based survival analysis with convolutional networks.
 *
 * File: include/coxcnn/spp.hpp
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
#include <stdexcept>
#include <vector>

#include "coxcnn/tensor.hpp"

namespace coxcnn {

/// Axis-aligned region in pixel units, top-left anchored.
struct BoundingBox {
    int x0 = 0;
    int y0 = 0;
    int width = 0;
    int height = 0;

    bool valid_for(int image_width, int image_height) const {
        return x0 >= 0 && y0 >= 0 && width >= 1 && height >= 1 &&
               x0 + width <= image_width && y0 + height <= image_height;
    }

    friend bool operator==(const BoundingBox&, const BoundingBox&) = default;
};

/// Output grid of the spatial pyramid pooling layer (single level).
struct SppConfig {
    int out_h = 8;
    int out_w = 8;

    void validate() const {
        if (out_h < 1 || out_w < 1) throw std::invalid_argument("spp output dims must be >= 1");
    }
};

/// Bin b along a length-L axis spans [floor(b*L/out), ceil((b+1)*L/out)).
/// Bins overlap or repeat when L < out; every bin is nonempty.
inline std::pair<int, int> spp_bin_span(int b, int len, int out) {
    const int lo = static_cast<int>((static_cast<std::int64_t>(b) * len) / out);
    const std::int64_t num = static_cast<std::int64_t>(b + 1) * len;
    const int hi = static_cast<int>((num + out - 1) / out); // ceil
    return {lo, hi};
}

namespace nn {

/// Adaptive max pooling of the bounding-box crop of a [C,H,W] feature map to
/// a fixed [C,out_h,out_w] grid. Argmax positions (linear indices into the
/// input) are recorded for the backward pass; ties resolve to the lowest
/// linear index.
template <typename T>
TensorT<T> spp_forward(const TensorT<T>& features, const BoundingBox& bbox, const SppConfig& cfg,
                       std::vector<std::int64_t>* argmax_indices) {
    cfg.validate();
    if (features.rank() != 3)
        throw std::invalid_argument("spp_forward: expected rank 3 [C,H,W]");
    const int c = features.dim(0), h = features.dim(1), w = features.dim(2);
    if (!bbox.valid_for(w, h)) throw std::invalid_argument("spp_forward: invalid bounding box");

    TensorT<T> out({c, cfg.out_h, cfg.out_w});
    if (argmax_indices) argmax_indices->assign(out.values.size(), -1);

    std::size_t o = 0;
    for (int ch = 0; ch < c; ++ch) {
        const T* plane = features.data() + static_cast<std::int64_t>(ch) * h * w;
        for (int by = 0; by < cfg.out_h; ++by) {
            const auto [y_lo, y_hi] = spp_bin_span(by, bbox.height, cfg.out_h);
            for (int bx = 0; bx < cfg.out_w; ++bx, ++o) {
                const auto [x_lo, x_hi] = spp_bin_span(bx, bbox.width, cfg.out_w);
                T best{};
                std::int64_t best_idx = -1;
                for (int y = y_lo; y < y_hi; ++y) {
                    const std::int64_t row = static_cast<std::int64_t>(bbox.y0 + y) * w + bbox.x0;
                    for (int x = x_lo; x < x_hi; ++x) {
                        const std::int64_t idx = row + x;
                        const T v = plane[idx];
                        if (best_idx < 0 || v > best) {
                            best = v;
                            best_idx = static_cast<std::int64_t>(ch) * h * w + idx;
                        }
                    }
                }
                out.values[o] = best;
                if (argmax_indices) (*argmax_indices)[o] = best_idx;
            }
        }
    }
    return out;
}

/// Routes each output bin's gradient to its argmax pixel; positions selected
/// by k bins accumulate k contributions.
template <typename T>
TensorT<T> spp_backward(const std::vector<std::int64_t>& argmax_indices,
                        const TensorT<T>& grad_output, int c, int h, int w) {
    if (argmax_indices.size() != grad_output.values.size())
        throw std::invalid_argument("spp_backward: argmax/grad size mismatch");
    TensorT<T> g({c, h, w});
    for (std::size_t o = 0; o < argmax_indices.size(); ++o) {
        const std::int64_t idx = argmax_indices[o];
        if (idx < 0 || idx >= g.size())
            throw std::invalid_argument("spp_backward: argmax index out of range");
        g.values[static_cast<std::size_t>(idx)] += grad_output.values[o];
    }
    return g;
}

} // namespace nn
} // namespace coxcnn
