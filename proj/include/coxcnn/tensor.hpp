/*
 * coxcnn - imaging-based survival analysis with convolutional networks.
 *
 * File: include/coxcnn/tensor.hpp
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

#include <cmath>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace coxcnn::nn {

inline std::int64_t element_count(const std::vector<int>& shape) {
    std::int64_t n = 1;
    for (int d : shape) {
        if (d <= 0) throw std::invalid_argument("tensor dimension must be positive");
        n *= d;
    }
    return n;
}

/// Dense n-dimensional value/gradient pair, row-major. The engine is
/// templated on the scalar type: float is the storage precision for
/// training, double is the engine-wide test mode used by gradient checks.
template <typename T>
struct TensorT {
    std::vector<int> shape;
    std::vector<T> values;
    std::vector<T> grad; // empty unless tracked; same length as values otherwise

    TensorT() = default;
    explicit TensorT(std::vector<int> s)
        : shape(std::move(s)), values(static_cast<std::size_t>(element_count(shape)), T(0)) {}

    static TensorT zeros(std::vector<int> s) { return TensorT(std::move(s)); }

    std::int64_t size() const { return static_cast<std::int64_t>(values.size()); }

    int dim(int i) const { return shape.at(static_cast<std::size_t>(i)); }
    int rank() const { return static_cast<int>(shape.size()); }

    T* data() { return values.data(); }
    const T* data() const { return values.data(); }

    bool tracked() const { return !grad.empty(); }

    void track() { grad.assign(values.size(), T(0)); }

    void zero_grad() {
        if (tracked()) grad.assign(values.size(), T(0));
    }

    bool values_finite() const {
        for (T v : values)
            if (!std::isfinite(static_cast<double>(v))) return false;
        return true;
    }

    bool grad_finite() const {
        for (T v : grad)
            if (!std::isfinite(static_cast<double>(v))) return false;
        return true;
    }
};

using Tensor = TensorT<float>;

template <typename T>
inline void require_shape(const TensorT<T>& t, const std::vector<int>& shape, const char* what) {
    if (t.shape != shape) throw std::invalid_argument(std::string(what) + ": shape mismatch");
}

} // namespace coxcnn::nn
