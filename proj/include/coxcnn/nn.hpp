/*
 * coxcnn - imaging-based survival analysis with convolutional networks.
 *
 * File: include/coxcnn/nn.hpp
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

#include <Eigen/Core>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "coxcnn/errors.hpp"
#include "coxcnn/rng.hpp"
#include "coxcnn/tensor.hpp"

namespace coxcnn::nn {

template <typename T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;
template <typename T>
using RowMajorMap = Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
template <typename T>
using ConstRowMajorMap =
    Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

// ---------------------------------------------------------------------------
// Layer parameters
// ---------------------------------------------------------------------------

/// Convolution parameters. weight is [out_ch, in_ch, kh, kw], bias [out_ch].
template <typename T>
struct Conv2dParams {
    TensorT<T> weight;
    TensorT<T> bias;

    int out_ch() const { return weight.dim(0); }
    int in_ch() const { return weight.dim(1); }
    int kh() const { return weight.dim(2); }
    int kw() const { return weight.dim(3); }

    void validate() const {
        if (weight.rank() != 4) throw std::invalid_argument("conv2d weight must be rank 4");
        if (bias.rank() != 1 || bias.dim(0) != out_ch())
            throw std::invalid_argument("conv2d bias length must equal out_ch");
        if (kh() % 2 == 0 || kw() % 2 == 0)
            throw std::invalid_argument("conv2d requires odd kernel sizes (same padding)");
    }
};

/// Dense parameters. weight is [out_dim, in_dim], bias [out_dim].
template <typename T>
struct DenseParams {
    TensorT<T> weight;
    TensorT<T> bias;

    int out_dim() const { return weight.dim(0); }
    int in_dim() const { return weight.dim(1); }

    void validate() const {
        if (weight.rank() != 2) throw std::invalid_argument("dense weight must be rank 2");
        if (bias.rank() != 1 || bias.dim(0) != out_dim())
            throw std::invalid_argument("dense bias length must equal out_dim");
    }
};

/// He initialization, scale sqrt(2 / fan_in); biases start at zero.
template <typename T>
Conv2dParams<T> make_conv2d(int out_ch, int in_ch, int kh, int kw, Rng& rng) {
    Conv2dParams<T> p;
    p.weight = TensorT<T>({out_ch, in_ch, kh, kw});
    p.bias = TensorT<T>({out_ch});
    const double scale = std::sqrt(2.0 / (static_cast<double>(in_ch) * kh * kw));
    for (auto& w : p.weight.values) w = static_cast<T>(rng.normal(0.0, scale));
    p.validate();
    return p;
}

template <typename T>
DenseParams<T> make_dense(int out_dim, int in_dim, Rng& rng) {
    DenseParams<T> p;
    p.weight = TensorT<T>({out_dim, in_dim});
    p.bias = TensorT<T>({out_dim});
    const double scale = std::sqrt(2.0 / static_cast<double>(in_dim));
    for (auto& w : p.weight.values) w = static_cast<T>(rng.normal(0.0, scale));
    p.validate();
    return p;
}

// ---------------------------------------------------------------------------
// Convolution (stride 1, zero "same" padding, odd kernels)
// ---------------------------------------------------------------------------

namespace detail {

template <typename T>
struct BatchView {
    const TensorT<T>* t;
    int n, c, h, w;
    bool batched;
};

template <typename T>
inline BatchView<T> as_batch(const TensorT<T>& t, const char* what) {
    if (t.rank() == 3) return {&t, 1, t.dim(0), t.dim(1), t.dim(2), false};
    if (t.rank() == 4) return {&t, t.dim(0), t.dim(1), t.dim(2), t.dim(3), true};
    throw std::invalid_argument(std::string(what) + ": expected rank 3 [C,H,W] or rank 4 [N,C,H,W]");
}

} // namespace detail

/// Patch matrix for the convolution GEMM: [in_ch*kh*kw, N*H*W] column-major,
/// column index (n*H + y)*W + x, row index (c*kh + dy)*kw + dx. Out-of-bounds
/// reads are zero.
template <typename T>
void im2col(const T* in, int n, int c, int h, int w, int kh, int kw, Mat<T>& cols) {
    const int ph = (kh - 1) / 2;
    const int pw = (kw - 1) / 2;
    const Eigen::Index k = static_cast<Eigen::Index>(c) * kh * kw;
    cols.resize(k, static_cast<Eigen::Index>(n) * h * w);
    for (int img = 0; img < n; ++img) {
        const T* base = in + static_cast<std::int64_t>(img) * c * h * w;
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                T* col = cols.data() + (static_cast<std::int64_t>(img) * h * w + static_cast<std::int64_t>(y) * w + x) * k;
                std::int64_t r = 0;
                for (int ch = 0; ch < c; ++ch) {
                    const T* plane = base + static_cast<std::int64_t>(ch) * h * w;
                    for (int dy = 0; dy < kh; ++dy) {
                        const int sy = y + dy - ph;
                        if (sy < 0 || sy >= h) {
                            for (int dx = 0; dx < kw; ++dx) col[r++] = T(0);
                            continue;
                        }
                        const T* row = plane + static_cast<std::int64_t>(sy) * w;
                        for (int dx = 0; dx < kw; ++dx) {
                            const int sx = x + dx - pw;
                            col[r++] = (sx < 0 || sx >= w) ? T(0) : row[sx];
                        }
                    }
                }
            }
        }
    }
}

/// Adjoint of im2col: scatter-add patch-gradient columns back onto the image grid.
template <typename T>
void col2im(const Mat<T>& cols, int n, int c, int h, int w, int kh, int kw, T* out) {
    const int ph = (kh - 1) / 2;
    const int pw = (kw - 1) / 2;
    const std::int64_t total = static_cast<std::int64_t>(n) * c * h * w;
    std::fill(out, out + total, T(0));
    const Eigen::Index k = static_cast<Eigen::Index>(c) * kh * kw;
    for (int img = 0; img < n; ++img) {
        T* base = out + static_cast<std::int64_t>(img) * c * h * w;
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                const T* col = cols.data() + (static_cast<std::int64_t>(img) * h * w + static_cast<std::int64_t>(y) * w + x) * k;
                std::int64_t r = 0;
                for (int ch = 0; ch < c; ++ch) {
                    T* plane = base + static_cast<std::int64_t>(ch) * h * w;
                    for (int dy = 0; dy < kh; ++dy) {
                        const int sy = y + dy - ph;
                        if (sy < 0 || sy >= h) {
                            r += kw;
                            continue;
                        }
                        T* row = plane + static_cast<std::int64_t>(sy) * w;
                        for (int dx = 0; dx < kw; ++dx, ++r) {
                            const int sx = x + dx - pw;
                            if (sx >= 0 && sx < w) row[sx] += col[r];
                        }
                    }
                }
            }
        }
    }
}

/// Optional forward-pass cache so backward can reuse the patch matrix.
template <typename T>
struct Conv2dCache {
    Mat<T> cols;
};

/// 2D convolution, stride 1, zero "same" padding so spatial dims are
/// preserved. Accepts [C,H,W] or [N,C,H,W]; returns the same rank with C
/// replaced by out_ch.
template <typename T>
TensorT<T> conv2d_forward(const TensorT<T>& input, const Conv2dParams<T>& params,
                          Conv2dCache<T>* cache = nullptr) {
    params.validate();
    const auto v = detail::as_batch(input, "conv2d_forward");
    if (v.c != params.in_ch())
        throw std::invalid_argument("conv2d_forward: input channel count does not match in_ch");

    const int oc = params.out_ch();
    const Eigen::Index k = static_cast<Eigen::Index>(v.c) * params.kh() * params.kw();
    Mat<T> local;
    Mat<T>& cols = cache ? cache->cols : local;
    im2col(input.data(), v.n, v.c, v.h, v.w, params.kh(), params.kw(), cols);

    ConstRowMajorMap<T> wmat(params.weight.data(), oc, k);
    Mat<T> out_mat(oc, cols.cols());
    out_mat.noalias() = wmat * cols;

    TensorT<T> out(v.batched ? std::vector<int>{v.n, oc, v.h, v.w}
                             : std::vector<int>{oc, v.h, v.w});
    const std::int64_t hw = static_cast<std::int64_t>(v.h) * v.w;
    for (int img = 0; img < v.n; ++img) {
        for (int o = 0; o < oc; ++o) {
            T* dst = out.data() + (static_cast<std::int64_t>(img) * oc + o) * hw;
            const T b = params.bias.values[static_cast<std::size_t>(o)];
            for (std::int64_t i = 0; i < hw; ++i)
                dst[i] = out_mat(o, static_cast<Eigen::Index>(img * hw + i)) + b;
        }
    }
    return out;
}

template <typename T>
struct Conv2dGrads {
    TensorT<T> input;
    TensorT<T> weight;
    TensorT<T> bias;
};

/// Reverse-mode of conv2d_forward. grad_output must match the forward output
/// shape. When `cache` is null the patch matrix is recomputed from `input`.
template <typename T>
Conv2dGrads<T> conv2d_backward(const TensorT<T>& input, const Conv2dParams<T>& params,
                               const TensorT<T>& grad_output, const Conv2dCache<T>* cache = nullptr) {
    params.validate();
    const auto v = detail::as_batch(input, "conv2d_backward");
    if (v.c != params.in_ch())
        throw std::invalid_argument("conv2d_backward: input channel count does not match in_ch");

    const int oc = params.out_ch();
    const std::vector<int> expect = v.batched ? std::vector<int>{v.n, oc, v.h, v.w}
                                              : std::vector<int>{oc, v.h, v.w};
    require_shape(grad_output, expect, "conv2d_backward grad_output");

    const Eigen::Index k = static_cast<Eigen::Index>(v.c) * params.kh() * params.kw();
    const std::int64_t hw = static_cast<std::int64_t>(v.h) * v.w;

    Mat<T> local;
    const Mat<T>* cols = nullptr;
    if (cache) {
        cols = &cache->cols;
    } else {
        im2col(input.data(), v.n, v.c, v.h, v.w, params.kh(), params.kw(), local);
        cols = &local;
    }

    // Gather grad_output into the GEMM layout [oc, N*H*W].
    Mat<T> gmat(oc, static_cast<Eigen::Index>(v.n) * hw);
    for (int img = 0; img < v.n; ++img) {
        for (int o = 0; o < oc; ++o) {
            const T* src = grad_output.data() + (static_cast<std::int64_t>(img) * oc + o) * hw;
            for (std::int64_t i = 0; i < hw; ++i)
                gmat(o, static_cast<Eigen::Index>(img * hw + i)) = src[i];
        }
    }

    Conv2dGrads<T> g;
    g.weight = TensorT<T>(params.weight.shape);
    g.bias = TensorT<T>(params.bias.shape);
    g.input = TensorT<T>(input.shape);

    RowMajorMap<T> gw(g.weight.data(), oc, k);
    gw.noalias() = gmat * cols->transpose();
    // Fixed-order scalar reduction: Eigen's vectorized redux peels to the
    // first aligned element, making the summation order (and the rounding)
    // depend on the buffer's heap address. Bias sums are cheap; keeping them
    // scalar keeps retraining bit-identical across process layouts.
    for (int o = 0; o < oc; ++o) {
        T acc = T(0);
        for (Eigen::Index i = 0; i < gmat.cols(); ++i) acc += gmat(o, i);
        g.bias.values[static_cast<std::size_t>(o)] = acc;
    }

    ConstRowMajorMap<T> wmat(params.weight.data(), oc, k);
    Mat<T> cols_grad(k, gmat.cols());
    cols_grad.noalias() = wmat.transpose() * gmat;
    col2im(cols_grad, v.n, v.c, v.h, v.w, params.kh(), params.kw(), g.input.data());
    return g;
}

// ---------------------------------------------------------------------------
// Dense
// ---------------------------------------------------------------------------

/// Dense layer: out = W x + b. Accepts [d] or [N,d]; returns [m] or [N,m].
template <typename T>
TensorT<T> dense_forward(const TensorT<T>& input, const DenseParams<T>& params) {
    params.validate();
    const bool batched = input.rank() == 2;
    if (!batched && input.rank() != 1)
        throw std::invalid_argument("dense_forward: expected rank 1 [d] or rank 2 [N,d]");
    const int n = batched ? input.dim(0) : 1;
    const int d = batched ? input.dim(1) : input.dim(0);
    if (d != params.in_dim()) throw std::invalid_argument("dense_forward: dimension mismatch");

    const int m = params.out_dim();
    ConstRowMajorMap<T> x(input.data(), n, d);
    ConstRowMajorMap<T> w(params.weight.data(), m, d);
    TensorT<T> out(batched ? std::vector<int>{n, m} : std::vector<int>{m});
    RowMajorMap<T> y(out.data(), n, m);
    y.noalias() = x * w.transpose();
    Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>> b(params.bias.data(), m);
    y.rowwise() += b.transpose();
    return out;
}

template <typename T>
struct DenseGrads {
    TensorT<T> input;
    TensorT<T> weight;
    TensorT<T> bias;
};

template <typename T>
DenseGrads<T> dense_backward(const TensorT<T>& input, const DenseParams<T>& params,
                             const TensorT<T>& grad_output) {
    params.validate();
    const bool batched = input.rank() == 2;
    const int n = batched ? input.dim(0) : 1;
    const int d = batched ? input.dim(1) : input.dim(0);
    if (d != params.in_dim()) throw std::invalid_argument("dense_backward: dimension mismatch");
    const int m = params.out_dim();
    require_shape(grad_output, batched ? std::vector<int>{n, m} : std::vector<int>{m},
                  "dense_backward grad_output");

    ConstRowMajorMap<T> x(input.data(), n, d);
    ConstRowMajorMap<T> w(params.weight.data(), m, d);
    ConstRowMajorMap<T> gy(grad_output.data(), n, m);

    DenseGrads<T> g;
    g.input = TensorT<T>(input.shape);
    g.weight = TensorT<T>(params.weight.shape);
    g.bias = TensorT<T>(params.bias.shape);
    RowMajorMap<T>(g.input.data(), n, d).noalias() = gy * w;
    RowMajorMap<T>(g.weight.data(), m, d).noalias() = gy.transpose() * x;
    // Fixed-order scalar reduction so the bias gradient does not depend on
    // the heap address of grad_output (see conv2d_backward). g.bias is
    // zero-initialized by TensorT.
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < m; ++j) g.bias.values[static_cast<std::size_t>(j)] += gy(i, j);
    return g;
}

// ---------------------------------------------------------------------------
// ReLU
// ---------------------------------------------------------------------------

/// Elementwise max(0, x). Subgradient at exactly zero is 0.
template <typename T>
TensorT<T> relu_forward(const TensorT<T>& input) {
    TensorT<T> out(input.shape);
    for (std::size_t i = 0; i < input.values.size(); ++i)
        out.values[i] = input.values[i] > T(0) ? input.values[i] : T(0);
    return out;
}

template <typename T>
TensorT<T> relu_backward(const TensorT<T>& input, const TensorT<T>& grad_output) {
    require_shape(grad_output, input.shape, "relu_backward grad_output");
    TensorT<T> g(input.shape);
    for (std::size_t i = 0; i < input.values.size(); ++i)
        g.values[i] = input.values[i] > T(0) ? grad_output.values[i] : T(0);
    return g;
}

// ---------------------------------------------------------------------------
// Dropout (inverted)
// ---------------------------------------------------------------------------

template <typename T>
struct DropoutResult {
    TensorT<T> output;
    TensorT<T> mask; // per-element scale: 0 or 1/(1-rate); all ones in inference mode
};

/// Inverted dropout: in training mode each element is zeroed with probability
/// `rate` and survivors are scaled by 1/(1-rate); inference is the identity.
template <typename T>
DropoutResult<T> dropout_forward(const TensorT<T>& input, double rate, Rng& rng, bool training) {
    if (!(rate >= 0.0 && rate < 1.0))
        throw std::invalid_argument("dropout rate must lie in [0, 1)");
    DropoutResult<T> r;
    r.mask = TensorT<T>(input.shape);
    r.output = TensorT<T>(input.shape);
    if (!training || rate == 0.0) {
        std::fill(r.mask.values.begin(), r.mask.values.end(), T(1));
        r.output.values = input.values;
        return r;
    }
    const T keep_scale = static_cast<T>(1.0 / (1.0 - rate));
    for (std::size_t i = 0; i < input.values.size(); ++i) {
        const bool drop = rng.uniform() < rate;
        r.mask.values[i] = drop ? T(0) : keep_scale;
        r.output.values[i] = input.values[i] * r.mask.values[i];
    }
    return r;
}

/// Backward applies the same mask and scale.
template <typename T>
TensorT<T> dropout_backward(const TensorT<T>& mask, const TensorT<T>& grad_output) {
    require_shape(grad_output, mask.shape, "dropout_backward grad_output");
    TensorT<T> g(mask.shape);
    for (std::size_t i = 0; i < mask.values.size(); ++i)
        g.values[i] = grad_output.values[i] * mask.values[i];
    return g;
}

// ---------------------------------------------------------------------------
// SGD with classical momentum
// ---------------------------------------------------------------------------

struct SgdConfig {
    double learning_rate = 1e-3;
    double momentum = 0.9;
    int epochs = 100;
    int batch_size = 64;
    std::uint64_t seed = 0;

    void validate() const {
        // 0 is allowed as a degenerate no-op rate; the CLI warns about it.
        if (!(learning_rate >= 0.0)) throw std::invalid_argument("learning_rate must be >= 0");
        if (!(momentum >= 0.0 && momentum < 1.0))
            throw std::invalid_argument("momentum must lie in [0, 1)");
        if (epochs <= 0) throw std::invalid_argument("epochs must be positive");
        if (batch_size < 2)
            throw std::invalid_argument("batch_size must be >= 2 (Cox loss needs within-batch risk sets)");
    }

    friend bool operator==(const SgdConfig&, const SgdConfig&) = default;
};

/// v <- momentum*v - lr*g; p <- p + v. Momentum 0 degenerates to vanilla SGD.
/// One velocity buffer per parameter tensor, owned here.
template <typename T>
class SgdOptimizer {
public:
    SgdOptimizer(double learning_rate, double momentum)
        : lr_(learning_rate), momentum_(momentum) {}

    void step(const std::vector<TensorT<T>*>& params) {
        if (velocity_.empty()) {
            velocity_.reserve(params.size());
            for (const auto* p : params) velocity_.emplace_back(p->values.size(), T(0));
        }
        if (velocity_.size() != params.size())
            throw std::invalid_argument("sgd_step: parameter list changed between steps");
        for (std::size_t b = 0; b < params.size(); ++b) {
            TensorT<T>& p = *params[b];
            if (!p.tracked()) throw std::invalid_argument("sgd_step: parameter has no gradient");
            if (!p.grad_finite())
                throw TrainingDivergedError("sgd_step: non-finite gradient");
            std::vector<T>& v = velocity_[b];
            for (std::size_t i = 0; i < p.values.size(); ++i) {
                v[i] = static_cast<T>(momentum_ * v[i] - lr_ * p.grad[i]);
                p.values[i] += v[i];
            }
        }
    }

    double learning_rate() const { return lr_; }
    void set_learning_rate(double lr) { lr_ = lr; }

private:
    double lr_;
    double momentum_;
    std::vector<std::vector<T>> velocity_;
};

} // namespace coxcnn::nn
