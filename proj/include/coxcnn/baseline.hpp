/*
 * coxcnn - imaging-based survival analysis with convolutional networks.
 *
 * File: include/coxcnn/baseline.hpp
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
#include <span>
#include <string>
#include <vector>

#include "coxcnn/cox.hpp"
#include "coxcnn/image.hpp"
#include "coxcnn/simdata.hpp"

namespace coxcnn {

/// Row-major n x d matrix of per-sample feature vectors.
struct FeatureMatrix {
    int n = 0;
    int d = 0;
    std::vector<double> values;

    FeatureMatrix() = default;
    FeatureMatrix(int rows, int cols)
        : n(rows), d(cols), values(static_cast<std::size_t>(rows) * cols, 0.0) {}

    double& at(int i, int j) { return values[static_cast<std::size_t>(i) * d + j]; }
    double at(int i, int j) const { return values[static_cast<std::size_t>(i) * d + j]; }
    std::span<const double> row(int i) const {
        return {values.data() + static_cast<std::size_t>(i) * d, static_cast<std::size_t>(d)};
    }
};

/// Bumped whenever the hand-crafted feature recipe changes; stored in saved
/// baseline models so stale models are rejected instead of silently misread.
inline constexpr int kBaselineFeatureVersion = 1;

/// 87 intensity/shape features per image: 6 moments (mean, variance,
/// skewness, kurtosis, min, max), a 16-bin normalized intensity histogram
/// over [0,1], the bounding-box area fraction, and an 8x8 average-pooled
/// crop of the bounding box (channel-averaged).
std::vector<double> extract_features(const Image2D& image);
FeatureMatrix extract_features(std::span<const SimulatedSample> samples);

// ---------------------------------------------------------------------------
// PCA
// ---------------------------------------------------------------------------

struct PcaModel {
    std::vector<double> mean;        // length d
    std::vector<double> components;  // row-major k x d, orthonormal rows
    std::vector<double> eigenvalues; // length k, descending
    int k = 0;
    int d = 0;
};

/// Principal components of X via the covariance spectrum (population
/// covariance, divisor n). Components are sorted by descending eigenvalue;
/// each row's sign is fixed so its largest-magnitude coordinate is positive.
/// Requires 1 <= k <= min(n, d).
PcaModel pca_fit(const FeatureMatrix& x, int k);

std::vector<double> pca_apply(const PcaModel& pca, std::span<const double> x);
FeatureMatrix pca_apply(const PcaModel& pca, const FeatureMatrix& x);

// ---------------------------------------------------------------------------
// Column standardization
// ---------------------------------------------------------------------------

struct Standardizer {
    std::vector<double> mean;  // length d
    std::vector<double> scale; // length d; constant columns keep scale 1
};

Standardizer standardizer_fit(const FeatureMatrix& x);
FeatureMatrix standardizer_apply(const Standardizer& s, const FeatureMatrix& x);
std::vector<double> standardizer_apply(const Standardizer& s, std::span<const double> x);

// ---------------------------------------------------------------------------
// Linear Cox proportional hazards (Newton-Raphson)
// ---------------------------------------------------------------------------

struct CphOptions {
    int max_iter = 100;
    double tolerance = 1e-8; // infinity norm of the gradient
    double ridge = 1e-6;     // added to the Hessian diagonal on a failed solve
};

struct CphFit {
    std::vector<double> beta;
    bool converged = false;
    int iterations = 0;
    double final_loss = 0.0;
    std::vector<double> loss_history; // loss after each accepted step; monotone
    bool used_ridge = false;
};

/// Newton-Raphson on the Cox negative log partial likelihood with linear
/// scores eta = X beta (inclusive risk sets, tied times share denominators).
/// X must already be column-standardized: the quadratic model, the step
/// halving, and the ridge fallback all assume comparable column scales.
/// Steps are halved until the loss decreases, so the recorded loss history is
/// strictly non-increasing. A failed or non-descending solve is retried once
/// with a ridge on the Hessian; if that also fails, IllConditionedError.
CphFit cph_fit(const FeatureMatrix& x, std::span<const SurvivalRecord> records,
               const CphOptions& options = {});

double cph_predict(std::span<const double> beta, std::span<const double> x);

// ---------------------------------------------------------------------------
// End-to-end baseline pipeline
// ---------------------------------------------------------------------------

struct BaselineConfig {
    int pca_components = 8; // clamped to min(n, feature dim) at fit time
    CphOptions cph;
};

/// Everything needed to score a new image: feature recipe version, the PCA
/// basis, the per-column standardization, and the fitted coefficients.
struct BaselineModel {
    int feature_version = kBaselineFeatureVersion;
    PcaModel pca;
    Standardizer standardizer;
    std::vector<double> beta;
    CphFit fit; // convergence report of the final fit
};

BaselineModel fit_baseline(std::span<const SimulatedSample> samples,
                           const BaselineConfig& config = {});
double baseline_risk(const BaselineModel& model, const Image2D& image);

/// JSON round-trip (canonical: sorted keys, compact).
std::string baseline_to_json(const BaselineModel& model);
BaselineModel baseline_from_json(const std::string& text);
void save_baseline(const BaselineModel& model, const std::filesystem::path& path);
BaselineModel load_baseline(const std::filesystem::path& path);

} // namespace coxcnn
