/*
 * coxcnn - imaging-based survival analysis with convolutional networks.
 *
 * File: include/coxcnn/pipeline.hpp
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
#ifndef COXCNN_PIPELINE_HPP
#define COXCNN_PIPELINE_HPP

/// Shared experiment plumbing: the layer-by-layer gradient-check suite, the
/// simulated-dataset builder, and trainer closures that plug the CNN and the
/// linear CPH baseline into eval::cross_validate. The CLI and the acceptance
/// harness both drive these entry points, so a result reported by one is
/// reproducible through the other.

#include <cstdint>
#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include "coxcnn/augment.hpp"
#include "coxcnn/baseline.hpp"
#include "coxcnn/eval.hpp"
#include "coxcnn/model.hpp"
#include "coxcnn/simdata.hpp"

namespace coxcnn {

// ---------------------------------------------------------------------------
// Gradient-check suite
// ---------------------------------------------------------------------------

struct GradcheckSuiteOptions {
    int seeds = 20;               ///< independent scenario draws per block.
    std::uint64_t base_seed = 1;  ///< root of the per-seed derivation.
    bool check_double = true;     ///< run the 64-bit engine (tolerance 1e-5).
    bool check_float = true;      ///< run the 32-bit engine (tolerance 1e-2).
    /// Harness self-test: negate one analytic gradient (the conv bias) so a
    /// correct harness must report a failure.
    bool inject_sign_flip = false;

    void validate() const;
};

/// One parameter block aggregated over every seed of one precision.
struct GradcheckBlockOutcome {
    std::string name;      ///< e.g. "conv2d/weight".
    std::string precision; ///< "f64" or "f32".
    double tolerance = 0.0;
    double max_rel_error = 0.0;
    long long checks = 0;
    long long skipped = 0; ///< coordinates discarded for crossing a kink.
    bool passed = false;   ///< checks > 0 and max_rel_error < tolerance.
};

struct GradcheckSuiteReport {
    std::vector<GradcheckBlockOutcome> blocks;
    int seeds = 0;
    bool passed = false; ///< every block passed.
    double seconds = 0.0;
};

/// Central finite-difference checks for every layer (conv2d, dense, ReLU,
/// SPP, the fixed-mask dropout path) and the Cox loss, on `seeds` random
/// scenarios per block and per precision, plus an end-to-end tiny model at
/// 64-bit (where the step is small enough to keep branch patterns intact).
GradcheckSuiteReport run_gradcheck_suite(const GradcheckSuiteOptions& options = {});

/// Fixed-width per-block listing plus a one-line verdict.
std::string render_gradcheck_report(const GradcheckSuiteReport& report);

// ---------------------------------------------------------------------------
// Simulated dataset
// ---------------------------------------------------------------------------

struct SimulateOptions {
    int n = 200;
    /// Synthetic digit classes, used when no IDX paths are given.
    std::vector<SynthClass> classes{SynthClass::Ring, SynthClass::Spiral};
    /// When both are set, images come from these IDX files instead (filtered
    /// to keep_labels, truncated to the first n).
    std::filesystem::path idx_images;
    std::filesystem::path idx_labels;
    std::set<int> keep_labels{0, 6};
    double lambda0 = 5.0;
    double non_censored_fraction = 0.5;
    std::uint64_t seed = 0;

    void validate() const;
};

/// Builds the full simulated cohort: images (synthetic or IDX), the shared
/// weight mask, deterministic event times, then random censoring. All
/// randomness derives from options.seed. Throws std::invalid_argument on bad
/// options and FormatError on unreadable IDX input.
Dataset simulate_dataset(const SimulateOptions& options);

struct DatasetSummary {
    int n = 0;
    int events = 0;
    double time_min = 0.0;
    double time_max = 0.0;
    double risk_min = 0.0;
    double risk_max = 0.0;
};

DatasetSummary summarize_dataset(const Dataset& dataset);
std::string render_dataset_summary(const DatasetSummary& summary);

// ---------------------------------------------------------------------------
// Cross-validation trainers
// ---------------------------------------------------------------------------

struct CnnTrainerOptions {
    CoxCnnConfig config;
    /// Expand each training fold with shifted/jittered copies before
    /// training; held-out folds are never augmented.
    bool augment = false;
    AugmentConfig augment_config;
};

/// Trainer closure for eval::cross_validate: builds and trains a fresh CNN
/// on the training fold (seeded from the fold's derived seed) and scores the
/// held-out fold with predict_risk. Thread-safe: each call owns its state.
Trainer make_cnn_trainer(const CnnTrainerOptions& options = {});

/// Trainer closure fitting the PCA + Newton CPH baseline on the training
/// fold (PCA refit per fold, so no leakage) and scoring with baseline_risk.
Trainer make_baseline_trainer(const BaselineConfig& config = {});

} // namespace coxcnn

#endif // COXCNN_PIPELINE_HPP
