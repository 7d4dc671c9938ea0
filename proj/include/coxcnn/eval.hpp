/*
 * coxcnn - imaging-based survival analysis with convolutional networks.
 *
 * File: include/coxcnn/eval.hpp
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
#ifndef COXCNN_EVAL_HPP
#define COXCNN_EVAL_HPP

/// Harrell's concordance index, stratified k-fold planning, and
/// cross-validation orchestration.
///
/// The c-index follows Harrell's original convention: a pair (i, j) is
/// comparable iff T_i < T_j (strictly) and sample i experienced the event;
/// it is concordant iff risk_i > risk_j; tied risks earn half credit; tied
/// event times contribute no pair at all. Implementations vary on these
/// details, so they are fixed here and enforced by tests against an
/// independent brute-force enumeration.

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "coxcnn/cox.hpp"
#include "coxcnn/simdata.hpp"

namespace coxcnn {

// ---------------------------------------------------------------------------
// Concordance index
// ---------------------------------------------------------------------------

/// Pair-level accounting for one concordance evaluation. Invariants:
/// concordant + discordant + tied_risk == comparable_pairs and
/// c_index == (concordant + 0.5 * tied_risk) / comparable_pairs.
struct CIndexResult {
    double c_index = 0.0;
    long long concordant = 0;
    long long discordant = 0;
    long long tied_risk = 0;
    long long comparable_pairs = 0;
};

/// Harrell's concordance index of `risks` against observed outcomes.
///
/// Higher risk must pair with earlier event time for concordance. Throws
/// std::invalid_argument on length mismatch or non-finite inputs and
/// NoComparablePairsError when no pair is comparable (e.g. all samples
/// censored, or all event times tied).
CIndexResult c_index(std::span<const double> risks, std::span<const SurvivalRecord> records);

// ---------------------------------------------------------------------------
// Fold planning
// ---------------------------------------------------------------------------

/// A deterministic partition of n samples into k folds.
struct FoldPlan {
    int k = 0;
    std::vector<int> assignments; ///< sample index -> fold id in [0, k).
    std::uint64_t seed = 0;
    bool stratified = true;
};

/// Plans a seeded k-fold split. When `stratified` is set, samples are dealt
/// round-robin within each event stratum so per-fold event counts differ by
/// at most one (and fold sizes still differ by at most one overall); this is
/// the default regime because low event rates make unstratified folds risky.
/// Requires 2 <= k <= n; throws std::invalid_argument otherwise.
FoldPlan make_folds(std::span<const SurvivalRecord> records, int k, bool stratified,
                    std::uint64_t seed);

// ---------------------------------------------------------------------------
// Cross-validation
// ---------------------------------------------------------------------------

/// One fold's training/held-out split handed to a trainer. Pointers refer
/// into the caller's sample array; `seed` is derived from the plan seed so
/// every fold trains with an independent, reproducible stream.
struct FoldView {
    std::vector<const SimulatedSample*> train;
    std::vector<const SimulatedSample*> test;
    int fold_index = 0;
    std::uint64_t seed = 0;
};

/// Fits a model on `view.train` only and returns one risk score per entry of
/// `view.test`, in order. Must be safe to call concurrently from several
/// threads when cross_validate runs with jobs > 1.
using Trainer = std::function<std::vector<double>(const FoldView& view)>;

/// Per-fold outcome; `result` is meaningful only when `valid` is true.
struct FoldOutcome {
    int fold = 0;
    bool valid = false;
    CIndexResult result;
};

/// Aggregate of a full cross-validation run. Mean and sample standard
/// deviation are taken over valid folds only; invalid folds (no comparable
/// pairs in the held-out set) are listed in `warnings`.
struct CrossValidationReport {
    std::vector<FoldOutcome> folds; ///< ordered by fold index.
    double mean_c_index = 0.0;
    double std_c_index = 0.0;
    int valid_folds = 0;
    std::vector<std::string> warnings;
};

/// Runs the fold loop: for each fold, train on the complement, score the
/// held-out fold with c_index, and aggregate. Folds are independent and run
/// on `jobs` threads; results are aggregated in fold order regardless of
/// completion order, so the report is deterministic for a deterministic
/// trainer. Throws std::invalid_argument on malformed plans or trainer
/// output and NoComparablePairsError when every fold is invalid.
CrossValidationReport cross_validate(std::span<const SimulatedSample> samples,
                                     const Trainer& trainer, const FoldPlan& plan, int jobs = 1);

// ---------------------------------------------------------------------------
// Reporting
// ---------------------------------------------------------------------------

/// One labelled cross-validation result, e.g. method "cnn" on config
/// "simulated".
struct MethodResult {
    std::string method;
    std::string config;
    CrossValidationReport report;
};

/// Appends JSON-lines records for one method: one record per fold with the
/// full pair accounting, then one summary record. Every line is a complete
/// JSON object with sorted keys, so files concatenate and diff cleanly.
void write_results_jsonl(std::ostream& out, const MethodResult& result);

/// Renders a fixed-width comparison table ("Performance (c-index) of
/// different models") with one row per method: mean, std, and valid/total
/// fold counts.
std::string render_results_table(std::span<const MethodResult> results);

} // namespace coxcnn

#endif // COXCNN_EVAL_HPP
