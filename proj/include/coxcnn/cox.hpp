/*
 * coxcnn - imaging-based survival analysis with convolutional networks.
 *
 * File: include/coxcnn/cox.hpp
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

#include <span>
#include <vector>

namespace coxcnn {

/// One sample's observed time and event indicator. event == false means the
/// observation is right-censored at `time`.
struct SurvivalRecord {
    double time = 0.0;
    bool event = false;

    friend bool operator==(const SurvivalRecord&, const SurvivalRecord&) = default;
};

/// Risk-set convention. Inclusive is the standard Breslow convention
/// { j : T_j >= T_i } (sample i belongs to its own risk set). Strict keeps
/// { j : T_j > T_i }; it makes the last event's denominator empty, so such
/// terms are skipped. Exposed for fidelity experiments only; everything in
/// the library defaults to Inclusive.
enum class RiskSetRule { Inclusive, Strict };

/// Indices { j : T_j >= T_i } (or > under Strict). `i` must be an event.
std::vector<int> risk_set(std::span<const SurvivalRecord> records, int i,
                          RiskSetRule rule = RiskSetRule::Inclusive);

/// Negative log partial likelihood over per-sample risk scores h:
///   loss = -sum_{i: E_i=1} ( h_i - log sum_{j in riskset(i)} exp(h_j) ).
/// Inner sums use the max-shift log-sum-exp, so |h| up to a few hundred is
/// safe. Ties share denominators (Breslow). Throws NoEventsError when no
/// record has an event, std::invalid_argument on length mismatch.
double neg_log_partial_likelihood(std::span<const double> h,
                                  std::span<const SurvivalRecord> records,
                                  RiskSetRule rule = RiskSetRule::Inclusive);

/// Analytic gradient of neg_log_partial_likelihood with respect to h:
///   d loss / d h_k = -[E_k=1] + sum_{i: E_i=1, k in riskset(i)} softmax_i(h_k)
/// where softmax_i(h_k) = exp(h_k) / sum_{j in riskset(i)} exp(h_j).
std::vector<double> cox_loss_gradient(std::span<const double> h,
                                      std::span<const SurvivalRecord> records,
                                      RiskSetRule rule = RiskSetRule::Inclusive);

} // namespace coxcnn
