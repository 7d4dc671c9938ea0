/*
 * coxcnn - imaging-based survival analysis with convolutional networks.
 *
 * File: src/cox.cpp
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
#include "coxcnn/cox.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "coxcnn/errors.hpp"

namespace coxcnn {

namespace {

bool in_risk_set(const SurvivalRecord& candidate, const SurvivalRecord& anchor, RiskSetRule rule) {
    return rule == RiskSetRule::Inclusive ? candidate.time >= anchor.time
                                          : candidate.time > anchor.time;
}

void check_lengths(std::span<const double> h, std::span<const SurvivalRecord> records) {
    if (h.size() != records.size())
        throw std::invalid_argument("risk vector and records have different lengths");
}

int count_events(std::span<const SurvivalRecord> records) {
    int e = 0;
    for (const auto& r : records) e += r.event ? 1 : 0;
    return e;
}

/// Max-shifted log(sum over riskset(i) of exp(h_j)). Returns false when the
/// risk set is empty (possible only under the Strict rule).
bool risk_set_logsumexp(std::span<const double> h, std::span<const SurvivalRecord> records,
                        int i, RiskSetRule rule, double* out) {
    // Emptiness must be decided by membership, not by the max staying at
    // -inf: NaN scores also leave the max untouched, and those must poison
    // the result (divergence detection), not silently drop the term.
    int members = 0;
    double m = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < records.size(); ++j)
        if (in_risk_set(records[j], records[i], rule)) {
            ++members;
            m = std::max(m, h[j]);
        }
    if (members == 0) return false;
    double s = 0.0;
    for (std::size_t j = 0; j < records.size(); ++j)
        if (in_risk_set(records[j], records[i], rule)) s += std::exp(h[j] - m);
    *out = m + std::log(s);
    return true;
}

} // namespace

std::vector<int> risk_set(std::span<const SurvivalRecord> records, int i, RiskSetRule rule) {
    if (i < 0 || static_cast<std::size_t>(i) >= records.size())
        throw std::invalid_argument("risk_set: index out of range");
    if (!records[static_cast<std::size_t>(i)].event)
        throw std::invalid_argument("risk_set: index must refer to an event sample");
    std::vector<int> out;
    for (std::size_t j = 0; j < records.size(); ++j)
        if (in_risk_set(records[j], records[static_cast<std::size_t>(i)], rule))
            out.push_back(static_cast<int>(j));
    return out;
}

double neg_log_partial_likelihood(std::span<const double> h,
                                  std::span<const SurvivalRecord> records, RiskSetRule rule) {
    check_lengths(h, records);
    if (count_events(records) == 0)
        throw NoEventsError("neg_log_partial_likelihood: no events in records");
    double loss = 0.0;
    for (std::size_t i = 0; i < records.size(); ++i) {
        if (!records[i].event) continue;
        double lse;
        if (!risk_set_logsumexp(h, records, static_cast<int>(i), rule, &lse))
            continue; // empty denominator under Strict: term skipped
        loss -= h[i] - lse;
    }
    return loss;
}

std::vector<double> cox_loss_gradient(std::span<const double> h,
                                      std::span<const SurvivalRecord> records, RiskSetRule rule) {
    check_lengths(h, records);
    if (count_events(records) == 0)
        throw NoEventsError("cox_loss_gradient: no events in records");
    std::vector<double> g(h.size(), 0.0);
    for (std::size_t i = 0; i < records.size(); ++i) {
        if (!records[i].event) continue;
        double lse;
        if (!risk_set_logsumexp(h, records, static_cast<int>(i), rule, &lse))
            continue;
        g[i] -= 1.0;
        for (std::size_t k = 0; k < records.size(); ++k)
            if (in_risk_set(records[k], records[i], rule)) g[k] += std::exp(h[k] - lse);
    }
    return g;
}

} // namespace coxcnn
