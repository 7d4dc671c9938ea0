/*
 * coxcnn - imaging-based survival analysis with convolutional networks.
 *
 * File: include/coxcnn/gradcheck.hpp
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
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include "coxcnn/rng.hpp"

namespace coxcnn {

/// One objective evaluation. branch_hash fingerprints every data-dependent
/// branch taken during the forward pass (ReLU activation patterns, SPP argmax
/// choices). When a perturbation flips a branch the objective is not
/// differentiable between the two points, so that coordinate is skipped
/// rather than misreported.
struct LossEval {
    double value = 0.0;
    std::uint64_t branch_hash = 0;
};

/// A named view of one parameter buffer: the storage the evaluator reads and
/// the analytic gradient claimed for it.
template <typename T>
struct GradCheckBlock {
    std::string name;
    std::vector<T>* values = nullptr;
    const std::vector<T>* grad = nullptr;
};

struct GradCheckOptions {
    double epsilon = 1e-5;     // central-difference step
    double floor = 1e-8;       // relative-error denominator floor
    int max_per_block = 25;    // random coordinates checked per block
    std::uint64_t seed = 0;    // coordinate subsampling stream
};

/// 64-bit defaults; the 32-bit engine needs a coarser step (float storage
/// quantizes the perturbation itself) and a coarser floor (loss evaluation
/// noise is ~1e-7 relative).
inline GradCheckOptions gradcheck_options_for(bool double_precision) {
    GradCheckOptions o;
    if (double_precision) {
        o.epsilon = 1e-5;
        o.floor = 1e-8;
    } else {
        o.epsilon = 1e-2;
        o.floor = 1e-3;
    }
    return o;
}

struct BlockReport {
    std::string name;
    double max_rel_error = 0.0;
    int checks = 0;
    int skipped = 0;
    // filled only for the worst coordinate, for actionable failure messages
    std::int64_t worst_index = -1;
    double worst_analytic = 0.0;
    double worst_numeric = 0.0;
};

struct GradCheckReport {
    double max_rel_error = 0.0;
    int checks = 0;
    int skipped = 0;
    std::vector<BlockReport> blocks;

    bool passed(double tolerance) const { return checks > 0 && max_rel_error < tolerance; }
};

/// Central finite differences against the analytic gradients in `blocks`.
/// The evaluator must recompute the objective from the (perturbed) buffers on
/// every call. Buffers are always restored before returning.
template <typename T>
GradCheckReport check_gradients(const std::function<LossEval()>& eval,
                                const std::vector<GradCheckBlock<T>>& blocks,
                                const GradCheckOptions& opts) {
    GradCheckReport report;
    Rng rng(opts.seed);
    for (const auto& block : blocks) {
        BlockReport br;
        br.name = block.name;
        std::vector<std::size_t> order(block.values->size());
        std::iota(order.begin(), order.end(), std::size_t{0});
        rng.shuffle(order.begin(), order.end());
        const std::size_t n_checks =
            std::min<std::size_t>(order.size(), static_cast<std::size_t>(opts.max_per_block));

        for (std::size_t pick = 0; pick < n_checks; ++pick) {
            const std::size_t i = order[pick];
            const T saved = (*block.values)[i];

            (*block.values)[i] = static_cast<T>(static_cast<double>(saved) + opts.epsilon);
            const double actual_plus = static_cast<double>((*block.values)[i]);
            const LossEval up = eval();
            (*block.values)[i] = static_cast<T>(static_cast<double>(saved) - opts.epsilon);
            const double actual_minus = static_cast<double>((*block.values)[i]);
            const LossEval down = eval();
            (*block.values)[i] = saved;

            if (up.branch_hash != down.branch_hash) {
                ++br.skipped;
                continue; // a kink lies between the two evaluation points
            }
            // use the step the storage type actually realized (float32
            // quantizes epsilon)
            const double numeric = (up.value - down.value) / (actual_plus - actual_minus);
            const double analytic = static_cast<double>((*block.grad)[i]);
            const double rel = std::abs(numeric - analytic) /
                               std::max({std::abs(numeric), std::abs(analytic), opts.floor});
            ++br.checks;
            if (rel >= br.max_rel_error) {
                br.max_rel_error = rel;
                br.worst_index = static_cast<std::int64_t>(i);
                br.worst_analytic = analytic;
                br.worst_numeric = numeric;
            }
        }
        report.checks += br.checks;
        report.skipped += br.skipped;
        report.max_rel_error = std::max(report.max_rel_error, br.max_rel_error);
        report.blocks.push_back(std::move(br));
    }
    return report;
}

/// Branch-hash building block: mix one observation into a running hash
/// (FNV-1a over the mixed 64-bit value).
inline std::uint64_t hash_mix(std::uint64_t h, std::uint64_t v) {
    h ^= splitmix64(v);
    return h * 1099511628211ULL;
}

} // namespace coxcnn
