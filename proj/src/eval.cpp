/*
 * coxcnn - imaging-based survival analysis with convolutional networks.
 *
 * File: src/eval.cpp
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
#include "coxcnn/eval.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <numeric>
#include <ostream>
#include <stdexcept>
#include <thread>

#include <json.hpp>

#include "coxcnn/errors.hpp"
#include "coxcnn/rng.hpp"

namespace coxcnn {

namespace {

std::string format_fixed(double v, int decimals) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*f", decimals, v);
    return buf;
}

} // namespace

// ---------------------------------------------------------------------------
// Concordance index
// ---------------------------------------------------------------------------

CIndexResult c_index(std::span<const double> risks, std::span<const SurvivalRecord> records) {
    if (risks.size() != records.size())
        throw std::invalid_argument("c_index: risks and records differ in length");
    const std::size_t n = records.size();
    for (std::size_t i = 0; i < n; ++i) {
        if (!std::isfinite(risks[i])) throw std::invalid_argument("c_index: non-finite risk");
        if (!std::isfinite(records[i].time))
            throw std::invalid_argument("c_index: non-finite time");
    }

    // Walk tie groups in time order: an event in one group is comparable with
    // every sample in a strictly later group, and with nothing in its own
    // (tied event times contribute no pair).
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return records[a].time < records[b].time; });

    CIndexResult r;
    std::size_t group_begin = 0;
    while (group_begin < n) {
        std::size_t group_end = group_begin + 1;
        while (group_end < n &&
               records[order[group_end]].time == records[order[group_begin]].time)
            ++group_end;
        for (std::size_t a = group_begin; a < group_end; ++a) {
            const std::size_t i = order[a];
            if (!records[i].event) continue;
            for (std::size_t b = group_end; b < n; ++b) {
                const std::size_t j = order[b];
                ++r.comparable_pairs;
                if (risks[i] > risks[j])
                    ++r.concordant;
                else if (risks[i] < risks[j])
                    ++r.discordant;
                else
                    ++r.tied_risk;
            }
        }
        group_begin = group_end;
    }

    if (r.comparable_pairs == 0)
        throw NoComparablePairsError("c_index: no comparable pairs");
    r.c_index = (static_cast<double>(r.concordant) + 0.5 * static_cast<double>(r.tied_risk)) /
                static_cast<double>(r.comparable_pairs);
    return r;
}

// ---------------------------------------------------------------------------
// Fold planning
// ---------------------------------------------------------------------------

FoldPlan make_folds(std::span<const SurvivalRecord> records, int k, bool stratified,
                    std::uint64_t seed) {
    const auto n = static_cast<int>(records.size());
    if (k < 2) throw std::invalid_argument("make_folds: k must be >= 2");
    if (k > n) throw std::invalid_argument("make_folds: k exceeds the sample count");

    FoldPlan plan;
    plan.k = k;
    plan.seed = seed;
    plan.stratified = stratified;
    plan.assignments.assign(static_cast<std::size_t>(n), 0);

    Rng rng(seed);
    std::vector<int> deal_order;
    deal_order.reserve(static_cast<std::size_t>(n));
    if (stratified) {
        // Deal events first, then censored samples continuing the same
        // round-robin, so both per-fold event counts and fold sizes are
        // balanced to within one.
        std::vector<int> events;
        std::vector<int> censored;
        for (int i = 0; i < n; ++i)
            (records[static_cast<std::size_t>(i)].event ? events : censored).push_back(i);
        rng.shuffle(events.begin(), events.end());
        rng.shuffle(censored.begin(), censored.end());
        deal_order.insert(deal_order.end(), events.begin(), events.end());
        deal_order.insert(deal_order.end(), censored.begin(), censored.end());
    } else {
        deal_order.resize(static_cast<std::size_t>(n));
        std::iota(deal_order.begin(), deal_order.end(), 0);
        rng.shuffle(deal_order.begin(), deal_order.end());
    }
    for (int t = 0; t < n; ++t)
        plan.assignments[static_cast<std::size_t>(deal_order[static_cast<std::size_t>(t)])] =
            t % k;
    return plan;
}

// ---------------------------------------------------------------------------
// Cross-validation
// ---------------------------------------------------------------------------

CrossValidationReport cross_validate(std::span<const SimulatedSample> samples,
                                     const Trainer& trainer, const FoldPlan& plan, int jobs) {
    if (!trainer) throw std::invalid_argument("cross_validate: trainer is empty");
    if (plan.k < 2) throw std::invalid_argument("cross_validate: plan has k < 2");
    if (plan.assignments.size() != samples.size())
        throw std::invalid_argument("cross_validate: plan does not match the sample count");
    if (jobs < 1) throw std::invalid_argument("cross_validate: jobs must be >= 1");
    for (int a : plan.assignments)
        if (a < 0 || a >= plan.k)
            throw std::invalid_argument("cross_validate: fold assignment out of range");

    const Rng root(plan.seed);
    CrossValidationReport report;
    report.folds.resize(static_cast<std::size_t>(plan.k));
    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(plan.k));

    auto run_fold = [&](int f) {
        const auto fi = static_cast<std::size_t>(f);
        FoldView view;
        view.fold_index = f;
        Rng child = root.derive(static_cast<std::uint64_t>(f));
        view.seed = child.next_u64();
        for (std::size_t i = 0; i < samples.size(); ++i)
            (plan.assignments[i] == f ? view.test : view.train).push_back(&samples[i]);

        const std::vector<double> risks = trainer(view);
        if (risks.size() != view.test.size())
            throw std::invalid_argument(
                "cross_validate: trainer returned a risk per-test-sample count mismatch");
        std::vector<SurvivalRecord> held_out;
        held_out.reserve(view.test.size());
        for (const SimulatedSample* s : view.test) held_out.push_back(s->record);

        FoldOutcome& out = report.folds[fi];
        out.fold = f;
        try {
            out.result = c_index(risks, held_out);
            out.valid = true;
        } catch (const NoComparablePairsError&) {
            out.valid = false;
        }
    };

    if (jobs == 1) {
        for (int f = 0; f < plan.k; ++f) {
            try {
                run_fold(f);
            } catch (...) {
                errors[static_cast<std::size_t>(f)] = std::current_exception();
            }
        }
    } else {
        std::atomic<int> next{0};
        auto worker = [&] {
            for (int f = next.fetch_add(1); f < plan.k; f = next.fetch_add(1)) {
                try {
                    run_fold(f);
                } catch (...) {
                    errors[static_cast<std::size_t>(f)] = std::current_exception();
                }
            }
        };
        std::vector<std::thread> pool;
        const int n_threads = std::min(jobs, plan.k);
        pool.reserve(static_cast<std::size_t>(n_threads));
        for (int t = 0; t < n_threads; ++t) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }
    for (const auto& err : errors)
        if (err) std::rethrow_exception(err);

    double sum = 0.0;
    for (const FoldOutcome& out : report.folds) {
        if (out.valid) {
            ++report.valid_folds;
            sum += out.result.c_index;
        } else {
            report.warnings.push_back("fold " + std::to_string(out.fold) +
                                      ": no comparable pairs in the held-out set; excluded "
                                      "from aggregates");
        }
    }
    if (report.valid_folds == 0)
        throw NoComparablePairsError("cross_validate: every fold was invalid");
    report.mean_c_index = sum / report.valid_folds;
    if (report.valid_folds > 1) {
        double ss = 0.0;
        for (const FoldOutcome& out : report.folds)
            if (out.valid) {
                const double d = out.result.c_index - report.mean_c_index;
                ss += d * d;
            }
        report.std_c_index = std::sqrt(ss / (report.valid_folds - 1));
    }
    return report;
}

// ---------------------------------------------------------------------------
// Reporting
// ---------------------------------------------------------------------------

void write_results_jsonl(std::ostream& out, const MethodResult& result) {
    for (const FoldOutcome& fo : result.report.folds) {
        nlohmann::json j;
        j["type"] = "fold";
        j["method"] = result.method;
        j["config"] = result.config;
        j["fold"] = fo.fold;
        j["valid"] = fo.valid;
        if (fo.valid) {
            j["c_index"] = fo.result.c_index;
            j["concordant"] = fo.result.concordant;
            j["discordant"] = fo.result.discordant;
            j["tied_risk"] = fo.result.tied_risk;
            j["comparable_pairs"] = fo.result.comparable_pairs;
        } else {
            j["c_index"] = nullptr;
        }
        out << j.dump() << '\n';
    }
    nlohmann::json s;
    s["type"] = "summary";
    s["method"] = result.method;
    s["config"] = result.config;
    s["mean_c_index"] = result.report.mean_c_index;
    s["std_c_index"] = result.report.std_c_index;
    s["valid_folds"] = result.report.valid_folds;
    s["total_folds"] = static_cast<int>(result.report.folds.size());
    out << s.dump() << '\n';
}

std::string render_results_table(std::span<const MethodResult> results) {
    std::size_t model_w = 5;  // "Model"
    std::size_t config_w = 6; // "Config"
    for (const MethodResult& r : results) {
        model_w = std::max(model_w, r.method.size());
        config_w = std::max(config_w, r.config.size());
    }

    std::string text = "Performance (c-index) of different models\n";
    auto pad = [](const std::string& s, std::size_t w) {
        return s + std::string(w - s.size(), ' ');
    };
    text += pad("Model", model_w) + "  " + pad("Config", config_w) +
            "    Mean     Std  Folds\n";
    for (const MethodResult& r : results) {
        const std::string folds = std::to_string(r.report.valid_folds) + "/" +
                                  std::to_string(r.report.folds.size());
        text += pad(r.method, model_w) + "  " + pad(r.config, config_w) + "  " +
                format_fixed(r.report.mean_c_index, 4) + "  " +
                format_fixed(r.report.std_c_index, 4) + "  " + folds + "\n";
    }
    return text;
}

} // namespace coxcnn
