/*
 * coxcnn - imaging-based survival analysis with convolutional networks.
 *
 * File: tests/test_baseline.cpp
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
#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <random>
#include <vector>

#include <doctest.h>
#include <json.hpp>

#include "coxcnn/baseline.hpp"
#include "coxcnn/errors.hpp"
#include "coxcnn/rng.hpp"
#include "coxcnn/simdata.hpp"
#include "oracles.hpp"

using namespace coxcnn;

namespace {

Image2D uniform_image(Rng& rng, int width = 16, int height = 16) {
    Image2D img;
    img.width = width;
    img.height = height;
    img.channels = 1;
    img.pixels.resize(static_cast<std::size_t>(width) * height);
    for (auto& p : img.pixels) p = static_cast<float>(rng.uniform());
    img.bbox = {2, 3, width - 5, height - 6};
    return img;
}

} // namespace

TEST_CASE("features: dimension and hand-checked values on a constant image") {
    Image2D img;
    img.width = 10;
    img.height = 8;
    img.channels = 1;
    img.pixels.assign(80, 0.5f);
    img.bbox = {1, 1, 4, 2};

    const std::vector<double> f = extract_features(img);
    REQUIRE(f.size() == 87);
    CHECK(f[0] == doctest::Approx(0.5));  // mean
    CHECK(f[1] == doctest::Approx(0.0));  // variance
    CHECK(f[2] == 0.0);                   // skewness guard on sigma == 0
    CHECK(f[3] == 0.0);                   // kurtosis guard
    CHECK(f[4] == doctest::Approx(0.5));  // min
    CHECK(f[5] == doctest::Approx(0.5));  // max
    // histogram: 0.5 * 16 = 8 -> all mass in bin 8
    for (int b = 0; b < 16; ++b) CHECK(f[6 + static_cast<std::size_t>(b)] == doctest::Approx(b == 8 ? 1.0 : 0.0));
    CHECK(f[22] == doctest::Approx(8.0 / 80.0)); // bbox area fraction
    for (int i = 0; i < 64; ++i) CHECK(f[23 + static_cast<std::size_t>(i)] == doctest::Approx(0.5)); // crop
}

TEST_CASE("features: moments and histogram match a direct computation") {
    Rng rng(17);
    const Image2D img = uniform_image(rng);
    const std::vector<double> f = extract_features(img);

    const double n = static_cast<double>(img.pixels.size());
    double mean = 0.0;
    for (float p : img.pixels) mean += p;
    mean /= n;
    double m2 = 0.0, m3 = 0.0, m4 = 0.0, lo = 1e9, hi = -1e9;
    for (float p : img.pixels) {
        const double c = p - mean;
        m2 += c * c;
        m3 += c * c * c;
        m4 += c * c * c * c;
        lo = std::min(lo, static_cast<double>(p));
        hi = std::max(hi, static_cast<double>(p));
    }
    const double var = m2 / n;
    const double sd = std::sqrt(var);

    CHECK(f[0] == doctest::Approx(mean).epsilon(1e-12));
    CHECK(f[1] == doctest::Approx(var).epsilon(1e-12));
    CHECK(f[2] == doctest::Approx((m3 / n) / (sd * sd * sd)).epsilon(1e-10));
    CHECK(f[3] == doctest::Approx((m4 / n) / (var * var)).epsilon(1e-10));
    CHECK(f[4] == lo);
    CHECK(f[5] == hi);

    double hist_sum = 0.0;
    for (int b = 0; b < 16; ++b) hist_sum += f[6 + static_cast<std::size_t>(b)];
    CHECK(hist_sum == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("features: full-image bbox crop averages the whole image") {
    Image2D img;
    img.width = img.height = 8; // one pixel per 8x8 crop cell
    img.channels = 1;
    img.pixels.resize(64);
    for (int i = 0; i < 64; ++i) img.pixels[static_cast<std::size_t>(i)] = static_cast<float>(i) / 64.0f;
    img.bbox = {0, 0, 8, 8};

    const std::vector<double> f = extract_features(img);
    for (int i = 0; i < 64; ++i)
        CHECK(f[23 + static_cast<std::size_t>(i)] == doctest::Approx(static_cast<double>(i) / 64.0));
}

TEST_CASE("features: invalid image rejected") {
    Image2D img;
    CHECK_THROWS_AS(extract_features(img), std::invalid_argument);
}

TEST_CASE("pca: eigenpairs match the Jacobi oracle") {
    const int n = 40, d = 6;
    Rng rng(23);
    FeatureMatrix x(n, d);
    // Distinct column scales keep the spectrum well separated so eigenvector
    // comparison is meaningful.
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < d; ++j) x.at(i, j) = rng.normal(0.5 * j, 1.0 + j);

    const PcaModel pca = pca_fit(x, d);

    // Covariance built directly, then the oracle eigensolver.
    std::vector<double> mean(d, 0.0);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < d; ++j) mean[static_cast<std::size_t>(j)] += x.at(i, j) / n;
    std::vector<double> cov(static_cast<std::size_t>(d) * d, 0.0);
    for (int i = 0; i < n; ++i)
        for (int a = 0; a < d; ++a)
            for (int b = 0; b < d; ++b)
                cov[static_cast<std::size_t>(a) * d + b] += (x.at(i, a) - mean[static_cast<std::size_t>(a)]) *
                                                            (x.at(i, b) - mean[static_cast<std::size_t>(b)]) / n;
    std::vector<double> values;
    std::vector<double> vectors;
    oracle::jacobi_eigen(cov, d, values, vectors);

    for (int r = 0; r < d; ++r) {
        CHECK(pca.eigenvalues[static_cast<std::size_t>(r)] ==
              doctest::Approx(values[static_cast<std::size_t>(r)]).epsilon(1e-9));
        double dot = 0.0;
        for (int j = 0; j < d; ++j)
            dot += pca.components[static_cast<std::size_t>(r) * d + j] *
                   vectors[static_cast<std::size_t>(r) * d + j];
        CHECK(std::abs(dot) == doctest::Approx(1.0).epsilon(1e-8)); // same axis, sign-free
    }
    for (int r = 1; r < d; ++r)
        CHECK(pca.eigenvalues[static_cast<std::size_t>(r)] <=
              pca.eigenvalues[static_cast<std::size_t>(r - 1)]);
}

TEST_CASE("pca: component rows are orthonormal") {
    Rng rng(29);
    FeatureMatrix x(30, 5);
    for (auto& v : x.values) v = rng.uniform(-2.0, 2.0);
    const PcaModel pca = pca_fit(x, 4);

    for (int r = 0; r < 4; ++r)
        for (int s = 0; s < 4; ++s) {
            double dot = 0.0;
            for (int j = 0; j < 5; ++j)
                dot += pca.components[static_cast<std::size_t>(r) * 5 + j] *
                       pca.components[static_cast<std::size_t>(s) * 5 + j];
            CHECK(dot == doctest::Approx(r == s ? 1.0 : 0.0).epsilon(1e-6).scale(1.0));
        }
}

TEST_CASE("pca: projection recovers a planted low-dimensional structure") {
    // Data on a 1D line through 4D space plus tiny noise: the top component
    // must align with the line and capture nearly all variance.
    Rng rng(31);
    const double dir[4] = {0.5, -0.5, 0.5, 0.5};
    FeatureMatrix x(60, 4);
    for (int i = 0; i < 60; ++i) {
        const double t = rng.normal(0.0, 3.0);
        for (int j = 0; j < 4; ++j) x.at(i, j) = t * dir[j] + rng.normal(0.0, 0.01);
    }
    const PcaModel pca = pca_fit(x, 2);
    double align = 0.0;
    for (int j = 0; j < 4; ++j) align += pca.components[static_cast<std::size_t>(j)] * dir[j];
    CHECK(std::abs(align) == doctest::Approx(1.0).epsilon(1e-3));
    CHECK(pca.eigenvalues[0] > 100.0 * pca.eigenvalues[1]);
}

TEST_CASE("pca: apply matches the affine definition; bounds enforced") {
    Rng rng(37);
    FeatureMatrix x(10, 3);
    for (auto& v : x.values) v = rng.uniform(-1.0, 1.0);
    const PcaModel pca = pca_fit(x, 2);

    const std::vector<double> probe{0.3, -0.7, 1.1};
    const std::vector<double> y = pca_apply(pca, probe);
    REQUIRE(y.size() == 2);
    for (int r = 0; r < 2; ++r) {
        double want = 0.0;
        for (int j = 0; j < 3; ++j)
            want += pca.components[static_cast<std::size_t>(r) * 3 + j] *
                    (probe[static_cast<std::size_t>(j)] - pca.mean[static_cast<std::size_t>(j)]);
        CHECK(y[static_cast<std::size_t>(r)] == doctest::Approx(want).epsilon(1e-12));
    }

    CHECK_THROWS_AS(pca_fit(x, 0), std::invalid_argument);
    CHECK_THROWS_AS(pca_fit(x, 4), std::invalid_argument);   // k > d
    FeatureMatrix tall(2, 5);
    CHECK_THROWS_AS(pca_fit(tall, 3), std::invalid_argument); // k > n
    CHECK_THROWS_AS(pca_apply(pca, std::vector<double>{1.0}), std::invalid_argument);
}

TEST_CASE("standardizer: zero mean, unit variance, constant columns kept") {
    Rng rng(41);
    FeatureMatrix x(50, 3);
    for (int i = 0; i < 50; ++i) {
        x.at(i, 0) = rng.normal(5.0, 2.0);
        x.at(i, 1) = rng.uniform(-3.0, 1.0);
        x.at(i, 2) = 7.25; // constant
    }
    const Standardizer s = standardizer_fit(x);
    const FeatureMatrix z = standardizer_apply(s, x);

    for (int j = 0; j < 2; ++j) {
        double mean = 0.0, var = 0.0;
        for (int i = 0; i < 50; ++i) mean += z.at(i, j) / 50.0;
        for (int i = 0; i < 50; ++i) var += (z.at(i, j) - mean) * (z.at(i, j) - mean) / 50.0;
        CHECK(std::abs(mean) < 1e-12);
        CHECK(var == doctest::Approx(1.0).epsilon(1e-10));
    }
    CHECK(s.scale[2] == 1.0);
    for (int i = 0; i < 50; ++i) CHECK(z.at(i, 2) == 0.0);
}

TEST_CASE("cph: Newton agrees with the derivative-free oracle on 50 instances") {
    // 50 random designs (n=40, d=3, ~40% censoring, some tied times); the
    // Newton solution must match Nelder-Mead on the identical objective to
    // 1e-4 per coordinate and the recorded loss history must never increase.
    int converged_count = 0;
    for (int instance = 0; instance < 50; ++instance) {
        Rng rng(1000 + static_cast<std::uint64_t>(instance));
        const int n = 40, d = 3;
        FeatureMatrix raw(n, d);
        for (auto& v : raw.values) v = rng.normal(0.0, 1.0);
        const Standardizer s = standardizer_fit(raw);
        const FeatureMatrix x = standardizer_apply(s, raw);

        std::vector<SurvivalRecord> records(n);
        const bool tie_grid = instance % 5 == 0; // every 5th instance has heavy ties
        for (int i = 0; i < n; ++i) {
            const double t = tie_grid ? 1.0 + std::floor(rng.uniform(0.0, 6.0))
                                      : rng.uniform(0.5, 10.0);
            records[static_cast<std::size_t>(i)] = {t, rng.uniform() < 0.6};
        }
        if (std::none_of(records.begin(), records.end(), [](auto& r) { return r.event; }))
            records[0].event = true;

        const CphFit fit = cph_fit(x, records);
        CHECK(fit.converged);
        converged_count += fit.converged ? 1 : 0;
        for (std::size_t i = 1; i < fit.loss_history.size(); ++i)
            CHECK(fit.loss_history[i] <= fit.loss_history[i - 1]);

        const auto objective = [&](const std::vector<double>& beta) {
            std::vector<double> eta(static_cast<std::size_t>(n), 0.0);
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < d; ++j)
                    eta[static_cast<std::size_t>(i)] +=
                        x.at(i, j) * beta[static_cast<std::size_t>(j)];
            return oracle::cox_loss(eta, records);
        };
        const std::vector<double> nm =
            oracle::nelder_mead(objective, std::vector<double>(d, 0.0), 0.5, 50000, 1e-14);

        for (int j = 0; j < d; ++j)
            CHECK(std::abs(fit.beta[static_cast<std::size_t>(j)] - nm[static_cast<std::size_t>(j)]) < 1e-4);
    }
    CHECK(converged_count == 50);
}

TEST_CASE("cph: duplicate column lands on the flat-direction optimum") {
    // With an exactly duplicated column the likelihood depends only on
    // beta[0] + beta[1], so the optimum is a whole line. LDLT still yields a
    // finite descent direction for this consistent singular system, and the
    // fit must converge to some point on that line whose coefficient sum
    // equals the coefficient of the deduplicated one-column fit.
    Rng rng(53);
    const int n = 30;
    FeatureMatrix x(n, 2);
    FeatureMatrix x1(n, 1);
    for (int i = 0; i < n; ++i) {
        const double v = rng.normal(0.0, 1.0);
        x.at(i, 0) = v;
        x.at(i, 1) = v; // exactly collinear -> singular Hessian
        x1.at(i, 0) = v;
    }
    std::vector<SurvivalRecord> records(n);
    for (int i = 0; i < n; ++i) records[static_cast<std::size_t>(i)] = {rng.uniform(1.0, 5.0), i % 2 == 0};

    const CphFit fit = cph_fit(x, records);
    const CphFit dedup = cph_fit(x1, records);
    CHECK(fit.converged);
    CHECK(dedup.converged);
    CHECK(fit.beta[0] + fit.beta[1] == doctest::Approx(dedup.beta[0]).epsilon(1e-6));
    CHECK(fit.final_loss == doctest::Approx(dedup.final_loss).epsilon(1e-10));
}

TEST_CASE("cph: non-finite design matrix raises IllConditionedError") {
    FeatureMatrix x(4, 1);
    x.values = {1.0, -1.0, std::numeric_limits<double>::quiet_NaN(), 0.5};
    std::vector<SurvivalRecord> records{{1.0, true}, {2.0, false}, {3.0, true}, {4.0, true}};
    CHECK_THROWS_AS(cph_fit(x, records), IllConditionedError);
}

TEST_CASE("cph: error paths") {
    FeatureMatrix x(3, 1);
    x.values = {1.0, 0.0, -1.0};
    std::vector<SurvivalRecord> censored{{1.0, false}, {2.0, false}, {3.0, false}};
    CHECK_THROWS_AS(cph_fit(x, censored), NoEventsError);

    std::vector<SurvivalRecord> two{{1.0, true}, {2.0, false}};
    CHECK_THROWS_AS(cph_fit(x, two), std::invalid_argument); // length mismatch

    CHECK_THROWS_AS(cph_predict(std::vector<double>{1.0, 2.0}, std::vector<double>{1.0}),
                    std::invalid_argument);
}

TEST_CASE("baseline pipeline: fit, predict, JSON round-trip") {
    // Small simulated cohort end to end.
    const WeightMask mask = generate_mask(28, 28, 5);
    auto images = synth_digits(60, {SynthClass::Ring, SynthClass::Spiral}, 6);
    const auto samples = simulate_survival(std::move(images), mask, 5.0, 0.5, 7);

    const BaselineModel model = fit_baseline(samples, BaselineConfig{});
    CHECK(model.fit.converged);
    CHECK(model.beta.size() == 8);

    const double r0 = baseline_risk(model, samples[0].image);
    CHECK(std::isfinite(r0));
    CHECK(baseline_risk(model, samples[0].image) == r0); // deterministic

    const std::string text = baseline_to_json(model);
    const BaselineModel back = baseline_from_json(text);
    CHECK(baseline_to_json(back) == text); // canonical round-trip
    // nlohmann serializes doubles losslessly, so scores match bit for bit.
    CHECK(baseline_risk(back, samples[0].image) == r0);
    CHECK(baseline_risk(back, samples[17].image) == baseline_risk(model, samples[17].image));
}

TEST_CASE("baseline pipeline: file round-trip and rejection paths") {
    const WeightMask mask = generate_mask(28, 28, 15);
    auto images = synth_digits(30, {SynthClass::Ring, SynthClass::Spiral}, 16);
    const auto samples = simulate_survival(std::move(images), mask, 5.0, 0.5, 17);
    const BaselineModel model = fit_baseline(samples, BaselineConfig{});

    const auto dir = std::filesystem::temp_directory_path() /
                     ("coxcnn_baseline_test_" + std::to_string(Rng(std::random_device{}()).next_u64()));
    std::filesystem::create_directories(dir);
    const auto path = dir / "baseline.json";
    save_baseline(model, path);
    const BaselineModel back = load_baseline(path);
    CHECK(baseline_to_json(back) == baseline_to_json(model));

    CHECK_THROWS_AS(load_baseline(dir / "missing.json"), FormatError);
    CHECK_THROWS_AS(baseline_from_json("{broken"), FormatError);
    CHECK_THROWS_AS(baseline_from_json("{}"), FormatError);

    // Inconsistent dimensions: beta shorter than the PCA rank.
    nlohmann::json j = nlohmann::json::parse(baseline_to_json(model));
    j["beta"] = std::vector<double>{1.0};
    CHECK_THROWS_AS(baseline_from_json(j.dump()), FormatError);

    // Future feature recipe: loadable but refuses to score.
    BaselineModel future = back;
    future.feature_version = 99;
    CHECK_THROWS_AS(baseline_risk(future, samples[0].image), FormatError);

    std::filesystem::remove_all(dir);
}

TEST_CASE("baseline pipeline: empty input rejected") {
    std::vector<SimulatedSample> none;
    CHECK_THROWS_AS(fit_baseline(none, BaselineConfig{}), std::invalid_argument);
}
