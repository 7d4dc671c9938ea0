/*
 * coxcnn - imaging-based survival analysis with convolutional networks.
 *
 * File: tests/test_simdata.cpp
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
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <vector>

#include "coxcnn/errors.hpp"
#include "coxcnn/rng.hpp"
#include "coxcnn/simdata.hpp"

namespace fs = std::filesystem;
using coxcnn::Image2D;

namespace {

fs::path temp_dir(const char* tag) {
    const auto dir = fs::temp_directory_path() / (std::string("coxcnn_test_") + tag);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

void write_be32(std::ofstream& f, std::uint32_t v) {
    const unsigned char b[4] = {static_cast<unsigned char>(v >> 24),
                                static_cast<unsigned char>(v >> 16),
                                static_cast<unsigned char>(v >> 8),
                                static_cast<unsigned char>(v)};
    f.write(reinterpret_cast<const char*>(b), 4);
}

// Minimal IDX fixture: `n` 4x4 images with the given corner intensities and
// labels. Returns the two file paths.
std::pair<fs::path, fs::path> write_idx_fixture(const fs::path& dir,
                                                const std::vector<unsigned char>& corners,
                                                const std::vector<unsigned char>& labels) {
    const auto img_path = dir / "images.idx";
    const auto lbl_path = dir / "labels.idx";
    std::ofstream fi(img_path, std::ios::binary);
    write_be32(fi, 0x00000803u);
    write_be32(fi, static_cast<std::uint32_t>(corners.size()));
    write_be32(fi, 4);
    write_be32(fi, 4);
    for (unsigned char c : corners) {
        unsigned char px[16] = {};
        px[0] = c; // single lit pixel at (0,0) unless c == 0
        fi.write(reinterpret_cast<const char*>(px), 16);
    }
    fi.close();
    std::ofstream fl(lbl_path, std::ios::binary);
    write_be32(fl, 0x00000801u);
    write_be32(fl, static_cast<std::uint32_t>(labels.size()));
    fl.write(reinterpret_cast<const char*>(labels.data()),
             static_cast<std::streamsize>(labels.size()));
    fl.close();
    return {img_path, lbl_path};
}

} // namespace

TEST_CASE("image: standardization and tight bbox") {
    Image2D img;
    img.width = 4;
    img.height = 3;
    img.pixels = {0, 0, 0, 0, 0, 0.5f, 0.25f, 0, 0, 0, 0, 0};
    img.bbox = {0, 0, 4, 3};

    const auto bbox = coxcnn::tight_bbox(img);
    REQUIRE(bbox.has_value());
    CHECK(*bbox == coxcnn::BoundingBox{1, 1, 2, 1});

    const auto std_img = coxcnn::standardized(img);
    double mean = 0.0, var = 0.0;
    for (float p : std_img.pixels) mean += p;
    mean /= static_cast<double>(std_img.pixels.size());
    for (float p : std_img.pixels) var += (p - mean) * (p - mean);
    var /= static_cast<double>(std_img.pixels.size());
    CHECK(std::abs(mean) < 1e-4);
    CHECK(std::abs(var - 1.0) < 1e-4);

    // constant image: mean removed, no variance blow-up
    Image2D flat = img;
    std::fill(flat.pixels.begin(), flat.pixels.end(), 3.0f);
    const auto flat_std = coxcnn::standardized(flat);
    for (float p : flat_std.pixels) CHECK(p == 0.0f);

    CHECK_FALSE(coxcnn::tight_bbox(flat_std).has_value()); // nothing above 0
}

TEST_CASE("mask: range, determinism, seed sensitivity") {
    const auto a = coxcnn::generate_mask(28, 28, 5);
    CHECK(a.values.size() == 784);
    for (float v : a.values) {
        CHECK(v >= 0.0f);
        CHECK(v < 1.0f);
    }
    const auto b = coxcnn::generate_mask(28, 28, 5);
    CHECK(a == b);

    const auto c = coxcnn::generate_mask(28, 28, 6);
    int differing = 0;
    for (std::size_t i = 0; i < a.values.size(); ++i)
        if (a.values[i] != c.values[i]) ++differing;
    CHECK(differing > static_cast<int>(0.9 * 784));
}

TEST_CASE("risk_of: closed forms and summation oracle") {
    coxcnn::WeightMask ones;
    ones.width = ones.height = 2;
    ones.values = {1, 1, 1, 1};

    Image2D zero;
    zero.width = zero.height = 2;
    zero.pixels = {0, 0, 0, 0};
    zero.bbox = {0, 0, 2, 2};
    CHECK(coxcnn::risk_of(zero, ones) == 1.0);

    Image2D unit = zero;
    unit.pixels = {1, 1, 1, 1};
    CHECK(coxcnn::risk_of(unit, ones) == doctest::Approx(std::exp(-4.0)).epsilon(1e-12));

    // random case vs an independent long-double summation
    coxcnn::Rng rng(8);
    const auto mask = coxcnn::generate_mask(28, 28, 21);
    Image2D img;
    img.width = img.height = 28;
    img.pixels.resize(784);
    for (auto& p : img.pixels) p = static_cast<float>(rng.uniform());
    img.bbox = {0, 0, 28, 28};
    long double s = 0.0L;
    for (std::size_t i = 0; i < img.pixels.size(); ++i) {
        const long double t = static_cast<long double>(img.pixels[i]) * mask.values[i];
        s += t * t;
    }
    CHECK(coxcnn::risk_of(img, mask) ==
          doctest::Approx(static_cast<double>(std::exp(-s))).epsilon(1e-7));

    coxcnn::WeightMask wrong = ones;
    wrong.width = 3;
    wrong.values = {1, 1, 1, 1, 1, 1};
    CHECK_THROWS_AS((void)coxcnn::risk_of(zero, wrong), std::invalid_argument);
}

TEST_CASE("survival_time: formula and monotonicity") {
    CHECK(coxcnn::survival_time(1.0) == doctest::Approx(5.0 * std::exp(-1.0)).epsilon(1e-12));
    double prev = coxcnn::survival_time(0.0);
    CHECK(prev == doctest::Approx(5.0));
    for (double r = 0.05; r <= 1.0; r += 0.05) {
        const double t = coxcnn::survival_time(r);
        CHECK(t < prev);
        prev = t;
    }
}

TEST_CASE("apply_censoring: exact counts and shrunk censored times") {
    auto make = [](int n) {
        std::vector<coxcnn::SimulatedSample> s(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) {
            s[static_cast<std::size_t>(i)].record = {2.0 + i * 0.01, true};
            s[static_cast<std::size_t>(i)].true_risk = 0.5;
        }
        return s;
    };

    auto all = make(100);
    coxcnn::apply_censoring(all, 1.0, 3);
    for (const auto& s : all) CHECK(s.record.event);

    auto half = make(100);
    const auto before = make(100);
    coxcnn::apply_censoring(half, 0.5, 3);
    int events = 0;
    for (std::size_t i = 0; i < half.size(); ++i) {
        if (half[i].record.event) {
            ++events;
            CHECK(half[i].record.time == before[i].record.time);
        } else {
            CHECK(half[i].record.time < before[i].record.time);
            CHECK(half[i].record.time >= 0.1 * before[i].record.time);
        }
    }
    CHECK(events == 50);

    std::vector<coxcnn::SimulatedSample> empty;
    CHECK_THROWS_AS(coxcnn::apply_censoring(empty, 0.5, 1), std::invalid_argument);
    CHECK_THROWS_AS(coxcnn::apply_censoring(half, 0.0, 1), std::invalid_argument);
}

TEST_CASE("load_idx: parsing, filtering, degenerate digits") {
    const auto dir = temp_dir("idx");
    const auto [imgs, lbls] = write_idx_fixture(dir, {255, 128, 0, 64}, {0, 6, 0, 3});

    int skipped = -1;
    const auto all = coxcnn::load_idx(imgs, lbls, {}, &skipped);
    CHECK(all.size() == 3); // the all-black image is dropped
    CHECK(skipped == 1);
    CHECK(all[0].width == 4);
    CHECK(all[0].height == 4);
    CHECK(all[0].pixels[0] == doctest::Approx(1.0));
    CHECK(all[0].bbox == coxcnn::BoundingBox{0, 0, 1, 1});

    const auto zeros_and_sixes = coxcnn::load_idx(imgs, lbls, {0, 6}, &skipped);
    CHECK(zeros_and_sixes.size() == 2); // labels {0,6} minus the all-black one
    CHECK(skipped == 1);

    const auto sixes = coxcnn::load_idx(imgs, lbls, {6}, nullptr);
    CHECK(sixes.size() == 1);
    CHECK(sixes[0].pixels[0] == doctest::Approx(128.0 / 255.0));
}

TEST_CASE("load_idx: format errors") {
    const auto dir = temp_dir("idx_bad");
    const auto [imgs, lbls] = write_idx_fixture(dir, {255}, {0});

    // corrupt the image magic
    {
        std::fstream f(imgs, std::ios::binary | std::ios::in | std::ios::out);
        f.put(0x7f);
    }
    CHECK_THROWS_AS((void)coxcnn::load_idx(imgs, lbls, {}), coxcnn::FormatError);

    // truncated payload
    const auto [imgs2, lbls2] = write_idx_fixture(dir, {255, 255}, {0, 0});
    fs::resize_file(imgs2, 20); // header promises 2*16 pixel bytes
    CHECK_THROWS_AS((void)coxcnn::load_idx(imgs2, lbls2, {}), coxcnn::FormatError);

    CHECK_THROWS_AS((void)coxcnn::load_idx(dir / "missing.idx", lbls2, {}), coxcnn::FormatError);
}

TEST_CASE("synth_digits: determinism, geometry, non-degenerate risks") {
    using coxcnn::SynthClass;
    const std::vector<SynthClass> classes{SynthClass::Ring, SynthClass::Spiral};
    const auto a = coxcnn::synth_digits(10, classes, 42);
    const auto b = coxcnn::synth_digits(10, classes, 42);
    CHECK(a == b);

    const auto big = coxcnn::synth_digits(200, classes, 7);
    const auto mask = coxcnn::generate_mask(28, 28, 1);
    std::vector<double> risks;
    for (const auto& img : big) {
        CHECK(img.width == 28);
        CHECK(img.height == 28);
        CHECK(img.bbox.width >= 1);
        CHECK(img.bbox.height >= 1);
        for (float p : img.pixels) {
            CHECK(p >= 0.0f);
            CHECK(p <= 1.0f);
        }
        // bbox center stays near the image center (generator contract)
        const double cx = img.bbox.x0 + img.bbox.width / 2.0;
        const double cy = img.bbox.y0 + img.bbox.height / 2.0;
        CHECK(std::abs(cx - 13.5) <= 4.0);
        CHECK(std::abs(cy - 13.5) <= 4.0);
        risks.push_back(coxcnn::risk_of(img, mask));
    }
    const double mean = std::accumulate(risks.begin(), risks.end(), 0.0) /
                        static_cast<double>(risks.size());
    double var = 0.0;
    for (double r : risks) var += (r - mean) * (r - mean);
    var /= static_cast<double>(risks.size());
    CHECK(std::sqrt(var) > 0.01);
}

TEST_CASE("simulate_survival: deterministic times, exact event split, rank structure") {
    const auto images = coxcnn::synth_digits(100, {coxcnn::SynthClass::Ring,
                                                   coxcnn::SynthClass::Spiral}, 11);
    const auto mask = coxcnn::generate_mask(28, 28, 12);
    const auto samples = coxcnn::simulate_survival(images, mask, 5.0, 0.5, 13);

    int events = 0;
    for (const auto& s : samples) {
        CHECK(s.true_risk > 0.0);
        CHECK(s.true_risk <= 1.0);
        if (s.record.event) {
            ++events;
            CHECK(s.record.time ==
                  doctest::Approx(5.0 * std::exp(-s.true_risk)).epsilon(1e-9));
        }
    }
    CHECK(events == 50);

    // uncensored times are a strictly decreasing function of risk:
    // rank correlation must be exactly -1 (checked as strict pairwise order)
    std::vector<const coxcnn::SimulatedSample*> ev;
    for (const auto& s : samples)
        if (s.record.event) ev.push_back(&s);
    for (std::size_t i = 0; i < ev.size(); ++i)
        for (std::size_t j = i + 1; j < ev.size(); ++j)
            if (ev[i]->true_risk != ev[j]->true_risk)
                CHECK((ev[i]->true_risk > ev[j]->true_risk) ==
                      (ev[i]->record.time < ev[j]->record.time));
}

TEST_CASE("dataset io: lossless round-trip") {
    coxcnn::Dataset ds;
    ds.lambda0 = 5.0;
    ds.seed = 99;
    ds.mask = coxcnn::generate_mask(28, 28, 99);
    ds.samples = coxcnn::simulate_survival(
        coxcnn::synth_digits(12, {coxcnn::SynthClass::Ring, coxcnn::SynthClass::Spiral}, 99),
        ds.mask, 5.0, 0.5, 100);

    const auto dir = temp_dir("roundtrip");
    coxcnn::write_dataset(ds, dir);
    const auto back = coxcnn::read_dataset(dir);
    CHECK(back.lambda0 == ds.lambda0);
    CHECK(back.seed == ds.seed);
    CHECK(back.mask == ds.mask);
    REQUIRE(back.samples.size() == ds.samples.size());
    for (std::size_t i = 0; i < ds.samples.size(); ++i) CHECK(back.samples[i] == ds.samples[i]);
}

TEST_CASE("dataset io: empty dataset is valid") {
    coxcnn::Dataset ds;
    ds.mask = coxcnn::generate_mask(4, 4, 1);
    const auto dir = temp_dir("empty");
    coxcnn::write_dataset(ds, dir);
    const auto back = coxcnn::read_dataset(dir);
    CHECK(back.samples.empty());
    CHECK(back.mask == ds.mask);
}

TEST_CASE("dataset io: corruption and format errors") {
    coxcnn::Dataset ds;
    ds.mask = coxcnn::generate_mask(28, 28, 5);
    ds.samples = coxcnn::simulate_survival(
        coxcnn::synth_digits(4, {coxcnn::SynthClass::Ring}, 5), ds.mask, 5.0, 0.5, 6);

    SUBCASE("missing image file names the sample") {
        const auto dir = temp_dir("missing");
        coxcnn::write_dataset(ds, dir);
        fs::remove(dir / "img_000002.bin");
        try {
            (void)coxcnn::read_dataset(dir);
            FAIL("expected CorruptionError");
        } catch (const coxcnn::CorruptionError& e) {
            CHECK(std::string(e.what()).find("sample 2") != std::string::npos);
        }
    }

    SUBCASE("flipped byte fails the checksum") {
        const auto dir = temp_dir("crc");
        coxcnn::write_dataset(ds, dir);
        std::fstream f(dir / "img_000001.bin", std::ios::binary | std::ios::in | std::ios::out);
        f.seekg(5);
        const char c = static_cast<char>(f.get());
        f.seekp(5);
        f.put(static_cast<char>(~c));
        f.close();
        CHECK_THROWS_AS((void)coxcnn::read_dataset(dir), coxcnn::CorruptionError);
    }

    SUBCASE("unknown format version is rejected") {
        const auto dir = temp_dir("version");
        coxcnn::write_dataset(ds, dir);
        std::ifstream in(dir / "manifest.json");
        std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        in.close();
        const auto pos = text.find("\"format_version\": 1");
        REQUIRE(pos != std::string::npos);
        text.replace(pos, 19, "\"format_version\": 9");
        std::ofstream out(dir / "manifest.json", std::ios::trunc);
        out << text;
        out.close();
        CHECK_THROWS_AS((void)coxcnn::read_dataset(dir), coxcnn::FormatError);
    }

    SUBCASE("missing manifest") {
        const auto dir = temp_dir("nomanifest");
        CHECK_THROWS_AS((void)coxcnn::read_dataset(dir), coxcnn::FormatError);
    }
}
