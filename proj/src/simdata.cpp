/*
 * coxcnn - imaging-based survival analysis with convolutional networks.
 *
 * File: src/simdata.cpp
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
#include "coxcnn/simdata.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <sstream>

#include <json.hpp>
#include <zlib.h>

#include "coxcnn/errors.hpp"
#include "coxcnn/rng.hpp"

static_assert(std::endian::native == std::endian::little,
              "dataset binaries are written little-endian; big-endian hosts are unsupported");

namespace coxcnn {

using nlohmann::json;

WeightMask generate_mask(int width, int height, std::uint64_t seed) {
    if (width <= 0 || height <= 0) throw std::invalid_argument("generate_mask: dims must be positive");
    WeightMask m;
    m.width = width;
    m.height = height;
    m.seed = seed;
    m.values.resize(static_cast<std::size_t>(width) * height);
    Rng rng(seed);
    for (auto& v : m.values) v = static_cast<float>(rng.uniform());
    return m;
}

double risk_of(const Image2D& image, const WeightMask& mask) {
    if (image.channels != 1)
        throw std::invalid_argument("risk_of: simulator images must be single-channel");
    if (image.width != mask.width || image.height != mask.height)
        throw std::invalid_argument("risk_of: image and mask shapes differ");
    double s = 0.0;
    for (std::size_t i = 0; i < image.pixels.size(); ++i) {
        const double p = static_cast<double>(image.pixels[i]) * static_cast<double>(mask.values[i]);
        s += p * p;
    }
    return std::exp(-s);
}

double survival_time(double risk, double lambda0) {
    return lambda0 * std::exp(-risk);
}

void apply_censoring(std::vector<SimulatedSample>& samples, double non_censored_fraction,
                     std::uint64_t seed) {
    if (samples.empty()) throw std::invalid_argument("apply_censoring: empty sample list");
    if (!(non_censored_fraction > 0.0 && non_censored_fraction <= 1.0))
        throw std::invalid_argument("apply_censoring: fraction must lie in (0, 1]");
    const auto n = samples.size();
    const auto n_events = static_cast<std::size_t>(
        std::llround(non_censored_fraction * static_cast<double>(n)));

    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    Rng rng(seed);
    rng.shuffle(order.begin(), order.end());

    for (std::size_t r = 0; r < n; ++r) {
        SimulatedSample& s = samples[order[r]];
        if (r < n_events) {
            s.record.event = true;
        } else {
            s.record.event = false;
            const double u = rng.uniform(0.1, 1.0);
            s.record.time *= u;
        }
    }
}

// ---------------------------------------------------------------------------
// IDX ingestion
// ---------------------------------------------------------------------------

namespace {

std::vector<unsigned char> read_file_bytes(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw FormatError("cannot open file: " + path.string());
    return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

std::uint32_t read_be_u32(const std::vector<unsigned char>& b, std::size_t off,
                          const std::filesystem::path& path) {
    if (off + 4 > b.size()) throw FormatError("truncated IDX file: " + path.string());
    return (static_cast<std::uint32_t>(b[off]) << 24) | (static_cast<std::uint32_t>(b[off + 1]) << 16) |
           (static_cast<std::uint32_t>(b[off + 2]) << 8) | static_cast<std::uint32_t>(b[off + 3]);
}

} // namespace

std::vector<Image2D> load_idx(const std::filesystem::path& images_path,
                              const std::filesystem::path& labels_path,
                              const std::set<int>& keep_labels, int* skipped) {
    const auto img_bytes = read_file_bytes(images_path);
    const auto lbl_bytes = read_file_bytes(labels_path);

    if (read_be_u32(img_bytes, 0, images_path) != 0x00000803u)
        throw FormatError("bad IDX image magic in " + images_path.string());
    if (read_be_u32(lbl_bytes, 0, labels_path) != 0x00000801u)
        throw FormatError("bad IDX label magic in " + labels_path.string());

    const std::uint32_t n_img = read_be_u32(img_bytes, 4, images_path);
    const std::uint32_t rows = read_be_u32(img_bytes, 8, images_path);
    const std::uint32_t cols = read_be_u32(img_bytes, 12, images_path);
    const std::uint32_t n_lbl = read_be_u32(lbl_bytes, 4, labels_path);
    if (n_img != n_lbl)
        throw FormatError("IDX image/label counts differ: " + images_path.string());

    const std::size_t pixels_per = static_cast<std::size_t>(rows) * cols;
    if (img_bytes.size() < 16 + static_cast<std::size_t>(n_img) * pixels_per)
        throw FormatError("truncated IDX image payload: " + images_path.string());
    if (lbl_bytes.size() < 8 + n_lbl)
        throw FormatError("truncated IDX label payload: " + labels_path.string());

    std::vector<Image2D> out;
    int skip_count = 0;
    for (std::uint32_t i = 0; i < n_img; ++i) {
        const int label = lbl_bytes[8 + i];
        if (!keep_labels.empty() && !keep_labels.count(label)) continue;
        Image2D img;
        img.width = static_cast<int>(cols);
        img.height = static_cast<int>(rows);
        img.channels = 1;
        img.pixels.resize(pixels_per);
        const unsigned char* src = img_bytes.data() + 16 + static_cast<std::size_t>(i) * pixels_per;
        for (std::size_t p = 0; p < pixels_per; ++p)
            img.pixels[p] = static_cast<float>(src[p]) / 255.0f;
        auto bbox = tight_bbox(img);
        if (!bbox) {
            ++skip_count; // all-black digit carries no region of interest
            continue;
        }
        img.bbox = *bbox;
        out.push_back(std::move(img));
    }
    if (skipped) *skipped = skip_count;
    return out;
}

// ---------------------------------------------------------------------------
// Synthetic digits
// ---------------------------------------------------------------------------

namespace {

constexpr int kSynthSize = 28;
constexpr float kInkCutoff = 0.02f;

Image2D blank_synth_image() {
    Image2D img;
    img.width = kSynthSize;
    img.height = kSynthSize;
    img.channels = 1;
    img.pixels.assign(static_cast<std::size_t>(kSynthSize) * kSynthSize, 0.0f);
    return img;
}

void apply_pixel_jitter_and_bbox(Image2D& img, Rng& rng) {
    for (auto& p : img.pixels) {
        const float j = static_cast<float>(rng.uniform(0.8, 1.2));
        p *= j;
        if (p < kInkCutoff) p = 0.0f;
    }
    const auto bbox = tight_bbox(img);
    if (!bbox) throw std::logic_error("synth digit rendered empty");
    img.bbox = *bbox;
}

Image2D render_ring(Rng& rng) {
    Image2D img = blank_synth_image();
    const double cx = 13.5 + rng.uniform(-2.0, 2.0);
    const double cy = 13.5 + rng.uniform(-2.0, 2.0);
    const double rx = rng.uniform(5.0, 7.6);
    const double ry = rng.uniform(5.6, 8.0);
    const double phi = rng.uniform(-0.35, 0.35);
    const double thick = rng.uniform(1.1, 2.0);
    const double amp = rng.uniform(0.10, 0.32);
    const double r_eff = 0.5 * (rx + ry);
    const double cphi = std::cos(phi), sphi = std::sin(phi);
    for (int y = 0; y < kSynthSize; ++y) {
        for (int x = 0; x < kSynthSize; ++x) {
            const double u = x - cx, v = y - cy;
            const double ur = u * cphi + v * sphi;
            const double vr = -u * sphi + v * cphi;
            const double rho = std::sqrt((ur / rx) * (ur / rx) + (vr / ry) * (vr / ry));
            const double d = std::abs(rho - 1.0) * r_eff;
            img.at(0, y, x) = static_cast<float>(amp * std::exp(-(d / thick) * (d / thick)));
        }
    }
    apply_pixel_jitter_and_bbox(img, rng);
    return img;
}

Image2D render_spiral(Rng& rng) {
    Image2D img = blank_synth_image();
    const double cx = 13.5 + rng.uniform(-2.0, 2.0);
    const double cy = 13.5 + rng.uniform(-2.0, 2.0);
    const double r_start = rng.uniform(7.2, 9.0);
    const double r_end = rng.uniform(2.8, 4.2);
    const double theta0 = rng.uniform(1.3, 1.9);
    const double sweep = rng.uniform(2.2, 2.8) * std::numbers::pi;
    const double thick = rng.uniform(1.0, 1.8);
    const double amp = rng.uniform(0.10, 0.32);

    constexpr int kCurvePoints = 160;
    std::array<double, kCurvePoints> px{}, py{};
    for (int i = 0; i < kCurvePoints; ++i) {
        const double t = static_cast<double>(i) / (kCurvePoints - 1);
        const double r = r_start + (r_end - r_start) * t;
        const double theta = theta0 + sweep * t;
        px[i] = cx + r * std::cos(theta);
        py[i] = cy + r * std::sin(theta);
    }
    for (int y = 0; y < kSynthSize; ++y) {
        for (int x = 0; x < kSynthSize; ++x) {
            double best = 1e30;
            for (int i = 0; i < kCurvePoints; ++i) {
                const double dx = x - px[i], dy = y - py[i];
                best = std::min(best, dx * dx + dy * dy);
            }
            img.at(0, y, x) = static_cast<float>(amp * std::exp(-best / (thick * thick)));
        }
    }
    apply_pixel_jitter_and_bbox(img, rng);
    return img;
}

} // namespace

std::vector<Image2D> synth_digits(int n, const std::vector<SynthClass>& classes,
                                  std::uint64_t seed) {
    if (n <= 0) throw std::invalid_argument("synth_digits: n must be positive");
    if (classes.empty()) throw std::invalid_argument("synth_digits: need at least one class");
    std::vector<Image2D> out;
    out.reserve(static_cast<std::size_t>(n));
    const Rng base(seed);
    for (int i = 0; i < n; ++i) {
        Rng rng = base.derive(static_cast<std::uint64_t>(i));
        const SynthClass cls = classes[static_cast<std::size_t>(i) % classes.size()];
        out.push_back(cls == SynthClass::Ring ? render_ring(rng) : render_spiral(rng));
    }
    return out;
}

std::vector<SimulatedSample> simulate_survival(std::vector<Image2D> images,
                                               const WeightMask& mask, double lambda0,
                                               double non_censored_fraction,
                                               std::uint64_t censor_seed) {
    std::vector<SimulatedSample> samples;
    samples.reserve(images.size());
    for (auto& img : images) {
        SimulatedSample s;
        s.true_risk = risk_of(img, mask);
        s.record = SurvivalRecord{survival_time(s.true_risk, lambda0), true};
        s.image = std::move(img);
        samples.push_back(std::move(s));
    }
    apply_censoring(samples, non_censored_fraction, censor_seed);
    return samples;
}

// ---------------------------------------------------------------------------
// Dataset directory IO
// ---------------------------------------------------------------------------

namespace {

constexpr int kDatasetFormatVersion = 1;

std::uint32_t crc32_of(const void* data, std::size_t len) {
    auto crc = ::crc32(0L, Z_NULL, 0);
    return static_cast<std::uint32_t>(
        ::crc32(crc, static_cast<const Bytef*>(data), static_cast<uInt>(len)));
}

void write_float_blob(const std::filesystem::path& path, const std::vector<float>& values) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw CorruptionError("cannot write " + path.string());
    f.write(reinterpret_cast<const char*>(values.data()),
            static_cast<std::streamsize>(values.size() * sizeof(float)));
    if (!f) throw CorruptionError("short write to " + path.string());
}

std::vector<float> read_float_blob(const std::filesystem::path& path, std::size_t expected,
                                   std::uint32_t expected_crc, const std::string& what) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw CorruptionError("missing binary file for " + what + ": " + path.string());
    std::vector<float> values(expected);
    f.read(reinterpret_cast<char*>(values.data()),
           static_cast<std::streamsize>(expected * sizeof(float)));
    if (static_cast<std::size_t>(f.gcount()) != expected * sizeof(float))
        throw CorruptionError("truncated binary file for " + what + ": " + path.string());
    if (crc32_of(values.data(), values.size() * sizeof(float)) != expected_crc)
        throw CorruptionError("checksum mismatch for " + what + ": " + path.string());
    return values;
}

std::string image_file_name(std::size_t id) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "img_%06zu.bin", id);
    return buf;
}

} // namespace

void write_dataset(const Dataset& dataset, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);

    json manifest;
    manifest["format_version"] = kDatasetFormatVersion;
    manifest["n"] = dataset.samples.size();
    manifest["lambda0"] = dataset.lambda0;
    manifest["seed"] = dataset.seed;

    write_float_blob(dir / "mask.bin", dataset.mask.values);
    manifest["mask"] = {
        {"file", "mask.bin"},
        {"width", dataset.mask.width},
        {"height", dataset.mask.height},
        {"seed", dataset.mask.seed},
        {"crc32", crc32_of(dataset.mask.values.data(), dataset.mask.values.size() * sizeof(float))},
    };

    json samples = json::array();
    for (std::size_t id = 0; id < dataset.samples.size(); ++id) {
        const SimulatedSample& s = dataset.samples[id];
        const std::string file = image_file_name(id);
        write_float_blob(dir / file, s.image.pixels);
        json rec = {
            {"id", id},
            {"image", file},
            {"width", s.image.width},
            {"height", s.image.height},
            {"channels", s.image.channels},
            {"bbox", {s.image.bbox.x0, s.image.bbox.y0, s.image.bbox.width, s.image.bbox.height}},
            {"time", s.record.time},
            {"event", s.record.event},
            {"crc32", crc32_of(s.image.pixels.data(), s.image.pixels.size() * sizeof(float))},
        };
        if (std::isfinite(s.true_risk))
            rec["true_risk"] = s.true_risk;
        else
            rec["true_risk"] = nullptr;
        samples.push_back(std::move(rec));
    }
    manifest["samples"] = std::move(samples);

    std::ofstream f(dir / "manifest.json", std::ios::binary | std::ios::trunc);
    if (!f) throw CorruptionError("cannot write manifest.json in " + dir.string());
    f << manifest.dump(2) << '\n';
}

Dataset read_dataset(const std::filesystem::path& dir) {
    std::ifstream f(dir / "manifest.json", std::ios::binary);
    if (!f) throw FormatError("missing manifest.json in " + dir.string());
    json manifest;
    try {
        manifest = json::parse(f);
    } catch (const json::exception& e) {
        throw FormatError("malformed manifest.json in " + dir.string() + ": " + e.what());
    }

    try {
        if (manifest.at("format_version").get<int>() != kDatasetFormatVersion)
            throw FormatError("unsupported dataset format_version in " + dir.string());

        Dataset ds;
        ds.lambda0 = manifest.at("lambda0").get<double>();
        ds.seed = manifest.at("seed").get<std::uint64_t>();

        const json& m = manifest.at("mask");
        ds.mask.width = m.at("width").get<int>();
        ds.mask.height = m.at("height").get<int>();
        ds.mask.seed = m.at("seed").get<std::uint64_t>();
        ds.mask.values = read_float_blob(
            dir / m.at("file").get<std::string>(),
            static_cast<std::size_t>(ds.mask.width) * ds.mask.height,
            m.at("crc32").get<std::uint32_t>(), "mask");

        const json& samples = manifest.at("samples");
        ds.samples.reserve(samples.size());
        for (const json& rec : samples) {
            SimulatedSample s;
            const auto id = rec.at("id").get<std::size_t>();
            s.image.width = rec.at("width").get<int>();
            s.image.height = rec.at("height").get<int>();
            s.image.channels = rec.at("channels").get<int>();
            const auto& bb = rec.at("bbox");
            s.image.bbox = BoundingBox{bb.at(0).get<int>(), bb.at(1).get<int>(),
                                       bb.at(2).get<int>(), bb.at(3).get<int>()};
            s.image.pixels = read_float_blob(
                dir / rec.at("image").get<std::string>(),
                static_cast<std::size_t>(s.image.width) * s.image.height * s.image.channels,
                rec.at("crc32").get<std::uint32_t>(), "sample " + std::to_string(id));
            s.record.time = rec.at("time").get<double>();
            s.record.event = rec.at("event").get<bool>();
            s.true_risk = rec.at("true_risk").is_null()
                              ? std::numeric_limits<double>::quiet_NaN()
                              : rec.at("true_risk").get<double>();
            if (!s.image.valid())
                throw FormatError("invalid image geometry for sample " + std::to_string(id));
            ds.samples.push_back(std::move(s));
        }
        if (ds.samples.size() != manifest.at("n").get<std::size_t>())
            throw FormatError("manifest n does not match sample list in " + dir.string());
        return ds;
    } catch (const json::exception& e) {
        throw FormatError("manifest.json missing fields in " + dir.string() + ": " + e.what());
    }
}

} // namespace coxcnn
