/*
 * coxcnn - imaging-based survival analysis with convolutional networks.
 *
 * File: bindings/pymodule.cpp
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
 *
 * Python bindings for the main operations: dataset simulation, the Cox
 * partial-likelihood loss, Harrell's concordance index, CNN and CPH-baseline
 * training with save/load round-trips, and the gradient-check suite.
 *
 * Conventions at the boundary:
 *  - images are float32 arrays of shape (n, height, width), single channel;
 *  - bounding boxes are int arrays of shape (n, 4) with columns
 *    x0, y0, width, height; when omitted, the full image is the region;
 *  - times are float64, events are bool, both of shape (n,);
 *  - seeds follow the CLI derivation: stream 0 of the global seed
 *    initializes model parameters, stream 1 seeds SGD shuffling/dropout.
 */
#include <cstring>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "coxcnn/baseline.hpp"
#include "coxcnn/cox.hpp"
#include "coxcnn/errors.hpp"
#include "coxcnn/eval.hpp"
#include "coxcnn/model.hpp"
#include "coxcnn/pipeline.hpp"
#include "coxcnn/rng.hpp"

namespace py = pybind11;
using namespace coxcnn;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;
using DoubleArray = py::array_t<double, py::array::c_style | py::array::forcecast>;
using BoolArray = py::array_t<bool, py::array::c_style | py::array::forcecast>;
using IntArray = py::array_t<int, py::array::c_style | py::array::forcecast>;

std::vector<SurvivalRecord> records_from(const DoubleArray& times, const BoolArray& events) {
    if (times.ndim() != 1 || events.ndim() != 1 || times.shape(0) != events.shape(0))
        throw std::invalid_argument("times and events must be 1-D arrays of equal length");
    const auto t = times.unchecked<1>();
    const auto e = events.unchecked<1>();
    std::vector<SurvivalRecord> records(static_cast<std::size_t>(times.shape(0)));
    for (py::ssize_t i = 0; i < times.shape(0); ++i)
        records[static_cast<std::size_t>(i)] = {t(i), e(i)};
    return records;
}

std::vector<Image2D> images_from(const FloatArray& images,
                                 const std::optional<IntArray>& bboxes) {
    if (images.ndim() != 3)
        throw std::invalid_argument("images must have shape (n, height, width)");
    const py::ssize_t n = images.shape(0);
    const int h = static_cast<int>(images.shape(1));
    const int w = static_cast<int>(images.shape(2));
    if (bboxes && (bboxes->ndim() != 2 || bboxes->shape(0) != n || bboxes->shape(1) != 4))
        throw std::invalid_argument(
            "bboxes must have shape (n, 4) with columns x0, y0, width, height");
    std::vector<Image2D> out(static_cast<std::size_t>(n));
    for (py::ssize_t i = 0; i < n; ++i) {
        Image2D& img = out[static_cast<std::size_t>(i)];
        img.width = w;
        img.height = h;
        img.channels = 1;
        const float* src = images.data(i, 0, 0);
        img.pixels.assign(src, src + static_cast<std::size_t>(w) * h);
        if (bboxes) {
            const auto b = bboxes->unchecked<2>();
            img.bbox = {b(i, 0), b(i, 1), b(i, 2), b(i, 3)};
        } else {
            img.bbox = {0, 0, w, h};
        }
        if (!img.valid())
            throw std::invalid_argument("invalid image or bounding box at index " +
                                        std::to_string(i));
    }
    return out;
}

std::vector<SimulatedSample> samples_from(const FloatArray& images,
                                          const std::optional<IntArray>& bboxes,
                                          const DoubleArray& times, const BoolArray& events) {
    std::vector<Image2D> imgs = images_from(images, bboxes);
    std::vector<SurvivalRecord> records = records_from(times, events);
    if (imgs.size() != records.size())
        throw std::invalid_argument("images and times/events disagree on the sample count");
    std::vector<SimulatedSample> samples(imgs.size());
    for (std::size_t i = 0; i < imgs.size(); ++i) {
        samples[i].image = std::move(imgs[i]);
        samples[i].record = records[i];
        samples[i].true_risk = std::numeric_limits<double>::quiet_NaN();
    }
    return samples;
}

// The simulated cohort as plain numpy arrays (images are uniform in size).
py::dict dataset_to_dict(const Dataset& dataset) {
    const py::ssize_t n = static_cast<py::ssize_t>(dataset.samples.size());
    const int h = dataset.samples.front().image.height;
    const int w = dataset.samples.front().image.width;
    FloatArray images({n, static_cast<py::ssize_t>(h), static_cast<py::ssize_t>(w)});
    IntArray bboxes({n, static_cast<py::ssize_t>(4)});
    DoubleArray times(n);
    BoolArray events(n);
    DoubleArray true_risks(n);
    auto img = images.mutable_unchecked<3>();
    auto box = bboxes.mutable_unchecked<2>();
    auto t = times.mutable_unchecked<1>();
    auto e = events.mutable_unchecked<1>();
    auto r = true_risks.mutable_unchecked<1>();
    for (py::ssize_t i = 0; i < n; ++i) {
        const SimulatedSample& s = dataset.samples[static_cast<std::size_t>(i)];
        if (s.image.height != h || s.image.width != w || s.image.channels != 1)
            throw std::invalid_argument("simulate: images are not uniform single-channel");
        std::memcpy(img.mutable_data(i, 0, 0), s.image.pixels.data(),
                    sizeof(float) * s.image.pixels.size());
        box(i, 0) = s.image.bbox.x0;
        box(i, 1) = s.image.bbox.y0;
        box(i, 2) = s.image.bbox.width;
        box(i, 3) = s.image.bbox.height;
        t(i) = s.record.time;
        e(i) = s.record.event;
        r(i) = s.true_risk;
    }
    py::dict out;
    out["images"] = images;
    out["bboxes"] = bboxes;
    out["times"] = times;
    out["events"] = events;
    out["true_risks"] = true_risks;
    return out;
}

SynthClass synth_class_of(int digit) {
    if (digit == 0) return SynthClass::Ring;
    if (digit == 6) return SynthClass::Spiral;
    throw std::invalid_argument("synthetic classes are 0 (ring) and 6 (spiral), got " +
                                std::to_string(digit));
}

}  // namespace

PYBIND11_MODULE(_coxcnn, m) {
    m.doc() = "Imaging-based survival analysis with convolutional networks.";
    m.attr("__version__") = "0.1.0";

    py::register_exception<FormatError>(m, "FormatError", PyExc_RuntimeError);
    py::register_exception<CorruptionError>(m, "CorruptionError", PyExc_RuntimeError);
    py::register_exception<TrainingDivergedError>(m, "TrainingDivergedError",
                                                  PyExc_RuntimeError);
    py::register_exception<NoEventsError>(m, "NoEventsError", PyExc_RuntimeError);
    py::register_exception<NoComparablePairsError>(m, "NoComparablePairsError",
                                                   PyExc_RuntimeError);
    py::register_exception<IllConditionedError>(m, "IllConditionedError", PyExc_RuntimeError);

    m.def(
        "simulate",
        [](int n, std::uint64_t seed, double lambda0, double event_fraction,
           const std::vector<int>& classes) {
            SimulateOptions opts;
            opts.n = n;
            opts.seed = seed;
            opts.lambda0 = lambda0;
            opts.non_censored_fraction = event_fraction;
            opts.classes.clear();
            for (int digit : classes) opts.classes.push_back(synth_class_of(digit));
            const Dataset dataset = simulate_dataset(opts);
            return dataset_to_dict(dataset);
        },
        py::arg("n"), py::arg("seed") = 0, py::arg("lambda0") = 5.0,
        py::arg("event_fraction") = 0.5, py::arg("classes") = std::vector<int>{0, 6},
        "Simulate a survival cohort from the synthetic digit source; returns a dict\n"
        "with images, bboxes, times, events and true_risks arrays.");

    m.def(
        "cox_loss",
        [](const DoubleArray& scores, const DoubleArray& times, const BoolArray& events) {
            const auto records = records_from(times, events);
            if (scores.ndim() != 1 ||
                static_cast<std::size_t>(scores.shape(0)) != records.size())
                throw std::invalid_argument("scores must be 1-D and match times/events");
            return neg_log_partial_likelihood(
                {scores.data(), static_cast<std::size_t>(scores.shape(0))}, records);
        },
        py::arg("scores"), py::arg("times"), py::arg("events"),
        "Cox negative log partial likelihood of per-sample risk scores.");

    m.def(
        "cox_loss_gradient",
        [](const DoubleArray& scores, const DoubleArray& times, const BoolArray& events) {
            const auto records = records_from(times, events);
            if (scores.ndim() != 1 ||
                static_cast<std::size_t>(scores.shape(0)) != records.size())
                throw std::invalid_argument("scores must be 1-D and match times/events");
            const std::vector<double> grad = cox_loss_gradient(
                {scores.data(), static_cast<std::size_t>(scores.shape(0))}, records);
            return py::array_t<double>(static_cast<py::ssize_t>(grad.size()), grad.data());
        },
        py::arg("scores"), py::arg("times"), py::arg("events"),
        "Analytic gradient of cox_loss with respect to the scores.");

    m.def(
        "concordance_index",
        [](const DoubleArray& risks, const DoubleArray& times, const BoolArray& events) {
            const auto records = records_from(times, events);
            if (risks.ndim() != 1 || static_cast<std::size_t>(risks.shape(0)) != records.size())
                throw std::invalid_argument("risks must be 1-D and match times/events");
            return c_index({risks.data(), static_cast<std::size_t>(risks.shape(0))}, records)
                .c_index;
        },
        py::arg("risks"), py::arg("times"), py::arg("events"),
        "Harrell's concordance index of risks against observed outcomes.");

    m.def(
        "concordance_counts",
        [](const DoubleArray& risks, const DoubleArray& times, const BoolArray& events) {
            const auto records = records_from(times, events);
            if (risks.ndim() != 1 || static_cast<std::size_t>(risks.shape(0)) != records.size())
                throw std::invalid_argument("risks must be 1-D and match times/events");
            const CIndexResult r =
                c_index({risks.data(), static_cast<std::size_t>(risks.shape(0))}, records);
            py::dict out;
            out["c_index"] = r.c_index;
            out["concordant"] = r.concordant;
            out["discordant"] = r.discordant;
            out["tied_risk"] = r.tied_risk;
            out["comparable_pairs"] = r.comparable_pairs;
            return out;
        },
        py::arg("risks"), py::arg("times"), py::arg("events"),
        "Pair-level concordance accounting (c_index, concordant, discordant,\n"
        "tied_risk, comparable_pairs).");

    m.def(
        "default_config_json", [] { return config_to_json(CoxCnnConfig{}); },
        "The default CNN configuration as a JSON string (edit and pass to Model.train).");

    m.def(
        "gradcheck",
        [](int seeds, std::uint64_t base_seed, bool check_double, bool check_float) {
            GradcheckSuiteOptions opts;
            opts.seeds = seeds;
            opts.base_seed = base_seed;
            opts.check_double = check_double;
            opts.check_float = check_float;
            opts.validate();
            GradcheckSuiteReport report;
            {
                py::gil_scoped_release release;
                report = run_gradcheck_suite(opts);
            }
            return py::make_tuple(report.passed, render_gradcheck_report(report));
        },
        py::arg("seeds") = 20, py::arg("base_seed") = 1, py::arg("check_double") = true,
        py::arg("check_float") = true,
        "Run the finite-difference gradient checks; returns (passed, report).");

    py::class_<CoxCnnModel>(m, "Model", "A trained survival CNN.")
        .def_static(
            "train",
            [](const FloatArray& images, const DoubleArray& times, const BoolArray& events,
               const std::optional<IntArray>& bboxes, const std::string& config_json,
               std::uint64_t seed) {
                CoxCnnConfig cfg =
                    config_json.empty() ? CoxCnnConfig{} : config_from_json(config_json);
                const Rng root(seed);
                cfg.sgd.seed = root.derive(1).next_u64();
                cfg.validate();
                const auto samples = samples_from(images, bboxes, times, events);
                auto model = build_model<float>(cfg, 1, root.derive(0).next_u64());
                {
                    py::gil_scoped_release release;
                    train_model(model, samples);
                }
                return model;
            },
            py::arg("images"), py::arg("times"), py::arg("events"),
            py::arg("bboxes") = std::nullopt, py::arg("config_json") = std::string(),
            py::arg("seed") = 0,
            "Train a CNN on the Cox partial likelihood; config_json defaults to\n"
            "default_config_json().")
        .def(
            "risks",
            [](const CoxCnnModel& model, const FloatArray& images,
               const std::optional<IntArray>& bboxes) {
                const auto imgs = images_from(images, bboxes);
                DoubleArray out(static_cast<py::ssize_t>(imgs.size()));
                auto r = out.mutable_unchecked<1>();
                py::gil_scoped_release release;
                for (std::size_t i = 0; i < imgs.size(); ++i)
                    r(static_cast<py::ssize_t>(i)) = predict_risk(model, imgs[i]);
                return out;
            },
            py::arg("images"), py::arg("bboxes") = std::nullopt,
            "Inference-mode scalar risk per image (dropout off).")
        .def(
            "save", [](const CoxCnnModel& model, const std::filesystem::path& path) {
                save_model(model, path);
            }, py::arg("path"), "Write the model container to disk.")
        .def_static(
            "load", [](const std::filesystem::path& path) { return load_model(path); },
            py::arg("path"), "Read a model container written by save().")
        .def_property_readonly(
            "config_json",
            [](const CoxCnnModel& model) { return config_to_json(model.config); },
            "The model configuration as a JSON string.")
        .def_readonly("input_channels", &CoxCnnModel::input_channels)
        .def_readonly("epochs_run", &CoxCnnModel::epochs_run)
        .def_readonly("final_loss", &CoxCnnModel::final_loss)
        .def_readonly("seed", &CoxCnnModel::seed);

    py::class_<BaselineModel>(m, "Baseline",
                              "PCA + linear Cox proportional-hazards baseline.")
        .def_static(
            "train",
            [](const FloatArray& images, const DoubleArray& times, const BoolArray& events,
               const std::optional<IntArray>& bboxes, int pca_components) {
                BaselineConfig cfg;
                cfg.pca_components = pca_components;
                const auto samples = samples_from(images, bboxes, times, events);
                py::gil_scoped_release release;
                return fit_baseline(samples, cfg);
            },
            py::arg("images"), py::arg("times"), py::arg("events"),
            py::arg("bboxes") = std::nullopt, py::arg("pca_components") = 8,
            "Fit the baseline by Newton-Raphson on PCA-reduced image features.")
        .def(
            "risks",
            [](const BaselineModel& model, const FloatArray& images,
               const std::optional<IntArray>& bboxes) {
                const auto imgs = images_from(images, bboxes);
                DoubleArray out(static_cast<py::ssize_t>(imgs.size()));
                auto r = out.mutable_unchecked<1>();
                py::gil_scoped_release release;
                for (std::size_t i = 0; i < imgs.size(); ++i)
                    r(static_cast<py::ssize_t>(i)) = baseline_risk(model, imgs[i]);
                return out;
            },
            py::arg("images"), py::arg("bboxes") = std::nullopt,
            "Linear risk score x'beta per image.")
        .def(
            "save", [](const BaselineModel& model, const std::filesystem::path& path) {
                save_baseline(model, path);
            }, py::arg("path"), "Write the baseline as canonical JSON.")
        .def_static(
            "load", [](const std::filesystem::path& path) { return load_baseline(path); },
            py::arg("path"), "Read a baseline written by save().")
        .def_property_readonly(
            "beta",
            [](const BaselineModel& model) {
                return py::array_t<double>(static_cast<py::ssize_t>(model.beta.size()),
                                           model.beta.data());
            },
            "Fitted Cox coefficients in PCA space.")
        .def_property_readonly(
            "converged", [](const BaselineModel& model) { return model.fit.converged; })
        .def_property_readonly(
            "iterations", [](const BaselineModel& model) { return model.fit.iterations; })
        .def_property_readonly(
            "final_loss", [](const BaselineModel& model) { return model.fit.final_loss; });
}
