/*
 * coxcnn - imaging-based survival analysis with convolutional networks.
 *
 * File: src/baseline.cpp
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
#include "coxcnn/baseline.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <stdexcept>

#include <json.hpp>

#include "coxcnn/errors.hpp"
#include "coxcnn/spp.hpp"

namespace coxcnn {

namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;
using RowMajorMapd =
    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

constexpr int kHistogramBins = 16;
constexpr int kCropGrid = 8;

} // namespace

// ---------------------------------------------------------------------------
// Feature extraction
// ---------------------------------------------------------------------------

std::vector<double> extract_features(const Image2D& image) {
    if (!image.valid()) throw std::invalid_argument("extract_features: invalid image");
    const std::size_t npix = image.pixels.size();
    const double inv_n = 1.0 / static_cast<double>(npix);

    double sum = 0.0;
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    for (const float p : image.pixels) {
        sum += p;
        lo = std::min(lo, static_cast<double>(p));
        hi = std::max(hi, static_cast<double>(p));
    }
    const double mean = sum * inv_n;
    double m2 = 0.0, m3 = 0.0, m4 = 0.0;
    for (const float p : image.pixels) {
        const double c = p - mean;
        const double c2 = c * c;
        m2 += c2;
        m3 += c2 * c;
        m4 += c2 * c2;
    }
    const double variance = m2 * inv_n;
    const double sigma = std::sqrt(variance);
    const double skewness = sigma > 1e-12 ? (m3 * inv_n) / (sigma * sigma * sigma) : 0.0;
    const double kurtosis = sigma > 1e-12 ? (m4 * inv_n) / (variance * variance) : 0.0;

    std::vector<double> features;
    features.reserve(6 + kHistogramBins + 1 + kCropGrid * kCropGrid);
    features.insert(features.end(), {mean, variance, skewness, kurtosis, lo, hi});

    double hist[kHistogramBins] = {};
    for (const float p : image.pixels) {
        const int b = std::clamp(static_cast<int>(std::floor(p * kHistogramBins)), 0,
                                 kHistogramBins - 1);
        hist[b] += inv_n;
    }
    features.insert(features.end(), hist, hist + kHistogramBins);

    const auto& bb = image.bbox;
    features.push_back(static_cast<double>(bb.width) * bb.height /
                       (static_cast<double>(image.width) * image.height));

    // 8x8 average-pooled crop of the bounding box, channels averaged. Bins
    // follow the same floor/ceil span rule as the SPP layer.
    for (int by = 0; by < kCropGrid; ++by) {
        const auto [y_lo, y_hi] = spp_bin_span(by, bb.height, kCropGrid);
        for (int bx = 0; bx < kCropGrid; ++bx) {
            const auto [x_lo, x_hi] = spp_bin_span(bx, bb.width, kCropGrid);
            double acc = 0.0;
            long count = 0;
            for (int c = 0; c < image.channels; ++c)
                for (int y = y_lo; y < y_hi; ++y)
                    for (int x = x_lo; x < x_hi; ++x) {
                        acc += image.at(c, bb.y0 + y, bb.x0 + x);
                        ++count;
                    }
            features.push_back(acc / static_cast<double>(count));
        }
    }
    return features;
}

FeatureMatrix extract_features(std::span<const SimulatedSample> samples) {
    if (samples.empty()) throw std::invalid_argument("extract_features: empty sample set");
    const std::vector<double> first = extract_features(samples[0].image);
    FeatureMatrix out(static_cast<int>(samples.size()), static_cast<int>(first.size()));
    std::copy(first.begin(), first.end(), out.values.begin());
    for (std::size_t i = 1; i < samples.size(); ++i) {
        const std::vector<double> f = extract_features(samples[i].image);
        std::copy(f.begin(), f.end(), out.values.begin() + static_cast<std::ptrdiff_t>(i * f.size()));
    }
    return out;
}

// ---------------------------------------------------------------------------
// PCA
// ---------------------------------------------------------------------------

PcaModel pca_fit(const FeatureMatrix& x, int k) {
    if (x.n < 1 || x.d < 1) throw std::invalid_argument("pca_fit: empty matrix");
    if (k < 1 || k > std::min(x.n, x.d))
        throw std::invalid_argument("pca_fit: k must lie in [1, min(n, d)]");

    RowMajorMapd data(x.values.data(), x.n, x.d);
    const VectorXd mean = data.colwise().mean();
    const MatrixXd centered = data.rowwise() - mean.transpose();
    const MatrixXd cov = centered.transpose() * centered / static_cast<double>(x.n);

    Eigen::SelfAdjointEigenSolver<MatrixXd> solver(cov);
    if (solver.info() != Eigen::Success)
        throw IllConditionedError("pca_fit: eigendecomposition failed");

    PcaModel model;
    model.k = k;
    model.d = x.d;
    model.mean.assign(mean.data(), mean.data() + x.d);
    model.components.resize(static_cast<std::size_t>(k) * x.d);
    model.eigenvalues.resize(static_cast<std::size_t>(k));

    // Eigen returns ascending eigenvalues; emit the top k in descending order
    // with a deterministic sign (largest-magnitude coordinate positive).
    for (int r = 0; r < k; ++r) {
        const int col = x.d - 1 - r;
        VectorXd v = solver.eigenvectors().col(col);
        int arg = 0;
        for (int j = 1; j < x.d; ++j)
            if (std::abs(v[j]) > std::abs(v[arg])) arg = j;
        if (v[arg] < 0.0) v = -v;
        for (int j = 0; j < x.d; ++j)
            model.components[static_cast<std::size_t>(r) * x.d + j] = v[j];
        model.eigenvalues[static_cast<std::size_t>(r)] = solver.eigenvalues()[col];
    }
    return model;
}

std::vector<double> pca_apply(const PcaModel& pca, std::span<const double> x) {
    if (static_cast<int>(x.size()) != pca.d)
        throw std::invalid_argument("pca_apply: dimension mismatch");
    std::vector<double> out(static_cast<std::size_t>(pca.k), 0.0);
    for (int r = 0; r < pca.k; ++r) {
        double acc = 0.0;
        const double* comp = pca.components.data() + static_cast<std::size_t>(r) * pca.d;
        for (int j = 0; j < pca.d; ++j) acc += comp[j] * (x[static_cast<std::size_t>(j)] - pca.mean[static_cast<std::size_t>(j)]);
        out[static_cast<std::size_t>(r)] = acc;
    }
    return out;
}

FeatureMatrix pca_apply(const PcaModel& pca, const FeatureMatrix& x) {
    if (x.d != pca.d) throw std::invalid_argument("pca_apply: dimension mismatch");
    FeatureMatrix out(x.n, pca.k);
    for (int i = 0; i < x.n; ++i) {
        const std::vector<double> row = pca_apply(pca, x.row(i));
        std::copy(row.begin(), row.end(),
                  out.values.begin() + static_cast<std::ptrdiff_t>(i) * pca.k);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Column standardization
// ---------------------------------------------------------------------------

Standardizer standardizer_fit(const FeatureMatrix& x) {
    if (x.n < 1) throw std::invalid_argument("standardizer_fit: empty matrix");
    Standardizer s;
    s.mean.assign(static_cast<std::size_t>(x.d), 0.0);
    s.scale.assign(static_cast<std::size_t>(x.d), 1.0);
    for (int j = 0; j < x.d; ++j) {
        double acc = 0.0;
        for (int i = 0; i < x.n; ++i) acc += x.at(i, j);
        s.mean[static_cast<std::size_t>(j)] = acc / x.n;
    }
    for (int j = 0; j < x.d; ++j) {
        double acc = 0.0;
        for (int i = 0; i < x.n; ++i) {
            const double c = x.at(i, j) - s.mean[static_cast<std::size_t>(j)];
            acc += c * c;
        }
        const double sd = std::sqrt(acc / x.n);
        if (sd > 1e-12) s.scale[static_cast<std::size_t>(j)] = sd;
    }
    return s;
}

FeatureMatrix standardizer_apply(const Standardizer& s, const FeatureMatrix& x) {
    if (static_cast<std::size_t>(x.d) != s.mean.size())
        throw std::invalid_argument("standardizer_apply: dimension mismatch");
    FeatureMatrix out(x.n, x.d);
    for (int i = 0; i < x.n; ++i)
        for (int j = 0; j < x.d; ++j)
            out.at(i, j) = (x.at(i, j) - s.mean[static_cast<std::size_t>(j)]) /
                           s.scale[static_cast<std::size_t>(j)];
    return out;
}

std::vector<double> standardizer_apply(const Standardizer& s, std::span<const double> x) {
    if (x.size() != s.mean.size())
        throw std::invalid_argument("standardizer_apply: dimension mismatch");
    std::vector<double> out(x.size());
    for (std::size_t j = 0; j < x.size(); ++j) out[j] = (x[j] - s.mean[j]) / s.scale[j];
    return out;
}

// ---------------------------------------------------------------------------
// Linear Cox fit (Newton-Raphson)
// ---------------------------------------------------------------------------

namespace {

/// Precomputed traversal order: indices sorted by time descending, grouped by
/// tied times. Walking groups from latest to earliest lets suffix sums over
/// exp(eta) mirror the inclusive risk sets exactly (ties enter the
/// accumulators before their own events are processed).
struct CoxOrder {
    std::vector<int> sorted;            // by time descending
    std::vector<std::pair<int, int>> groups; // [begin, end) runs of equal time in `sorted`
};

CoxOrder make_cox_order(std::span<const SurvivalRecord> records) {
    CoxOrder order;
    order.sorted.resize(records.size());
    std::iota(order.sorted.begin(), order.sorted.end(), 0);
    std::stable_sort(order.sorted.begin(), order.sorted.end(), [&](int a, int b) {
        return records[static_cast<std::size_t>(a)].time > records[static_cast<std::size_t>(b)].time;
    });
    int begin = 0;
    for (int i = 1; i <= static_cast<int>(order.sorted.size()); ++i) {
        if (i == static_cast<int>(order.sorted.size()) ||
            records[static_cast<std::size_t>(order.sorted[static_cast<std::size_t>(i)])].time !=
                records[static_cast<std::size_t>(order.sorted[static_cast<std::size_t>(begin)])].time) {
            order.groups.emplace_back(begin, i);
            begin = i;
        }
    }
    return order;
}

/// One streaming evaluation of the Cox loss at `beta`; gradient and Hessian
/// are filled when requested.
///
/// The risk-set sums are kept as (s0, s1, s2) * exp(m) with m the running
/// maximum of the linear predictors seen so far, rescaled whenever a new
/// maximum arrives. A single global shift is not enough here: on separated
/// data Newton legitimately drives |beta| into the hundreds, and risk sets
/// far below the global maximum then underflow to 0/0 even though their
/// log-sums are perfectly representable. With the running rescale s0 stays
/// in [1, n] for every risk set, so the evaluation never produces a
/// non-finite gradient or Hessian for finite inputs.
double cph_eval(const RowMajorMapd& x, std::span<const SurvivalRecord> records,
                const CoxOrder& order, const VectorXd& beta, VectorXd* grad, MatrixXd* hess) {
    const int d = static_cast<int>(x.cols());
    const VectorXd eta = x * beta;

    double loss = 0.0;
    if (grad) grad->setZero(d);
    if (hess) hess->setZero(d, d);

    double m = -std::numeric_limits<double>::infinity();
    double s0 = 0.0;
    VectorXd s1 = VectorXd::Zero(d);
    MatrixXd s2 = MatrixXd::Zero(d, d);
    for (const auto& [begin, end] : order.groups) {
        for (int p = begin; p < end; ++p) {
            const int j = order.sorted[static_cast<std::size_t>(p)];
            if (eta[j] > m) {
                const double rescale = std::exp(m - eta[j]); // 0 on the first sample
                s0 *= rescale;
                s1 *= rescale;
                if (hess) s2 *= rescale;
                m = eta[j];
            }
            const double w = std::exp(eta[j] - m);
            s0 += w;
            s1.noalias() += w * x.row(j).transpose();
            if (hess) s2.noalias() += w * x.row(j).transpose() * x.row(j);
        }
        for (int p = begin; p < end; ++p) {
            const int i = order.sorted[static_cast<std::size_t>(p)];
            if (!records[static_cast<std::size_t>(i)].event) continue;
            loss += std::log(s0) + m - eta[i];
            if (grad) grad->noalias() += s1 / s0 - x.row(i).transpose();
            if (hess)
                hess->noalias() += s2 / s0 - (s1 * s1.transpose()) / (s0 * s0);
        }
    }
    return loss;
}

} // namespace

CphFit cph_fit(const FeatureMatrix& x, std::span<const SurvivalRecord> records,
               const CphOptions& options) {
    if (x.n < 1 || x.d < 1) throw std::invalid_argument("cph_fit: empty design matrix");
    if (static_cast<std::size_t>(x.n) != records.size())
        throw std::invalid_argument("cph_fit: row count does not match record count");
    if (options.max_iter < 1) throw std::invalid_argument("cph_fit: max_iter must be >= 1");
    bool any_event = false;
    for (const auto& r : records) any_event |= r.event;
    if (!any_event) throw NoEventsError("cph_fit: no events");

    RowMajorMapd data(x.values.data(), x.n, x.d);
    const CoxOrder order = make_cox_order(records);

    CphFit fit;
    VectorXd beta = VectorXd::Zero(x.d);
    VectorXd grad(x.d);
    MatrixXd hess(x.d, x.d);
    double loss = cph_eval(data, records, order, beta, &grad, &hess);
    if (!std::isfinite(loss)) throw IllConditionedError("cph_fit: non-finite initial loss");
    fit.loss_history.push_back(loss);

    for (int iter = 0; iter < options.max_iter; ++iter) {
        if (grad.lpNorm<Eigen::Infinity>() < options.tolerance) {
            fit.converged = true;
            break;
        }

        // Newton direction, with a single ridge retry if the plain Hessian
        // fails to produce a finite descent direction.
        VectorXd delta;
        bool have_direction = false;
        for (int attempt = 0; attempt < 2 && !have_direction; ++attempt) {
            MatrixXd h = hess;
            if (attempt == 1) {
                h.diagonal().array() += options.ridge;
                fit.used_ridge = true;
            }
            const Eigen::LDLT<MatrixXd> ldlt(h);
            if (ldlt.info() != Eigen::Success) continue;
            delta = ldlt.solve(grad);
            have_direction = delta.allFinite() && grad.dot(delta) > 0.0;
        }
        if (!have_direction)
            throw IllConditionedError("cph_fit: Hessian is not usably positive definite");

        // Newton decrement rule: when the predicted decrease g'delta/2 drops
        // below the loss's own double resolution, the line search can no
        // longer make representable progress; the iterate is optimal to far
        // better precision than any caller needs.
        if (0.5 * grad.dot(delta) <= 1e-13 * (1.0 + std::abs(loss))) {
            fit.converged = true;
            break;
        }

        // Halve the step until the loss decreases; monotone by construction.
        double step = 1.0;
        double new_loss = std::numeric_limits<double>::infinity();
        VectorXd candidate;
        bool accepted = false;
        for (int halving = 0; halving < 60; ++halving, step *= 0.5) {
            candidate = beta - step * delta;
            new_loss = cph_eval(data, records, order, candidate, nullptr, nullptr);
            if (std::isfinite(new_loss) && new_loss <= loss) {
                accepted = true;
                break;
            }
        }
        if (!accepted) {
            // No descent at any step size: we are at numerical convergence.
            fit.converged = true;
            break;
        }

        beta = candidate;
        loss = new_loss;
        fit.loss_history.push_back(loss);
        ++fit.iterations;
        cph_eval(data, records, order, beta, &grad, &hess);
    }
    if (!fit.converged && grad.lpNorm<Eigen::Infinity>() < options.tolerance)
        fit.converged = true;

    fit.beta.assign(beta.data(), beta.data() + x.d);
    fit.final_loss = loss;
    return fit;
}

double cph_predict(std::span<const double> beta, std::span<const double> x) {
    if (beta.size() != x.size()) throw std::invalid_argument("cph_predict: dimension mismatch");
    double acc = 0.0;
    for (std::size_t j = 0; j < beta.size(); ++j) acc += beta[j] * x[j];
    return acc;
}

// ---------------------------------------------------------------------------
// Pipeline
// ---------------------------------------------------------------------------

BaselineModel fit_baseline(std::span<const SimulatedSample> samples, const BaselineConfig& config) {
    if (samples.empty()) throw std::invalid_argument("fit_baseline: empty sample set");
    const FeatureMatrix features = extract_features(samples);
    const int k = std::clamp(config.pca_components, 1, std::min(features.n, features.d));

    BaselineModel model;
    model.pca = pca_fit(features, k);
    const FeatureMatrix projected = pca_apply(model.pca, features);
    model.standardizer = standardizer_fit(projected);
    const FeatureMatrix z = standardizer_apply(model.standardizer, projected);

    std::vector<SurvivalRecord> records;
    records.reserve(samples.size());
    for (const auto& s : samples) records.push_back(s.record);

    model.fit = cph_fit(z, records, config.cph);
    model.beta = model.fit.beta;
    return model;
}

double baseline_risk(const BaselineModel& model, const Image2D& image) {
    if (model.feature_version != kBaselineFeatureVersion)
        throw FormatError("baseline model uses feature recipe version " +
                          std::to_string(model.feature_version) + "; this build expects " +
                          std::to_string(kBaselineFeatureVersion));
    const std::vector<double> f = extract_features(image);
    const std::vector<double> p = pca_apply(model.pca, f);
    const std::vector<double> z = standardizer_apply(model.standardizer, p);
    return cph_predict(model.beta, z);
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

std::string baseline_to_json(const BaselineModel& model) {
    nlohmann::json j;
    j["beta"] = model.beta;
    j["cph"] = {{"converged", model.fit.converged},
                {"final_loss", model.fit.final_loss},
                {"iterations", model.fit.iterations},
                {"used_ridge", model.fit.used_ridge}};
    j["feature_version"] = model.feature_version;
    j["pca"] = {{"components", model.pca.components},
                {"d", model.pca.d},
                {"eigenvalues", model.pca.eigenvalues},
                {"k", model.pca.k},
                {"mean", model.pca.mean}};
    j["standardizer"] = {{"mean", model.standardizer.mean}, {"scale", model.standardizer.scale}};
    return j.dump();
}

BaselineModel baseline_from_json(const std::string& text) {
    BaselineModel model;
    try {
        const nlohmann::json j = nlohmann::json::parse(text);
        model.beta = j.at("beta").get<std::vector<double>>();
        const auto& c = j.at("cph");
        model.fit.converged = c.at("converged").get<bool>();
        model.fit.final_loss = c.at("final_loss").get<double>();
        model.fit.iterations = c.at("iterations").get<int>();
        model.fit.used_ridge = c.at("used_ridge").get<bool>();
        model.fit.beta = model.beta;
        model.feature_version = j.at("feature_version").get<int>();
        const auto& p = j.at("pca");
        model.pca.components = p.at("components").get<std::vector<double>>();
        model.pca.d = p.at("d").get<int>();
        model.pca.eigenvalues = p.at("eigenvalues").get<std::vector<double>>();
        model.pca.k = p.at("k").get<int>();
        model.pca.mean = p.at("mean").get<std::vector<double>>();
        const auto& s = j.at("standardizer");
        model.standardizer.mean = s.at("mean").get<std::vector<double>>();
        model.standardizer.scale = s.at("scale").get<std::vector<double>>();
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("baseline model JSON: ") + e.what());
    }

    if (model.pca.k < 1 || model.pca.d < 1 ||
        model.pca.components.size() != static_cast<std::size_t>(model.pca.k) * model.pca.d ||
        model.pca.mean.size() != static_cast<std::size_t>(model.pca.d) ||
        model.pca.eigenvalues.size() != static_cast<std::size_t>(model.pca.k))
        throw FormatError("baseline model JSON: inconsistent PCA dimensions");
    if (model.beta.size() != static_cast<std::size_t>(model.pca.k) ||
        model.standardizer.mean.size() != model.beta.size() ||
        model.standardizer.scale.size() != model.beta.size())
        throw FormatError("baseline model JSON: inconsistent coefficient dimensions");
    return model;
}

void save_baseline(const BaselineModel& model, const std::filesystem::path& path) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw FormatError("cannot open baseline model file for writing: " + path.string());
    const std::string text = baseline_to_json(model);
    f.write(text.data(), static_cast<std::streamsize>(text.size()));
    f.put('\n');
    if (!f) throw FormatError("failed writing baseline model file: " + path.string());
}

BaselineModel load_baseline(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw FormatError("cannot open baseline model file: " + path.string());
    std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return baseline_from_json(text);
}

} // namespace coxcnn
