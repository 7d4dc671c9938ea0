/*
 * coxcnn - imaging-based survival analysis with convolutional networks.
 *
 * File: include/coxcnn/errors.hpp
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

#include <stdexcept>
#include <string>

namespace coxcnn {

// Precondition violations use std::invalid_argument directly.
// The types below cover the remaining failure classes so callers (and the
// CLI exit-code mapping) can tell them apart.

/// Malformed or wrong-version file content (bad magic, unknown format version).
struct FormatError : std::runtime_error {
    explicit FormatError(const std::string& what) : std::runtime_error(what) {}
};

/// Structurally valid file whose payload is damaged (checksum mismatch, missing blob).
struct CorruptionError : std::runtime_error {
    explicit CorruptionError(const std::string& what) : std::runtime_error(what) {}
};

/// Non-finite loss or gradient during optimization.
struct TrainingDivergedError : std::runtime_error {
    explicit TrainingDivergedError(const std::string& what) : std::runtime_error(what) {}
};

/// A survival loss was requested over a set with no observed events.
struct NoEventsError : std::runtime_error {
    explicit NoEventsError(const std::string& what) : std::runtime_error(what) {}
};

/// Concordance asked for on data with no comparable pair.
struct NoComparablePairsError : std::runtime_error {
    explicit NoComparablePairsError(const std::string& what) : std::runtime_error(what) {}
};

/// Newton system unsolvable even after ridge jitter.
struct IllConditionedError : std::runtime_error {
    explicit IllConditionedError(const std::string& what) : std::runtime_error(what) {}
};

} // namespace coxcnn
