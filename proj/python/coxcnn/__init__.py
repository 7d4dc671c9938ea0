# coxcnn - imaging-based survival analysis with convolutional networks.
#
# Copyright 2026 The coxcnn authors
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
# http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.
"""Imaging-based survival analysis with convolutional networks.

A CNN trained directly on the Cox negative log partial likelihood, a
PCA + linear Cox proportional-hazards baseline, a survival-cohort
simulator, and the evaluation utilities (concordance index, gradient
checks) behind them. The heavy lifting happens in the C++ extension
module; this package re-exports its public surface.
"""

from ._coxcnn import (
    Baseline,
    CorruptionError,
    FormatError,
    IllConditionedError,
    Model,
    NoComparablePairsError,
    NoEventsError,
    TrainingDivergedError,
    __version__,
    concordance_counts,
    concordance_index,
    cox_loss,
    cox_loss_gradient,
    default_config_json,
    gradcheck,
    simulate,
)

__all__ = [
    "Baseline",
    "CorruptionError",
    "FormatError",
    "IllConditionedError",
    "Model",
    "NoComparablePairsError",
    "NoEventsError",
    "TrainingDivergedError",
    "__version__",
    "concordance_counts",
    "concordance_index",
    "cox_loss",
    "cox_loss_gradient",
    "default_config_json",
    "gradcheck",
    "simulate",
]
