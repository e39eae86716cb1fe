# Copyright (c) 2026 The gradguide authors
# Licensed under the Apache License, Version 2.0;
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#     http://www.apache.org/licenses/LICENSE-2.0
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an 'AS IS' BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

"""Python bindings for the gradguide C++ core."""

import json as _json
import os as _os

from ._core import (  # noqa: F401
    ConfigError,
    Error,
    FormatError,
    ModelSpec,
    TaskDataset,
    base_loss_and_gradient,
    contrast_loss,
    direction_regularizer,
    directional_alignment,
    evaluate,
    few_shot_split,
    gradient_stability,
    init_model,
    load_checkpoint,
    load_jsonl,
    magnitude_regularizer,
    make_gaussian_task,
    make_task_pair,
    predict,
    save_checkpoint,
    save_jsonl,
    validate_artifacts,
)
from . import _core


def _doc(config):
    # Relative dataset paths in a config file resolve against its directory.
    if isinstance(config, (str, _os.PathLike)):
        with open(config) as f:
            return f.read(), _os.path.dirname(_os.path.abspath(config))
    return _json.dumps(config), ""


def validate_config(config):
    """Parse and validate a config (dict or path); returns the normalized dict."""
    return _json.loads(_core._validate_config(*_doc(config)))


def train(config, method="guided-exact", seed=0, shots=None):
    """Single run; returns the run report as a dict."""
    return _json.loads(_core._train(*_doc(config), method, seed, shots))


def run_experiment(config, out_dir):
    return _json.loads(_core._run_experiment(*_doc(config), _os.fspath(out_dir)))


def compare_methods(config, out_dir):
    return _json.loads(_core._compare_methods(*_doc(config), _os.fspath(out_dir)))


def sweep_samples(config, shots, out_dir):
    return _json.loads(_core._sweep_samples(*_doc(config), list(shots), _os.fspath(out_dir)))


def check_grads(config):
    return _core._check_grads(*_doc(config))
