# Copyright 2026 The UDTA Authors. All Rights Reserved.
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.
# ==============================================================================

"""Python front end to the UDTA C++ core.

Functions return plain Python objects; configs are dicts merged over the
built-in desk-scale defaults.
"""

import json
import os

from . import _udta
from ._udta import DimensionError, InvariantError, IoError, SpecError

__all__ = [
    "DimensionError", "InvariantError", "IoError", "SpecError",
    "model_spec", "profile", "sweep", "required_set", "gradcheck", "gradcheck_archs",
    "generate", "default_config", "gen_data", "pretrain", "train_ae", "adapt", "baseline", "pipeline",
]


def _cfg(config):
    return json.dumps(config) if config else ""


def model_spec(name="desk"):
    return json.loads(_udta.model_spec(name))


def profile(spec="full", configs=None, batch=256, mac_cost=1, reference="model_patch"):
    return json.loads(_udta.profile(spec, list(configs or []), batch, mac_cost, reference))


def sweep(variable, values, spec="full", batch=256):
    return json.loads(_udta.sweep(spec, variable, list(values), batch))


def required_set(kind, spec="desk"):
    return json.loads(_udta.required_set(spec, kind))


def gradcheck(arch, probes=50, step=0.0, seed=0):
    return json.loads(_udta.gradcheck(arch, probes, step, seed))


def gradcheck_archs():
    return list(_udta.gradcheck_archs())


def generate(spec=None):
    """Returns ((train_images, train_labels), (test_images, test_labels)) as numpy arrays."""
    return _udta.generate(_cfg(spec))


def default_config():
    return json.loads(_udta.default_config())


def gen_data(out_dir, config=None):
    _udta.gen_data(_cfg(config), os.fspath(out_dir))


def pretrain(out_dir, config=None):
    return _udta.pretrain(_cfg(config), os.fspath(out_dir))


def train_ae(out_dir, config=None):
    return json.loads(_udta.train_ae(_cfg(config), os.fspath(out_dir)))


def adapt(out_dir, seed, config=None):
    return json.loads(_udta.adapt(_cfg(config), os.fspath(out_dir), seed))


def baseline(out_dir, kind, seed, config=None):
    return json.loads(_udta.baseline(_cfg(config), os.fspath(out_dir), kind, seed))


def pipeline(out_dir, config=None):
    return json.loads(_udta.pipeline(_cfg(config), os.fspath(out_dir)))
