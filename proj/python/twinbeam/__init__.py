"""Twin-beam PDC simulation and correlation analysis.

Thin wrappers over the C++ core: configs are dicts, reports come back as
dicts, frame stacks as numpy arrays.
"""

import json as _json
import os as _os

import numpy as _np

from . import _core
from ._core import (
    AnalysisError,
    ConfigError,
    ContractError,
    FormatError,
    IoError,
    NumericAbort,
    mode_count,
    refractive_index,
)

__all__ = [
    "AnalysisError",
    "ConfigError",
    "ContractError",
    "FormatError",
    "IoError",
    "NumericAbort",
    "analyze",
    "config_hash",
    "fit_power_law",
    "fit_sinh2",
    "fwhm",
    "g2",
    "gamma_map",
    "load_config",
    "mode_count",
    "normalize_config",
    "peak_power_w",
    "read_frame_stack",
    "refractive_index",
    "simulate",
    "spearman",
    "sweep",
]


def _text(config):
    return config if isinstance(config, str) else _json.dumps(config)


def load_config(path):
    with open(path) as f:
        return normalize_config(_json.load(f))


def normalize_config(config):
    return _json.loads(_core.normalize_config(_text(config)))


def config_hash(config):
    return _core.config_hash(_text(config))


def peak_power_w(config, mean_power_mw):
    return _core.peak_power_w(_text(config), float(mean_power_mw))


def _workers(workers):
    if workers is not None:
        return int(workers)
    return int(_os.environ.get("TWINBEAM_WORKERS", _os.cpu_count() or 1))


def simulate(config, power_mw, out, workers=None):
    return _json.loads(_core.simulate(_text(config), float(power_mw), str(out), _workers(workers)))


def sweep(config, out, workers=None):
    return _json.loads(_core.sweep(_text(config), str(out), _workers(workers)))


def analyze(stack, config, out):
    return _json.loads(_core.analyze(str(stack), _text(config), str(out)))


def read_frame_stack(path):
    frames, meta = _core.read_frame_stack(str(path))
    return frames, _json.loads(meta)


def g2(frames):
    """Raw g2 of the per-frame summed signal; returns (g2, mean per pixel)."""
    return _core.g2(_np.asarray(frames, dtype=float))


def gamma_map(frames, seed, center):
    return _core.gamma_map(_np.asarray(frames, dtype=float), seed[0], seed[1], center[0], center[1])


def fwhm(profile, baseline=1.0):
    return _core.fwhm(_np.asarray(profile, dtype=float), float(baseline))


def spearman(x, y):
    return _core.spearman(_np.asarray(x, dtype=float), _np.asarray(y, dtype=float))


def fit_power_law(x, y, fixed_exponent=None):
    return _json.loads(_core.fit_power_law(_np.asarray(x, float), _np.asarray(y, float), fixed_exponent))


def fit_sinh2(x, y):
    return _json.loads(_core.fit_sinh2(_np.asarray(x, float), _np.asarray(y, float)))
