"""Python bindings for the rast forecasting core.

Configs and reports cross the boundary as JSON and come back as dicts.
"""

import json as _json
import os as _os

from . import _rast
from ._rast import (
    ConfigError,
    ContractError,
    DataError,
    FormatError,
    MemoryBank,
    NumericError,
    ShapeError,
    bench_store,
    entropy,
    similarity,
    synthetic,
    write_synthetic,
)

__all__ = [
    "ConfigError",
    "ContractError",
    "DataError",
    "FormatError",
    "MemoryBank",
    "NumericError",
    "ShapeError",
    "bench_store",
    "compute_metrics",
    "default_config",
    "entropy",
    "evaluate",
    "horizon_at",
    "load_config",
    "make_config",
    "lr_at",
    "similarity",
    "synthetic",
    "train",
    "write_synthetic",
]


def _dump(config):
    if config is None:
        return ""
    return _json.dumps(config)


def default_config():
    return _json.loads(_rast.default_config())


def load_config(path):
    """Read a .json or .toml run config; unknown keys raise ConfigError."""
    return _json.loads(_rast.load_config(_os.fspath(path)))


def _merge(base, overrides):
    out = dict(base)
    for key, value in overrides.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], value)
        else:
            out[key] = value
    return out


def make_config(**sections):
    """Defaults with nested overrides, e.g. make_config(model={"query_dim": 32})."""
    return _json.loads(_rast.normalize_config(_json.dumps(_merge(default_config(), sections))))


def lr_at(epoch, config=None):
    return _rast.lr_at(epoch, _dump(config))


def horizon_at(epoch, config=None):
    return _rast.horizon_at(epoch, _dump(config))


def train(config, data, out_dir=None, log=False):
    """Train on a .stb path or a synthetic:<kind> spec. Returns the summary dict."""
    out = "" if out_dir is None else _os.fspath(out_dir)
    return _json.loads(_rast.train(_dump(config), _os.fspath(data), out, log))


def evaluate(ckpt, split="test", data=None):
    return _json.loads(_rast.evaluate(_os.fspath(ckpt), split, "" if data is None else _os.fspath(data)))


def compute_metrics(pred, target, null_val=0.0):
    """MAE/RMSE/MAPE rows for arrays shaped (samples, horizon, ...)."""
    return _json.loads(_rast.compute_metrics(pred, target, null_val))
