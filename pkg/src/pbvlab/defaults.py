"""Physical defaults used across the toolkit.

All tunable physical constants (diamond Raman shift, the built-in group-IV
species table, the rate-normalisation reference point, literature constants)
live in ``defaults.json`` next to this module.  Point the ``PBVLAB_DEFAULTS``
environment variable at another JSON file with the same layout to override
them; missing keys fall back to the packaged values.
"""
import copy
import json
import os
from functools import lru_cache
from importlib import resources

ENV_VAR = "PBVLAB_DEFAULTS"


def _merge(base, override):
    out = dict(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], value)
        else:
            out[key] = value
    return out


@lru_cache(maxsize=None)
def _load(path):
    packaged = json.loads(
        resources.files("pbvlab").joinpath("defaults.json").read_text("utf-8"))
    if path is None:
        return packaged
    with open(path, encoding="utf-8") as fh:
        return _merge(packaged, json.load(fh))


def load_defaults():
    """Return the active defaults dictionary (packaged, merged with override)."""
    return copy.deepcopy(_load(os.environ.get(ENV_VAR) or None))


def get(key, default=None):
    return load_defaults().get(key, default)
