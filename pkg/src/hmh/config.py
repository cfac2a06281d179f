"""Run configuration: built-in defaults < ``key = value`` config file < CLI flags.

==================  =======  ===========================================
key                 default  meaning
==================  =======  ===========================================
seed                0        global seed for adjustments, splits, picks
size                256      side of the square working resolution
band_radius         10       trimap unknown-band growth, pixels
mask_dilation       5        inpainting mask growth beyond alpha > 0
train_fraction      0.9      share of records labelled ``train``
jobs                1        worker processes
alpha_source        groundtruth  or ``predicted:<dir>``
adjust_override     (none)   e.g. ``illumination:1.0``
==================  =======  ===========================================
"""
from __future__ import annotations

import configparser
from pathlib import Path

DEFAULTS = {
    "seed": 0,
    "size": 256,
    "band_radius": 10,
    "mask_dilation": 5,
    "train_fraction": 0.9,
    "jobs": 1,
    "alpha_source": "groundtruth",
    "adjust_override": None,
}

_TYPES = {
    "seed": int,
    "size": int,
    "band_radius": int,
    "mask_dilation": int,
    "train_fraction": float,
    "jobs": int,
    "alpha_source": str,
    "adjust_override": str,
}


def read_config_file(path) -> dict:
    text = Path(path).read_text(encoding="utf-8")
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    parser.read_string("[hmh]\n" + text)
    values = {}
    for key, raw in parser["hmh"].items():
        key = key.replace("-", "_")
        if key not in _TYPES:
            raise ValueError(f"{path}: unknown config key {key!r}")
        values[key] = _TYPES[key](raw)
    return values


def resolve(config_path=None, **overrides) -> dict:
    """Merge defaults, the optional config file and non-None overrides."""
    merged = dict(DEFAULTS)
    if config_path is not None:
        merged.update(read_config_file(config_path))
    merged.update({k: v for k, v in overrides.items() if v is not None})
    return merged
