"""
Versioned JSON experiment configs.

Every object in a config rejects unknown fields. Errors carry the JSON path
of the offending field (or line/column for syntax errors).
"""

from __future__ import annotations

import copy
import json
from pathlib import Path
from typing import Any

import jsonschema

from eitmono.errors import EitMonoError

SCHEMA_VERSION = 1


class ConfigError(EitMonoError):
    pass


_num = {"type": "number"}
_vec2 = {"type": "array", "items": _num, "minItems": 2, "maxItems": 2}
_pos_list = {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}, "minItems": 1}

_shape = {
    "type": "object",
    "required": ["kind"],
    "properties": {
        "kind": {"enum": ["disk", "rect", "lshape", "annulus"]},
        "center": _vec2, "radius": _num, "contrast": _num,
        "min": _vec2, "max": _vec2, "cut_min": _vec2, "cut_max": _vec2,
        "inner": _num, "outer": _num,
    },
    "additionalProperties": False,
}

_phantom = {
    "type": "object",
    "properties": {
        "name": {"type": "string"},
        "shapes": {"type": "array", "items": _shape},
        "cell_aligned": {"type": "boolean"},
    },
    "additionalProperties": False,
}

_check = {
    "type": "object",
    "properties": {
        "max_rel_err": _num,
        "min_jaccard": _num,
        "expect": {"enum": ["blow-up", "bounded", "indeterminate"]},
        "agree": {"type": "boolean"},
    },
    "additionalProperties": False,
}

CONFIG_SCHEMA: dict[str, Any] = {
    "type": "object",
    "required": ["schema"],
    "properties": {
        "schema": {"const": SCHEMA_VERSION},
        "name": {"type": "string"},
        "seed": {"type": "integer", "minimum": 0},
        "threads": {"type": "integer", "minimum": 1},
        "mesh": {
            "type": "object",
            "properties": {"level": {"type": "integer", "minimum": 0, "maximum": 8}},
            "additionalProperties": False,
        },
        "grid": {"type": "integer", "minimum": 2},
        "basis": {
            "type": "object",
            "properties": {
                "kind": {"enum": ["fourier", "edge"]},
                "order": {"type": "integer", "minimum": 1},
                "arc": _vec2,
            },
            "additionalProperties": False,
        },
        "phantom": _phantom,
        "reconstruct": {
            "type": "object",
            "properties": {
                "mode": {"enum": ["definite-full", "definite-lin", "indefinite-family",
                                  "indefinite-shrink"]},
                "linearized": {"type": "boolean"},
                "sign": {"enum": [1, -1]},
                "alphas": _pos_list,
                "alpha": {"type": "number", "exclusiveMinimum": 0},
                "delta": {"type": "number", "minimum": 0},
                "alpha_reg": {"type": ["number", "null"], "minimum": 0},
                "channels": {"type": "boolean"},
            },
            "additionalProperties": False,
        },
        "locpot": {
            "type": "object",
            "required": ["d1", "d2"],
            "properties": {
                "d1": {"type": "array", "items": _shape, "minItems": 1},
                "d2": {"type": "array", "items": _shape, "minItems": 1},
                "orders": {"type": "array", "items": {"type": "integer", "minimum": 1},
                           "minItems": 2},
                "eps": {"type": "number", "exclusiveMinimum": 0},
                "tau": _phantom,
            },
            "additionalProperties": False,
        },
        "check": _check,
    },
    "additionalProperties": False,
}

DEFAULTS: dict[str, Any] = {
    "seed": 0,
    "threads": 1,
    "mesh": {"level": 5},
    "grid": 32,
    "basis": {"kind": "fourier", "order": 8},
    "phantom": {"shapes": []},
}


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def validate_config(cfg: Any) -> dict:
    try:
        jsonschema.validate(cfg, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"config field '{where}': {exc.message}") from None
    return _merge(DEFAULTS, cfg)


def load_config(path: str | Path) -> dict:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        cfg = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    return validate_config(cfg)
