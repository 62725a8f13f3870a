"""Versioned JSON run configuration shared by all subcommands.

A config file may hold any subset of the blocks below; command-line flags
override file values. Validation uses JSON Schema so a bad file reports
every offending path at once.
"""

from __future__ import annotations

import json
from pathlib import Path

import jsonschema

from .core import ParameterError

CONFIG_VERSION = 1

_range = {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2}
_prob = {"type": "number", "minimum": 0, "maximum": 1}
_triple = {"type": "array", "items": {"type": "number"}, "minItems": 3, "maxItems": 3}

SCALE_CONFIG_SCHEMA = {
    "type": "object",
    "properties": {
        "sigmoid_scale": {"type": "number", "exclusiveMinimum": 0},
        "sigmoid_bias": {"type": "number"},
        "threshold": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
        "tag": {"type": "string"},
    },
    "additionalProperties": False,
}

SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "properties": {
        "schema_version": {"const": CONFIG_VERSION},
        "seed": {"type": "integer", "minimum": 0, "maximum": 2**64 - 1},
        "jobs": {"type": "integer", "minimum": 1},
        "out": {"type": "string"},
        "dataset": {
            "type": "object",
            "properties": {
                "roots": {
                    "type": "array",
                    "items": {
                        "type": "array",
                        "items": {"type": "string"},
                        "minItems": 2,
                        "maxItems": 2,
                    },
                },
                "target_long_side": {"type": "integer", "minimum": 1},
                "include": {"type": "string"},
            },
            "additionalProperties": False,
        },
        "augment": {
            "type": "object",
            "properties": {
                "clips": {"type": "integer", "minimum": 1},
                "clip_len": {"type": "integer", "minimum": 1},
                "max_objects": {"type": "integer", "minimum": 1, "maximum": 255},
                "target_long_side": {"type": ["integer", "null"], "minimum": 1},
                "geometry": {
                    "type": "object",
                    "properties": {
                        "enabled": {"type": "boolean"},
                        "hflip_prob": _prob,
                        "rotation_deg": _range,
                        "shear_deg": _range,
                        "scale": _range,
                        "output_size": {
                            "type": ["array", "null"],
                            "items": {"type": "integer", "minimum": 1},
                            "minItems": 2,
                            "maxItems": 2,
                        },
                        "max_rotation_deg": {"type": "number", "minimum": 0},
                        "max_shear_deg": {"type": "number", "minimum": 0, "exclusiveMaximum": 90},
                    },
                    "additionalProperties": False,
                },
                "color": {
                    "type": "object",
                    "properties": {
                        "enabled": {"type": "boolean"},
                        "brightness": _range,
                        "contrast": _range,
                        "saturation": _range,
                        "grayscale_prob": _prob,
                        "jitter_prob": _prob,
                        "frame_selection": {"enum": ["independent", "single"]},
                    },
                    "additionalProperties": False,
                },
                "normalize": {
                    "type": "object",
                    "properties": {"mean": _triple, "std": _triple},
                    "additionalProperties": False,
                },
            },
            "additionalProperties": False,
        },
        "losses": {
            "type": "object",
            "properties": {
                "weights": {
                    "type": "object",
                    "properties": {
                        k: {"type": "number", "minimum": 0} for k in ("ce", "dice", "sim", "mask_iou")
                    },
                    "additionalProperties": False,
                },
                "dice_smoothing": {"type": "number", "minimum": 0},
                "prob_clamp": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 0.5},
                "instances": {"type": "integer", "minimum": 1},
                "step": {"type": "number", "exclusiveMinimum": 0},
            },
            "additionalProperties": False,
        },
        "postprocess": {
            "type": "object",
            "properties": {"configs": {"type": "array", "items": SCALE_CONFIG_SCHEMA, "minItems": 1}},
            "additionalProperties": False,
        },
        "metrics": {
            "type": "object",
            "properties": {
                "tolerance_fraction": {"type": "number", "exclusiveMinimum": 0},
                "exclude_first": {"type": "boolean"},
                "exclude_last": {"type": "boolean"},
            },
            "additionalProperties": False,
        },
    },
    "additionalProperties": False,
}


def validate(cfg: dict) -> dict:
    validator = jsonschema.Draft202012Validator(SCHEMA)
    errors = sorted(validator.iter_errors(cfg), key=lambda e: list(e.absolute_path))
    if errors:
        msgs = [f"{'/'.join(map(str, e.absolute_path)) or '<root>'}: {e.message}" for e in errors]
        raise ParameterError("config schema violation: " + "; ".join(msgs))
    return cfg


def load(path) -> dict:
    if path is None:
        return {}
    try:
        cfg = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ParameterError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ParameterError("config root must be an object")
    return validate(cfg)
