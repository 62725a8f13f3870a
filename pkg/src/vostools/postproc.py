"""Mask confidence calibration and multi-configuration fusion.

Logits are mapped through ``sigmoid(scale * z + bias)``: the scale sets how
sharp the probability ramp is around the decision boundary and the bias
moves that boundary, trading object coverage against false positives.
Several calibrations of the same logits can be averaged before the
per-pixel arbitration.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import DomainError, FormatError, LabelRaster, LogitStack, ParameterError, ScaleConfig
from .losses import sigmoid

MSLG_MAGIC = b"MSLG"
MSLG_VERSION = 1
_HEADER = struct.Struct("<4sIIII")
_OBJ = struct.Struct("<I")

DEFAULT_CONFIG = ScaleConfig(7.5, -4.0, 0.5, "default")


@dataclass(frozen=True)
class CalibratedStack:
    per_object: dict
    threshold: float
    configs: tuple = ()

    def __post_init__(self):
        shapes = {np.shape(m) for m in self.per_object.values()}
        if len(shapes) > 1:
            raise DomainError(f"inconsistent map shapes {sorted(shapes)}")
        if not 0 < self.threshold < 1:
            raise ParameterError(f"threshold must lie in (0, 1), got {self.threshold}")

    @property
    def object_ids(self) -> list[int]:
        return sorted(self.per_object)

    @property
    def shape(self):
        return next(iter(self.per_object.values())).shape if self.per_object else None


@dataclass(frozen=True)
class FinalLabeling:
    raster: LabelRaster
    confidence: dict  # object ID -> mean probability over its assigned pixels


def apply_scaling(logits: LogitStack, c: ScaleConfig = DEFAULT_CONFIG) -> CalibratedStack:
    maps = {}
    for oid, z in logits.per_object.items():
        z = np.asarray(z, dtype=np.float64)
        if not np.all(np.isfinite(z)):
            raise DomainError(f"object {oid}: non-finite logit")
        maps[oid] = sigmoid(c.sigmoid_scale * z + c.sigmoid_bias)
    return CalibratedStack(maps, c.threshold, (c,))


def decision_logit(c: ScaleConfig) -> float:
    """Logit at which the calibrated probability equals the threshold."""
    t = math.log(c.threshold / (1.0 - c.threshold))
    return (t - c.sigmoid_bias) / c.sigmoid_scale


def binarize(stack: CalibratedStack) -> dict:
    return {oid: p >= stack.threshold for oid, p in stack.per_object.items()}


def resolve_overlaps(stack: CalibratedStack) -> FinalLabeling:
    """Per pixel, the most probable object if it clears the threshold.

    Ties go to the lower object ID.
    """
    ids = stack.object_ids
    if not ids:
        raise DomainError("empty stack")
    probs = np.stack([stack.per_object[i] for i in ids])
    best = np.argmax(probs, axis=0)
    top = np.take_along_axis(probs, best[None], axis=0)[0]
    lut = np.asarray(ids, dtype=np.int32)
    labels = np.where(top >= stack.threshold, lut[best], 0).astype(np.int32)
    conf = {}
    for k, oid in enumerate(ids):
        sel = labels == oid
        conf[oid] = float(probs[k][sel].mean()) if sel.any() else 0.0
    return FinalLabeling(LabelRaster(labels), conf)


def fuse_stacks(stacks) -> CalibratedStack:
    """Average probability maps across calibrations.

    Values are sorted along the configuration axis before summing so the
    result is bit-identical for any input order.
    """
    stacks = list(stacks)
    if not stacks:
        raise DomainError("no stacks to fuse")
    ids = stacks[0].object_ids
    shape = stacks[0].shape
    for s in stacks[1:]:
        if s.object_ids != ids:
            raise DomainError(f"object sets differ: {ids} vs {s.object_ids}")
        if s.shape != shape:
            raise DomainError(f"map shapes differ: {shape} vs {s.shape}")
    if len(stacks) == 1:
        return stacks[0]
    n = len(stacks)
    fused = {}
    for oid in ids:
        cube = np.sort(np.stack([s.per_object[oid] for s in stacks]), axis=0)
        acc = cube[0].copy()
        for k in range(1, n):
            acc += cube[k]
        fused[oid] = acc / n
    threshold = math.fsum(s.threshold for s in stacks) / n
    configs = tuple(sorted((c for s in stacks for c in s.configs), key=repr))
    return CalibratedStack(fused, threshold, configs)


def fuse_configs(stacks) -> FinalLabeling:
    return resolve_overlaps(fuse_stacks(stacks))


def postprocess_frame(logits: LogitStack, configs) -> FinalLabeling:
    return fuse_configs(apply_scaling(logits, c) for c in configs)


def write_mslg(stack: LogitStack) -> bytes:
    parts = [_HEADER.pack(MSLG_MAGIC, MSLG_VERSION, stack.width, stack.height, len(stack.per_object))]
    for oid in sorted(stack.per_object):
        parts.append(_OBJ.pack(oid))
        parts.append(np.ascontiguousarray(stack.per_object[oid], dtype="<f4").tobytes())
    return b"".join(parts)


def read_mslg(data: bytes) -> LogitStack:
    if len(data) < _HEADER.size:
        raise FormatError("truncated MSLG header")
    magic, version, w, h, n = _HEADER.unpack_from(data, 0)
    if magic != MSLG_MAGIC:
        raise FormatError(f"bad MSLG magic {magic!r}")
    if version != MSLG_VERSION:
        raise FormatError(f"unsupported MSLG version {version}")
    expected = _HEADER.size + n * (_OBJ.size + 4 * w * h)
    if len(data) != expected:
        raise FormatError(f"MSLG size {len(data)} != expected {expected}")
    off = _HEADER.size
    maps = {}
    for _ in range(n):
        (oid,) = _OBJ.unpack_from(data, off)
        off += _OBJ.size
        if oid in maps:
            raise FormatError(f"duplicate object {oid} in MSLG")
        maps[oid] = np.frombuffer(data, dtype="<f4", count=w * h, offset=off).reshape(h, w)
        off += 4 * w * h
    return LogitStack(w, h, maps)


def load_run_config(path) -> list[ScaleConfig]:
    """Read a JSON list of calibrations, either bare or under a ``configs`` key."""
    d = json.loads(Path(path).read_text())
    items = d["configs"] if isinstance(d, dict) else d
    if not isinstance(items, list) or not items:
        raise ParameterError("run config needs a non-empty list of scale configs")
    out = []
    for it in items:
        out.append(
            ScaleConfig(
                float(it.get("sigmoid_scale", 7.5)),
                float(it.get("sigmoid_bias", -4.0)),
                float(it.get("threshold", 0.5)),
                str(it.get("tag", "")),
            )
        )
    return out
