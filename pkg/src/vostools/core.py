"""Shared domain types, error classes and numeric conventions.

Rasters are row-major numpy arrays with the origin at the top-left, so pixel
(x, y) lives at ``array[y, x]``. All metric and loss arithmetic runs in
float64.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal
from typing import Iterable, Mapping, Sequence

import numpy as np

MAX_INSTANCES = 10
CLIP_LENGTH = 6
TRAIN_RESOLUTION = 1024
DEFAULT_SEED = 0


class DomainError(ValueError):
    """Input outside the domain where an operation is defined."""


class FormatError(ValueError):
    """Bytes or files that do not follow the expected encoding."""


class ParameterError(ValueError):
    """Invalid transform or configuration parameters."""


class StateError(RuntimeError):
    """Operation applied to data in the wrong processing state."""


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a).view()
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class FrameImage:
    """RGB frame stored as an ``(H, W, 3)`` float64 array.

    Values lie in [0, 1] until :func:`vostools.augment.normalize` runs,
    after which ``normalized`` is set and the values are standardized.
    """

    data: np.ndarray
    normalized: bool = False

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim != 3 or data.shape[2] != 3:
            raise DomainError(f"expected (H, W, 3) image, got shape {data.shape}")
        if not np.all(np.isfinite(data)):
            raise DomainError("image contains non-finite values")
        object.__setattr__(self, "data", _frozen(data))

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @classmethod
    def from_uint8(cls, pixels) -> "FrameImage":
        return cls(np.asarray(pixels, dtype=np.float64) / 255.0)


@dataclass(frozen=True)
class LabelRaster:
    """Object-ID raster, 0 is background."""

    labels: np.ndarray

    def __post_init__(self):
        labels = np.asarray(self.labels)
        if labels.ndim != 2:
            raise DomainError(f"expected 2-D label raster, got shape {labels.shape}")
        if labels.dtype.kind not in "iub":
            raise DomainError(f"label raster must be integer, got {labels.dtype}")
        if labels.size and labels.min() < 0:
            raise DomainError("negative label in raster")
        object.__setattr__(self, "labels", _frozen(labels.astype(np.int32, copy=False)))

    @property
    def height(self) -> int:
        return self.labels.shape[0]

    @property
    def width(self) -> int:
        return self.labels.shape[1]

    def object_ids(self) -> frozenset[int]:
        ids = np.unique(self.labels)
        return frozenset(int(i) for i in ids if i != 0)

    def __eq__(self, other):
        if not isinstance(other, LabelRaster):
            return NotImplemented
        return np.array_equal(self.labels, other.labels)

    __hash__ = None


@dataclass(frozen=True)
class Clip:
    """A window of consecutive frames and their label rasters.

    ``frame_indices`` point back into the source sequence, ``annotated`` marks
    frames that carried a ground-truth mask (unannotated frames hold an empty
    raster and serve as context only) and ``padded`` is set when the source
    was shorter than the requested length.
    """

    sequence_id: str
    frames: tuple[tuple[FrameImage, LabelRaster], ...]
    frame_indices: tuple[int, ...] = ()
    annotated: tuple[bool, ...] = ()
    padded: bool = False
    id_map: Mapping[int, int] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "frames", tuple(tuple(f) for f in self.frames))
        n = len(self.frames)
        if not self.frame_indices:
            object.__setattr__(self, "frame_indices", tuple(range(n)))
        if not self.annotated:
            object.__setattr__(self, "annotated", (True,) * n)

    @property
    def object_ids(self) -> frozenset[int]:
        ids: set[int] = set()
        for _, raster in self.frames:
            ids |= raster.object_ids()
        return frozenset(ids)

    @property
    def images(self) -> list[FrameImage]:
        return [img for img, _ in self.frames]

    @property
    def rasters(self) -> list[LabelRaster]:
        return [r for _, r in self.frames]

    def replace_frames(self, frames) -> "Clip":
        return Clip(
            self.sequence_id,
            tuple(frames),
            self.frame_indices,
            self.annotated,
            self.padded,
            self.id_map,
        )

    def __len__(self):
        return len(self.frames)


@dataclass(frozen=True)
class LogitStack:
    """Raw per-object score maps for one frame."""

    width: int
    height: int
    per_object: Mapping[int, np.ndarray]

    def __post_init__(self):
        maps = {}
        for oid in sorted(self.per_object):
            m = np.asarray(self.per_object[oid])
            if m.shape != (self.height, self.width):
                raise DomainError(
                    f"object {oid}: map shape {m.shape} != {(self.height, self.width)}"
                )
            maps[int(oid)] = _frozen(m)
        object.__setattr__(self, "per_object", maps)

    @property
    def object_ids(self) -> list[int]:
        return list(self.per_object)


@dataclass(frozen=True)
class ScaleConfig:
    sigmoid_scale: float = 7.5
    sigmoid_bias: float = -4.0
    threshold: float = 0.5
    tag: str = ""

    def __post_init__(self):
        if not self.sigmoid_scale > 0:
            raise ParameterError(f"sigmoid_scale must be > 0, got {self.sigmoid_scale}")
        if not 0 < self.threshold < 1:
            raise ParameterError(f"threshold must lie in (0, 1), got {self.threshold}")
        if not np.isfinite(self.sigmoid_bias):
            raise ParameterError("sigmoid_bias must be finite")


@dataclass(frozen=True)
class LossWeights:
    lambda_ce: float = 1.0
    lambda_dice: float = 1.0
    lambda_sim: float = 1.0
    lambda_maskiou: float = 1.0

    def __post_init__(self):
        w = self.as_tuple()
        if any(not np.isfinite(x) or x < 0 for x in w):
            raise ParameterError(f"loss weights must be finite and >= 0, got {w}")
        if not any(x > 0 for x in w):
            raise ParameterError("at least one loss weight must be positive")

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.lambda_ce, self.lambda_dice, self.lambda_sim, self.lambda_maskiou)

    def scaled(self, c: float) -> "LossWeights":
        return LossWeights(*(c * x for x in self.as_tuple()))


@dataclass(frozen=True)
class LossBreakdown:
    ce: float
    dice: float
    sim: float
    mask_iou: float
    total: float

    def components(self) -> tuple[float, float, float, float]:
        return (self.ce, self.dice, self.sim, self.mask_iou)


@dataclass(frozen=True)
class FeaturePair:
    memory_feature: np.ndarray
    query_feature: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.memory_feature, dtype=np.float64).ravel()
        q = np.asarray(self.query_feature, dtype=np.float64).ravel()
        if m.shape != q.shape or m.size == 0:
            raise DomainError(f"feature dims differ or are empty: {m.shape} vs {q.shape}")
        object.__setattr__(self, "memory_feature", m)
        object.__setattr__(self, "query_feature", q)


def mean_jf(j, f):
    """Average of region similarity and boundary accuracy.

    Works for floats and for :class:`decimal.Decimal` inputs; the latter keeps
    published 4-decimal table values exact.
    """
    for name, v in (("J", j), ("F", f)):
        if not 0 <= v <= 1:
            raise DomainError(f"{name} must lie in [0, 1], got {v}")
    return (j + f) / 2


def round4(x) -> Decimal:
    """Round half away from zero to 4 decimals, as the score tables do.

    Floats are rounded from their exact binary value.
    """
    return Decimal(x).quantize(Decimal("0.0001"), rounding=ROUND_HALF_UP)


def fmt4(x) -> str:
    return str(round4(x))


def validate_clip(clip: Clip, max_instances: int = MAX_INSTANCES) -> list[str]:
    """Return the list of violated clip invariants; empty means the clip is ok."""
    problems = []
    if len(clip.frames) == 0:
        return ["empty clip"]
    img0, _ = clip.frames[0]
    shape = (img0.height, img0.width)
    for i, (img, raster) in enumerate(clip.frames):
        if (img.height, img.width) != shape or (raster.height, raster.width) != shape:
            problems.append(
                f"dimension mismatch at frame {i}: image {(img.height, img.width)}, "
                f"raster {(raster.height, raster.width)}, expected {shape}"
            )
    top = max((int(r.labels.max()) if r.labels.size else 0) for r in clip.rasters)
    if top > max_instances or len(clip.object_ids) > max_instances:
        problems.append(
            f"instance count exceeds {max_instances} (max label {top}, "
            f"{len(clip.object_ids)} distinct objects)"
        )
    return problems


def derive_seed(seed: int, *keys) -> np.random.SeedSequence:
    """Seed sequence for an independent stream keyed by ``keys``.

    String keys are folded through SHA-256 so streams are stable across
    platforms and Python hash randomization.
    """
    entropy = [int(seed) & 0xFFFFFFFFFFFFFFFF]
    for k in keys:
        if isinstance(k, str):
            entropy.append(int.from_bytes(hashlib.sha256(k.encode()).digest()[:8], "little"))
        else:
            entropy.append(int(k) & 0xFFFFFFFFFFFFFFFF)
    return np.random.SeedSequence(entropy)


def make_rng(seed, *keys) -> np.random.Generator:
    """PCG64 generator; the algorithm is fixed so provenance replays anywhere."""
    if isinstance(seed, np.random.SeedSequence):
        return np.random.Generator(np.random.PCG64(seed))
    return np.random.Generator(np.random.PCG64(derive_seed(seed, *keys)))


def union_ids(rasters: Iterable[LabelRaster]) -> frozenset[int]:
    ids: set[int] = set()
    for r in rasters:
        ids |= r.object_ids()
    return frozenset(ids)


def as_bool_mask(mask) -> np.ndarray:
    m = np.asarray(mask)
    if m.ndim != 2:
        raise DomainError(f"expected 2-D mask, got shape {m.shape}")
    return m.astype(bool, copy=False)


def check_same_shape(*arrays: Sequence) -> None:
    shapes = {np.shape(a) for a in arrays}
    if len(shapes) != 1:
        raise DomainError(f"dimension mismatch: {sorted(shapes)}")
