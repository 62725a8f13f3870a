"""Multi-task segmentation loss: weighted sum of binary cross-entropy, Dice,
feature similarity and mask-quality terms.

Each differentiable term returns ``(value, gradient)`` so it can be checked
against central finite differences with :func:`gradcheck`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import (
    DomainError,
    FeaturePair,
    LossBreakdown,
    LossWeights,
    ParameterError,
    check_same_shape,
    make_rng,
)
from .metrics import jaccard

EPS = 1e-7
DICE_SMOOTH = 1.0
COMPONENTS = ("ce", "dice", "sim", "mask_iou")


@dataclass(frozen=True)
class ProbMap:
    """Foreground probabilities clamped to ``[eps, 1 - eps]``."""

    values: np.ndarray
    object_id: int = 1
    eps: float = EPS

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if not np.all(np.isfinite(v)):
            raise DomainError("probabilities must be finite")
        object.__setattr__(self, "values", np.clip(v, self.eps, 1.0 - self.eps))

    @classmethod
    def from_logits(cls, z, object_id: int = 1, eps: float = EPS) -> "ProbMap":
        return cls(sigmoid(np.asarray(z, dtype=np.float64)), object_id, eps)


@dataclass(frozen=True)
class LossConfig:
    weights: LossWeights = field(default_factory=LossWeights)
    dice_smoothing: float = DICE_SMOOTH
    prob_clamp: float = EPS

    @classmethod
    def from_dict(cls, d: dict) -> "LossConfig":
        w = d.get("weights", {})
        return cls(
            LossWeights(
                w.get("ce", 1.0), w.get("dice", 1.0), w.get("sim", 1.0), w.get("mask_iou", 1.0)
            ),
            d.get("dice_smoothing", DICE_SMOOTH),
            d.get("prob_clamp", EPS),
        )


def sigmoid(t):
    t = np.asarray(t, dtype=np.float64)
    out = np.empty_like(t)
    pos = t >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-t[pos]))
    e = np.exp(t[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def ce_loss(pred: ProbMap, gt):
    """Mean binary cross-entropy and its gradient w.r.t. the pre-sigmoid logits."""
    p = pred.values
    y = np.asarray(gt, dtype=np.float64)
    check_same_shape(p, y)
    n = p.size
    value = -np.mean(y * np.log(p) + (1.0 - y) * np.log(1.0 - p))
    return float(value), (p - y) / n


def dice_loss(pred, gt, smooth: float = DICE_SMOOTH):
    """Soft Dice loss and its gradient w.r.t. the probabilities.

    ``pred`` may be a :class:`ProbMap` or a raw probability array; raw arrays
    are used unclamped so hard masks give exact values.
    """
    p = pred.values if isinstance(pred, ProbMap) else np.asarray(pred, dtype=np.float64)
    y = np.asarray(gt, dtype=np.float64)
    check_same_shape(p, y)
    inter = float(np.sum(p * y))
    denom = float(np.sum(p) + np.sum(y)) + smooth
    if denom == 0:
        raise DomainError("Dice undefined for empty masks with zero smoothing")
    num = 2.0 * inter + smooth
    value = 1.0 - num / denom
    grad = -(2.0 * y * denom - num) / (denom * denom)
    return value, grad


def sim_loss(fp: FeaturePair):
    """One minus the cosine similarity; gradient w.r.t. the query feature."""
    m, q = fp.memory_feature, fp.query_feature
    nm = float(np.linalg.norm(m))
    nq = float(np.linalg.norm(q))
    if nm == 0 or nq == 0:
        raise DomainError("cosine similarity undefined for a zero vector")
    cos = float(np.dot(m, q)) / (nm * nq)
    cos = min(1.0, max(-1.0, cos))
    grad = -(m / (nm * nq) - cos * q / (nq * nq))
    return 1.0 - cos, grad


def maskiou_loss(predicted_iou: float, pred_mask, gt_mask) -> float:
    if not 0 <= predicted_iou <= 1:
        raise DomainError(f"predicted IoU must lie in [0, 1], got {predicted_iou}")
    return (predicted_iou - jaccard(pred_mask, gt_mask)) ** 2


def ce_from_logits(z, gt, eps: float = EPS):
    return ce_loss(ProbMap.from_logits(z, eps=eps), gt)


def total_loss(terms: dict, weights: LossWeights = LossWeights()) -> LossBreakdown:
    """Combine per-(frame, object) loss values into the weighted total.

    ``terms`` maps each component name (``ce``, ``dice``, ``sim``,
    ``mask_iou``) to the values of that loss over all frames and candidate
    masks. Each component is their unweighted mean; a component whose weight
    is zero may be omitted.
    """
    unknown = set(terms) - set(COMPONENTS)
    if unknown:
        raise ParameterError(f"unknown loss components {sorted(unknown)}")
    means = []
    for name, w in zip(COMPONENTS, weights.as_tuple()):
        vals = [float(v) for v in terms.get(name, ())]
        if not vals:
            if w > 0:
                raise DomainError(f"no terms for enabled component {name!r}")
            means.append(0.0)
            continue
        means.append(math.fsum(vals) / len(vals))
    total = math.fsum(w * c for w, c in zip(weights.as_tuple(), means))
    return LossBreakdown(*means, total)


def gradcheck(fn, x, h: float = 1e-5) -> float:
    """Max-abs deviation between ``fn``'s analytic gradient and central differences.

    ``fn(x)`` must return ``(value, gradient)`` with the gradient shaped like ``x``.
    """
    x = np.array(x, dtype=np.float64)
    _, grad = fn(x)
    grad = np.asarray(grad, dtype=np.float64)
    numeric = np.empty_like(x)
    flat = x.reshape(-1)
    num_flat = numeric.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp, _ = fn(x)
        flat[i] = orig - h
        fm, _ = fn(x)
        flat[i] = orig
        num_flat[i] = (fp - fm) / (2.0 * h)
    return float(np.max(np.abs(numeric - grad)))


def random_instance(kind: str, rng: np.random.Generator, size: int = 8, dim: int = 16):
    """An interior-point ``(fn, x)`` pair for :func:`gradcheck`.

    CE logits are kept within |z| <= 4 so the probability clamp never binds.
    """
    if kind == "ce":
        y = (rng.random((size, size)) < 0.5).astype(np.float64)
        z = rng.uniform(-4.0, 4.0, (size, size))
        return (lambda v: ce_from_logits(v, y)), z
    if kind == "dice":
        y = (rng.random((size, size)) < 0.5).astype(np.float64)
        p = rng.uniform(0.05, 0.95, (size, size))
        return (lambda v: dice_loss(v, y)), p
    if kind == "sim":
        m = rng.normal(size=dim)
        q = rng.normal(size=dim)
        return (lambda v: sim_loss(FeaturePair(m, v))), q
    raise ParameterError(f"unknown loss kind {kind!r}")


def gradcheck_suite(seed: int = 0, instances: int = 100, h: float = 1e-5, break_kind=None):
    """Max deviation per loss over ``instances`` random draws.

    ``break_kind`` flips the sign of one loss's analytic gradient; it is a
    negative control for the checker itself.
    """
    out = {}
    for kind in ("ce", "dice", "sim"):
        rng = make_rng(seed, "gradcheck", kind)
        worst = 0.0
        for _ in range(instances):
            fn, x = random_instance(kind, rng)
            if kind == break_kind:
                fn = _negated_gradient(fn)
            worst = max(worst, gradcheck(fn, x, h))
        out[kind] = worst
    return out


def _negated_gradient(fn):
    def wrapped(x):
        v, g = fn(x)
        return v, -g

    return wrapped
