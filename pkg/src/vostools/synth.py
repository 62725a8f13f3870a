"""Procedural moving-shape sequences with exact ground truth, and logits
derived from that ground truth, for desk-scale pipeline runs."""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image
from scipy import ndimage

from .core import DEFAULT_SEED, LogitStack, ScaleConfig, make_rng
from .datakit import write_mask
from .postproc import DEFAULT_CONFIG, decision_logit, write_mslg


def _shape_mask(kind, cx, cy, r, h, w):
    yy, xx = np.mgrid[0:h, 0:w]
    if kind == "disk":
        return (xx - cx) ** 2 + (yy - cy) ** 2 <= r * r
    return (np.abs(xx - cx) <= r) & (np.abs(yy - cy) <= 0.7 * r)


def render_sequence(rng, n_frames=8, size=(64, 48), n_objects=2):
    """Frames (uint8 RGB) and label rasters of shapes moving in straight lines.

    Later objects are drawn on top of earlier ones.
    """
    w, h = size
    objs = []
    for k in range(n_objects):
        r = float(rng.uniform(5, 9))
        objs.append(
            {
                "kind": "disk" if k % 2 == 0 else "box",
                "pos": np.array([rng.uniform(r, w - r), rng.uniform(r, h - r)]),
                "vel": rng.uniform(-2.0, 2.0, size=2),
                "r": r,
                "color": rng.integers(60, 255, size=3),
            }
        )
    background = rng.integers(0, 50, size=(h, w, 3))
    frames, rasters = [], []
    for _ in range(n_frames):
        img = background.copy()
        lab = np.zeros((h, w), dtype=np.int32)
        for oid, o in enumerate(objs, start=1):
            m = _shape_mask(o["kind"], o["pos"][0], o["pos"][1], o["r"], h, w)
            img[m] = o["color"]
            lab[m] = oid
            o["pos"] = o["pos"] + o["vel"]
            for axis, lim in ((0, w), (1, h)):
                if not o["r"] <= o["pos"][axis] <= lim - o["r"]:
                    o["vel"][axis] *= -1
        frames.append(img.astype(np.uint8))
        rasters.append(lab)
    return frames, rasters


def make_dataset(root, n_sequences=5, n_frames=8, size=(64, 48), seed=DEFAULT_SEED, prefix="seq"):
    """Write a DAVIS-layout tree under ``root``; returns the sequence names."""
    root = Path(root)
    names = []
    for i in range(n_sequences):
        name = f"{prefix}{i:03d}"
        rng = make_rng(seed, "synth", name)
        frames, rasters = render_sequence(rng, n_frames, size, n_objects=1 + i % 3)
        img_dir = root / "JPEGImages" / name
        ann_dir = root / "Annotations" / name
        img_dir.mkdir(parents=True, exist_ok=True)
        ann_dir.mkdir(parents=True, exist_ok=True)
        for t, (img, lab) in enumerate(zip(frames, rasters)):
            Image.fromarray(img).save(img_dir / f"{t:05d}.jpg", quality=95)
            write_mask(ann_dir / f"{t:05d}.png", lab)
        names.append(name)
    return names


def signed_distance(mask: np.ndarray) -> np.ndarray:
    """Half-pixel signed distance: >= 0.5 inside, <= -0.5 outside."""
    mask = mask.astype(bool)
    if not mask.any():
        return np.full(mask.shape, -float(np.hypot(*mask.shape)))
    if mask.all():
        return np.full(mask.shape, float(np.hypot(*mask.shape)))
    inside = ndimage.distance_transform_edt(mask)
    outside = ndimage.distance_transform_edt(~mask)
    return np.where(mask, inside - 0.5, -(outside - 0.5))


def logits_from_labels(labels, object_ids, spread=4.0, anchor: ScaleConfig = DEFAULT_CONFIG):
    """Logits whose ``anchor`` decision boundary sits on the true object edge.

    Each object's score is its signed distance divided by ``spread`` and
    offset so that ``anchor`` maps the edge to its threshold.
    """
    labels = np.asarray(labels)
    h, w = labels.shape
    z0 = decision_logit(anchor)
    maps = {oid: (z0 + signed_distance(labels == oid) / spread).astype(np.float32) for oid in object_ids}
    return LogitStack(w, h, maps)


def write_logit_tree(manifest, out_dir, **kw):
    """One MSLG file per annotated frame, under ``out_dir/<dataset>/<name>/``."""
    from .datakit import read_mask

    out_dir = Path(out_dir)
    for rec in manifest.records:
        d = out_dir / rec.sequence_id
        d.mkdir(parents=True, exist_ok=True)
        for m in rec.mask_paths:
            lab = read_mask(m).labels
            stack = logits_from_labels(lab, rec.object_ids, **kw)
            (d / f"{Path(m).stem}.mslg").write_bytes(write_mslg(stack))
