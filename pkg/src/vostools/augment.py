"""Clip augmentation: one geometric draw shared by every frame, colour
perturbations that are either shared or re-drawn per frame, then
normalization.

Every sampled value is returned in a provenance record so a run can be
replayed or audited.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import kernels
from .core import (
    Clip,
    DomainError,
    FrameImage,
    LabelRaster,
    ParameterError,
    StateError,
    make_rng,
    validate_clip,
)

PROVENANCE_VERSION = 1
LUMA = np.array([0.299, 0.587, 0.114])
IMAGENET_MEAN = (0.485, 0.456, 0.406)
IMAGENET_STD = (0.229, 0.224, 0.225)


@dataclass(frozen=True)
class GeomConfig:
    enabled: bool = True
    hflip_prob: float = 0.5
    rotation_deg: tuple[float, float] = (-20.0, 20.0)
    shear_deg: tuple[float, float] = (-10.0, 10.0)
    scale: tuple[float, float] = (0.75, 1.25)
    output_size: tuple[int, int] | None = None
    max_rotation_deg: float = 30.0
    max_shear_deg: float = 15.0


@dataclass(frozen=True)
class ColorConfig:
    enabled: bool = True
    brightness: tuple[float, float] = (0.7, 1.3)
    contrast: tuple[float, float] = (0.7, 1.3)
    saturation: tuple[float, float] = (0.7, 1.3)
    grayscale_prob: float = 0.05
    jitter_prob: float = 0.2
    # "independent": each frame is selected with the given probability;
    # "single": with that probability one uniformly chosen frame is selected
    frame_selection: str = "independent"


@dataclass(frozen=True)
class NormalizeParams:
    mean: tuple[float, float, float] = IMAGENET_MEAN
    std: tuple[float, float, float] = IMAGENET_STD

    def __post_init__(self):
        if len(self.mean) != 3 or len(self.std) != 3:
            raise ParameterError("mean and std need 3 channels")
        if any(not s > 0 for s in self.std):
            raise ParameterError(f"std must be > 0, got {self.std}")


@dataclass(frozen=True)
class AugmentConfig:
    geometry: GeomConfig = field(default_factory=GeomConfig)
    color: ColorConfig = field(default_factory=ColorConfig)
    normalize: NormalizeParams = field(default_factory=NormalizeParams)

    @classmethod
    def disabled(cls) -> "AugmentConfig":
        return cls(GeomConfig(enabled=False), ColorConfig(enabled=False))

    @classmethod
    def from_dict(cls, d: dict) -> "AugmentConfig":
        def tup(v):
            return tuple(v) if isinstance(v, list) else v

        g = {k: tup(v) for k, v in d.get("geometry", {}).items()}
        c = {k: tup(v) for k, v in d.get("color", {}).items()}
        n = {k: tup(v) for k, v in d.get("normalize", {}).items()}
        return cls(GeomConfig(**g), ColorConfig(**c), NormalizeParams(**n))

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class GeomParams:
    hflip: bool = False
    rotation_deg: float = 0.0
    shear_x_deg: float = 0.0
    shear_y_deg: float = 0.0
    scale: float = 1.0
    output_size: tuple[int, int] | None = None

    def __post_init__(self):
        if not self.scale > 0:
            raise ParameterError(f"scale must be > 0, got {self.scale}")


@dataclass(frozen=True)
class ColorParams:
    brightness: float = 1.0
    contrast: float = 1.0
    saturation: float = 1.0
    grayscale: tuple[bool, ...] | bool = False
    mode: str = "consistent"
    jitter_frames: tuple[bool, ...] | None = None

    def __post_init__(self):
        if self.mode not in ("consistent", "inconsistent"):
            raise ParameterError(f"unknown colour mode {self.mode!r}")
        if min(self.brightness, self.contrast, self.saturation) <= 0:
            raise ParameterError("colour factors must be positive")

    def grayscale_flags(self, n: int) -> list[bool]:
        if isinstance(self.grayscale, bool):
            return [self.grayscale] * n
        if len(self.grayscale) != n:
            raise ParameterError(f"{len(self.grayscale)} grayscale flags for {n} frames")
        return list(self.grayscale)


def _check_range(name, lo_hi, cap=None, positive=False):
    lo, hi = lo_hi
    if lo > hi:
        raise ParameterError(f"{name}: empty range {lo_hi}")
    if cap is not None and max(abs(lo), abs(hi)) > cap:
        raise ParameterError(f"{name}: range {lo_hi} exceeds cap {cap}")
    if positive and lo <= 0:
        raise ParameterError(f"{name}: range {lo_hi} must be positive")


def _uniform(rng, lo_hi) -> float:
    lo, hi = lo_hi
    return float(rng.uniform(lo, hi)) if hi > lo else float(lo)


def sample_geom(seed, config: GeomConfig = GeomConfig()) -> GeomParams:
    """Draw the single geometric transform used for a whole clip."""
    _check_range("rotation_deg", config.rotation_deg, config.max_rotation_deg)
    _check_range("shear_deg", config.shear_deg, config.max_shear_deg)
    _check_range("scale", config.scale, positive=True)
    rng = seed if isinstance(seed, np.random.Generator) else make_rng(seed)
    if not config.enabled:
        return GeomParams(output_size=config.output_size)
    hflip = bool(rng.random() < config.hflip_prob)
    rot = _uniform(rng, config.rotation_deg)
    shx = _uniform(rng, config.shear_deg)
    shy = _uniform(rng, config.shear_deg)
    scale = _uniform(rng, config.scale)
    return GeomParams(hflip, rot, shx, shy, scale, config.output_size)


def _rad(deg):
    # exact zeros and quarter turns keep identity/axis-aligned maps exact
    q, r = divmod(deg, 90.0)
    if r == 0:
        return [(1.0, 0.0), (0.0, 1.0), (-1.0, 0.0), (0.0, -1.0)][int(q) % 4]
    t = math.radians(deg)
    return math.cos(t), math.sin(t)


def geom_matrix(p: GeomParams, in_w: int, in_h: int) -> np.ndarray:
    """Forward 2x3 affine from input pixel coordinates to output coordinates.

    Composition about the image centres: flip, shear, rotate
    (positive = counter-clockwise on screen), scale.
    """
    out_w, out_h = p.output_size or (in_w, in_h)
    cx, cy = (in_w - 1) / 2.0, (in_h - 1) / 2.0
    ox, oy = (out_w - 1) / 2.0, (out_h - 1) / 2.0
    f = -1.0 if p.hflip else 1.0
    flip = np.array([[f, 0.0], [0.0, 1.0]])
    shear = np.array(
        [[1.0, math.tan(math.radians(p.shear_x_deg))], [math.tan(math.radians(p.shear_y_deg)), 1.0]]
    )
    c, s = _rad(p.rotation_deg)
    rot = np.array([[c, s], [-s, c]])
    a = p.scale * (rot @ shear @ flip)
    t = np.array([ox, oy]) - a @ np.array([cx, cy])
    return np.hstack([a, t[:, None]])


def invert_affine(m: np.ndarray) -> np.ndarray:
    a, b, tx = m[0]
    c, d, ty = m[1]
    det = a * d - b * c
    if abs(det) < 1e-9:
        raise ParameterError(f"degenerate affine matrix (det={det:.3g})")
    ia, ib, ic, id_ = d / det, -b / det, -c / det, a / det
    return np.array([[ia, ib, -(ia * tx + ib * ty)], [ic, id_, -(ic * tx + id_ * ty)]])


def warp_frame(img: FrameImage, raster: LabelRaster, m: np.ndarray, out_w: int, out_h: int):
    inv = invert_affine(m)
    data = kernels.warp_bilinear(img.data, inv, out_h, out_w, False)
    labels = kernels.warp_nearest(raster.labels, inv, out_h, out_w, 0, False)
    return FrameImage(data, img.normalized), LabelRaster(labels)


def apply_geom(clip: Clip, p: GeomParams) -> Clip:
    """Apply one affine map to every frame of the clip."""
    if not clip.frames:
        raise DomainError("empty clip")
    img0 = clip.frames[0][0]
    m = geom_matrix(p, img0.width, img0.height)
    out_w, out_h = p.output_size or (img0.width, img0.height)
    return clip.replace_frames(warp_frame(i, r, m, out_w, out_h) for i, r in clip.frames)


def luma(x: np.ndarray) -> np.ndarray:
    return x[..., 0] * LUMA[0] + x[..., 1] * LUMA[1] + x[..., 2] * LUMA[2]


def color_frame(x: np.ndarray, b: float, c: float, s: float, gray: bool) -> np.ndarray:
    """Brightness, contrast, saturation then optional grayscale; unit factors are skipped."""
    if b != 1.0:
        x = np.clip(x * b, 0.0, 1.0)
    if c != 1.0:
        m = luma(x).mean()
        x = np.clip((x - m) * c + m, 0.0, 1.0)
    if s != 1.0:
        g = luma(x)[..., None]
        x = np.clip((x - g) * s + g, 0.0, 1.0)
    if gray:
        x = np.repeat(np.clip(luma(x), 0.0, 1.0)[..., None], 3, axis=2)
    return x


def draw_frame_factors(p: ColorParams, n_frames: int, seed, config: ColorConfig = ColorConfig()):
    """Per-frame (brightness, contrast, saturation) triples.

    Consistent mode repeats the clip-level draw; inconsistent mode re-draws
    for every selected frame (all frames when ``jitter_frames`` is None).
    """
    base = (p.brightness, p.contrast, p.saturation)
    if p.mode == "consistent":
        return [base] * n_frames
    rng = seed if isinstance(seed, np.random.Generator) else make_rng(seed)
    selected = p.jitter_frames if p.jitter_frames is not None else (True,) * n_frames
    if len(selected) != n_frames:
        raise ParameterError(f"{len(selected)} jitter flags for {n_frames} frames")
    out = []
    for sel in selected:
        if sel:
            out.append(
                (
                    _uniform(rng, config.brightness),
                    _uniform(rng, config.contrast),
                    _uniform(rng, config.saturation),
                )
            )
        else:
            out.append(base)
    return out


def apply_color(clip: Clip, p: ColorParams, seed=0, config: ColorConfig = ColorConfig()) -> Clip:
    """Photometric perturbation of every frame; label rasters pass through."""
    if any(img.normalized for img in clip.images):
        raise StateError("colour perturbation needs un-normalized [0, 1] images")
    n = len(clip)
    factors = draw_frame_factors(p, n, seed, config)
    gray = p.grayscale_flags(n)
    frames = []
    for (img, raster), (b, c, s), g in zip(clip.frames, factors, gray):
        frames.append((FrameImage(color_frame(img.data, b, c, s, g)), raster))
    return clip.replace_frames(frames)


def _select_frames(rng, n: int, prob: float, how: str) -> tuple[bool, ...]:
    if how == "independent":
        return tuple(bool(v) for v in rng.random(n) < prob)
    if how == "single":
        flags = [False] * n
        if rng.random() < prob:
            flags[int(rng.integers(0, n))] = True
        return tuple(flags)
    raise ParameterError(f"unknown frame_selection {how!r}")


def sample_color(seed, n_frames: int, config: ColorConfig = ColorConfig()) -> ColorParams:
    for name in ("brightness", "contrast", "saturation"):
        _check_range(name, getattr(config, name), positive=True)
    if not config.enabled:
        return ColorParams()
    rng = seed if isinstance(seed, np.random.Generator) else make_rng(seed)
    b = _uniform(rng, config.brightness)
    c = _uniform(rng, config.contrast)
    s = _uniform(rng, config.saturation)
    gray = _select_frames(rng, n_frames, config.grayscale_prob, config.frame_selection)
    jitter = _select_frames(rng, n_frames, config.jitter_prob, config.frame_selection)
    if any(jitter):
        return ColorParams(b, c, s, gray, "inconsistent", jitter)
    return ColorParams(b, c, s, gray, "consistent", None)


def normalize(frame: FrameImage, p: NormalizeParams = NormalizeParams()) -> FrameImage:
    if frame.normalized:
        raise StateError("frame is already normalized")
    mean = np.asarray(p.mean, dtype=np.float64)
    std = np.asarray(p.std, dtype=np.float64)
    return FrameImage((frame.data - mean) / std, normalized=True)


def augment_pipeline(clip: Clip, seed, config: AugmentConfig = AugmentConfig()):
    """Geometry, colour, normalization in that order.

    ``seed`` is an int or a :class:`numpy.random.SeedSequence`. Returns the
    augmented clip and a JSON-ready provenance dict.
    """
    problems = validate_clip(clip)
    if problems:
        raise DomainError("invalid clip: " + "; ".join(problems))
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(int(seed))
    geom_ss, color_ss, jitter_ss = ss.spawn(3)

    img0 = clip.frames[0][0]
    gp = sample_geom(make_rng(geom_ss), config.geometry)
    matrix = geom_matrix(gp, img0.width, img0.height)
    if config.geometry.enabled:
        clip = apply_geom(clip, gp)

    cp = sample_color(make_rng(color_ss), len(clip), config.color)
    jitter_rng = make_rng(jitter_ss)
    factors = draw_frame_factors(cp, len(clip), jitter_rng, config.color)
    if config.color.enabled:
        frames = [
            (FrameImage(color_frame(img.data, b, c, s, g)), r)
            for (img, r), (b, c, s), g in zip(clip.frames, factors, cp.grayscale_flags(len(clip)))
        ]
        clip = clip.replace_frames(frames)

    clip = clip.replace_frames((normalize(img, config.normalize), r) for img, r in clip.frames)

    provenance = {
        "schema_version": PROVENANCE_VERSION,
        "sequence_id": clip.sequence_id,
        "frame_indices": list(clip.frame_indices),
        "padded": clip.padded,
        "geometry": {
            "enabled": config.geometry.enabled,
            "hflip": gp.hflip,
            "rotation_deg": gp.rotation_deg,
            "shear_x_deg": gp.shear_x_deg,
            "shear_y_deg": gp.shear_y_deg,
            "scale": gp.scale,
            "output_size": list(gp.output_size) if gp.output_size else None,
            "frame_matrices": [matrix.tolist()] * len(clip) if config.geometry.enabled else [],
        },
        "color": {
            "enabled": config.color.enabled,
            "mode": cp.mode,
            "frame_factors": [list(f) for f in factors] if config.color.enabled else [],
            "grayscale": cp.grayscale_flags(len(clip)),
        },
        "normalize": {"mean": list(config.normalize.mean), "std": list(config.normalize.std)},
    }
    return clip, provenance
