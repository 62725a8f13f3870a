"""Dataset ingestion: palette mask codec, resolution unification, manifest
building and clip sampling for DAVIS/MOSE-style trees.

Each dataset root is expected to contain ``JPEGImages/<seq>/<frame>.jpg`` and
``Annotations/<seq>/<frame>.png`` where the annotation PNG is indexed and the
palette index is the object ID.
"""

from __future__ import annotations

import io
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from . import kernels
from .core import (
    CLIP_LENGTH,
    MAX_INSTANCES,
    Clip,
    DomainError,
    FormatError,
    FrameImage,
    LabelRaster,
    make_rng,
)

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
IMAGE_SUFFIXES = (".jpg", ".jpeg", ".png")


class IngestionError(OSError):
    """A dataset file could not be read."""


def davis_palette() -> list[int]:
    """The 256-entry colour map used by DAVIS-style annotations."""
    pal = []
    for i in range(256):
        r = g = b = 0
        c = i
        for j in range(8):
            r |= ((c >> 0) & 1) << (7 - j)
            g |= ((c >> 1) & 1) << (7 - j)
            b |= ((c >> 2) & 1) << (7 - j)
            c >>= 3
        pal.extend((r, g, b))
    return pal


_PALETTE = davis_palette()


def encode_palette_mask(raster: LabelRaster | np.ndarray) -> bytes:
    labels = raster.labels if isinstance(raster, LabelRaster) else np.asarray(raster)
    if labels.size and (labels.max() > 255 or labels.min() < 0):
        raise DomainError(f"labels must lie in [0, 255], got max {labels.max()}")
    img = Image.fromarray(labels.astype(np.uint8), mode="P")
    img.putpalette(_PALETTE)
    buf = io.BytesIO()
    img.save(buf, format="PNG", optimize=False)
    return buf.getvalue()


def decode_palette_mask(data: bytes) -> LabelRaster:
    try:
        img = Image.open(io.BytesIO(data))
        img.load()
    except Exception as exc:
        raise FormatError(f"not a readable PNG: {exc}") from exc
    if img.format != "PNG" or img.mode != "P":
        raise FormatError(f"expected indexed (palette) PNG, got {img.format} mode {img.mode}")
    return LabelRaster(np.asarray(img, dtype=np.uint8))


def read_mask(path) -> LabelRaster:
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise IngestionError(f"cannot read {path}: {exc}") from exc
    try:
        return decode_palette_mask(data)
    except FormatError as exc:
        raise IngestionError(f"{path}: {exc}") from exc


def write_mask(path, raster) -> None:
    Path(path).write_bytes(encode_palette_mask(raster))


def read_frame(path) -> FrameImage:
    try:
        with Image.open(path) as img:
            pixels = np.asarray(img.convert("RGB"))
    except Exception as exc:
        raise IngestionError(f"cannot read {path}: {exc}") from exc
    return FrameImage.from_uint8(pixels)


def _resize_matrix(in_w, in_h, out_w, out_h):
    # pixel-centre alignment: src = (dst + 0.5) * in / out - 0.5
    sx = in_w / out_w
    sy = in_h / out_h
    return np.array([[sx, 0.0, 0.5 * sx - 0.5], [0.0, sy, 0.5 * sy - 0.5]])


def target_size(width: int, height: int, target_long_side: int) -> tuple[int, int]:
    if width <= 0 or height <= 0:
        raise DomainError(f"zero-sized input {width}x{height}")
    if target_long_side < 1:
        raise DomainError(f"target_long_side must be >= 1, got {target_long_side}")
    if width >= height:
        return target_long_side, max(1, int(np.floor(height * target_long_side / width + 0.5)))
    return max(1, int(np.floor(width * target_long_side / height + 0.5))), target_long_side


def unify_resolution(frame: FrameImage, raster: LabelRaster, target_long_side: int):
    """Scale the long side to ``target_long_side`` keeping the aspect ratio.

    The image is resampled bilinearly and the raster by nearest neighbour, so
    no new label values can appear.
    """
    if frame.width == 0 or frame.height == 0:
        raise DomainError("zero-sized input")
    if (raster.width, raster.height) != (frame.width, frame.height):
        raise DomainError("image and raster dimensions differ")
    out_w, out_h = target_size(frame.width, frame.height, target_long_side)
    if (out_w, out_h) == (frame.width, frame.height):
        return frame, raster
    inv = _resize_matrix(frame.width, frame.height, out_w, out_h)
    img = kernels.warp_bilinear(frame.data, inv, out_h, out_w, True)
    lab = kernels.warp_nearest(raster.labels, inv, out_h, out_w, 0, True)
    return FrameImage(img, frame.normalized), LabelRaster(lab)


@dataclass
class SequenceRecord:
    sequence_id: str
    source_dataset: str
    frame_paths: list[str]
    mask_paths: list[str]
    native_resolution: tuple[int, int]
    object_ids: list[int]

    @property
    def frame_count(self) -> int:
        return len(self.frame_paths)

    def to_json(self) -> dict:
        return {
            "sequence_id": self.sequence_id,
            "source_dataset": self.source_dataset,
            "frames": list(self.frame_paths),
            "masks": list(self.mask_paths),
            "native_resolution": list(self.native_resolution),
            "object_ids": list(self.object_ids),
        }

    @classmethod
    def from_json(cls, d: dict) -> "SequenceRecord":
        return cls(
            d["sequence_id"],
            d["source_dataset"],
            list(d["frames"]),
            list(d["masks"]),
            tuple(d["native_resolution"]),
            [int(i) for i in d["object_ids"]],
        )

    def annotated_indices(self) -> list[int]:
        stems = {Path(p).stem: i for i, p in enumerate(self.frame_paths)}
        return sorted(stems[Path(m).stem] for m in self.mask_paths)


@dataclass
class Manifest:
    records: list[SequenceRecord]
    target_long_side: int
    excluded: dict[str, str] = field(default_factory=dict)

    @property
    def totals(self) -> dict:
        return {
            "videos": len(self.records),
            "instances": sum(len(r.object_ids) for r in self.records),
            "annotated_frames": sum(len(r.mask_paths) for r in self.records),
        }

    def to_json(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "target_long_side": self.target_long_side,
            "records": [r.to_json() for r in self.records],
            "totals": self.totals,
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2) + "\n"

    def save(self, path) -> None:
        Path(path).write_text(self.dumps())

    @classmethod
    def load(cls, path) -> "Manifest":
        d = json.loads(Path(path).read_text())
        if d.get("schema_version") != SCHEMA_VERSION:
            raise FormatError(f"unsupported manifest schema_version {d.get('schema_version')}")
        m = cls([SequenceRecord.from_json(r) for r in d["records"]], d["target_long_side"])
        if m.totals != d["totals"]:
            raise FormatError("manifest totals do not match its records")
        return m

    def by_id(self) -> dict[str, SequenceRecord]:
        return {r.sequence_id: r for r in self.records}


def _list_frames(folder: Path, suffixes) -> list[Path]:
    return sorted(
        (p for p in folder.iterdir() if p.is_file() and p.suffix.lower() in suffixes),
        key=lambda p: p.name,
    )


def scan_sequence(dataset: str, root: Path, name: str):
    """Build one record, or return ``(None, reason)`` when it must be excluded."""
    seq_id = f"{dataset}/{name}"
    frames = _list_frames(root / "JPEGImages" / name, IMAGE_SUFFIXES)
    if not frames:
        return None, f"{seq_id}: no frames"
    ann_dir = root / "Annotations" / name
    masks = _list_frames(ann_dir, (".png",)) if ann_dir.is_dir() else []
    frame_stems = {p.stem for p in frames}
    stray = [m.name for m in masks if m.stem not in frame_stems]
    if stray:
        return None, f"{seq_id}: masks without frames: {stray[:3]}"
    if not masks or masks[0].stem != frames[0].stem:
        return None, f"{seq_id}: first frame has no annotation"
    try:
        with Image.open(frames[0]) as img:
            size = img.size
    except Exception as exc:
        raise IngestionError(f"cannot read {frames[0]}: {exc}") from exc
    ids: set[int] = set()
    for m in masks:
        raster = read_mask(m)
        if (raster.width, raster.height) != size:
            return None, f"{seq_id}: mask {m.name} size differs from frames"
        ids |= raster.object_ids()
    if not ids:
        return None, f"{seq_id}: annotations contain no objects"
    rec = SequenceRecord(
        seq_id,
        dataset,
        [p.as_posix() for p in frames],
        [p.as_posix() for p in masks],
        (int(size[0]), int(size[1])),
        sorted(ids),
    )
    return rec, None


def read_include_list(path) -> set[str]:
    lines = Path(path).read_text().splitlines()
    return {ln.strip() for ln in lines if ln.strip() and not ln.lstrip().startswith("#")}


def build_manifest(roots, target_long_side: int = 1024, include=None, jobs: int = 1) -> Manifest:
    """Scan every ``(dataset_name, directory)`` root into one manifest.

    ``include`` optionally restricts ingestion to names given either bare
    (``bike``) or prefixed (``DAVIS/bike``). Sequences are scanned in
    parallel; the result is sorted by sequence ID so output never depends on
    scheduling.
    """
    tasks = []
    for dataset, root in roots:
        root = Path(root)
        img_dir = root / "JPEGImages"
        if not img_dir.is_dir():
            raise IngestionError(f"{root}: missing JPEGImages directory")
        for seq_dir in sorted(p for p in img_dir.iterdir() if p.is_dir()):
            name = seq_dir.name
            if include is not None and name not in include and f"{dataset}/{name}" not in include:
                continue
            tasks.append((dataset, root, name))

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(lambda t: scan_sequence(*t), tasks))
    else:
        results = [scan_sequence(*t) for t in tasks]

    records, excluded = [], {}
    for (dataset, _, name), (rec, reason) in zip(tasks, results):
        if rec is None:
            log.warning("excluding %s", reason)
            excluded[f"{dataset}/{name}"] = reason
        else:
            records.append(rec)
    records.sort(key=lambda r: r.sequence_id)
    ids = [r.sequence_id for r in records]
    if len(set(ids)) != len(ids):
        raise DomainError("duplicate sequence ids after prefixing; dataset names must be unique")
    return Manifest(records, target_long_side, excluded)


def clip_window(n_frames: int, annotated: list[int], clip_len: int, rng) -> tuple[list[int], bool]:
    """Frame indices for one clip: a uniformly drawn contiguous window inside
    the annotated span, padded with the last frame when too short."""
    if clip_len < 1:
        raise DomainError("clip_len must be >= 1")
    if not annotated:
        raise DomainError("record has no annotated frames")
    lo, hi = annotated[0], annotated[-1]
    span = hi - lo + 1
    if span >= clip_len:
        start = lo + int(rng.integers(0, span - clip_len + 1))
        return list(range(start, start + clip_len)), False
    # extend past the annotated span before padding
    avail = n_frames - lo
    if avail >= clip_len:
        return list(range(lo, lo + clip_len)), False
    idx = list(range(lo, n_frames))
    return idx + [idx[-1]] * (clip_len - len(idx)), True


def cap_instances(rasters: list[np.ndarray], max_objects: int):
    """Keep the ``max_objects`` largest objects by total area (ties to lower ID).

    Returns the rewritten rasters and the ``{new_id: old_id}`` map. IDs are
    only compacted to ``1..K`` when a kept ID would exceed ``max_objects``.
    """
    stack = np.stack(rasters)
    counts = np.bincount(stack.ravel(), minlength=1)
    ids = [int(i) for i in np.nonzero(counts)[0] if i != 0]
    if len(ids) > max_objects:
        ids.sort(key=lambda i: (-counts[i], i))
        keep = sorted(ids[:max_objects])
    else:
        keep = sorted(ids)
    if keep and keep[-1] > max_objects:
        mapping = {old: new for new, old in enumerate(keep, start=1)}
    else:
        mapping = {i: i for i in keep}
    lut = np.zeros(max(int(stack.max()), 0) + 1, dtype=np.int32)
    for old, new in mapping.items():
        lut[old] = new
    out = [lut[r] for r in rasters]
    return out, {new: old for old, new in mapping.items()}


def sample_clip(
    record: SequenceRecord,
    clip_len: int = CLIP_LENGTH,
    max_objects: int = MAX_INSTANCES,
    seed=0,
    target_long_side: int | None = None,
) -> Clip:
    """Load a clip of ``clip_len`` frames from ``record``, deterministic in ``seed``.

    ``seed`` may be an int or a ready ``numpy.random.Generator``.
    """
    rng = seed if isinstance(seed, np.random.Generator) else make_rng(seed, record.sequence_id)
    ann_idx = record.annotated_indices()
    indices, padded = clip_window(record.frame_count, ann_idx, clip_len, rng)
    mask_by_stem = {Path(m).stem: m for m in record.mask_paths}

    cache: dict[int, tuple[FrameImage, np.ndarray, bool]] = {}
    for i in indices:
        if i in cache:
            continue
        img = read_frame(record.frame_paths[i])
        mask_path = mask_by_stem.get(Path(record.frame_paths[i]).stem)
        if mask_path is not None:
            lab, ann = read_mask(mask_path).labels, True
        else:
            lab, ann = np.zeros((img.height, img.width), dtype=np.int32), False
        cache[i] = (img, lab, ann)

    rasters, id_map = cap_instances([cache[i][1] for i in indices], max_objects)
    frames = []
    for i, lab in zip(indices, rasters):
        img, raster = cache[i][0], LabelRaster(lab)
        if target_long_side is not None:
            img, raster = unify_resolution(img, raster, target_long_side)
        frames.append((img, raster))
    return Clip(
        record.sequence_id,
        tuple(frames),
        tuple(indices),
        tuple(cache[i][2] for i in indices),
        padded,
        id_map,
    )
