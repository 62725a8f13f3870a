"""Region similarity (J), boundary accuracy (F) and their mean, at frame,
object, sequence and dataset level.

Reduction order is fixed (sorted sequence IDs, then object IDs, then frame
names) and sums use ``math.fsum`` so aggregates do not depend on how the work
was scheduled.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from decimal import Decimal
from pathlib import Path
from typing import Mapping

import numpy as np

from . import kernels
from .core import DomainError, LabelRaster, as_bool_mask, check_same_shape, fmt4, mean_jf

log = logging.getLogger(__name__)

REPORT_VERSION = 1

# Published (method, J, F, J&F) rows, kept as decimal strings.
LEADERBOARD = (
    ("imaplus (1st)", "0.8359", "0.9092", "0.8726"),
    ("KirinCZW (ours)", "0.8250", "0.9007", "0.8628"),
    ("dumplings (3rd)", "0.8028", "0.8757", "0.8392"),
)
ABLATION = (
    ("Cutie (val)", "0.6511", "0.7619", "0.7065"),
    ("Baseline (val)", "0.6953", "0.7761", "0.7357"),
    ("Baseline + DA (val)", "0.7181", "0.7947", "0.7564"),
    ("Baseline + DA + MSS (val)", "0.7339", "0.8191", "0.7765"),
    ("Baseline + DA + MSS (test)", "0.8250", "0.9007", "0.8628"),
)
TABLES = {"table1": LEADERBOARD, "table2": ABLATION}


@dataclass(frozen=True)
class BoundaryParams:
    tolerance_fraction: float = 0.008
    min_radius: int = 1

    def __post_init__(self):
        if not self.tolerance_fraction > 0:
            raise DomainError("tolerance_fraction must be > 0")

    def radius(self, shape) -> int:
        h, w = shape
        r = self.tolerance_fraction * math.hypot(h, w)
        return max(self.min_radius, int(math.floor(r + 0.5)))


def jaccard(pred, gt) -> float:
    p = as_bool_mask(pred)
    g = as_bool_mask(gt)
    check_same_shape(p, g)
    union = int(np.count_nonzero(p | g))
    if union == 0:
        return 1.0
    return int(np.count_nonzero(p & g)) / union


def extract_boundary(mask) -> np.ndarray:
    return kernels.boundary_map(as_bool_mask(mask))


def boundary_f(pred, gt, params: BoundaryParams = BoundaryParams()) -> float:
    p = as_bool_mask(pred)
    g = as_bool_mask(gt)
    check_same_shape(p, g)
    pb = kernels.boundary_map(p)
    gb = kernels.boundary_map(g)
    n_p = int(np.count_nonzero(pb))
    n_g = int(np.count_nonzero(gb))
    if n_p == 0 and n_g == 0:
        return 1.0
    if n_p == 0 or n_g == 0:
        return 0.0
    r = params.radius(p.shape)
    precision = int(np.count_nonzero(pb & kernels.dilate_disk(gb, r))) / n_p
    recall = int(np.count_nonzero(gb & kernels.dilate_disk(pb, r))) / n_g
    if precision + recall == 0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


def _mean(values) -> float:
    values = list(values)
    return math.fsum(values) / len(values)


@dataclass
class MetricReport:
    per_frame: dict = field(default_factory=dict)  # (seq, obj, frame) -> (J, F)
    per_object: dict = field(default_factory=dict)  # (seq, obj) -> (J, F)
    per_sequence: dict = field(default_factory=dict)  # seq -> (J, F, J&F)
    aggregate: tuple = (0.0, 0.0, 0.0)
    missing: list = field(default_factory=list)  # (seq, frame) pairs with no prediction

    @property
    def n_frames(self) -> int:
        return len({(s, fr) for s, _, fr in self.per_frame})

    @property
    def n_objects(self) -> int:
        return len(self.per_object)

    def finalize(self) -> "MetricReport":
        """Recompute per-sequence and aggregate values from ``per_object``."""
        if not self.per_object:
            raise DomainError("report has no scored objects")
        keys = sorted(self.per_object)
        by_seq: dict[str, list] = {}
        for k in keys:
            by_seq.setdefault(k[0], []).append(self.per_object[k])
        self.per_sequence = {}
        for seq in sorted(by_seq):
            j = _mean(v[0] for v in by_seq[seq])
            f = _mean(v[1] for v in by_seq[seq])
            self.per_sequence[seq] = (j, f, mean_jf(j, f))
        j = _mean(self.per_object[k][0] for k in keys)
        f = _mean(self.per_object[k][1] for k in keys)
        self.aggregate = (j, f, mean_jf(j, f))
        self.missing = sorted(set(self.missing))
        return self

    def summary_line(self) -> str:
        j, f, jf = self.aggregate
        return f"J={fmt4(j)} F={fmt4(f)} J&F={fmt4(jf)}"

    def to_json(self) -> dict:
        sequences = []
        for seq, (sj, sf, sjf) in self.per_sequence.items():
            objects = []
            for (s, obj) in sorted(k for k in self.per_object if k[0] == seq):
                oj, of = self.per_object[(s, obj)]
                frames = [
                    {"frame": fr, "J": v[0], "F": v[1]}
                    for (s2, o2, fr), v in sorted(self.per_frame.items())
                    if s2 == seq and o2 == obj
                ]
                objects.append(
                    {"object": obj, "J": oj, "F": of, "J&F": mean_jf(oj, of), "frames": frames}
                )
            sequences.append({"sequence": seq, "J": sj, "F": sf, "J&F": sjf, "objects": objects})
        j, f, jf = self.aggregate
        return {
            "schema_version": REPORT_VERSION,
            "aggregate": {"J": j, "F": f, "J&F": jf},
            "counts": {
                "sequences": len(self.per_sequence),
                "objects": self.n_objects,
                "frames": self.n_frames,
                "missing_frames": len(self.missing),
            },
            "missing": [list(m) for m in self.missing],
            "sequences": sequences,
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["sequence", "object", "J", "F", "J&F"])
        for (seq, obj) in sorted(self.per_object):
            j, f = self.per_object[(seq, obj)]
            w.writerow([seq, obj, fmt4(j), fmt4(f), fmt4(mean_jf(j, f))])
        return buf.getvalue()


def _labels(x):
    if x is None:
        return None
    return x.labels if isinstance(x, LabelRaster) else np.asarray(x)


def evaluate_sequence(
    pred: Mapping[str, object],
    gt: Mapping[str, object],
    params: BoundaryParams = BoundaryParams(),
    sequence_id: str = "sequence",
    exclude_first: bool = True,
    exclude_last: bool = False,
) -> MetricReport:
    """Score one sequence.

    ``gt`` maps frame names (sorting temporally) to label rasters; ``pred``
    maps frame names to label rasters, with absent or ``None`` entries
    counted as missing predictions that score zero. Objects are all IDs
    present anywhere in the ground truth.
    """
    names = sorted(gt)
    if not names:
        raise DomainError(f"{sequence_id}: no ground-truth frames")
    gts = {n: _labels(gt[n]) for n in names}
    objects = sorted({int(i) for n in names for i in np.unique(gts[n]) if i != 0})
    scored = names[1:] if exclude_first else list(names)
    if exclude_last and scored and scored[-1] == names[-1]:
        scored = scored[:-1]
    if not scored:
        raise DomainError(f"{sequence_id}: no frames left to score")
    if not objects:
        raise DomainError(f"{sequence_id}: ground truth contains no objects")

    report = MetricReport()
    for name in scored:
        g = gts[name]
        p = _labels(pred.get(name))
        if p is None:
            log.warning("%s: missing prediction for frame %s, scoring zero", sequence_id, name)
            report.missing.append((sequence_id, name))
            for obj in objects:
                report.per_frame[(sequence_id, obj, name)] = (0.0, 0.0)
            continue
        if p.shape != g.shape:
            raise DomainError(f"{sequence_id}/{name}: prediction shape {p.shape} != {g.shape}")
        for obj in objects:
            pm, gm = p == obj, g == obj
            report.per_frame[(sequence_id, obj, name)] = (jaccard(pm, gm), boundary_f(pm, gm, params))
    for obj in objects:
        vals = [report.per_frame[(sequence_id, obj, n)] for n in scored]
        report.per_object[(sequence_id, obj)] = (_mean(v[0] for v in vals), _mean(v[1] for v in vals))
    return report.finalize()


def aggregate_reports(reports) -> MetricReport:
    reports = list(reports)
    if not reports:
        raise DomainError("no reports to aggregate")
    out = MetricReport()
    for r in reports:
        clash = set(r.per_object) & set(out.per_object)
        if clash:
            raise DomainError(f"duplicate (sequence, object) entries: {sorted(clash)[:3]}")
        out.per_frame.update(r.per_frame)
        out.per_object.update(r.per_object)
        out.missing.extend(r.missing)
    out.per_frame = dict(sorted(out.per_frame.items()))
    out.per_object = dict(sorted(out.per_object.items()))
    return out.finalize()


def replay_table(rows) -> list[dict]:
    """Recompute J&F for published ``(method, J, F, J&F)`` rows in exact decimals."""
    out = []
    for method, j, f, jf in rows:
        mean = mean_jf(Decimal(j), Decimal(f))
        out.append(
            {
                "method": method,
                "J": Decimal(j),
                "F": Decimal(f),
                "published": Decimal(jf),
                "computed": mean,
                "deviation": abs(mean - Decimal(jf)),
            }
        )
    return out


def _mask_dir(root: Path) -> Path:
    ann = root / "Annotations"
    return ann if ann.is_dir() else root


def list_mask_tree(root) -> dict[str, dict[str, Path]]:
    """``{sequence: {frame_name: path}}`` for a tree of indexed PNG masks."""
    base = _mask_dir(Path(root))
    out = {}
    for seq_dir in sorted(p for p in base.iterdir() if p.is_dir()):
        frames = {p.stem: p for p in sorted(seq_dir.glob("*.png"))}
        if frames:
            out[seq_dir.name] = frames
    return out


def _eval_job(args):
    from .datakit import read_mask

    seq_id, gt_paths, pred_paths, params, exclude_first, exclude_last = args
    gt = {n: read_mask(p) for n, p in gt_paths.items()}
    pred = {n: read_mask(p) for n, p in pred_paths.items() if n in gt}
    return evaluate_sequence(pred, gt, params, seq_id, exclude_first, exclude_last)


def evaluate_trees(
    pred_root,
    gt_root=None,
    manifest=None,
    params: BoundaryParams = BoundaryParams(),
    exclude_first: bool = True,
    exclude_last: bool = False,
    jobs: int = 1,
) -> MetricReport:
    """Evaluate a prediction tree against a ground-truth tree or a manifest.

    With a manifest, sequence IDs are ``<dataset>/<name>`` and predictions
    are looked up under ``pred_root/<dataset>/<name>`` and then
    ``pred_root/<name>``.
    """
    pred_root = Path(pred_root)
    tasks = []
    if manifest is not None:
        for rec in manifest.records:
            gt_paths = {Path(m).stem: Path(m) for m in rec.mask_paths}
            name = rec.sequence_id.split("/", 1)[-1]
            for cand in (pred_root / rec.sequence_id, pred_root / name):
                if cand.is_dir():
                    preds = {p.stem: p for p in cand.glob("*.png")}
                    tasks.append((rec.sequence_id, gt_paths, preds))
                    break
    else:
        gt_tree = list_mask_tree(gt_root)
        pred_tree = list_mask_tree(pred_root)
        for seq in sorted(set(gt_tree) & set(pred_tree)):
            tasks.append((seq, gt_tree[seq], pred_tree[seq]))
    if not tasks:
        raise DomainError("no sequences in common between predictions and ground truth")
    args = [(s, g, p, params, exclude_first, exclude_last) for s, g, p in tasks]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            reports = list(pool.map(_eval_job, args))
    else:
        reports = [_eval_job(a) for a in args]
    return aggregate_reports(reports)
