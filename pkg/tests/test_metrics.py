import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vostools.core import DomainError, mean_jf
from vostools.metrics import (
    BoundaryParams,
    aggregate_reports,
    boundary_f,
    evaluate_sequence,
    extract_boundary,
    jaccard,
    replay_table,
    LEADERBOARD,
    ABLATION,
    MetricReport,
)


def brute_jaccard(a, b):
    inter = union = 0
    for y in range(a.shape[0]):
        for x in range(a.shape[1]):
            inter += bool(a[y, x]) and bool(b[y, x])
            union += bool(a[y, x]) or bool(b[y, x])
    return 1.0 if union == 0 else inter / union


def set_boundary(m):
    h, w = m.shape
    out = set()
    for y in range(h):
        for x in range(w):
            if not m[y, x]:
                continue
            for dy, dx in ((-1, 0), (1, 0), (0, -1), (0, 1)):
                yy, xx = y + dy, x + dx
                if not (0 <= yy < h and 0 <= xx < w) or not m[yy, xx]:
                    out.add((y, x))
                    break
    return out


def set_dilate(points, r, h, w):
    out = set()
    for y, x in points:
        for dy in range(-r, r + 1):
            for dx in range(-r, r + 1):
                if dx * dx + dy * dy <= r * r and 0 <= y + dy < h and 0 <= x + dx < w:
                    out.add((y + dy, x + dx))
    return out


def oracle_f(a, b, frac=0.008):
    h, w = a.shape
    r = max(1, int(math.floor(frac * math.hypot(h, w) + 0.5)))
    pb, gb = set_boundary(a), set_boundary(b)
    if not pb and not gb:
        return 1.0
    if not pb or not gb:
        return 0.0
    p = len(pb & set_dilate(gb, r, h, w)) / len(pb)
    rc = len(gb & set_dilate(pb, r, h, w)) / len(gb)
    return 0.0 if p + rc == 0 else 2 * p * rc / (p + rc)


def test_jaccard_examples():
    a = np.zeros((4, 4), bool)
    a[1:3, 1:3] = True
    assert jaccard(a, a) == 1.0
    b = np.zeros((4, 4), bool)
    b[1:3, 2:4] = True
    assert jaccard(a, b) == pytest.approx(1 / 3, abs=1e-15)
    assert jaccard(np.zeros((3, 3)), np.zeros((3, 3))) == 1.0


def test_jaccard_dim_mismatch():
    with pytest.raises(DomainError):
        jaccard(np.zeros((2, 2)), np.zeros((2, 3)))


def test_jaccard_matches_brute_force():
    rng = np.random.default_rng(0)
    for _ in range(200):
        a = rng.random((16, 16)) < rng.random()
        b = rng.random((16, 16)) < rng.random()
        assert jaccard(a, b) == brute_jaccard(a, b)
        assert jaccard(a, b) == jaccard(b, a)


def test_boundary_examples():
    full = np.ones((5, 6), bool)
    ring = np.ones((5, 6), bool)
    ring[1:-1, 1:-1] = False
    assert np.array_equal(extract_boundary(full), ring)
    one = np.zeros((5, 5), bool)
    one[2, 2] = True
    assert np.array_equal(extract_boundary(one), one)
    block = np.zeros((20, 20), bool)
    block[5:8, 5:8] = True
    assert int(extract_boundary(block).sum()) == 8
    assert not extract_boundary(block)[6, 6]


def test_boundary_f_examples():
    a = np.zeros((64, 64), bool)
    a[10:30, 10:30] = True
    assert boundary_f(a, a) == 1.0
    far = np.zeros((64, 64), bool)
    far[45:60, 45:60] = True
    assert boundary_f(a, far) == 0.0
    shifted = np.roll(a, 1, axis=1)
    assert BoundaryParams().radius((64, 64)) >= 1
    assert boundary_f(shifted, a) == 1.0 == oracle_f(shifted, a)


def test_boundary_f_empty_rules():
    z = np.zeros((8, 8), bool)
    a = z.copy()
    a[2:4, 2:4] = True
    assert boundary_f(z, z) == 1.0
    assert boundary_f(a, z) == 0.0 == boundary_f(z, a)


def test_boundary_f_matches_set_oracle():
    rng = np.random.default_rng(1)
    for _ in range(40):
        a = rng.random((32, 32)) < rng.random()
        b = rng.random((32, 32)) < rng.random()
        assert boundary_f(a, b) == oracle_f(a, b)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.001, 0.2), st.floats(0.001, 0.2))
def test_boundary_f_symmetric_and_monotone(seed, t1, t2):
    rng = np.random.default_rng(seed)
    a = rng.random((24, 24)) < 0.4
    b = rng.random((24, 24)) < 0.4
    lo, hi = sorted((t1, t2))
    assert boundary_f(a, b, BoundaryParams(lo)) == boundary_f(b, a, BoundaryParams(lo))
    assert boundary_f(a, b, BoundaryParams(lo)) <= boundary_f(a, b, BoundaryParams(hi))


def _seq(n_frames=4, h=10, w=10):
    gt = {}
    for t in range(n_frames):
        lab = np.zeros((h, w), np.int32)
        lab[1:5, 1 + t : 5 + t] = 1
        lab[6:9, 2:8] = 2
        gt[f"{t:05d}"] = lab
    return gt


def test_evaluate_gt_against_itself():
    gt = _seq()
    r = evaluate_sequence(gt, gt, sequence_id="s")
    assert r.aggregate == (1.0, 1.0, 1.0)
    assert r.n_objects == 2
    assert r.n_frames == 3


def test_evaluate_all_background():
    gt = _seq()
    pred = {k: np.zeros_like(v) for k, v in gt.items()}
    assert evaluate_sequence(pred, gt).aggregate == (0.0, 0.0, 0.0)


def test_evaluate_hand_computed_object_means():
    # object 1: frame 1 IoU 0.5 (half the pixels), frame 2 IoU 1.0
    h, w = 8, 8
    gt, pred = {}, {}
    for t in range(3):
        lab = np.zeros((h, w), np.int32)
        lab[0:4, 0:4] = 1
        lab[5:8, 5:8] = 2
        gt[f"{t}"] = lab
        pred[f"{t}"] = lab.copy()
    pred["1"] = gt["1"].copy()
    pred["1"][0:4, 2:4] = 0
    r = evaluate_sequence(pred, gt, sequence_id="toy")
    assert r.per_frame[("toy", 1, "1")][0] == 0.5
    assert r.per_frame[("toy", 1, "2")][0] == 1.0
    assert r.per_object[("toy", 1)][0] == 0.75
    assert r.per_object[("toy", 2)][0] == 1.0
    assert r.per_sequence["toy"][0] == 0.875


def test_evaluate_missing_frame_scores_zero(caplog):
    gt = _seq()
    pred = dict(gt)
    del pred["00002"]
    r = evaluate_sequence(pred, gt, sequence_id="s")
    assert r.per_frame[("s", 1, "00002")] == (0.0, 0.0)
    assert r.missing == [("s", "00002")]
    assert "missing prediction" in caplog.text
    assert r.aggregate[0] == pytest.approx(2 / 3)


def test_evaluate_first_frame_flag():
    gt = _seq()
    pred = dict(gt)
    pred["00000"] = np.zeros_like(gt["00000"])
    assert evaluate_sequence(pred, gt).aggregate == (1.0, 1.0, 1.0)
    assert evaluate_sequence(pred, gt, exclude_first=False).aggregate[0] < 1.0


def test_aggregate_examples():
    r1 = MetricReport(per_object={("a", 1): (0.6, 0.6)}).finalize()
    r2 = MetricReport(per_object={("b", 1): (0.8, 0.8)}).finalize()
    agg = aggregate_reports([r1, r2])
    assert agg.aggregate[0] == pytest.approx(0.7, abs=1e-15)
    assert aggregate_reports([r2, r1]).aggregate == agg.aggregate
    assert aggregate_reports([r1]).aggregate == r1.aggregate
    with pytest.raises(DomainError):
        aggregate_reports([])


def test_report_jf_fields_are_means():
    rng = np.random.default_rng(5)
    gt = _seq()
    pred = {k: np.where(rng.random(v.shape) < 0.2, 0, v).astype(np.int32) for k, v in gt.items()}
    r = evaluate_sequence(pred, gt, sequence_id="s")
    d = r.to_json()
    for s in d["sequences"]:
        assert abs(s["J&F"] - (s["J"] + s["F"]) / 2) <= 1e-12
        for o in s["objects"]:
            assert abs(o["J&F"] - (o["J"] + o["F"]) / 2) <= 1e-12
    assert abs(d["aggregate"]["J&F"] - mean_jf(d["aggregate"]["J"], d["aggregate"]["F"])) <= 1e-12
    json.dumps(d)


def test_csv_rounding():
    r = MetricReport(per_object={("s", 1): (0.8250, 0.9007)}).finalize()
    assert r.to_csv().splitlines()[1] == "s,1,0.8250,0.9007,0.8628"


def test_replay_tables_within_tolerance():
    for row in replay_table(LEADERBOARD + ABLATION):
        assert row["deviation"] <= type(row["deviation"])("5e-5")
