"""Command-line entry point: ``vostools <subcommand>``.

Exit codes: 0 success, 1 a check failed, 2 bad input or configuration.
Logs go to stderr, results to files, one summary line to stdout.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from decimal import Decimal, InvalidOperation
from pathlib import Path

import numpy as np

from . import config as cfgmod
from .augment import AugmentConfig, augment_pipeline
from .core import (
    CLIP_LENGTH,
    DEFAULT_SEED,
    MAX_INSTANCES,
    DomainError,
    FormatError,
    ParameterError,
    ScaleConfig,
    derive_seed,
    fmt4,
    mean_jf,
)
from .datakit import IngestionError, Manifest, build_manifest, read_include_list, sample_clip, write_mask
from .losses import gradcheck_suite
from .metrics import TABLES, BoundaryParams, evaluate_trees, replay_table
from .postproc import DEFAULT_CONFIG, load_run_config, postprocess_frame, read_mslg

log = logging.getLogger("vostools")

EXIT_OK, EXIT_CHECK, EXIT_INPUT = 0, 1, 2
GRAD_TOLERANCE = 1e-6
TABLE_TOLERANCE = Decimal("5e-5")


class UsageError(Exception):
    pass


def _seed(value) -> int:
    try:
        s = int(value)
    except (TypeError, ValueError):
        raise UsageError(f"seed must be an integer, got {value!r}")
    if not 0 <= s < 2**64:
        raise UsageError(f"seed must be a 64-bit unsigned value, got {s}")
    return s


def _pick(flag, block: dict, key: str, default):
    """Flag value if given, else config value, else default."""
    if flag is not None:
        return flag
    return block.get(key, default)


def _existing(path, what) -> Path:
    p = Path(path)
    if not p.exists():
        raise UsageError(f"{what} does not exist: {p}")
    return p


def _common(cfg, args):
    seed = _seed(_pick(args.seed, cfg, "seed", DEFAULT_SEED))
    jobs = _pick(args.jobs, cfg, "jobs", 1)
    if jobs < 1:
        raise UsageError("--jobs must be >= 1")
    out = Path(_pick(args.out, cfg, "out", "."))
    return seed, jobs, out


# build-dataset ---------------------------------------------------------------


def _parse_root(arg: str):
    if "=" not in arg:
        p = Path(arg)
        return p.name, p
    name, path = arg.split("=", 1)
    if not name or "/" in name:
        raise UsageError(f"bad dataset name in {arg!r}")
    return name, Path(path)


def cmd_build_dataset(args, cfg) -> int:
    _, jobs, out = _common(cfg, args)
    block = cfg.get("dataset", {})
    roots = [_parse_root(r) for r in args.root] if args.root else [tuple(r) for r in block.get("roots", [])]
    if not roots:
        raise UsageError("at least one --root NAME=DIR is required")
    missing = [str(p) for _, p in roots if not Path(p).is_dir()]
    if missing:
        raise UsageError("dataset root not found: " + ", ".join(missing))
    names = [n for n, _ in roots]
    if len(set(names)) != len(names):
        raise UsageError(f"dataset names must be unique: {names}")
    include_path = _pick(args.include, block, "include", None)
    include = read_include_list(_existing(include_path, "include list")) if include_path else None
    tls = _pick(args.target_long_side, block, "target_long_side", 1024)
    manifest = build_manifest(roots, tls, include=include, jobs=jobs)
    out.mkdir(parents=True, exist_ok=True)
    manifest.save(out / "manifest.json")
    t = manifest.totals
    excl = f" excluded={len(manifest.excluded)}" if manifest.excluded else ""
    print(f"videos={t['videos']} instances={t['instances']} annotated_frames={t['annotated_frames']}{excl}")
    return EXIT_OK


# augment ---------------------------------------------------------------------


def _augment_one(job):
    idx, record, seed, acfg, clip_len, max_objects, tls, out = job
    sample_ss, aug_ss = derive_seed(seed, record.sequence_id, idx).spawn(2)
    clip = sample_clip(record, clip_len, max_objects, np.random.Generator(np.random.PCG64(sample_ss)), tls)
    aug, prov = augment_pipeline(clip, aug_ss, acfg)
    prov["clip_index"] = idx
    prov["id_map"] = {str(k): v for k, v in sorted(clip.id_map.items())}
    d = Path(out) / f"clip_{idx:05d}"
    d.mkdir(parents=True, exist_ok=True)
    for t, (img, raster) in enumerate(aug.frames):
        np.save(d / f"frame_{t:02d}.npy", img.data)
        write_mask(d / f"mask_{t:02d}.png", raster)
    (d / "provenance.json").write_text(json.dumps(prov, indent=2) + "\n")
    return idx, record.sequence_id


def cmd_augment(args, cfg) -> int:
    seed, jobs, out = _common(cfg, args)
    block = cfg.get("augment", {})
    manifest_path = _existing(args.manifest, "manifest")
    manifest = Manifest.load(manifest_path)
    if not manifest.records:
        raise UsageError("manifest has no records")
    try:
        acfg = AugmentConfig.from_dict(block)
    except TypeError as exc:
        raise ParameterError(f"augment config: {exc}") from exc
    n = _pick(args.clips, block, "clips", len(manifest.records))
    clip_len = _pick(args.clip_len, block, "clip_len", CLIP_LENGTH)
    max_objects = _pick(args.max_objects, block, "max_objects", MAX_INSTANCES)
    tls = _pick(args.target_long_side, block, "target_long_side", None)
    out.mkdir(parents=True, exist_ok=True)
    recs = manifest.records
    jobs_list = [
        (i, recs[i % len(recs)], seed, acfg, clip_len, max_objects, tls, str(out)) for i in range(n)
    ]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            done = list(pool.map(_augment_one, jobs_list, chunksize=max(1, n // (4 * jobs))))
    else:
        done = [_augment_one(j) for j in jobs_list]
    index = {
        "seed": seed,
        "config": acfg.to_dict(),
        "clips": [{"clip_index": i, "sequence_id": s} for i, s in sorted(done)],
    }
    (out / "index.json").write_text(json.dumps(index, indent=2) + "\n")
    print(f"clips={len(done)} clip_len={clip_len} seed={seed}")
    return EXIT_OK


# postprocess -----------------------------------------------------------------


def _post_one(job):
    src, dst, configs = job
    stack = read_mslg(Path(src).read_bytes())
    labeling = postprocess_frame(stack, configs)
    Path(dst).parent.mkdir(parents=True, exist_ok=True)
    write_mask(dst, labeling.raster)
    return dst


def _scale_configs(args, cfg) -> list[ScaleConfig]:
    if args.configs:
        configs = load_run_config(_existing(args.configs, "scale config file"))
    elif cfg.get("postprocess", {}).get("configs"):
        configs = [ScaleConfig(**c) for c in cfg["postprocess"]["configs"]]
    else:
        configs = [DEFAULT_CONFIG]
    if any(v is not None for v in (args.scale, args.bias, args.threshold)):
        base = configs[0]
        configs = [
            ScaleConfig(
                args.scale if args.scale is not None else base.sigmoid_scale,
                args.bias if args.bias is not None else base.sigmoid_bias,
                args.threshold if args.threshold is not None else base.threshold,
                "cli",
            )
        ]
    return configs


def cmd_postprocess(args, cfg) -> int:
    _, jobs, out = _common(cfg, args)
    logit_dir = _existing(args.logits, "logit directory")
    configs = _scale_configs(args, cfg)
    files = sorted(logit_dir.rglob("*.mslg"))
    if not files:
        raise UsageError(f"no .mslg files under {logit_dir}")
    for f in files:
        with open(f, "rb") as fh:
            if fh.read(4) != b"MSLG":
                raise FormatError(f"{f}: bad MSLG magic")
    job_list = [(str(f), str(out / f.relative_to(logit_dir).with_suffix(".png")), configs) for f in files]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            list(pool.map(_post_one, job_list))
    else:
        for j in job_list:
            _post_one(j)
    tags = ",".join(c.tag or f"{c.sigmoid_scale}/{c.sigmoid_bias}" for c in configs)
    print(f"frames={len(files)} configs={len(configs)} [{tags}]")
    return EXIT_OK


# eval ------------------------------------------------------------------------


def _load_replay(source: str):
    if source in TABLES:
        return list(TABLES[source])
    path = _existing(source, "replay file")
    rows = []
    if path.suffix.lower() == ".json":
        items = json.loads(path.read_text())
        for it in items:
            rows.append((str(it.get("method", "")), str(it["J"]), str(it["F"]), it.get("J&F")))
    else:
        with open(path, newline="") as fh:
            for it in csv.DictReader(fh):
                rows.append((it.get("method", ""), it["J"], it["F"], it.get("J&F") or None))
    return rows


def cmd_replay(source: str) -> int:
    try:
        rows = _load_replay(source)
    except (KeyError, ValueError, TypeError) as exc:
        raise ParameterError(f"bad replay rows: {exc}") from exc
    status = EXIT_OK
    for method, j, f, published in rows:
        try:
            jd, fd = Decimal(j), Decimal(f)
        except InvalidOperation as exc:
            raise ParameterError(f"{method}: non-numeric J/F") from exc
        # displayed value follows the float pipeline; the check is exact decimal
        shown = fmt4(mean_jf(float(jd), float(fd)))
        line = f"{method}: J={fmt4(float(jd))} F={fmt4(float(fd))} J&F={shown}".lstrip(": ")
        if published is not None:
            dev = replay_table([(method, j, f, str(published))])[0]["deviation"]
            ok = dev <= TABLE_TOLERANCE
            line += f" published={published} dev={dev} {'ok' if ok else 'MISMATCH'}"
            if not ok:
                status = EXIT_CHECK
        print(line)
    return status


def cmd_eval(args, cfg) -> int:
    if args.replay:
        return cmd_replay(args.replay)
    _, jobs, out = _common(cfg, args)
    block = cfg.get("metrics", {})
    if args.pred is None:
        raise UsageError("--pred is required")
    pred = _existing(args.pred, "prediction tree")
    manifest = Manifest.load(_existing(args.manifest, "manifest")) if args.manifest else None
    gt = _existing(args.gt, "ground-truth tree") if args.gt else None
    if manifest is None and gt is None:
        raise UsageError("one of --gt or --manifest is required")
    params = BoundaryParams(_pick(args.tolerance, block, "tolerance_fraction", 0.008))
    exclude_first = not args.include_first_frame and block.get("exclude_first", True)
    exclude_last = args.exclude_last_frame or block.get("exclude_last", False)
    report = evaluate_trees(pred, gt, manifest, params, exclude_first, exclude_last, jobs)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_text(report.dumps())
    (out / "report.csv").write_text(report.to_csv())
    if report.missing:
        log.warning("%d frame(s) had no prediction and scored zero", len(report.missing))
    print(report.summary_line())
    return EXIT_OK


# losscheck -------------------------------------------------------------------


def cmd_losscheck(args, cfg) -> int:
    seed, _, _ = _common(cfg, args)
    block = cfg.get("losses", {})
    instances = _pick(args.instances, block, "instances", 100)
    step = _pick(args.step, block, "step", 1e-5)
    devs = gradcheck_suite(seed, instances, step, break_kind=args.break_gradient)
    worst = max(devs.values())
    for kind, dev in devs.items():
        flag = "ok" if dev < GRAD_TOLERANCE else "FAIL"
        print(f"{kind}: max_abs_dev={dev:.3e} {flag}", file=sys.stderr)
    status = EXIT_OK if worst < GRAD_TOLERANCE else EXIT_CHECK
    summary = " ".join(f"{k}={v:.3e}" for k, v in devs.items())
    print(f"gradcheck {summary} tol={GRAD_TOLERANCE:g} {'PASS' if status == EXIT_OK else 'FAIL'}")
    return status


# parser ----------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run config; flags override its values")
    common.add_argument("--seed", type=int, default=None, help="64-bit unsigned seed")
    common.add_argument("--jobs", type=int, default=None, help="worker processes")
    common.add_argument("--out", default=None, help="output directory")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="vostools", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    b = sub.add_parser("build-dataset", parents=[common], help="merge dataset roots into manifest.json")
    b.add_argument("--root", action="append", metavar="NAME=DIR", help="dataset root (repeatable)")
    b.add_argument("--target-long-side", type=int, default=None)
    b.add_argument("--include", default=None, help="file listing sequence names to keep")
    b.set_defaults(func=cmd_build_dataset)

    a = sub.add_parser("augment", parents=[common], help="sample and augment clips")
    a.add_argument("--manifest", required=True)
    a.add_argument("--clips", type=int, default=None)
    a.add_argument("--clip-len", type=int, default=None)
    a.add_argument("--max-objects", type=int, default=None)
    a.add_argument("--target-long-side", type=int, default=None)
    a.set_defaults(func=cmd_augment)

    pp = sub.add_parser("postprocess", parents=[common], help="calibrate and fuse logits into masks")
    pp.add_argument("--logits", required=True, help="directory of .mslg files")
    pp.add_argument("--configs", default=None, help="JSON list of scale configs")
    pp.add_argument("--scale", type=float, default=None)
    pp.add_argument("--bias", type=float, default=None)
    pp.add_argument("--threshold", type=float, default=None)
    pp.set_defaults(func=cmd_postprocess)

    e = sub.add_parser("eval", parents=[common], help="J/F/J&F evaluation")
    e.add_argument("--pred", default=None)
    e.add_argument("--gt", default=None)
    e.add_argument("--manifest", default=None)
    e.add_argument("--tolerance", type=float, default=None, help="boundary tolerance fraction")
    e.add_argument("--include-first-frame", action="store_true")
    e.add_argument("--exclude-last-frame", action="store_true")
    e.add_argument("--replay", default=None, help="table1, table2, or a CSV/JSON of method,J,F rows")
    e.set_defaults(func=cmd_eval)

    lc = sub.add_parser("losscheck", parents=[common], help="finite-difference gradient checks")
    lc.add_argument("--instances", type=int, default=None)
    lc.add_argument("--step", type=float, default=None)
    lc.add_argument("--break-gradient", choices=["ce", "dice", "sim"], default=None, help=argparse.SUPPRESS)
    lc.set_defaults(func=cmd_losscheck)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        cfg = cfgmod.load(args.config)
        return args.func(args, cfg)
    except (UsageError, ParameterError, FormatError, DomainError, IngestionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
