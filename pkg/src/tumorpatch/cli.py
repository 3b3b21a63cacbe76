"""Batch command-line front end.

Subcommands:
  extract   -- run one patching strategy over a directory of cases
  evaluate  -- compare strategies on real cases or generated phantoms
  phantom   -- materialize a synthetic phantom corpus to disk
  metrics   -- one-shot metric evaluation on files (bindings interop)

Data goes to files, logs go to stderr.  All randomness is seeded via
flags; reruns with identical inputs and seeds produce identical bytes
(the wall-time column of comparison.csv excepted).
"""

import argparse
import json
import logging
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace

import numpy as np

from .errors import TumorPatchError
from . import evaluation, metrics, patching, volume_io
from .evaluation import PhantomParams
from .patching import PatchParams
from .preprocess import RoiParams

log = logging.getLogger("tumorpatch")

EXIT_OK = 0
EXIT_CASE_FAILURES = 1
EXIT_USAGE = 2


def _atomic_write_text(path, text: str) -> None:
    volume_io._atomic_write(path, text.encode())


def _add_common_strategy_flags(sp):
    sp.add_argument("--size", type=int, default=128, help="patch side length (default 128)")
    sp.add_argument("--min-voxels", type=int, default=20,
                    help="drop ROI components smaller than this (default 20)")
    sp.add_argument("--connectivity", type=int, default=26, choices=(6, 18, 26),
                    help="3D adjacency for component labeling (default 26)")
    sp.add_argument("--seed", type=int, default=42, help="seed for random strategies")
    sp.add_argument("--stride", type=int, default=64, help="stride for overlapping patches")
    sp.add_argument("--yen-levels", type=int, default=1,
                    help="multilevel Yen depth (1 for two-class data, 2 for air/tissue/tumor)")
    sp.add_argument("--sigma", type=float, default=1.0, help="gaussian blur sigma")
    sp.add_argument("--radius", type=int, default=2, help="gaussian kernel radius")
    sp.add_argument("--se-radius", type=int, default=1, help="morphology box radius")
    sp.add_argument("--largest-only", action="store_true",
                    help="centroid of the largest component instead of the union")
    sp.add_argument("--jobs", type=int, default=1, help="case-level worker threads")


def _patch_params(args, case_id: str = "case", debug_dir=None) -> PatchParams:
    roi = RoiParams(
        sigma=args.sigma,
        radius=args.radius,
        yen_levels=args.yen_levels,
        se_radius=args.se_radius,
        debug_dir=debug_dir,
        case_id=case_id,
    )
    return PatchParams(
        size=args.size,
        min_voxels=args.min_voxels,
        connectivity=args.connectivity,
        seed=args.seed,
        stride=args.stride,
        largest_only=args.largest_only,
        roi=roi,
    )


def _out_dir(args) -> str:
    # env override applies to the output directory only
    return os.environ.get("TUMORPATCH_OUT", args.out_dir)


def _discover_cases(in_dir: str) -> list:
    entries = sorted(
        d for d in os.listdir(in_dir) if os.path.isdir(os.path.join(in_dir, d))
    )
    if not entries:
        raise TumorPatchError(f"no case directories under {in_dir}")
    return [os.path.join(in_dir, d) for d in entries]


def _spec_manifest(spec, files) -> dict:
    params = {}
    for k, v in spec.strategy_params.items():
        params[k] = list(v) if isinstance(v, tuple) else v
    return {
        "origin": list(spec.origin),
        "size": list(spec.size),
        "warnings": list(spec.warnings),
        "params": params,
        "files": files,
    }


def _extract_one(case_dir: str, args, out_root: str) -> dict:
    case = volume_io.load_case(case_dir)
    debug_dir = None
    case_out = os.path.join(out_root, case.case_id)
    if args.debug_dump:
        debug_dir = os.path.join(case_out, "debug")
    params = _patch_params(args, case.case_id, debug_dir)
    patches = patching.generate_patches(case, args.strategy, params)
    os.makedirs(case_out, exist_ok=True)

    ext = ".nii.gz" if args.format == "nifti" else ".raw"
    entries = []
    for i, p in enumerate(patches):
        tag = f"{case.case_id}_{args.strategy}_p{i:02d}"
        files = {}
        for mod, arr in p.data.items():
            path = os.path.join(case_out, f"{tag}_{mod}{ext}")
            volume_io.save_volume(volume_io.Volume3D(np.asarray(arr, dtype=np.float32)), path)
            files[mod] = os.path.basename(path)
        if p.mask_crop is not None:
            path = os.path.join(case_out, f"{tag}_seg{ext}")
            volume_io.save_mask(volume_io.SegMask3D(p.mask_crop), path)
            files["seg"] = os.path.basename(path)
        entries.append(_spec_manifest(p.spec, files))

    manifest = {
        "case_id": case.case_id,
        "strategy": args.strategy,
        "params": {
            "size": args.size, "min_voxels": args.min_voxels, "seed": args.seed,
            "stride": args.stride, "connectivity": args.connectivity,
            "yen_levels": args.yen_levels, "sigma": args.sigma,
            "radius": args.radius, "se_radius": args.se_radius,
        },
        "patches": entries,
    }
    if len(entries) == 1:  # single-patch strategies flatten the window info
        manifest.update(
            origin=entries[0]["origin"],
            size=entries[0]["size"],
            warnings=entries[0]["warnings"],
        )
    if case.mask is not None:
        wt = np.argwhere(np.isin(case.mask.labels, metrics.REGIONS["WT"]))
        if len(wt):
            manifest["tumor_centroid"] = [float(c) for c in wt.mean(axis=0)]
    _atomic_write_text(os.path.join(case_out, "manifest.json"),
                       json.dumps(manifest, indent=2, sort_keys=True))
    return manifest


def cmd_extract(args) -> int:
    out_root = _out_dir(args)
    os.makedirs(out_root, exist_ok=True)
    case_dirs = _discover_cases(args.in_dir)
    failures = 0

    def run(case_dir):
        try:
            _extract_one(case_dir, args, out_root)
            return None
        except (TumorPatchError, ValueError, OSError) as e:
            return (case_dir, e)

    if args.jobs > 1:
        with ThreadPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(run, case_dirs))
    else:
        results = [run(d) for d in case_dirs]
    for res in results:
        if res is not None:
            failures += 1
            log.error("case %s failed: %s", os.path.basename(res[0]), res[1])
    done = len(case_dirs) - failures
    log.info("extracted %d/%d cases (strategy=%s)", done, len(case_dirs), args.strategy)
    return EXIT_CASE_FAILURES if failures else EXIT_OK


def cmd_evaluate(args) -> int:
    out_root = _out_dir(args)
    os.makedirs(out_root, exist_ok=True)
    strategies = [s.strip() for s in args.strategies.split(",") if s.strip()]
    params = _patch_params(args)

    if args.phantoms > 0:
        pp = PhantomParams(contrast=args.contrast, noise_sigma=args.noise_sigma)
        root = np.random.SeedSequence(args.seed)
        seeds = [int(c.generate_state(1, np.uint64)[0]) for c in root.spawn(args.phantoms)]

        def corpus():
            return [(lambda s=s: evaluation.generate_phantom(s, pp)) for s in seeds]
    else:
        if args.in_dir is None:
            raise TumorPatchError("evaluate needs --phantoms N or an input directory")
        dirs = _discover_cases(args.in_dir)

        def corpus():
            return [(lambda d=d: volume_io.load_case(d)) for d in dirs]

    reports, csv_text, summary = evaluation.compare_strategies(corpus(), strategies, params)
    for rep in reports:
        _atomic_write_text(
            os.path.join(out_root, f"report_{rep.strategy}.csv"),
            evaluation.report_to_csv(rep),
        )
        for cid, msg in rep.failures:
            log.warning("%s: case %s failed: %s", rep.strategy, cid, msg)
    _atomic_write_text(os.path.join(out_root, "comparison.csv"), csv_text)

    imb = evaluation.imbalance_report(corpus(), strategies, params)
    _atomic_write_text(os.path.join(out_root, "imbalance.json"),
                       evaluation.imbalance_to_json(imb))
    any_fail = any(rep.failures for rep in reports)
    log.info("evaluated %d strategies -> %s", len(strategies), out_root)
    return EXIT_CASE_FAILURES if any_fail else EXIT_OK


def cmd_phantom(args) -> int:
    out_root = _out_dir(args)
    os.makedirs(out_root, exist_ok=True)
    shape = tuple(int(v) for v in args.shape.split(","))
    if len(shape) != 3:
        raise TumorPatchError(f"--shape needs nx,ny,nz, got {args.shape!r}")
    margin = min(args.center_margin, (min(shape) - 1) // 2 - 1)
    semi_hi = min(args.semi_axes_max, margin - 1.0)
    pp = PhantomParams(
        shape=shape,
        contrast=args.contrast,
        noise_sigma=args.noise_sigma,
        center_margin=margin,
        semi_axes_range=(min(args.semi_axes_min, semi_hi), semi_hi),
    )
    ext = ".nii.gz" if args.format == "nifti" else ".raw"
    rows = []
    for ph in evaluation.phantom_corpus(args.count, args.seed, pp):
        case_dir = os.path.join(out_root, ph.case_id)
        os.makedirs(case_dir, exist_ok=True)
        volume_io.save_volume(ph.volume, os.path.join(case_dir, f"{ph.case_id}_flair{ext}"))
        volume_io.save_mask(ph.mask, os.path.join(case_dir, f"{ph.case_id}_seg{ext}"))
        rows.append({
            "case_id": ph.case_id,
            "seed": ph.seed,
            "center": list(ph.center),
            "semi_axes": list(ph.semi_axes),
            "contrast": pp.contrast,
            "noise_sigma": pp.noise_sigma,
            "low_signal": ph.low_signal,
        })
    _atomic_write_text(
        os.path.join(out_root, "manifest.json"),
        json.dumps({"count": args.count, "seed": args.seed, "shape": list(shape),
                    "cases": rows}, indent=2, sort_keys=True),
    )
    log.info("wrote %d phantom cases -> %s", args.count, out_root)
    return EXIT_OK


def _load_grid(path):
    if path.endswith(".nii") or path.endswith(".nii.gz"):
        return volume_io.load_volume(path).data
    arr, _ = volume_io._read_raw(path)
    return arr


def cmd_metrics(args) -> int:
    if args.metric == "dice":
        p = _load_grid(args.pred).astype(np.float64)
        t = _load_grid(args.truth)
        t = np.isin(t, metrics.REGIONS["WT"]) if t.dtype.kind in "iu" else t != 0
        out = {"dice": metrics.dice(p, t, args.eps),
               "dice_loss": metrics.dice_loss(p, t, args.eps)}
    elif args.metric == "focal":
        out = {"focal_loss": metrics.focal_loss(args.pt, args.alpha, args.gamma)}
    elif args.metric == "tumor-fraction":
        out = {"tumor_fraction": metrics.tumor_fraction(_load_grid(args.mask))}
    else:  # pragma: no cover - argparse restricts choices
        raise TumorPatchError(f"unknown metric {args.metric}")
    json.dump(out, sys.stdout)
    sys.stdout.write("\n")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="tumorpatch",
        description="Tumor-centered patch extraction and evaluation for 3D brain MRI",
    )
    sub = ap.add_subparsers(dest="command", required=True)

    ex = sub.add_parser("extract", help="extract patches for every case in a directory")
    ex.add_argument("in_dir", help="directory of case subdirectories")
    ex.add_argument("out_dir", help="output directory (env TUMORPATCH_OUT overrides)")
    ex.add_argument("--strategy", default="cca", choices=patching.STRATEGIES)
    ex.add_argument("--format", default="raw", choices=("raw", "nifti"))
    ex.add_argument("--debug-dump", action="store_true",
                    help="dump per-stage ROI grids under <case>/debug/")
    _add_common_strategy_flags(ex)
    ex.set_defaults(func=cmd_extract)

    ev = sub.add_parser("evaluate", help="compare strategies; write reports")
    ev.add_argument("in_dir", nargs="?", default=None,
                    help="directory of cases with masks (omit when using --phantoms)")
    ev.add_argument("out_dir", help="report output directory")
    ev.add_argument("--strategies", default="cca,random,centered_crop")
    ev.add_argument("--phantoms", type=int, default=0,
                    help="evaluate on N generated phantoms instead of real cases")
    ev.add_argument("--contrast", type=float, default=5.0)
    ev.add_argument("--noise-sigma", type=float, default=1.0)
    _add_common_strategy_flags(ev)
    ev.set_defaults(func=cmd_evaluate)

    ph = sub.add_parser("phantom", help="write a synthetic phantom corpus")
    ph.add_argument("out_dir")
    ph.add_argument("--count", type=int, default=5)
    ph.add_argument("--seed", type=int, default=3)
    ph.add_argument("--shape", default="240,240,155")
    ph.add_argument("--contrast", type=float, default=5.0)
    ph.add_argument("--noise-sigma", type=float, default=1.0)
    ph.add_argument("--center-margin", type=int, default=64)
    ph.add_argument("--semi-axes-min", type=float, default=18.0)
    ph.add_argument("--semi-axes-max", type=float, default=55.0)
    ph.add_argument("--format", default="raw", choices=("raw", "nifti"))
    ph.set_defaults(func=cmd_phantom)

    me = sub.add_parser("metrics", help="evaluate one metric on files or scalars")
    mesub = me.add_subparsers(dest="metric", required=True)
    d = mesub.add_parser("dice")
    d.add_argument("--pred", required=True, help="probability or binary grid (raw/nifti)")
    d.add_argument("--truth", required=True, help="label or binary grid (raw/nifti)")
    d.add_argument("--eps", type=float, default=1e-6)
    f = mesub.add_parser("focal")
    f.add_argument("--pt", type=float, required=True)
    f.add_argument("--alpha", type=float, default=0.25)
    f.add_argument("--gamma", type=float, default=2.0)
    t = mesub.add_parser("tumor-fraction")
    t.add_argument("--mask", required=True, help="label grid (raw/nifti)")
    me.set_defaults(func=cmd_metrics)

    return ap


def main(argv=None) -> int:
    logging.basicConfig(stream=sys.stderr, level=logging.INFO, format="%(message)s")
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        return args.func(args)
    except TumorPatchError as e:
        log.error("error: %s", e)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
