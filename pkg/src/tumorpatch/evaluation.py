"""Corpus-level strategy comparison and the synthetic phantom generator.

Phantoms are noisy volumes carrying one ellipsoidal tumor with nested
label shells (necrotic core 1, enhancing rim 4, edema shell 2), giving
the pipeline a desk-scale stand-in with exact ground truth.
"""

import io
import json
import time
from dataclasses import dataclass, field, asdict

import numpy as np

from .errors import TumorPatchError, UndefinedMetricError
from .volume_io import Case, SegMask3D, Volume3D
from . import metrics
from .metrics import REGIONS
from .patching import PatchParams, generate_patches

BRATS_SHAPE = (240, 240, 155)


@dataclass
class PhantomParams:
    shape: tuple = BRATS_SHAPE
    center: tuple | None = None  # None: drawn uniformly from the safe box
    semi_axes: tuple | None = None  # None: drawn from semi_axes_range
    contrast: float = 5.0  # tumor plateau height in units of noise sigma
    noise_sigma: float = 1.0
    label_fractions: tuple = (0.4, 0.7)  # core / rim radii as fractions of the shell
    center_margin: int = 64  # min distance of the center from every face
    semi_axes_range: tuple = (18.0, 55.0)


@dataclass
class Phantom:
    case_id: str
    volume: Volume3D
    mask: SegMask3D
    seed: int
    params: PhantomParams
    center: tuple
    semi_axes: tuple
    low_signal: bool

    def as_case(self) -> Case:
        return Case(self.case_id, {"flair": self.volume}, self.mask)


def _ellipsoid_r2(shape, center, semi_axes) -> np.ndarray:
    """Normalized squared ellipsoid radius at every voxel."""
    grids = np.ogrid[tuple(slice(0, s) for s in shape)]
    r2 = np.zeros(shape, dtype=np.float32)
    for g, c, a in zip(grids, center, semi_axes):
        r2 = r2 + ((g - c) / a).astype(np.float32) ** 2
    return r2


def generate_phantom(seed: int, params: PhantomParams | None = None) -> Phantom:
    """Deterministic phantom: noise background + ellipsoid tumor plateau."""
    params = params or PhantomParams()
    rng = np.random.default_rng(seed)
    shape = tuple(params.shape)

    if params.center is None:
        lo = params.center_margin
        center = tuple(float(rng.uniform(lo, s - 1 - lo)) for s in shape)
    else:
        center = tuple(float(c) for c in params.center)
    if params.semi_axes is None:
        a0, a1 = params.semi_axes_range
        semi = tuple(float(rng.uniform(a0, a1)) for _ in range(3))
    else:
        semi = tuple(float(a) for a in params.semi_axes)
    for c, a, s in zip(center, semi, shape):
        if c - a < 0 or c + a > s - 1:
            raise ValueError(f"tumor (center {center}, semi-axes {semi}) exceeds {shape}")

    sigma = float(params.noise_sigma)
    vol = rng.standard_normal(shape, dtype=np.float32) * np.float32(sigma)
    r2 = _ellipsoid_r2(shape, center, semi)
    inside = r2 <= 1.0
    vol[inside] += np.float32(params.contrast * sigma)

    f_core, f_rim = params.label_fractions
    labels = np.zeros(shape, dtype=np.int16)
    labels[inside] = 2
    labels[r2 <= f_rim**2] = 4
    labels[r2 <= f_core**2] = 1

    return Phantom(
        case_id=f"phantom{seed:05d}",
        volume=Volume3D(vol),
        mask=SegMask3D(labels),
        seed=seed,
        params=params,
        center=center,
        semi_axes=semi,
        low_signal=params.contrast <= 0.0,
    )


def phantom_corpus(count: int, seed: int, params: PhantomParams | None = None):
    """Lazy corpus: yields phantoms with per-case seeds derived from `seed`."""
    root = np.random.SeedSequence(seed)
    for i, child in enumerate(root.spawn(count)):
        child_seed = int(child.generate_state(1, np.uint64)[0])
        yield generate_phantom(child_seed, params)


@dataclass
class PatchEvaluation:
    """Quality record for one patch against the case's ground truth."""

    case_id: str
    strategy: str
    patch_index: int
    origin: tuple
    size: tuple
    tumor_fraction: float
    center_distance: float
    recall: dict  # region -> |R ∩ W| / |R|
    dice: dict  # region -> Dice of (R ∩ W) vs R
    sensitivity: float
    specificity: float
    warnings: tuple = ()


def evaluate_patch(patch, case: Case) -> PatchEvaluation:
    """Score one patch window against the case mask.

    The patch window plays the role of the prediction: per-region
    recall is the captured fraction |R ∩ W| / |R|, Dice compares the
    captured region against the full region, and sensitivity and
    specificity come from the window-vs-whole-tumor confusion counts.
    """
    labels = case.mask.labels
    spec = patch.spec
    crop = patch.mask_crop
    full_counts = {r: int(np.count_nonzero(np.isin(labels, L))) for r, L in REGIONS.items()}
    crop_counts = {r: int(np.count_nonzero(np.isin(crop, L))) for r, L in REGIONS.items()}
    n_window = int(np.prod(spec.size))
    n_total = labels.size

    recall, dsc = {}, {}
    for r in REGIONS:
        if full_counts[r] == 0:
            recall[r] = None
            dsc[r] = None
            continue
        recall[r] = crop_counts[r] / full_counts[r]
        dsc[r] = metrics.dice_from_counts(crop_counts[r], crop_counts[r], full_counts[r])

    tp = crop_counts["WT"]
    fn = full_counts["WT"] - tp
    fp = n_window - tp
    tn = n_total - n_window - fn
    conf = metrics.ConfusionCounts(tp, fp, tn, fn)
    return PatchEvaluation(
        case_id=case.case_id,
        strategy=spec.strategy,
        patch_index=0,
        origin=spec.origin,
        size=spec.size,
        tumor_fraction=tp / n_window,
        center_distance=metrics.center_distance(spec, labels),
        recall=recall,
        dice=dsc,
        sensitivity=metrics.sensitivity(conf),
        specificity=metrics.specificity(conf),
        warnings=spec.warnings,
    )


@dataclass
class StrategyReport:
    strategy: str
    rows: list  # PatchEvaluation, sorted by (case_id, patch_index)
    failures: list  # (case_id, message)
    aggregates: dict
    wall_time_s: float
    n_cases: int


def _mean(values):
    vals = [v for v in values if v is not None]
    return float(np.mean(vals)) if vals else None


def _median(values):
    vals = [v for v in values if v is not None]
    return float(np.median(vals)) if vals else None


def compute_aggregates(rows, n_cases: int) -> dict:
    """Corpus aggregates; multi-patch strategies get per-case best and mean.

    "Best" picks, per case, the patch with maximal whole-tumor recall.
    """
    by_case = {}
    for r in rows:
        by_case.setdefault(r.case_id, []).append(r)
    best_rows, mean_rows = [], []
    for cid in sorted(by_case):
        case_rows = by_case[cid]
        best_rows.append(max(case_rows, key=lambda r: (r.recall["WT"] or 0.0)))
        mean_rows.append(case_rows)

    agg = {
        "patch_count": len(rows),
        "patches_per_case": (len(rows) / n_cases) if n_cases else 0.0,
    }
    for tag, view in (("best", best_rows), ("mean", mean_rows)):
        if tag == "best":
            frac = [r.tumor_fraction for r in view]
            dist = [r.center_distance for r in view]
            rec = {k: _mean([r.recall[k] for r in view]) for k in REGIONS}
        else:
            frac = [_mean([r.tumor_fraction for r in rs]) for rs in view]
            dist = [_mean([r.center_distance for r in rs]) for rs in view]
            rec = {
                k: _mean([_mean([r.recall[k] for r in rs]) for rs in view]) for k in REGIONS
            }
        agg[f"tumor_fraction_{tag}"] = _mean(frac)
        agg[f"tumor_fraction_median_{tag}"] = _median(frac)
        agg[f"center_distance_{tag}"] = _mean(dist)
        for k, v in rec.items():
            agg[f"recall_{k}_{tag}"] = v
    return agg


def evaluate_strategy(cases, strategy: str, params: PatchParams | None = None) -> StrategyReport:
    """Run one strategy over a corpus and score every produced patch.

    Per-case failures are recorded and do not abort the corpus.  Cases
    may be Case objects, Phantom objects, or zero-argument callables
    returning either (so big corpora can be generated lazily).
    """
    params = params or PatchParams()
    rows, failures = [], []
    n_cases = 0
    t0 = time.perf_counter()
    for item in cases:
        case = item() if callable(item) else item
        if isinstance(case, Phantom):
            case = case.as_case()
        n_cases += 1
        if case.mask is None:
            failures.append((case.case_id, "no ground-truth mask"))
            continue
        try:
            patches = generate_patches(case, strategy, params)
            for i, p in enumerate(patches):
                ev = evaluate_patch(p, case)
                ev.patch_index = i
                rows.append(ev)
        except (TumorPatchError, ValueError) as e:
            failures.append((case.case_id, str(e)))
    wall = time.perf_counter() - t0
    rows.sort(key=lambda r: (r.case_id, r.patch_index))
    agg = compute_aggregates(rows, n_cases)
    return StrategyReport(strategy, rows, failures, agg, wall, n_cases)


_ROW_FIELDS = (
    "case_id",
    "patch_index",
    "origin_x",
    "origin_y",
    "origin_z",
    "tumor_fraction",
    "center_distance",
    "sensitivity",
    "specificity",
)


def report_to_csv(report: StrategyReport) -> str:
    """Per-patch rows; deterministic byte-for-byte for a fixed corpus."""
    cols = list(_ROW_FIELDS) + [f"recall_{r}" for r in REGIONS] + [f"dice_{r}" for r in REGIONS]
    cols += ["warnings"]
    buf = io.StringIO()
    buf.write(",".join(cols) + "\n")
    for r in report.rows:
        vals = [r.case_id, str(r.patch_index)]
        vals += [str(o) for o in r.origin]
        vals += [repr(r.tumor_fraction), repr(r.center_distance)]
        vals += [repr(r.sensitivity), repr(r.specificity)]
        vals += ["" if r.recall[k] is None else repr(r.recall[k]) for k in REGIONS]
        vals += ["" if r.dice[k] is None else repr(r.dice[k]) for k in REGIONS]
        vals += [";".join(r.warnings)]
        buf.write(",".join(vals) + "\n")
    return buf.getvalue()


COMPARISON_COLUMNS = (
    ["strategy", "n_cases", "n_patches", "failures"]
    + ["tumor_fraction_best", "tumor_fraction_mean"]
    + ["center_distance_best", "center_distance_mean"]
    + [f"recall_{r}_best" for r in REGIONS]
    + [f"recall_{r}_mean" for r in REGIONS]
    + ["wall_time_s"]
)


def comparison_to_csv(reports) -> str:
    """One row per strategy.  Every column except wall_time_s is
    deterministic for a fixed corpus and seeds."""
    buf = io.StringIO()
    buf.write(",".join(COMPARISON_COLUMNS) + "\n")
    for rep in reports:
        a = rep.aggregates
        vals = [rep.strategy, str(rep.n_cases), str(a["patch_count"]), str(len(rep.failures))]
        for key in COMPARISON_COLUMNS[4:-1]:
            v = a.get(key)
            vals.append("" if v is None else repr(v))
        vals.append(f"{rep.wall_time_s:.3f}")
        buf.write(",".join(vals) + "\n")
    return buf.getvalue()


def compare_strategies(cases, strategies, params: PatchParams | None = None):
    """Evaluate several strategies on one corpus.

    `cases` must be re-iterable (a list, or a factory list of callables).
    Returns (reports, csv_text, summary_dict).
    """
    reports = [evaluate_strategy(cases, s, params) for s in strategies]
    for rep in reports:  # aggregate consistency gate before anything is written
        recomputed = compute_aggregates(rep.rows, rep.n_cases)
        for k, v in recomputed.items():
            w = rep.aggregates[k]
            if v is None or w is None:
                assert v is w, f"aggregate {k} mismatch"
            else:
                assert abs(v - w) <= 1e-12, f"aggregate {k} drifted"
    csv_text = comparison_to_csv(reports)
    summary = {
        rep.strategy: {"aggregates": rep.aggregates, "failures": rep.failures}
        for rep in reports
    }
    return reports, csv_text, summary


def imbalance_report(cases, strategies=("cca",), params: PatchParams | None = None) -> dict:
    """Per-label voxel histogram before and after each strategy's patching.

    Mirrors the class-imbalance analysis: tumor-vs-background ratios on
    the full corpus and inside each strategy's patches, plus per-case
    rows so every ratio is recomputable.
    """
    params = params or PatchParams()
    label_keys = ("0", "1", "2", "4")

    def count_labels(arr):
        return {k: int(np.count_nonzero(arr == int(k))) for k in label_keys}

    def ratio(counts):
        tumor = counts["1"] + counts["2"] + counts["4"]
        return tumor / counts["0"] if counts["0"] else float("inf")

    full_total = {k: 0 for k in label_keys}
    per_strategy = {s: {k: 0 for k in label_keys} for s in strategies}
    case_rows = []
    for item in cases:
        case = item() if callable(item) else item
        if isinstance(case, Phantom):
            case = case.as_case()
        counts = count_labels(case.mask.labels)
        row = {"case_id": case.case_id, "full": counts, "strategies": {}}
        for k in label_keys:
            full_total[k] += counts[k]
        for s in strategies:
            sc = {k: 0 for k in label_keys}
            for p in generate_patches(case, s, params):
                pc = count_labels(p.mask_crop)
                for k in label_keys:
                    sc[k] += pc[k]
            row["strategies"][s] = sc
            for k in label_keys:
                per_strategy[s][k] += sc[k]
        case_rows.append(row)

    full_ratio = ratio(full_total)
    out = {
        "full": {"counts": full_total, "tumor_background_ratio": full_ratio},
        "strategies": {},
        "cases": case_rows,
    }
    for s in strategies:
        r = ratio(per_strategy[s])
        out["strategies"][s] = {
            "counts": per_strategy[s],
            "tumor_background_ratio": r,
            "improvement_factor": (r / full_ratio) if full_ratio else None,
        }
    return out


def imbalance_to_json(report: dict) -> str:
    return json.dumps(report, indent=2, sort_keys=True)
