"""Shared fixtures for the acceptance suite.

The heavy acceptance criteria all consume the same 50-phantom corpus at
BraTS dimensions; one session-scoped pass runs the tumor-centered
pipeline per case and records the scalar statistics each criterion
needs, so volumes never have to be held in memory together.
"""

import time
from dataclasses import dataclass

import numpy as np
import pytest

from tumorpatch import PhantomParams, RoiParams, generate_phantom, zscore_normalize
from tumorpatch import clamp_window, extract_roi, filter_small, label_components, mask_centroid
from tumorpatch import mask_dice, whole_tumor_mask
from tumorpatch.patching import _axis_origins, case_seed, random_origin

CORPUS_SIZE = 50
CORPUS_SEED = 20250809
BRATS_SHAPE = (240, 240, 155)
PATCH = 128
CONTRASTS = (4.5, 5.0, 5.5, 6.5)  # all >= 4 noise sigmas


@dataclass
class CaseStats:
    case_id: str
    seed: int
    contrast: float
    tumor_total: int
    gt_centroid: np.ndarray
    roi_dice_raw: float
    roi_dice_filtered: float
    roi_seconds: float
    cca_origin: tuple
    cca_fallback: bool
    recall_cca: float
    recall_centered: float
    recall_random: float
    recall_random42: float
    recall_overlap_best: float
    dist_cca: float
    dist_centered: float
    dist_random: float
    dist_random42: float


def _window_recall(coords, origin, size=PATCH):
    o = np.asarray(origin)
    inside = ((coords >= o) & (coords < o + size)).all(axis=1)
    return float(inside.sum()) / len(coords)


def _window_distance(origin, centroid, size=PATCH):
    center = np.asarray(origin, dtype=float) + size / 2.0
    return float(np.linalg.norm(center - centroid))


@pytest.fixture(scope="session")
def corpus_stats():
    """One pipeline pass over the acceptance corpus; returns per-case stats
    plus wall-clock figures used by the per-criterion runtime budgets."""
    seeds = [
        int(c.generate_state(1, np.uint64)[0])
        for c in np.random.SeedSequence(CORPUS_SEED).spawn(CORPUS_SIZE)
    ]
    roi_params = RoiParams()
    overlap_origins = [
        (ox, oy, oz)
        for ox in _axis_origins(BRATS_SHAPE[0], PATCH, 64)
        for oy in _axis_origins(BRATS_SHAPE[1], PATCH, 64)
        for oz in _axis_origins(BRATS_SHAPE[2], PATCH, 64)
    ]
    centered = tuple((b - PATCH) // 2 for b in BRATS_SHAPE)

    stats = []
    t_start = time.perf_counter()
    roi_total = 0.0
    for i, seed in enumerate(seeds):
        params = PhantomParams(contrast=CONTRASTS[i % len(CONTRASTS)])
        ph = generate_phantom(seed, params)
        wt = whole_tumor_mask(ph.mask.labels)
        coords = np.argwhere(wt)
        gt_centroid = coords.mean(axis=0)

        norm = zscore_normalize(ph.volume)
        t0 = time.perf_counter()
        roi = extract_roi(norm.data, roi_params)
        roi_sec = time.perf_counter() - t0
        roi_total += roi_sec
        dice_raw = mask_dice(roi, wt)
        comps = filter_small(label_components(roi, 26), 20)
        fallback = not comps.components
        if fallback:
            origin = centered
            dice_filtered = 0.0
        else:
            origin = clamp_window(mask_centroid(comps), PATCH, BRATS_SHAPE)
            dice_filtered = mask_dice(comps.label_grid > 0, wt)

        rand_origin = random_origin(BRATS_SHAPE, (PATCH,) * 3, case_seed(42, ph.case_id))
        rand42_origin = random_origin(BRATS_SHAPE, (PATCH,) * 3, 42)
        stats.append(
            CaseStats(
                case_id=ph.case_id,
                seed=seed,
                contrast=params.contrast,
                tumor_total=len(coords),
                gt_centroid=gt_centroid,
                roi_dice_raw=dice_raw,
                roi_dice_filtered=dice_filtered,
                roi_seconds=roi_sec,
                cca_origin=origin,
                cca_fallback=fallback,
                recall_cca=_window_recall(coords, origin),
                recall_centered=_window_recall(coords, centered),
                recall_random=_window_recall(coords, rand_origin),
                recall_random42=_window_recall(coords, rand42_origin),
                recall_overlap_best=max(_window_recall(coords, o) for o in overlap_origins),
                dist_cca=_window_distance(origin, gt_centroid),
                dist_centered=_window_distance(centered, gt_centroid),
                dist_random=_window_distance(rand_origin, gt_centroid),
                dist_random42=_window_distance(rand42_origin, gt_centroid),
            )
        )
    elapsed = time.perf_counter() - t_start
    return {"cases": stats, "elapsed": elapsed, "roi_seconds": roi_total}
