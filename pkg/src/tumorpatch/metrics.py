"""Segmentation and patch-quality metrics.

All functions are pure and raise UndefinedMetricError instead of
silently returning 0 when a denominator vanishes.
"""

from dataclasses import dataclass

import numpy as np

from .errors import UndefinedMetricError

# BraTS evaluation regions by label set
REGIONS = {
    "WT": (1, 2, 4),
    "TC": (1, 4),
    "ET": (4,),
    "edema": (2,),
    "necrosis": (1,),
}

P_FLOOR = 1e-7  # probability floor guarding log(0) in the focal loss


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


def _check_same_shape(p, t):
    if p.shape != t.shape:
        raise ValueError(f"shape mismatch: {p.shape} vs {t.shape}")


def dice(p: np.ndarray, t: np.ndarray, eps: float = 1e-6) -> float:
    """Soft Dice overlap: (2*sum(p*t) + eps) / (sum(p^2) + sum(t^2) + eps).

    p may be a probability grid in [0, 1] or binary; t is binary.  The
    epsilon appears in numerator and denominator, so identical nonempty
    masks score exactly 1.
    """
    p = np.asarray(p, dtype=np.float64)
    t = np.asarray(t, dtype=np.float64)
    _check_same_shape(p, t)
    inter = float((p * t).sum())
    return (2.0 * inter + eps) / (float((p * p).sum()) + float((t * t).sum()) + eps)


def dice_from_counts(intersection: float, p_mass: float, t_mass: float, eps: float = 1e-6) -> float:
    """Dice from precomputed sums; same formula as dice()."""
    return (2.0 * intersection + eps) / (p_mass + t_mass + eps)


def dice_loss(p: np.ndarray, t: np.ndarray, eps: float = 1e-6) -> float:
    return 1.0 - dice(p, t, eps)


def focal_loss(p_t, alpha_t: float = 0.25, gamma: float = 2.0) -> float:
    """Focal loss -alpha_t * (1 - p_t)**gamma * ln(p_t).

    p_t is the predicted probability of the true class; a grid input is
    averaged.  Probabilities are floored at 1e-7 so p_t == 0 yields a
    large finite loss instead of infinity.
    """
    if alpha_t < 0 or gamma < 0:
        raise ValueError("alpha_t and gamma must be non-negative")
    p = np.asarray(p_t, dtype=np.float64)
    if (p < 0).any() or (p > 1).any():
        raise ValueError("p_t must lie in [0, 1]")
    p = np.maximum(p, P_FLOOR)
    loss = -alpha_t * (1.0 - p) ** gamma * np.log(p)
    return float(loss.mean())


def sensitivity(c: ConfusionCounts) -> float:
    """TP / (TP + FN)."""
    denom = c.tp + c.fn
    if denom == 0:
        raise UndefinedMetricError("sensitivity undefined: no positive ground truth")
    return c.tp / denom


def specificity(c: ConfusionCounts) -> float:
    """TN / (TN + FP)."""
    denom = c.tn + c.fp
    if denom == 0:
        raise UndefinedMetricError("specificity undefined: no negative ground truth")
    return c.tn / denom


def confusion(p: np.ndarray, t: np.ndarray) -> ConfusionCounts:
    """Voxelwise confusion counts for binary grids."""
    p = np.asarray(p, dtype=bool)
    t = np.asarray(t, dtype=bool)
    _check_same_shape(p, t)
    tp = int(np.count_nonzero(p & t))
    fp = int(np.count_nonzero(p & ~t))
    fn = int(np.count_nonzero(~p & t))
    tn = p.size - tp - fp - fn
    return ConfusionCounts(tp, fp, tn, fn)


def tumor_fraction(mask_crop: np.ndarray) -> float:
    """Fraction of tumorous voxels (labels 1/2/4) in a label grid."""
    labels = np.asarray(mask_crop)
    if labels.size == 0:
        raise ValueError("empty grid")
    return float(np.count_nonzero(np.isin(labels, REGIONS["WT"]))) / labels.size


def center_distance(patch_spec, gt_mask) -> float:
    """Euclidean distance from the patch center to the tumor centroid.

    The patch geometric center is origin + size/2 per axis; the tumor
    centroid is the unweighted mean coordinate of whole-tumor voxels.
    """
    labels = gt_mask.labels if hasattr(gt_mask, "labels") else np.asarray(gt_mask)
    coords = np.argwhere(np.isin(labels, REGIONS["WT"]))
    if len(coords) == 0:
        raise UndefinedMetricError("empty tumor mask: center distance undefined")
    centroid = coords.mean(axis=0)
    center = np.asarray(patch_spec.origin, dtype=np.float64) + np.asarray(
        patch_spec.size, dtype=np.float64
    ) / 2.0
    return float(np.linalg.norm(center - centroid))
