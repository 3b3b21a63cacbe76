"""Intensity normalization and the ROI-extraction chain.

The chain (2D per slice, or the 3D analogue on whole volumes) is:
gaussian blur -> cross-filter sharpening -> 256-bin histogram ->
multilevel Yen thresholding -> keep the top intensity class ->
morphological opening + closing.
"""

import math
import os
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .errors import DegenerateInputError
from .volume_io import Volume3D

# High-pass cross filter used for edge enhancement.  The separable parts
# are the 1D second-difference [-1, 2, -1] applied along each axis.
CROSS_2D = np.array([[0, -1, 0], [-1, 4, -1], [0, -1, 0]], dtype=np.float64)
_CROSS_1D = np.array([-1.0, 2.0, -1.0])


def cross_kernel(ndim: int) -> np.ndarray:
    """The n-dimensional cross high-pass kernel (2n at center, -1 at faces)."""
    k = np.zeros((3,) * ndim)
    center = (1,) * ndim
    k[center] = 2 * ndim
    for ax in range(ndim):
        for d in (0, 2):
            idx = list(center)
            idx[ax] = d
            k[tuple(idx)] = -1.0
    return k


@dataclass
class FilterKernel:
    """Dense correlation kernel with odd side lengths."""

    weights: np.ndarray

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        if any(s % 2 == 0 for s in self.weights.shape):
            raise ValueError(f"kernel sides must be odd, got {self.weights.shape}")

    @property
    def half_extents(self):
        return tuple(s // 2 for s in self.weights.shape)

    @classmethod
    def gaussian(cls, sigma: float, radius: int, ndim: int = 2) -> "FilterKernel":
        if sigma <= 0:
            raise ValueError(f"sigma must be positive, got {sigma}")
        k1 = gaussian_kernel_1d(sigma, radius)
        w = k1
        for _ in range(ndim - 1):
            w = np.multiply.outer(w, k1)
        return cls(w)

    @classmethod
    def box(cls, radius: int, ndim: int = 2) -> "FilterKernel":
        side = 2 * radius + 1
        w = np.full((side,) * ndim, 1.0 / side**ndim)
        return cls(w)

    @classmethod
    def cross(cls, ndim: int = 2) -> "FilterKernel":
        return cls(cross_kernel(ndim))


def gaussian_kernel_1d(sigma: float, radius: int) -> np.ndarray:
    """Sampled Gaussian on [-radius, radius], normalized to sum 1."""
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-0.5 * (x / sigma) ** 2)
    return k / k.sum()


@dataclass
class GradientField:
    gx: np.ndarray
    gy: np.ndarray
    magnitude: np.ndarray
    direction: np.ndarray


def zscore_normalize(vol):
    """Shift/scale a volume to zero mean and unit population std.

    Accepts a Volume3D or a bare array and returns the same kind.
    Raises DegenerateInputError for constant input (sigma == 0).
    """
    is_vol = isinstance(vol, Volume3D)
    data = vol.data if is_vol else np.asarray(vol)
    if data.size < 2:
        raise DegenerateInputError("normalization needs at least 2 voxels")
    mean = float(data.mean(dtype=np.float64))
    std = float(data.std(dtype=np.float64))  # population (divide-by-N) std
    if std == 0.0:
        raise DegenerateInputError("constant volume: sigma is zero")
    out = (data.astype(np.float32) - np.float32(mean)) / np.float32(std)
    if is_vol:
        return Volume3D(out, vol.spacing)
    return out


def convolve(img: np.ndarray, kernel, border: str = "reflect") -> np.ndarray:
    """Linear spatial filtering: g(x) = sum_s w(s) f(x + s).

    The kernel is centered; borders are handled by edge-inclusive
    reflection.  Only the "reflect" border policy is supported.
    """
    if border != "reflect":
        raise ValueError(f"unsupported border policy {border!r}")
    w = kernel.weights if isinstance(kernel, FilterKernel) else np.asarray(kernel, dtype=np.float64)
    img = np.asarray(img)
    if w.ndim != img.ndim:
        raise ValueError(f"kernel ndim {w.ndim} != image ndim {img.ndim}")
    if any(ks > s for ks, s in zip(w.shape, img.shape)):
        raise ValueError(f"kernel {w.shape} larger than image {img.shape}")
    return ndimage.correlate(img.astype(np.float64, copy=False), w, mode="reflect")


def gaussian_blur(img: np.ndarray, sigma: float = 1.0, radius: int = 2) -> np.ndarray:
    """Blur with a normalized sampled Gaussian of side 2*radius + 1.

    Applied separably per axis; identical to the full-kernel correlation
    under reflection up to float round-off.
    """
    if sigma <= 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    img = np.asarray(img, dtype=np.float64)
    k1 = gaussian_kernel_1d(sigma, radius)
    out = img
    for ax in range(img.ndim):
        out = ndimage.correlate1d(out, k1, axis=ax, mode="reflect")
    return out


def gradient(img: np.ndarray) -> GradientField:
    """Central-difference gradient, magnitude and direction of a 2D image.

    direction = atan2(gy, gx), mapped into (-pi, pi].
    """
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 2 or min(img.shape) < 3:
        raise ValueError(f"gradient needs a 2D image of at least 3x3, got {img.shape}")
    gx, gy = np.gradient(img)
    magnitude = np.sqrt(gx**2 + gy**2)
    direction = np.arctan2(gy, gx)
    direction = np.where(direction <= -np.pi, np.pi, direction)
    return GradientField(gx, gy, magnitude, direction)


def sharpen(img: np.ndarray) -> np.ndarray:
    """Add the cross high-pass response to the image (edge enhancement)."""
    img = np.asarray(img, dtype=np.float64)
    if min(img.shape) < 3:
        raise ValueError(f"sharpen needs at least 3 voxels per axis, got {img.shape}")
    hp = np.zeros_like(img)
    for ax in range(img.ndim):
        hp += ndimage.correlate1d(img, _CROSS_1D, axis=ax, mode="reflect")
    return img + hp


def _yen_criterion_curve(hist: np.ndarray) -> np.ndarray:
    """Yen's entropic criterion for every cut c (classes 0..c / c+1..end).

    Cuts leaving one class empty are invalid (-inf); emptiness is decided
    on bin counts, never on rounded probability sums.
    """
    pmf = hist / hist.sum()
    p1 = np.cumsum(pmf)[:-1]
    sq = np.cumsum(pmf**2)
    s1 = sq[:-1]
    s2 = sq[-1] - sq[:-1]
    nz = np.cumsum(hist > 0)
    valid = (nz[:-1] > 0) & (nz[:-1] < nz[-1])
    crit = np.full(p1.shape, -np.inf)
    with np.errstate(divide="ignore", invalid="ignore"):
        c = 2.0 * np.log(p1 * (1.0 - p1)) - np.log(s1 * s2)
    crit[valid] = c[valid]
    return crit


def _yen_cut(hist: np.ndarray) -> int:
    """Bin index c maximizing Yen's criterion; ties go to the lower cut."""
    if np.count_nonzero(hist) < 2:
        raise DegenerateInputError("Yen thresholding needs >= 2 nonempty bins")
    crit = _yen_criterion_curve(hist)
    return int(np.argmax(crit))


def yen_thresholds(histogram, levels: int = 1) -> list[float]:
    """Multilevel Yen thresholds over a histogram of bin counts.

    Returns ascending thresholds in bin-index units; each threshold sits
    at cut + 0.5, strictly between the two classes it separates.  Levels
    beyond the first are obtained by re-applying Yen to the upper class.
    """
    hist = np.asarray(histogram, dtype=np.float64)
    if hist.ndim != 1:
        raise ValueError("histogram must be 1D counts")
    if levels < 1:
        raise ValueError(f"levels must be >= 1, got {levels}")
    nonempty = int(np.count_nonzero(hist))
    if levels > max(nonempty - 1, 0):
        raise DegenerateInputError(
            f"{levels} levels need >= {levels + 1} nonempty bins, have {nonempty}"
        )
    cuts = []
    lo = 0
    sub = hist
    for _ in range(levels):
        cut = _yen_cut(sub) + lo
        cuts.append(cut)
        lo = cut + 1
        sub = hist[lo:]
    return [c + 0.5 for c in cuts]


def threshold_top_class(img: np.ndarray, thresholds) -> np.ndarray:
    """Boolean mask of values strictly above the highest threshold."""
    thresholds = list(thresholds)
    if sorted(thresholds) != thresholds:
        raise ValueError("thresholds must be ascending")
    return np.asarray(img) > thresholds[-1]


def morph_open_close(mask: np.ndarray, se_radius: int = 1) -> np.ndarray:
    """Opening then closing with a box structuring element.

    Outside-of-grid voxels count as background for both operations
    (set-definition semantics).
    """
    if se_radius < 1:
        raise ValueError(f"se_radius must be >= 1, got {se_radius}")
    mask = np.asarray(mask, dtype=bool)
    se = np.ones((2 * se_radius + 1,) * mask.ndim, dtype=bool)
    opened = ndimage.binary_opening(mask, structure=se)
    return ndimage.binary_closing(opened, structure=se)


@dataclass
class RoiParams:
    """Tunable knobs of the ROI-extraction chain.

    yen_levels defaults to 1: on two-class data (noise background plus a
    bright tumor plateau) a second Yen level cuts inside the tumor's
    smoothed edge band and under-segments.  Trimodal real scans
    (air / tissue / tumor) usually want 2.
    """

    sigma: float = 1.0
    radius: int = 2
    yen_levels: int = 1
    se_radius: int = 1
    bins: int = 256
    debug_dir: str | None = None
    case_id: str = "case"


def _dump_stage(params: RoiParams, stage: int, arr: np.ndarray) -> None:
    from .volume_io import _write_raw

    os.makedirs(params.debug_dir, exist_ok=True)
    path = os.path.join(params.debug_dir, f"{params.case_id}_{stage}.raw")
    a = arr.astype(np.float32)
    if a.ndim == 2:  # raw sidecars are 3D; store slices as single-plane volumes
        a = a[:, :, None]
    _write_raw(path, a, "f32")


def extract_roi(img: np.ndarray, params: RoiParams | None = None) -> np.ndarray:
    """Segment the highest-intensity region of a normalized image.

    Steps, in order: gaussian blur, sharpen, 256-bin histogram over
    min..max, multilevel Yen, keep the top class, opening + closing.
    Returns a boolean mask; with params.debug_dir set, the intermediate
    stage grids are dumped as ``<case>_<stage>.raw`` (stages 1-6).
    """
    params = params or RoiParams()
    img = np.asarray(img, dtype=np.float64)
    dump = params.debug_dir is not None
    if dump:
        _dump_stage(params, 1, img)
    blurred = gaussian_blur(img, params.sigma, params.radius)
    if dump:
        _dump_stage(params, 2, blurred)
    enhanced = sharpen(blurred)
    if dump:
        _dump_stage(params, 3, enhanced)
    lo, hi = float(enhanced.min()), float(enhanced.max())
    if lo == hi:
        raise DegenerateInputError("constant image: cannot threshold")
    hist, edges = np.histogram(enhanced, bins=params.bins, range=(lo, hi))
    cuts = yen_thresholds(hist, params.yen_levels)
    top_cut = int(cuts[-1] - 0.5)
    theta = edges[top_cut + 1]  # upper edge of the last lower-class bin
    mask = threshold_top_class(enhanced, [theta])
    if dump:
        _dump_stage(params, 4, mask)
    mask = morph_open_close(mask, params.se_radius)
    if dump:
        _dump_stage(params, 5, mask)
        _dump_stage(params, 6, np.where(mask, img, 0.0))
    return mask
