"""Patch extraction strategies.

The tumor-centered paths anchor a fixed-size window on a component
centroid (3D: connected-component analysis of the extracted ROI; 2D:
the most persistent component of the ROI-masked image).  Baselines:
centered crop, four fixed lateral quadrants, uniform random windows
(plain or fixed-seed), and stride-64 overlapping tilings.
"""

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DegenerateInputError, EmptyMaskError, EmptySelectionError
from .volume_io import Case, SegMask3D, Volume3D
from .preprocess import RoiParams, extract_roi, zscore_normalize
from .homology import strongest_component_centroid
from . import cca

STRATEGIES = (
    "cca",
    "tda2d",
    "centered_crop",
    "fixed_quadrants",
    "random",
    "random_seeded",
    "overlapping",
)

_MASK64 = (1 << 64) - 1


def splitmix64(state: int):
    """One splitmix64 step: returns (next_state, 64-bit output).

    Recurrence: state += 0x9E3779B97F4A7C15; z = state;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EB;
    output = z ^ (z >> 31).  All arithmetic mod 2**64.
    """
    state = (state + 0x9E3779B97F4A7C15) & _MASK64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return state, z ^ (z >> 31)


def fnv1a64(text: str) -> int:
    """FNV-1a 64-bit hash of a string (stable across platforms/runs)."""
    h = 0xCBF29CE484222325
    for b in text.encode("utf-8"):
        h = ((h ^ b) * 0x100000001B3) & _MASK64
    return h


@dataclass(frozen=True)
class PatchSpec:
    """Axis-aligned extraction window plus provenance."""

    origin: tuple
    size: tuple
    strategy: str
    case_id: str
    strategy_params: dict = field(default_factory=dict)
    warnings: tuple = ()

    def __post_init__(self):
        if len(self.origin) != len(self.size):
            raise ValueError("origin/size rank mismatch")
        if any(o < 0 for o in self.origin) or any(s < 1 for s in self.size):
            raise ValueError(f"bad window origin={self.origin} size={self.size}")

    @property
    def center(self) -> tuple:
        return tuple(o + s / 2.0 for o, s in zip(self.origin, self.size))


@dataclass
class Patch:
    spec: PatchSpec
    data: dict  # modality -> cropped array
    mask_crop: np.ndarray | None = None


@dataclass
class PatchParams:
    """Knobs shared by the patch generators."""

    size: int = 128
    min_voxels: int = 20
    connectivity: int = 26
    seed: int = 42
    stride: int = 64
    largest_only: bool = False
    homology_input: str = "roi_grayscale"  # or "roi_mask"
    roi: RoiParams = field(default_factory=RoiParams)


def clamp_window(centroid, size, bounds) -> tuple:
    """Window origin for a centroid: round, center, clamp into the grid.

    origin = floor(c + 0.5) - size/2 per axis, clamped to [0, bound - size].
    """
    centroid = tuple(float(c) for c in centroid)
    size = _as_size(size, len(centroid))
    if any(s > b for s, b in zip(size, bounds)):
        raise ValueError(f"window {size} exceeds bounds {tuple(bounds)}")
    origin = []
    for c, s, b in zip(centroid, size, bounds):
        o = int(np.floor(c + 0.5)) - s // 2
        origin.append(int(min(max(o, 0), b - s)))
    return tuple(origin)


def _as_size(size, ndim: int) -> tuple:
    if np.isscalar(size):
        return (int(size),) * ndim
    return tuple(int(s) for s in size)


def _crop(arr: np.ndarray, origin, size) -> np.ndarray:
    slc = tuple(slice(o, o + s) for o, s in zip(origin, size))
    return np.ascontiguousarray(arr[slc])


def _cut_patch(case: Case, spec: PatchSpec) -> Patch:
    data = {m: _crop(v.data, spec.origin, spec.size) for m, v in case.modalities.items()}
    mask_crop = None
    if case.mask is not None:
        mask_crop = _crop(case.mask.labels, spec.origin, spec.size)
    return Patch(spec, data, mask_crop)


def _centered_origin(shape, size) -> tuple:
    return tuple((b - s) // 2 for b, s in zip(shape, size))


def patch_centered_crop(case: Case, params: PatchParams | None = None) -> Patch:
    """Fixed window at the volume center (floor on odd remainders)."""
    params = params or PatchParams()
    size = _as_size(params.size, 3)
    origin = _centered_origin(case.shape, size)
    spec = PatchSpec(origin, size, "centered_crop", case.case_id)
    return _cut_patch(case, spec)


def patch_cca_3d(case: Case, params: PatchParams | None = None) -> Patch:
    """Tumor-centered 3D patch via ROI extraction + component analysis.

    flair is normalized, the 3D ROI is segmented, components smaller
    than min_voxels are discarded and the window is centered on the
    surviving mask's centroid.  An empty ROI falls back to the centered
    crop with an "empty-roi-fallback" warning in the provenance.  When
    the case carries a ground-truth mask, the Dice of the extracted ROI
    against the whole-tumor label is recorded as roi_dice_wt.
    """
    params = params or PatchParams()
    flair = case.require_flair()
    size = _as_size(params.size, 3)
    sparams = {"min_voxels": params.min_voxels, "connectivity": params.connectivity}
    warnings = []
    centroid = None
    try:
        norm = zscore_normalize(flair)
        roi = extract_roi(norm.data, params.roi)
        comps = cca.filter_small(
            cca.label_components(roi, params.connectivity), params.min_voxels
        )
        if case.mask is not None:
            wt = cca.whole_tumor_mask(case.mask.labels)
            sparams["roi_dice_raw"] = cca.mask_dice(roi, wt)
            sparams["roi_dice_wt"] = cca.mask_dice(comps.label_grid > 0, wt)
        centroid = cca.mask_centroid(comps, params.largest_only)
    except (DegenerateInputError, EmptyMaskError) as e:
        warnings.append("empty-roi-fallback")
        sparams["fallback_reason"] = str(e)
    if centroid is None:
        origin = _centered_origin(case.shape, size)
    else:
        origin = clamp_window(centroid, size, case.shape)
        sparams["mask_centroid"] = centroid
    spec = PatchSpec(origin, size, "cca", case.case_id, sparams, tuple(warnings))
    return _cut_patch(case, spec)


def patch_tda_2d(
    slice2d: np.ndarray, params: PatchParams | None = None, case_id: str = "slice"
) -> Patch:
    """Tumor-centered 2D patch via persistent homology of the ROI.

    The 2D ROI is extracted, persistence runs superlevel on the
    ROI-masked grayscale (or on the binary mask, per homology_input)
    and the window is centered on the most persistent component.
    Falls back to the centered crop when nothing is selectable.
    """
    params = params or PatchParams()
    img = np.asarray(slice2d, dtype=np.float64)
    size = _as_size(params.size, 2)
    if any(s > b for s, b in zip(size, img.shape)):
        raise ValueError(f"slice {img.shape} smaller than patch {size}")
    warnings = []
    sparams = {"homology_input": params.homology_input}
    centroid = None
    try:
        roi = extract_roi(img, params.roi)
        feed = roi.astype(np.float64) if params.homology_input == "roi_mask" else np.where(roi, img, 0.0)
        centroid = strongest_component_centroid(feed, "superlevel")
    except (DegenerateInputError, EmptySelectionError) as e:
        warnings.append("empty-roi-fallback")
        sparams["fallback_reason"] = str(e)
    if centroid is None:
        origin = _centered_origin(img.shape, size)
    else:
        origin = clamp_window(centroid, size, img.shape)
        sparams["component_centroid"] = centroid
    spec = PatchSpec(origin, size, "tda2d", case_id, sparams, tuple(warnings))
    return Patch(spec, {"slice": _crop(img, origin, size)})


def patch_fixed_quadrants(case: Case, params: PatchParams | None = None) -> list:
    """Four lateral-quadrant windows with the minimal forced overlap.

    xy origins are {0, bound - size} per axis; z is the centered window.
    For BraTS dims this is {(0,0), (0,112), (112,0), (112,112)} at z=13.
    """
    params = params or PatchParams()
    size = _as_size(params.size, 3)
    shape = case.shape
    if any(s > b for s, b in zip(size, shape)):
        raise ValueError(f"window {size} exceeds volume {shape}")
    z0 = (shape[2] - size[2]) // 2
    patches = []
    for q, (ox, oy) in enumerate(
        [(0, 0), (0, shape[1] - size[1]), (shape[0] - size[0], 0),
         (shape[0] - size[0], shape[1] - size[1])]
    ):
        spec = PatchSpec((ox, oy, z0), size, "fixed_quadrants", case.case_id, {"quadrant": q})
        patches.append(_cut_patch(case, spec))
    return patches


def random_origin(shape, size, seed: int) -> tuple:
    """Uniform window origin from the splitmix64 stream for `seed`.

    Axes are drawn in order; each draw is output % (bound - size + 1).
    """
    state = seed & _MASK64
    origin = []
    for b, s in zip(shape, size):
        if s > b:
            raise ValueError(f"window {size} exceeds volume {tuple(shape)}")
        state, z = splitmix64(state)
        origin.append(int(z % (b - s + 1)))
    return tuple(origin)


def patch_random(case: Case, params: PatchParams | None = None, seed: int | None = None) -> Patch:
    """Uniformly random window; reproducible given the seed."""
    params = params or PatchParams()
    size = _as_size(params.size, 3)
    seed = params.seed if seed is None else seed
    origin = random_origin(case.shape, size, seed)
    spec = PatchSpec(origin, size, "random", case.case_id, {"seed": seed})
    return _cut_patch(case, spec)


def _axis_origins(bound: int, size: int, stride: int) -> list:
    origins = list(range(0, bound - size + 1, stride))
    if origins[-1] != bound - size:
        origins.append(bound - size)
    return origins


def patch_overlapping(case: Case, params: PatchParams | None = None) -> list:
    """Stride tiling with a flush-to-edge window appended per axis."""
    params = params or PatchParams()
    size = _as_size(params.size, 3)
    if any(s > b for s, b in zip(size, case.shape)):
        raise ValueError(f"window {size} exceeds volume {case.shape}")
    axes = [_axis_origins(b, s, params.stride) for b, s in zip(case.shape, size)]
    patches = []
    for i, ox in enumerate(axes[0]):
        for j, oy in enumerate(axes[1]):
            for k, oz in enumerate(axes[2]):
                spec = PatchSpec(
                    (ox, oy, oz), size, "overlapping", case.case_id,
                    {"stride": params.stride, "tile": (i, j, k)},
                )
                patches.append(_cut_patch(case, spec))
    return patches


def case_seed(base_seed: int, case_id: str) -> int:
    """Per-case derived seed: fnv1a64(case_id) XOR base seed."""
    return (fnv1a64(case_id) ^ (base_seed & _MASK64)) & _MASK64


def generate_patches(case: Case, strategy: str, params: PatchParams | None = None) -> list:
    """Run one strategy on a case; always returns a list of patches.

    "random" derives a per-case seed from (params.seed, case_id);
    "random_seeded" uses params.seed verbatim for every case.
    """
    params = params or PatchParams()
    if strategy == "cca":
        return [patch_cca_3d(case, params)]
    if strategy == "centered_crop":
        return [patch_centered_crop(case, params)]
    if strategy == "fixed_quadrants":
        return patch_fixed_quadrants(case, params)
    if strategy == "random":
        return [patch_random(case, params, seed=case_seed(params.seed, case.case_id))]
    if strategy == "random_seeded":
        p = patch_random(case, params, seed=params.seed)
        return [Patch(replace(p.spec, strategy="random_seeded"), p.data, p.mask_crop)]
    if strategy == "overlapping":
        return patch_overlapping(case, params)
    if strategy == "tda2d":
        raise ValueError("tda2d operates on 2D slices; use patch_tda_2d per slice")
    raise ValueError(f"unknown strategy {strategy!r}; choose from {STRATEGIES}")
