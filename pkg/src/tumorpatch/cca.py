"""Connected-component labeling, small-component filtering and centroids."""

import io
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import EmptyMaskError
from . import metrics

WT_LABELS = (1, 2, 4)  # whole tumor = core + enhancing + edema


@dataclass(frozen=True)
class ComponentInfo:
    id: int
    voxel_count: int
    centroid: tuple
    bbox: tuple  # per-axis (start, stop) half-open, numpy slice convention


@dataclass
class ComponentSet:
    label_grid: np.ndarray  # 0 background, 1..K components (largest first)
    components: list


_STRUCT_RANK = {4: 1, 8: 2, 6: 1, 18: 2, 26: 3}


def _structure(ndim: int, connectivity: int) -> np.ndarray:
    allowed = (4, 8) if ndim == 2 else (6, 18, 26)
    if connectivity not in allowed:
        raise ValueError(f"connectivity {connectivity} invalid for {ndim}D")
    return ndimage.generate_binary_structure(ndim, _STRUCT_RANK[connectivity])


def _component_info(label_grid: np.ndarray, k: int) -> list:
    if k == 0:
        return []
    coords = np.nonzero(label_grid)
    labs = label_grid[coords]
    counts = np.bincount(labs, minlength=k + 1)[1:]
    # per-axis coordinate sums are exact: integer partial sums stay < 2**53
    sums = [np.bincount(labs, weights=c.astype(np.float64), minlength=k + 1)[1:] for c in coords]
    boxes = ndimage.find_objects(label_grid)
    out = []
    for i in range(k):
        centroid = tuple(float(s[i] / counts[i]) for s in sums)
        bbox = tuple((sl.start, sl.stop) for sl in boxes[i])
        out.append(ComponentInfo(i + 1, int(counts[i]), centroid, bbox))
    return out


def label_components(mask: np.ndarray, connectivity: int | None = None) -> ComponentSet:
    """Label connected true-voxel regions of a binary mask.

    Default connectivity is 26 in 3D and 8 in 2D.  Labels are assigned
    in decreasing voxel-count order (largest component = 1); equal-size
    components keep raster scan order.
    """
    mask = np.asarray(mask, dtype=bool)
    if mask.size == 0:
        raise ValueError("empty grid")
    conn = connectivity or (8 if mask.ndim == 2 else 26)
    raw, k = ndimage.label(mask, structure=_structure(mask.ndim, conn))
    if k == 0:
        return ComponentSet(np.zeros(mask.shape, dtype=np.int32), [])
    counts = np.bincount(raw.ravel(), minlength=k + 1)[1:]
    order = np.argsort(-counts, kind="stable")  # stable: ties keep scan order
    lut = np.zeros(k + 1, dtype=np.int32)
    lut[order + 1] = np.arange(1, k + 1, dtype=np.int32)
    grid = lut[raw]
    return ComponentSet(grid, _component_info(grid, k))


def filter_small(cs: ComponentSet, min_voxels: int = 20) -> ComponentSet:
    """Drop components with fewer than min_voxels voxels; re-densify ids."""
    keep = [c for c in cs.components if c.voxel_count >= min_voxels]
    if len(keep) == len(cs.components):
        return ComponentSet(cs.label_grid.copy(), list(cs.components))
    lut = np.zeros(len(cs.components) + 1, dtype=np.int32)
    relabeled = []
    for new_id, c in enumerate(keep, start=1):
        lut[c.id] = new_id
        relabeled.append(ComponentInfo(new_id, c.voxel_count, c.centroid, c.bbox))
    return ComponentSet(lut[cs.label_grid], relabeled)


def mask_centroid(cs: ComponentSet, largest_only: bool = False) -> tuple:
    """Unweighted mean coordinate of the surviving mask voxels.

    By default the centroid of the union of all surviving components;
    largest_only restricts to component 1.
    """
    if not cs.components:
        raise EmptyMaskError("no components survive; cannot take a centroid")
    if largest_only:
        return cs.components[0].centroid
    coords = np.argwhere(cs.label_grid > 0)
    return tuple(float(c) for c in coords.mean(axis=0))


def mask_dice(extracted: np.ndarray, whole_tumor: np.ndarray) -> float:
    """Dice overlap between the extracted ROI mask and the tumor label."""
    extracted = np.asarray(extracted, dtype=bool)
    whole_tumor = np.asarray(whole_tumor, dtype=bool)
    return metrics.dice(extracted, whole_tumor)


def whole_tumor_mask(labels: np.ndarray) -> np.ndarray:
    """Binary whole-tumor mask from a segmentation grid (labels 1/2/4)."""
    return np.isin(np.asarray(labels), WT_LABELS)


def components_to_csv(cs: ComponentSet) -> str:
    """Component table: id, voxel_count, centroid, flattened bbox."""
    ndim = cs.label_grid.ndim
    axes = "xyz"[:ndim]
    head = ["id", "voxel_count"] + [f"c{a}" for a in axes]
    for a in axes:
        head += [f"{a}0", f"{a}1"]
    buf = io.StringIO()
    buf.write(",".join(head) + "\n")
    for c in cs.components:
        row = [str(c.id), str(c.voxel_count)]
        row += [repr(v) for v in c.centroid]
        for lo, hi in c.bbox:
            row += [str(lo), str(hi)]
        buf.write(",".join(row) + "\n")
    return buf.getvalue()
