"""0-dimensional persistent homology of grayscale images and volumes.

Pixels are top cells carrying their own value (V-construction); the
sublevel filtration admits pixel p once the threshold reaches value(p).
Connected components are tracked with a union-find, merging by the elder
rule: at a merge the younger component dies and the pair
(birth value, merge value, birth pixel) is recorded.  Superlevel
filtrations run the same algorithm on the negated image and restore
signs afterwards, so superlevel pairs satisfy death <= birth and the
essential class dies at -inf.

Pairs with zero persistence (birth == death, only possible on images
with repeated values) carry no information and are dropped, matching
what a threshold sweep over distinct values can observe.
"""

import io
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .errors import EmptySelectionError


@dataclass(frozen=True)
class PersistencePair:
    birth: float
    death: float  # +inf (sublevel) / -inf (superlevel) for essential classes
    birth_location: tuple

    @property
    def essential(self) -> bool:
        return math.isinf(self.death)

    @property
    def lifetime(self) -> float:
        return abs(self.death - self.birth)


@dataclass
class PersistenceDiagram0:
    pairs: list
    filtration_kind: str  # "sublevel" | "superlevel"
    source_shape: tuple
    connectivity: int
    vmin: float | None = None  # grid value range, used to cap essential deaths
    vmax: float | None = None

    def finite_pairs(self) -> list:
        return [p for p in self.pairs if not p.essential]

    def essential_pairs(self) -> list:
        return [p for p in self.pairs if p.essential]

    def __len__(self) -> int:
        return len(self.pairs)


@dataclass
class LifetimeImage:
    grid: np.ndarray
    essential_policy: str


@dataclass
class PersistenceSurface:
    grid: np.ndarray
    sigma: float
    weight: str


_DEFAULT_CONN = {2: 8, 3: 26}
_ALLOWED_CONN = {2: (4, 8), 3: (6, 18, 26)}


def _structure(ndim: int, connectivity: int) -> np.ndarray:
    rank = {4: 1, 8: 2, 6: 1, 18: 2, 26: 3}[connectivity]
    return ndimage.generate_binary_structure(ndim, rank)


def _neighbor_offsets(ndim: int, connectivity: int) -> list:
    st = _structure(ndim, connectivity)
    center = (1,) * ndim
    offs = []
    for idx in np.argwhere(st):
        off = tuple(int(i) - 1 for i in idx)
        if off != (0,) * ndim:
            offs.append(off)
    return offs


def _neighbor_table(shape, connectivity: int) -> np.ndarray:
    """(n, k) flat neighbor indices under the chosen adjacency, -1 padded."""
    ndim = len(shape)
    offs = _neighbor_offsets(ndim, connectivity)
    idx = np.arange(int(np.prod(shape)), dtype=np.int64).reshape(shape)
    cols = []
    for off in offs:
        shifted = np.full(shape, -1, dtype=np.int64)
        src = tuple(
            slice(max(0, -o), (s if o <= 0 else s - o)) for o, s in zip(off, shape)
        )
        dst = tuple(
            slice(max(0, o), (s if o >= 0 else s + o)) for o, s in zip(off, shape)
        )
        shifted[dst] = idx[src]
        cols.append(shifted.ravel())
    return np.stack(cols, axis=1)


def _persistence_sublevel(values: np.ndarray, connectivity: int):
    """Union-find sweep in ascending (value, flat index) order."""
    shape = values.shape
    flat = values.ravel().astype(np.float64)
    n = flat.size
    order = np.argsort(flat, kind="stable")  # stable sort = index tie-break
    nbrs = _neighbor_table(shape, connectivity).tolist()
    fl = flat.tolist()

    parent = [-1] * n
    birth_pix = [0] * n  # per root: flat index of the birth pixel
    birth_rank = [0] * n  # per root: processing position of the birth pixel

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    finite = []  # (birth, death, birth flat index)
    for pos, p in enumerate(order.tolist()):
        roots = set()
        for q in nbrs[p]:
            if q >= 0 and parent[q] != -1:
                roots.add(find(q))
        if not roots:
            parent[p] = p
            birth_pix[p] = p
            birth_rank[p] = pos
            continue
        elder = min(roots, key=lambda r: birth_rank[r])
        parent[p] = elder
        v = fl[p]
        for r in roots:
            if r is elder or r == elder:
                continue
            b = fl[birth_pix[r]]
            if b != v:  # drop zero-persistence plateau pairs
                finite.append((b, v, birth_pix[r]))
            parent[r] = elder

    roots = {find(p) for p in range(n)}
    essential = [(fl[birth_pix[r]], birth_pix[r]) for r in roots]
    return finite, essential


def persistence_0d(
    img: np.ndarray, kind: str = "sublevel", connectivity: int | None = None
) -> PersistenceDiagram0:
    """Compute the 0-dimensional persistence diagram of a grid image.

    kind selects the sublevel ({v <= eps}) or superlevel ({v >= eps})
    filtration; connectivity defaults to 8 in 2D and 26 in 3D.
    """
    arr = np.asarray(img, dtype=np.float64)
    if arr.size == 0:
        raise ValueError("empty grid")
    if arr.ndim not in (2, 3):
        if arr.ndim == 1:
            arr = arr[:, None]
        else:
            raise ValueError(f"expected a 1D/2D/3D grid, got ndim={arr.ndim}")
    if kind not in ("sublevel", "superlevel"):
        raise ValueError(f"unknown filtration kind {kind!r}")
    conn = connectivity or _DEFAULT_CONN[arr.ndim]
    if conn not in _ALLOWED_CONN[arr.ndim]:
        raise ValueError(f"connectivity {conn} invalid for {arr.ndim}D")

    sgn = -1.0 if kind == "superlevel" else 1.0
    finite, essential = _persistence_sublevel(sgn * arr, conn)
    shape = arr.shape
    pairs = [
        PersistencePair(sgn * b, sgn * d, tuple(int(i) for i in np.unravel_index(p, shape)))
        for b, d, p in finite
    ]
    inf_death = math.inf if kind == "sublevel" else -math.inf
    pairs += [
        PersistencePair(sgn * b, inf_death, tuple(int(i) for i in np.unravel_index(p, shape)))
        for b, p in essential
    ]
    pairs.sort(key=lambda pr: (pr.birth, pr.death, pr.birth_location))
    return PersistenceDiagram0(pairs, kind, shape, conn, float(arr.min()), float(arr.max()))


def _filtration_extreme(diagram: PersistenceDiagram0) -> float:
    """Last filtration value ever reached (grid max / min by kind)."""
    sub = diagram.filtration_kind == "sublevel"
    if sub and diagram.vmax is not None:
        return diagram.vmax
    if not sub and diagram.vmin is not None:
        return diagram.vmin
    vals = [p.birth for p in diagram.pairs]
    vals += [p.death for p in diagram.pairs if not p.essential]
    return max(vals) if sub else min(vals)


def lifetime_image(
    diagram: PersistenceDiagram0, essential_policy: str = "cap-at-max"
) -> LifetimeImage:
    """Grid holding, at each birth pixel, the longest lifetime born there.

    essential_policy "cap-at-max" replaces the infinite death by the
    extreme filtration value reached by the grid; "drop" skips essential
    pairs entirely.
    """
    if essential_policy not in ("drop", "cap-at-max"):
        raise ValueError(f"unknown essential policy {essential_policy!r}")
    grid = np.zeros(diagram.source_shape, dtype=np.float64)
    if diagram.pairs:
        extreme = _filtration_extreme(diagram)
        for p in diagram.pairs:
            if p.essential:
                if essential_policy == "drop":
                    continue
                life = abs(extreme - p.birth)
            else:
                life = p.lifetime
            if life > grid[p.birth_location]:
                grid[p.birth_location] = life
    return LifetimeImage(grid, essential_policy)


def persistence_surface(
    diagram: PersistenceDiagram0,
    sigma: float,
    weight: str = "linear-lifetime",
    essential_policy: str = "drop",
) -> PersistenceSurface:
    """Smoothed feature map: a lifetime-weighted Gaussian per pair.

    Each Gaussian is centered on the pair's birth pixel, truncated at
    4 sigma and L1-normalized over its in-grid window, so the surface
    sums to the total (finite) lifetime mass.
    """
    if sigma <= 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    if weight != "linear-lifetime":
        raise ValueError(f"unknown weight {weight!r}")
    shape = diagram.source_shape
    grid = np.zeros(shape, dtype=np.float64)
    extreme = _filtration_extreme(diagram) if diagram.pairs else 0.0
    radius = max(1, int(math.ceil(4.0 * sigma)))
    axes_1d = [np.arange(s, dtype=np.float64) for s in shape]
    for p in diagram.pairs:
        if p.essential:
            if essential_policy == "drop":
                continue
            life = abs(extreme - p.birth)
        else:
            life = p.lifetime
        if life == 0.0:
            continue
        windows, gauss = [], []
        for ax, c in enumerate(p.birth_location):
            lo = max(0, c - radius)
            hi = min(shape[ax], c + radius + 1)
            windows.append(slice(lo, hi))
            x = axes_1d[ax][lo:hi] - c
            gauss.append(np.exp(-0.5 * (x / sigma) ** 2))
        bump = gauss[0]
        for g in gauss[1:]:
            bump = np.multiply.outer(bump, g)
        grid[tuple(windows)] += (life / bump.sum()) * bump
    return PersistenceSurface(grid, sigma, weight)


def component_voxels(
    img: np.ndarray, pair: PersistencePair, kind: str, connectivity: int | None = None
) -> np.ndarray:
    """Voxel set of a pair's component just before its death.

    Finite pairs: the connected component of the birth pixel within
    {v < death} (sublevel) or {v > death} (superlevel).  Essential
    pairs: the component of the birth pixel within the image support
    {v != 0}.  Returns an (m, ndim) integer coordinate array.
    """
    arr = np.asarray(img, dtype=np.float64)
    conn = connectivity or _DEFAULT_CONN[arr.ndim]
    if pair.essential:
        region = arr != 0.0
    elif kind == "sublevel":
        region = arr < pair.death
    else:
        region = arr > pair.death
    if not region[pair.birth_location]:
        return np.empty((0, arr.ndim), dtype=np.int64)
    labels, _ = ndimage.label(region, structure=_structure(arr.ndim, conn))
    want = labels[pair.birth_location]
    return np.argwhere(labels == want)


def strongest_component_centroid(
    img: np.ndarray, kind: str = "superlevel", connectivity: int | None = None
) -> tuple:
    """Centroid of the most persistent component of the image.

    The pair with maximum lifetime wins; essential pairs rank highest,
    ties prefer the larger component, then the lexicographically
    smallest birth location.  The centroid is taken over the selected
    pair's voxel set (see component_voxels).
    """
    arr = np.asarray(img, dtype=np.float64)
    diagram = persistence_0d(arr, kind, connectivity)
    if not diagram.pairs:
        raise EmptySelectionError("empty persistence diagram")
    by_life = sorted(
        diagram.pairs,
        key=lambda p: (0 if p.essential else 1, -(0.0 if p.essential else p.lifetime)),
    )
    top_essential = by_life[0].essential
    top_life = by_life[0].lifetime
    tied = [
        p
        for p in by_life
        if p.essential == top_essential and (top_essential or p.lifetime == top_life)
    ]
    candidates = []
    for p in tied:
        vox = component_voxels(arr, p, kind, connectivity)
        candidates.append((-len(vox), p.birth_location, p, vox))
    candidates.sort(key=lambda t: (t[0], t[1]))
    _, _, best, vox = candidates[0]
    if len(vox) == 0:
        raise EmptySelectionError(
            f"selected component at {best.birth_location} has empty support"
        )
    return tuple(float(c) for c in vox.mean(axis=0))


def diagram_to_csv(diagram: PersistenceDiagram0) -> str:
    """CSV rows (birth, death, bx, by[, bz]); 'inf'/'-inf' for essential deaths."""
    ndim = len(diagram.source_shape)
    header = "birth,death," + ",".join("bx by bz".split()[:ndim])
    buf = io.StringIO()
    buf.write(header + "\n")
    for p in diagram.pairs:
        death = repr(p.death) if not math.isinf(p.death) else ("inf" if p.death > 0 else "-inf")
        loc = ",".join(str(i) for i in p.birth_location)
        buf.write(f"{p.birth!r},{death},{loc}\n")
    return buf.getvalue()
