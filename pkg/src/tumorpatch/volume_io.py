"""Volume and segmentation-mask I/O.

Two on-disk formats are supported:

* ``raw`` -- little-endian contiguous voxel data plus a human-writable
  5-line text sidecar ``<file>.hdr`` (magic, nx, ny, nz, dtype).  Round
  trips are bit-exact; this is the fixture format used by the tests.
* ``nifti`` -- single-file NIfTI-1 (.nii / .nii.gz), minimal subset:
  dims, datatype, pixdim spacing, scl_slope/scl_inter applied on load.
  The affine is not interpreted; volumes are used as stored.

Axis convention throughout the package: index order (x, y, z) =
(sagittal, coronal, axial), matching BraTS volumes of shape (240, 240, 155).
"""

import gzip
import os
import struct
import tempfile
from dataclasses import dataclass, field

import numpy as np

from .errors import VolumeLoadError

RAW_MAGIC = "TPRAW1"

_RAW_DTYPES = {
    "f32": np.dtype("<f4"),
    "f64": np.dtype("<f8"),
    "i16": np.dtype("<i2"),
    "i32": np.dtype("<i4"),
    "u8": np.dtype("u1"),
}

# NIfTI-1 datatype codes -> numpy dtypes (little-endian; swapped on demand)
_NIFTI_DTYPES = {
    2: np.dtype("u1"),
    4: np.dtype("<i2"),
    8: np.dtype("<i4"),
    16: np.dtype("<f4"),
    64: np.dtype("<f8"),
    256: np.dtype("i1"),
    512: np.dtype("<u2"),
    768: np.dtype("<u4"),
}

SEG_LABELS = (0, 1, 2, 4)


@dataclass
class Volume3D:
    """Dense scalar intensity grid with voxel spacing metadata."""

    data: np.ndarray
    spacing: tuple = (1.0, 1.0, 1.0)

    def __post_init__(self):
        self.data = np.asarray(self.data)
        if self.data.ndim != 3:
            raise VolumeLoadError(f"expected a 3D grid, got ndim={self.data.ndim}")
        if min(self.data.shape) < 1:
            raise VolumeLoadError(f"degenerate shape {self.data.shape}")

    @property
    def shape(self):
        return self.data.shape


@dataclass
class SegMask3D:
    """Integer label grid; legal voxel values are 0/1/2/4 (BraTS convention)."""

    labels: np.ndarray
    spacing: tuple = (1.0, 1.0, 1.0)

    def __post_init__(self):
        self.labels = np.asarray(self.labels)
        if self.labels.ndim != 3:
            raise VolumeLoadError(f"expected a 3D grid, got ndim={self.labels.ndim}")
        bad = ~np.isin(self.labels, SEG_LABELS)
        if bad.any():
            idx = tuple(int(i) for i in np.argwhere(bad)[0])
            raise VolumeLoadError(
                f"illegal segmentation label {int(self.labels[idx])} at index {idx}"
            )

    @property
    def shape(self):
        return self.labels.shape


@dataclass
class Case:
    """One multi-modality scan: modality name -> Volume3D, optional mask."""

    case_id: str
    modalities: dict
    mask: SegMask3D | None = None

    def __post_init__(self):
        shapes = {m: v.shape for m, v in self.modalities.items()}
        if self.mask is not None:
            shapes["seg"] = self.mask.shape
        if len(set(shapes.values())) > 1:
            raise VolumeLoadError(f"mixed shapes across modalities: {shapes}")

    @property
    def shape(self):
        return next(iter(self.modalities.values())).shape

    def require_flair(self) -> Volume3D:
        if "flair" not in self.modalities:
            raise VolumeLoadError(
                f"case {self.case_id!r} has no flair modality (pipeline driver)"
            )
        return self.modalities["flair"]


def _check_finite(arr: np.ndarray, path) -> None:
    bad = ~np.isfinite(arr)
    if bad.any():
        idx = tuple(int(i) for i in np.argwhere(bad)[0])
        raise VolumeLoadError(f"non-finite value at index {idx} in {path}")


def _atomic_write(path, payload: bytes) -> None:
    """Write to a temp file in the target directory, then rename."""
    path = os.fspath(path)
    d = os.path.dirname(path) or "."
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tp_tmp_")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


# ---------------------------------------------------------------------------
# raw format


def _hdr_path(path) -> str:
    return os.fspath(path) + ".hdr"


def _read_raw(path, dtype_expect=None) -> tuple[np.ndarray, tuple]:
    path = os.fspath(path)
    hdr = _hdr_path(path)
    if not os.path.exists(path):
        raise VolumeLoadError(f"missing file: {path}")
    if not os.path.exists(hdr):
        raise VolumeLoadError(f"missing sidecar header: {hdr}")
    with open(hdr) as f:
        lines = [ln.strip() for ln in f.read().splitlines() if ln.strip()]
    if len(lines) != 5 or lines[0] != RAW_MAGIC:
        raise VolumeLoadError(f"bad raw header {hdr}: expected 5 lines starting {RAW_MAGIC}")
    try:
        shape = tuple(int(v) for v in lines[1:4])
    except ValueError as e:
        raise VolumeLoadError(f"bad dims in {hdr}: {e}") from None
    if min(shape) < 1:
        raise VolumeLoadError(f"bad dims {shape} in {hdr}")
    dt_name = lines[4]
    if dt_name not in _RAW_DTYPES:
        raise VolumeLoadError(f"unknown raw dtype {dt_name!r} in {hdr}")
    if dtype_expect is not None and dt_name != dtype_expect:
        raise VolumeLoadError(f"{path}: dtype {dt_name}, expected {dtype_expect}")
    dt = _RAW_DTYPES[dt_name]
    n = shape[0] * shape[1] * shape[2]
    raw = np.fromfile(path, dtype=dt)
    if raw.size != n:
        raise VolumeLoadError(
            f"{path}: {raw.size} values on disk, header shape {shape} needs {n}"
        )
    return raw.reshape(shape), shape


def _write_raw(path, arr: np.ndarray, dt_name: str) -> None:
    path = os.fspath(path)
    dt = _RAW_DTYPES[dt_name]
    payload = np.ascontiguousarray(arr, dtype=dt).tobytes()
    _atomic_write(path, payload)
    hdr = "\n".join([RAW_MAGIC, *map(str, arr.shape), dt_name]) + "\n"
    _atomic_write(_hdr_path(path), hdr.encode())


# ---------------------------------------------------------------------------
# NIfTI-1 minimal codec


def _maybe_gzip_read(path) -> bytes:
    with open(path, "rb") as f:
        blob = f.read()
    if blob[:2] == b"\x1f\x8b":
        blob = gzip.decompress(blob)
    return blob


def _parse_nifti(blob: bytes, path):
    if len(blob) < 348:
        raise VolumeLoadError(f"{path}: truncated NIfTI header")
    (sizeof_hdr,) = struct.unpack_from("<i", blob, 0)
    bo = "<"
    if sizeof_hdr != 348:
        (sizeof_hdr,) = struct.unpack_from(">i", blob, 0)
        if sizeof_hdr != 348:
            raise VolumeLoadError(f"{path}: not a NIfTI-1 file (sizeof_hdr)")
        bo = ">"
    magic = blob[344:348]
    if magic[:3] not in (b"n+1", b"ni1"):
        raise VolumeLoadError(f"{path}: bad NIfTI magic {magic!r}")
    dim = struct.unpack_from(bo + "8h", blob, 40)
    ndim = dim[0]
    if not 1 <= ndim <= 7:
        raise VolumeLoadError(f"{path}: bad dim[0]={ndim}")
    shape = tuple(int(d) for d in dim[1 : 1 + ndim])
    if len(shape) > 3 and all(d == 1 for d in shape[3:]):
        shape = shape[:3]
    if len(shape) != 3:
        raise VolumeLoadError(f"{path}: expected a 3D volume, got dims {shape}")
    (datatype,) = struct.unpack_from(bo + "h", blob, 70)
    if datatype not in _NIFTI_DTYPES:
        raise VolumeLoadError(f"{path}: unsupported NIfTI datatype code {datatype}")
    pixdim = struct.unpack_from(bo + "8f", blob, 76)
    (vox_offset,) = struct.unpack_from(bo + "f", blob, 108)
    slope, inter = struct.unpack_from(bo + "2f", blob, 112)
    off = int(vox_offset) if vox_offset else 352
    dt = _NIFTI_DTYPES[datatype]
    if bo == ">":
        dt = dt.newbyteorder(">")
    n = shape[0] * shape[1] * shape[2]
    data = np.frombuffer(blob, dtype=dt, count=n, offset=off)
    # NIfTI stores x fastest
    arr = data.reshape(shape, order="F")
    spacing = tuple(float(abs(p)) or 1.0 for p in pixdim[1:4])
    if (slope not in (0.0, 1.0)) or inter != 0.0:
        s = slope if slope != 0.0 else 1.0
        arr = arr.astype(np.float32) * np.float32(s) + np.float32(inter)
    return arr, spacing


def _build_nifti(arr: np.ndarray, spacing, datatype: int) -> bytes:
    hdr = bytearray(348)
    struct.pack_into("<i", hdr, 0, 348)
    struct.pack_into("<8h", hdr, 40, 3, arr.shape[0], arr.shape[1], arr.shape[2], 1, 1, 1, 1)
    bitpix = {2: 8, 4: 16, 8: 32, 16: 32, 64: 64}[datatype]
    struct.pack_into("<h", hdr, 70, datatype)
    struct.pack_into("<h", hdr, 72, bitpix)
    struct.pack_into("<8f", hdr, 76, 1.0, spacing[0], spacing[1], spacing[2], 0, 0, 0, 0)
    struct.pack_into("<f", hdr, 108, 352.0)
    struct.pack_into("<2f", hdr, 112, 1.0, 0.0)
    hdr[344:348] = b"n+1\x00"
    body = np.asfortranarray(arr).tobytes(order="F")
    return bytes(hdr) + b"\x00" * 4 + body


def _is_nifti_path(path) -> bool:
    p = os.fspath(path)
    return p.endswith(".nii") or p.endswith(".nii.gz")


def _infer_format(path, fmt) -> str:
    if fmt is not None:
        if fmt not in ("nifti", "raw-f32", "raw"):
            raise ValueError(f"unknown format {fmt!r}")
        return "nifti" if fmt == "nifti" else "raw"
    return "nifti" if _is_nifti_path(path) else "raw"


# ---------------------------------------------------------------------------
# public API


def load_volume(path, format: str | None = None) -> Volume3D:
    """Load a scalar volume from disk.

    format is "nifti" or "raw-f32"; when None it is inferred from the
    file extension.  Non-finite voxels are a hard error naming the first
    offending index.
    """
    if not os.path.exists(os.fspath(path)):
        raise VolumeLoadError(f"missing file: {os.fspath(path)}")
    if _infer_format(path, format) == "nifti":
        arr, spacing = _parse_nifti(_maybe_gzip_read(path), path)
        arr = np.ascontiguousarray(arr, dtype=np.float32)
    else:
        arr, _ = _read_raw(path, dtype_expect="f32")
        spacing = (1.0, 1.0, 1.0)
    _check_finite(arr, path)
    return Volume3D(arr, spacing)


def save_volume(vol: Volume3D, path, format: str | None = None) -> None:
    """Write a volume; raw-f32 round trips are bit-exact."""
    if _infer_format(path, format) == "nifti":
        blob = _build_nifti(np.asarray(vol.data, dtype=np.float32), vol.spacing, 16)
        if os.fspath(path).endswith(".gz"):
            blob = gzip.compress(blob, compresslevel=1)
        _atomic_write(path, blob)
    else:
        _write_raw(path, vol.data, "f32")


def load_mask(path, format: str | None = None) -> SegMask3D:
    """Load a segmentation mask (labels 0/1/2/4)."""
    if not os.path.exists(os.fspath(path)):
        raise VolumeLoadError(f"missing file: {os.fspath(path)}")
    if _infer_format(path, format) == "nifti":
        arr, spacing = _parse_nifti(_maybe_gzip_read(path), path)
    else:
        arr, _ = _read_raw(path)
        spacing = (1.0, 1.0, 1.0)
    arr = np.asarray(arr)
    if arr.dtype.kind == "f":
        _check_finite(arr, path)
        rounded = np.rint(arr)
        if not np.array_equal(rounded, arr):
            idx = tuple(int(i) for i in np.argwhere(rounded != arr)[0])
            raise VolumeLoadError(f"non-integer mask value at index {idx} in {path}")
        arr = rounded
    return SegMask3D(np.ascontiguousarray(arr, dtype=np.int16), spacing)


def save_mask(mask: SegMask3D, path, format: str | None = None) -> None:
    if _infer_format(path, format) == "nifti":
        blob = _build_nifti(np.asarray(mask.labels, dtype=np.int16), mask.spacing, 4)
        if os.fspath(path).endswith(".gz"):
            blob = gzip.compress(blob, compresslevel=1)
        _atomic_write(path, blob)
    else:
        _write_raw(path, mask.labels, "i16")


def axial_slice(vol: Volume3D, k: int) -> np.ndarray:
    """Return the (nx, ny) axial plane z = k."""
    data = vol.data if isinstance(vol, Volume3D) else np.asarray(vol)
    nz = data.shape[2]
    if not 0 <= k < nz:
        raise IndexError(f"axial index {k} out of range [0, {nz})")
    return data[:, :, k]


# modality file-name aliases accepted on disk (canonical name first)
MODALITY_ALIASES = {
    "t1": ("t1",),
    "t1gd": ("t1gd", "t1ce"),
    "t2": ("t2",),
    "flair": ("flair",),
}
_EXTS = (".nii.gz", ".nii", ".raw")


def _find_file(case_dir: str, case_id: str, stems) -> str | None:
    for stem in stems:
        for ext in _EXTS:
            p = os.path.join(case_dir, f"{case_id}_{stem}{ext}")
            if os.path.exists(p):
                return p
    return None


def load_case(case_dir) -> Case:
    """Load a BraTS-style case directory.

    Layout: ``<case>/<case>_<modality>.<ext>`` with an optional
    ``<case>_seg.<ext>`` mask; extensions .nii, .nii.gz or .raw.
    """
    case_dir = os.fspath(case_dir)
    case_id = os.path.basename(os.path.normpath(case_dir))
    modalities = {}
    for name, stems in MODALITY_ALIASES.items():
        p = _find_file(case_dir, case_id, stems)
        if p is not None:
            modalities[name] = load_volume(p)
    if not modalities:
        raise VolumeLoadError(f"no modality files found in {case_dir}")
    seg = _find_file(case_dir, case_id, ("seg",))
    mask = load_mask(seg) if seg else None
    return Case(case_id, modalities, mask)
