import gzip

import numpy as np
import pytest

from tumorpatch import (
    Case,
    SegMask3D,
    Volume3D,
    VolumeLoadError,
    axial_slice,
    load_case,
    load_mask,
    load_volume,
    save_mask,
    save_volume,
)


def test_raw_roundtrip_known_bytes(tmp_path):
    vals = np.arange(8, dtype=np.float32).reshape(2, 2, 2)
    p = tmp_path / "v.raw"
    save_volume(Volume3D(vals), p)
    back = load_volume(p, format="raw-f32")
    assert back.shape == (2, 2, 2)
    assert np.array_equal(back.data, vals)
    # on-disk layout is little-endian C order
    assert p.read_bytes() == vals.tobytes()


def test_raw_header_is_human_writable(tmp_path):
    (tmp_path / "v.raw").write_bytes(np.arange(8, dtype="<f4").tobytes())
    (tmp_path / "v.raw.hdr").write_text("TPRAW1\n2\n2\n2\nf32\n")
    vol = load_volume(tmp_path / "v.raw")
    assert vol.shape == (2, 2, 2)
    assert vol.data[1, 1, 1] == 7.0


def test_raw_shape_mismatch(tmp_path):
    (tmp_path / "v.raw").write_bytes(np.arange(7, dtype="<f4").tobytes())
    (tmp_path / "v.raw.hdr").write_text("TPRAW1\n2\n2\n2\nf32\n")
    with pytest.raises(VolumeLoadError, match="header shape"):
        load_volume(tmp_path / "v.raw")


def test_missing_file(tmp_path):
    with pytest.raises(VolumeLoadError, match="missing"):
        load_volume(tmp_path / "nope.raw")


def test_nonfinite_rejected_with_index(tmp_path):
    vals = np.zeros((2, 2, 2), dtype=np.float32)
    vals[1, 0, 1] = np.nan
    p = tmp_path / "v.raw"
    p.write_bytes(vals.tobytes())
    (tmp_path / "v.raw.hdr").write_text("TPRAW1\n2\n2\n2\nf32\n")
    with pytest.raises(VolumeLoadError, match=r"\(1, 0, 1\)"):
        load_volume(p)


def test_nifti_roundtrip(tmp_path):
    rng = np.random.default_rng(0)
    vals = rng.normal(size=(5, 4, 3)).astype(np.float32)
    for name in ("v.nii", "v.nii.gz"):
        p = tmp_path / name
        save_volume(Volume3D(vals, spacing=(1.0, 1.0, 1.2)), p)
        back = load_volume(p, format="nifti")
        assert back.shape == (5, 4, 3)
        assert np.array_equal(back.data, vals)
        assert back.spacing[2] == pytest.approx(1.2)


def test_nifti_scl_slope_applied(tmp_path):
    vals = np.ones((2, 2, 2), dtype=np.float32)
    p = tmp_path / "v.nii"
    save_volume(Volume3D(vals), p)
    blob = bytearray(p.read_bytes())
    import struct

    struct.pack_into("<2f", blob, 112, 2.0, 3.0)  # scl_slope, scl_inter
    p.write_bytes(bytes(blob))
    back = load_volume(p)
    assert np.allclose(back.data, 5.0)


def test_mask_roundtrip_and_label_check(tmp_path):
    labels = np.zeros((3, 3, 3), dtype=np.int16)
    labels[1, 1, 1] = 4
    labels[0, 0, 0] = 2
    p = tmp_path / "m_seg.raw"
    save_mask(SegMask3D(labels), p)
    back = load_mask(p)
    assert np.array_equal(back.labels, labels)
    with pytest.raises(VolumeLoadError, match="illegal segmentation label"):
        SegMask3D(np.full((2, 2, 2), 3, dtype=np.int16))


def test_save_to_unwritable_path(tmp_path):
    vals = np.zeros((2, 2, 2), dtype=np.float32)
    with pytest.raises(OSError):
        save_volume(Volume3D(vals), tmp_path / "no_such_dir" / "v.raw")


def test_axial_slice_definition():
    vals = np.arange(8, dtype=np.float32).reshape(2, 2, 2)
    vol = Volume3D(vals)
    sl = axial_slice(vol, 1)
    assert sl.shape == (2, 2)
    for i in range(2):
        for j in range(2):
            assert sl[i, j] == vals[i, j, 1]
    with pytest.raises(IndexError):
        axial_slice(vol, 2)
    with pytest.raises(IndexError):
        axial_slice(vol, -1)


def test_axial_slice_exhaustive_small():
    rng = np.random.default_rng(7)
    vals = rng.normal(size=(4, 3, 5)).astype(np.float32)
    vol = Volume3D(vals)
    for k in range(5):
        assert np.array_equal(axial_slice(vol, k), vals[:, :, k])


def test_case_rejects_mixed_shapes():
    a = Volume3D(np.zeros((2, 2, 2), dtype=np.float32))
    b = Volume3D(np.zeros((2, 2, 3), dtype=np.float32))
    with pytest.raises(VolumeLoadError, match="mixed shapes"):
        Case("c1", {"t1": a, "flair": b})


def test_case_requires_flair_for_patching():
    a = Volume3D(np.zeros((2, 2, 2), dtype=np.float32))
    case = Case("c1", {"t1": a})
    with pytest.raises(VolumeLoadError, match="flair"):
        case.require_flair()


def test_load_case_brats_layout(tmp_path):
    case_dir = tmp_path / "sub01"
    case_dir.mkdir()
    vals = np.arange(8, dtype=np.float32).reshape(2, 2, 2)
    labels = np.zeros((2, 2, 2), dtype=np.int16)
    labels[0, 0, 0] = 1
    save_volume(Volume3D(vals), case_dir / "sub01_flair.raw")
    save_volume(Volume3D(vals + 1), case_dir / "sub01_t1ce.raw")  # t1gd alias
    save_mask(SegMask3D(labels), case_dir / "sub01_seg.raw")
    case = load_case(case_dir)
    assert case.case_id == "sub01"
    assert set(case.modalities) == {"flair", "t1gd"}
    assert case.mask is not None and case.mask.labels[0, 0, 0] == 1


def test_roundtrip_identity_random_volumes(tmp_path):
    rng = np.random.default_rng(42)
    for i in range(10):
        shape = tuple(rng.integers(1, 7, size=3))
        vals = rng.normal(size=shape).astype(np.float32)
        p = tmp_path / f"v{i}.raw"
        save_volume(Volume3D(vals), p)
        back = load_volume(p)
        assert back.shape == shape
        assert np.array_equal(back.data, vals)
