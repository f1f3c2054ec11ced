import math

import numpy as np
import pytest

from bioptx.anatomy import (AnatomyError, AnatomySpec, BadMagicError,
                            ChecksumError, HeaderError, LESION, LabelVolume,
                            PROSTATE, RECTUM, TruncatedPayloadError,
                            generate_synthetic, lesion_centroid,
                            lesion_volume_cc, load_volume,
                            radius_for_volume_cc, save_volume, translate_mask)

ANALYTIC_PROSTATE_MM3 = 4.0 / 3.0 * math.pi * 25.0 * 20.0 * 22.5   # 47123.89


def small_volume(vox):
    vox = np.asarray(vox, dtype=np.uint8)
    nz, ny, nx = vox.shape
    return LabelVolume((nx, ny, nz), (1.0, 1.0, 1.0), (0.0, 0.0, 0.0), vox)


# -- generation --------------------------------------------------------------

def test_ellipsoid_volume_matches_analytic():
    spec = AnatomySpec(lesion_volume_cc=0.4)
    vol = generate_synthetic(spec)
    voxelized = vol.count(PROSTATE) * vol.voxel_volume_mm3
    assert abs(voxelized - ANALYTIC_PROSTATE_MM3) / ANALYTIC_PROSTATE_MM3 < 0.02


def test_zero_radius_lesion_is_empty():
    vol = generate_synthetic(AnatomySpec(lesion_radius_mm=0.0))
    assert vol.count(LESION) == 0


def test_generation_is_deterministic():
    spec = AnatomySpec(lesion_volume_cc=0.3, seed=42)
    a = generate_synthetic(spec)
    b = generate_synthetic(spec)
    assert a == b


def test_lesion_subset_of_prostate():
    vol = generate_synthetic(AnatomySpec(lesion_volume_cc=0.5))
    lesion = vol.mask(LESION)
    prostate = vol.mask(PROSTATE)
    assert np.all(prostate[lesion])


def test_lesion_outside_prostate_rejected():
    with pytest.raises(AnatomyError):
        generate_synthetic(AnatomySpec(lesion_center_mm=(24.0, 25.0, 45.0),
                                       lesion_radius_mm=5.0))


def test_prostate_outside_bounds_rejected():
    with pytest.raises(AnatomyError):
        generate_synthetic(AnatomySpec(prostate_center_mm=(30.0, 25.0, 45.0),
                                       lesion_center_mm=(30.0, 25.0, 45.0),
                                       lesion_radius_mm=2.0))


def test_voxelization_convergence_bound():
    # |voxelized - analytic| / analytic <= 3*spacing/min(semi-axis)
    for spacing in (1.0, 0.8):
        for axes in ((25.0, 20.0, 22.5), (20.0, 18.0, 15.0)):
            dims = (81, 91, 81) if spacing == 1.0 else (101, 113, 101)
            spec = AnatomySpec(prostate_semiaxes_mm=axes,
                               lesion_radius_mm=2.0,
                               dims=dims,
                               spacing=(spacing,) * 3)
            vol = generate_synthetic(spec)
            analytic = 4.0 / 3.0 * math.pi * axes[0] * axes[1] * axes[2]
            voxelized = vol.count(PROSTATE) * vol.voxel_volume_mm3
            assert abs(voxelized - analytic) / analytic <= 3 * spacing / min(axes)


# -- lesion volume / centroid ------------------------------------------------

def test_lesion_volume_02cc():
    vol = generate_synthetic(AnatomySpec(lesion_radius_mm=3.628))
    assert lesion_volume_cc(vol) == pytest.approx(0.2, rel=0.05)


def test_lesion_volume_04cc():
    vol = generate_synthetic(AnatomySpec(lesion_radius_mm=4.571))
    assert lesion_volume_cc(vol) == pytest.approx(0.4, rel=0.05)


def test_lesion_volume_empty():
    vol = generate_synthetic(AnatomySpec(lesion_radius_mm=0.0))
    assert lesion_volume_cc(vol) == 0.0


def test_radius_for_volume_cc_roundtrip():
    assert radius_for_volume_cc(0.2) == pytest.approx(3.628, abs=5e-4)
    assert radius_for_volume_cc(0.4) == pytest.approx(4.571, abs=5e-4)


def test_centroid_single_voxel():
    vox = np.zeros((20, 20, 20), dtype=np.uint8)
    vox[10, 10, 10] = LESION
    vol = small_volume(vox)
    assert lesion_centroid(vol) == pytest.approx((10.0, 10.0, 10.0))


def test_centroid_two_voxels_mean():
    vox = np.zeros((8, 8, 8), dtype=np.uint8)
    vox[1, 1, 0] = LESION
    vox[1, 1, 4] = LESION
    assert lesion_centroid(small_volume(vox)) == pytest.approx((2.0, 1.0, 1.0))


def test_centroid_symmetric_sphere():
    spec = AnatomySpec(lesion_radius_mm=4.0, lesion_center_mm=(3.0, 24.0, 44.0))
    vol = generate_synthetic(spec)
    assert np.all(np.abs(lesion_centroid(vol) - (3.0, 24.0, 44.0)) <= 0.5)


def test_centroid_empty_raises():
    vol = generate_synthetic(AnatomySpec(lesion_radius_mm=0.0))
    with pytest.raises(AnatomyError, match="no target"):
        lesion_centroid(vol)


# -- translate_mask ----------------------------------------------------------

def test_translate_identity():
    vol = generate_synthetic(AnatomySpec(lesion_volume_cc=0.3))
    assert translate_mask(vol, LESION, (0.0, 0.0, 0.0)) == vol


def test_translate_shifts_centroid():
    vol = generate_synthetic(AnatomySpec(lesion_volume_cc=0.3))
    moved = translate_mask(vol, LESION, (1.0, 0.0, 0.0))
    assert lesion_centroid(moved)[0] == pytest.approx(lesion_centroid(vol)[0] + 1.0)
    # other labels untouched
    assert np.array_equal(moved.mask(PROSTATE), vol.mask(PROSTATE))
    assert np.array_equal(moved.mask(RECTUM), vol.mask(RECTUM))


def test_translate_paper_noise_magnitude():
    # per-axis 1.73mm offset -> ~3.0mm shift; 0.25mm voxels keep rounding benign
    spec = AnatomySpec(prostate_semiaxes_mm=(8.0, 8.0, 8.0),
                       prostate_center_mm=(0.0, 10.0, 10.0),
                       lesion_center_mm=(0.0, 10.0, 10.0),
                       lesion_radius_mm=3.0,
                       dims=(100, 100, 100),
                       spacing=(0.25, 0.25, 0.25),
                       origin=(-12.0, -2.0, -2.0))
    vol = generate_synthetic(spec)
    moved = translate_mask(vol, LESION, (1.73, 1.73, 1.73))
    shift = lesion_centroid(moved) - lesion_centroid(vol)
    assert np.linalg.norm(shift) == pytest.approx(3.0, abs=0.1)


def test_translate_invertible_away_from_boundary(rng):
    vol = generate_synthetic(AnatomySpec(lesion_volume_cc=0.3))
    for _ in range(5):
        d = rng.uniform(-4, 4, size=3)
        back = translate_mask(translate_mask(vol, LESION, d), LESION, -d)
        assert back == vol   # lesion is deep inside, nothing clipped


def test_translate_unknown_label():
    vol = generate_synthetic(AnatomySpec(lesion_volume_cc=0.3))
    with pytest.raises(AnatomyError):
        translate_mask(vol, 8, (1.0, 0.0, 0.0))


# -- BVOL round trip ---------------------------------------------------------

def test_save_load_roundtrip(tmp_path):
    vol = generate_synthetic(AnatomySpec(lesion_volume_cc=0.4))
    path = tmp_path / "case.bvol"
    save_volume(vol, path)
    assert load_volume(path) == vol


def test_roundtrip_randomized(tmp_path, rng):
    # bit-exact persistence over >= 100 randomized small volumes
    for k in range(100):
        dims = tuple(int(d) for d in rng.integers(1, 9, size=3))
        vox = rng.integers(0, 8, size=(dims[2], dims[1], dims[0])).astype(np.uint8)
        vol = LabelVolume(dims,
                          tuple(float(s) for s in rng.uniform(0.3, 2.0, 3)),
                          tuple(float(o) for o in rng.uniform(-5, 5, 3)),
                          vox)
        path = tmp_path / f"r{k}.bvol"
        save_volume(vol, path)
        assert load_volume(path) == vol


def test_load_bad_magic(tmp_path):
    path = tmp_path / "bad.bvol"
    path.write_bytes(b"NOTBVOL!" + b"\x00" * 32)
    with pytest.raises(BadMagicError):
        load_volume(path)


def test_load_truncated_payload(tmp_path):
    vol = small_volume(np.ones((2, 2, 2), dtype=np.uint8))
    path = tmp_path / "t.bvol"
    save_volume(vol, path)
    data = path.read_bytes()
    path.write_bytes(data[:-5])        # drop checksum + 1 payload byte
    with pytest.raises(TruncatedPayloadError):
        load_volume(path)


def test_load_checksum_mismatch(tmp_path):
    vol = small_volume(np.ones((2, 2, 2), dtype=np.uint8))
    path = tmp_path / "c.bvol"
    save_volume(vol, path)
    data = bytearray(path.read_bytes())
    data[-6] ^= 0xFF                   # corrupt a payload byte
    path.write_bytes(bytes(data))
    with pytest.raises(ChecksumError):
        load_volume(path)


def test_load_malformed_header(tmp_path):
    from bioptx.anatomy import BVOL_MAGIC
    import struct
    blob = b"{not json"
    path = tmp_path / "h.bvol"
    path.write_bytes(BVOL_MAGIC + struct.pack("<I", len(blob)) + blob + b"\x00" * 16)
    with pytest.raises(HeaderError):
        load_volume(path)
