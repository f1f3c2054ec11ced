"""Voxel anatomy model: label volumes, synthetic case generation, BVOL file I/O.

A case is a 3D grid of 8-bit label bitmasks (prostate / lesion / rectum) with
physical spacing and a world-frame origin. Synthetic cases stand in for
segmented MR volumes: the gland is an axis-aligned ellipsoid, the target a
sphere (optionally an ellipsoid), the rectum a cylinder running under the
gland along the needle axis.
"""

from __future__ import annotations

import json
import struct
import zlib
from dataclasses import dataclass, replace

import numpy as np

PROSTATE = 1
LESION = 2
RECTUM = 4

LABEL_NAMES = {"prostate": PROSTATE, "lesion": LESION, "rectum": RECTUM}

BVOL_MAGIC = b"BVOL\x00\x01\x00\x00"


class AnatomyError(ValueError):
    """Anatomy specification violates a structural constraint."""


class VolumeFormatError(IOError):
    """Base class for BVOL decode failures."""


class BadMagicError(VolumeFormatError):
    """File does not start with the BVOL/1 magic."""


class HeaderError(VolumeFormatError):
    """Header is not valid JSON or is missing required keys."""


class TruncatedPayloadError(VolumeFormatError):
    """Voxel payload or checksum shorter than the header promises."""


class ChecksumError(VolumeFormatError):
    """CRC32 of the payload does not match the stored value."""


@dataclass(frozen=True)
class LabelVolume:
    """Immutable 3D bitmask grid. ``voxels`` is indexed ``[z, y, x]`` so the
    in-memory layout is x-fastest, matching the BVOL payload order.
    """

    dims: tuple[int, int, int]              # (nx, ny, nz)
    spacing: tuple[float, float, float]     # mm per voxel, (sx, sy, sz)
    origin: tuple[float, float, float]      # world mm of voxel (0,0,0) center
    voxels: np.ndarray                      # uint8, shape (nz, ny, nx)

    def __post_init__(self):
        nx, ny, nz = self.dims
        if min(self.dims) < 1:
            raise AnatomyError(f"dims must be >= 1, got {self.dims}")
        if min(self.spacing) <= 0:
            raise AnatomyError(f"spacing must be > 0, got {self.spacing}")
        if self.voxels.shape != (nz, ny, nx):
            raise AnatomyError(
                f"voxel array shape {self.voxels.shape} != (nz,ny,nx)={(nz, ny, nx)}")
        if self.voxels.dtype != np.uint8:
            object.__setattr__(self, "voxels", self.voxels.astype(np.uint8))
        self.voxels.setflags(write=False)

    def __eq__(self, other):
        if not isinstance(other, LabelVolume):
            return NotImplemented
        return (self.dims == other.dims
                and self.spacing == other.spacing
                and self.origin == other.origin
                and np.array_equal(self.voxels, other.voxels))

    def mask(self, label: int) -> np.ndarray:
        """Boolean mask of voxels carrying ``label``."""
        return (self.voxels & label) > 0

    def count(self, label: int) -> int:
        return int(np.count_nonzero(self.voxels & label))

    @property
    def voxel_volume_mm3(self) -> float:
        sx, sy, sz = self.spacing
        return sx * sy * sz

    def world_bounds(self) -> tuple[np.ndarray, np.ndarray]:
        """(lo, hi) world mm of the first and last voxel centers, xyz order."""
        lo = np.asarray(self.origin, dtype=float)
        hi = lo + (np.asarray(self.dims) - 1) * np.asarray(self.spacing)
        return lo, hi

    def label_centroid(self, label: int) -> np.ndarray:
        """Mean world position (mm, xyz) of voxels carrying ``label``."""
        idx = np.argwhere(self.mask(label))          # rows are (iz, iy, ix)
        if idx.shape[0] == 0:
            raise AnatomyError("no target: label has no voxels")
        centers = np.asarray(self.origin) + idx[:, ::-1] * np.asarray(self.spacing)
        return centers.mean(axis=0)


@dataclass(frozen=True)
class AnatomySpec:
    """Parameters of a synthetic case. Lesion size is given either as a radius
    or as a target volume in cc (exactly one).
    """

    prostate_semiaxes_mm: tuple[float, float, float] = (25.0, 20.0, 22.5)
    prostate_center_mm: tuple[float, float, float] = (0.0, 25.0, 45.0)
    lesion_center_mm: tuple[float, float, float] = (5.0, 25.0, 45.0)
    lesion_radius_mm: float | None = None
    lesion_volume_cc: float | None = None
    lesion_semiaxes_mm: tuple[float, float, float] | None = None
    rectum_radius_mm: float = 10.0
    rectum_offset_mm: float = -10.0          # y of the rectum/probe axis
    dims: tuple[int, int, int] = (81, 91, 81)
    spacing: tuple[float, float, float] = (1.0, 1.0, 1.0)
    origin: tuple[float, float, float] = (-40.0, -25.0, 0.0)
    seed: int = 0

    def resolved_lesion_radius(self) -> float:
        if (self.lesion_radius_mm is None) == (self.lesion_volume_cc is None):
            raise AnatomyError("give exactly one of lesion_radius_mm / lesion_volume_cc")
        if self.lesion_radius_mm is not None:
            return float(self.lesion_radius_mm)
        return radius_for_volume_cc(self.lesion_volume_cc)

    def validate(self):
        a = np.asarray(self.prostate_semiaxes_mm, dtype=float)
        if np.any(a <= 0):
            raise AnatomyError("prostate semi-axes must be > 0")
        if self.lesion_semiaxes_mm is None:
            r = self.resolved_lesion_radius()
            if r < 0:
                raise AnatomyError("lesion radius must be >= 0")
            d = np.asarray(self.lesion_center_mm) - np.asarray(self.prostate_center_mm)
            # sufficient condition for ball(lesion) ⊆ ellipsoid: ||d||_E + r/min(a) <= 1
            if r > 0 and np.sqrt(np.sum((d / a) ** 2)) + r / a.min() > 1.0:
                raise AnatomyError("lesion sphere not inside prostate ellipsoid")
        lo = np.asarray(self.origin)
        hi = lo + (np.asarray(self.dims) - 1) * np.asarray(self.spacing)
        c = np.asarray(self.prostate_center_mm)
        if np.any(c - a < lo) or np.any(c + a > hi):
            raise AnatomyError("prostate exceeds volume bounds")


def radius_for_volume_cc(volume_cc: float) -> float:
    """Sphere radius in mm for a volume given in cc (1 cc = 1000 mm³)."""
    return float((3.0 * volume_cc * 1000.0 / (4.0 * np.pi)) ** (1.0 / 3.0))


def _axis_grids(dims, spacing, origin):
    nx, ny, nz = dims
    xs = origin[0] + np.arange(nx) * spacing[0]
    ys = origin[1] + np.arange(ny) * spacing[1]
    zs = origin[2] + np.arange(nz) * spacing[2]
    # broadcastable to (nz, ny, nx)
    return xs[None, None, :], ys[None, :, None], zs[:, None, None]


def generate_synthetic(spec: AnatomySpec) -> LabelVolume:
    """Voxelize the spec: ellipsoidal gland, spherical (or ellipsoidal)
    target, cylindrical rectum along +z under the gland. Membership is tested
    at voxel centers, so output is bit-identical for identical specs.
    """
    spec.validate()
    x, y, z = _axis_grids(spec.dims, spec.spacing, spec.origin)
    pc = spec.prostate_center_mm
    pa = spec.prostate_semiaxes_mm
    prostate = (((x - pc[0]) / pa[0]) ** 2
                + ((y - pc[1]) / pa[1]) ** 2
                + ((z - pc[2]) / pa[2]) ** 2) <= 1.0

    lc = spec.lesion_center_mm
    if spec.lesion_semiaxes_mm is not None:
        la = spec.lesion_semiaxes_mm
        lesion = (((x - lc[0]) / la[0]) ** 2
                  + ((y - lc[1]) / la[1]) ** 2
                  + ((z - lc[2]) / la[2]) ** 2) <= 1.0
    else:
        r = spec.resolved_lesion_radius()
        if r == 0:
            lesion = np.zeros(prostate.shape, dtype=bool)
        else:
            lesion = ((x - lc[0]) ** 2 + (y - lc[1]) ** 2 + (z - lc[2]) ** 2) <= r * r
    lesion &= prostate   # no-op for valid specs; keeps the bit invariant airtight

    rectum = ((x - 0.0) ** 2 + (y - spec.rectum_offset_mm) ** 2) <= spec.rectum_radius_mm ** 2
    rectum = np.broadcast_to(rectum, prostate.shape)

    vox = (prostate.astype(np.uint8) * PROSTATE
           | lesion.astype(np.uint8) * LESION
           | rectum.astype(np.uint8) * RECTUM)
    return LabelVolume(spec.dims, spec.spacing, spec.origin, vox)


def lesion_volume_cc(vol: LabelVolume) -> float:
    """Lesion volume in cc (voxel count × voxel volume / 1000)."""
    return vol.count(LESION) * vol.voxel_volume_mm3 / 1000.0


def lesion_centroid(vol: LabelVolume) -> np.ndarray:
    """World-frame centroid (mm, xyz) of the lesion. Raises on empty lesion."""
    return vol.label_centroid(LESION)


def translate_mask(vol: LabelVolume, label: int, offset_mm) -> LabelVolume:
    """Copy of ``vol`` with one label rigidly shifted by the nearest whole
    number of voxels; voxels shifted past the boundary are dropped, all other
    labels untouched.
    """
    if label not in LABEL_NAMES.values():
        raise AnatomyError(f"unknown label {label}")
    off = np.asarray(offset_mm, dtype=float)
    shift_xyz = np.floor(off / np.asarray(vol.spacing) + 0.5).astype(int)
    moved = vol.mask(label)
    for axis, s in zip((2, 1, 0), shift_xyz):        # array axes are (z,y,x)
        moved = _shift_bool(moved, axis, s)
    vox = (vol.voxels & ~np.uint8(label)) | (moved.astype(np.uint8) * label)
    return replace(vol, voxels=vox)


def _shift_bool(mask: np.ndarray, axis: int, s: int) -> np.ndarray:
    if s == 0:
        return mask
    n = mask.shape[axis]
    out = np.zeros_like(mask)
    if abs(s) >= n:
        return out
    src = [slice(None)] * 3
    dst = [slice(None)] * 3
    if s > 0:
        src[axis] = slice(0, n - s)
        dst[axis] = slice(s, n)
    else:
        src[axis] = slice(-s, n)
        dst[axis] = slice(0, n + s)
    out[tuple(dst)] = mask[tuple(src)]
    return out


# ---------------------------------------------------------------------------
# BVOL/1 container: magic, u32-LE length-prefixed JSON header, raw payload
# (x fastest, y next, z slowest), u32-LE CRC32 of the payload.

def save_volume(vol: LabelVolume, path):
    header = {
        "dims": list(vol.dims),
        "spacing_mm": list(vol.spacing),
        "origin_mm": list(vol.origin),
        "labels": {"prostate": PROSTATE, "lesion": LESION, "rectum": RECTUM},
    }
    hbytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    payload = np.ascontiguousarray(vol.voxels).tobytes()
    with open(path, "wb") as f:
        f.write(BVOL_MAGIC)
        f.write(struct.pack("<I", len(hbytes)))
        f.write(hbytes)
        f.write(payload)
        f.write(struct.pack("<I", zlib.crc32(payload) & 0xFFFFFFFF))


def load_volume(path) -> LabelVolume:
    with open(path, "rb") as f:
        data = f.read()
    if len(data) < len(BVOL_MAGIC) or data[: len(BVOL_MAGIC)] != BVOL_MAGIC:
        raise BadMagicError(f"{path}: not a BVOL/1 file")
    pos = len(BVOL_MAGIC)
    if len(data) < pos + 4:
        raise HeaderError(f"{path}: missing header length")
    (hlen,) = struct.unpack_from("<I", data, pos)
    pos += 4
    if len(data) < pos + hlen:
        raise HeaderError(f"{path}: header truncated")
    try:
        header = json.loads(data[pos:pos + hlen].decode("utf-8"))
        dims = tuple(int(v) for v in header["dims"])
        spacing = tuple(float(v) for v in header["spacing_mm"])
        origin = tuple(float(v) for v in header["origin_mm"])
    except (ValueError, KeyError, TypeError) as e:
        raise HeaderError(f"{path}: malformed header ({e})") from e
    if len(dims) != 3 or len(spacing) != 3 or len(origin) != 3:
        raise HeaderError(f"{path}: header fields must be triples")
    pos += hlen
    nx, ny, nz = dims
    n = nx * ny * nz
    if len(data) < pos + n:
        raise TruncatedPayloadError(
            f"{path}: payload has {len(data) - pos} of {n} bytes")
    payload = data[pos:pos + n]
    pos += n
    if len(data) < pos + 4:
        raise TruncatedPayloadError(f"{path}: missing checksum")
    (crc,) = struct.unpack_from("<I", data, pos)
    if crc != (zlib.crc32(payload) & 0xFFFFFFFF):
        raise ChecksumError(f"{path}: payload CRC32 mismatch")
    vox = np.frombuffer(payload, dtype=np.uint8).reshape(nz, ny, nx).copy()
    return LabelVolume(dims, spacing, origin, vox)
