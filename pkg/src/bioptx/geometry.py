"""Physical substrate of the procedure: 13×13 template grid, probe-aligned
sagittal planes, needle lines, and segment/line vs voxel-mask intersections.

World frame: +z is the needle advance direction (template plane at z=0),
+y is up along template rows, +x lateral along columns. The probe axis runs
parallel to +z at (x=0, y=-r_p), so the probe top touches the bottom grid row.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .anatomy import LESION, PROSTATE, LabelVolume


@dataclass(frozen=True)
class TemplateGrid:
    """Brachytherapy template: rows × cols holes on a fixed pitch.
    Column i sits at x=(i-6)·pitch, row j at y=j·pitch.
    """

    rows: int = 13
    cols: int = 13
    pitch_mm: float = 5.0

    def __post_init__(self):
        if self.rows != 13 or self.cols != 13 or self.pitch_mm != 5.0:
            raise ValueError("template is a fixed 13x13 grid with 5mm pitch")

    def to_world(self, i: int, j: int) -> tuple[float, float]:
        if not (0 <= i <= self.cols - 1 and 0 <= j <= self.rows - 1):
            raise ValueError(f"hole ({i},{j}) outside the {self.cols}x{self.rows} grid")
        return ((i - (self.cols - 1) / 2) * self.pitch_mm, j * self.pitch_mm)

    def snap(self, x: float, y: float) -> tuple[int, int]:
        """Nearest hole to a world (x, y), clamped onto the grid."""
        i = int(math.floor(x / self.pitch_mm + (self.cols - 1) / 2 + 0.5))
        j = int(math.floor(y / self.pitch_mm + 0.5))
        return (min(max(i, 0), self.cols - 1), min(max(j, 0), self.rows - 1))

    def holes(self):
        for j in range(self.rows):
            for i in range(self.cols):
                yield (i, j)


@dataclass(frozen=True)
class ProbeModel:
    """Transrectal probe approximated by its axis: a +z line at (0, -radius),
    which puts the probe top on the bottom grid row.
    """

    radius_mm: float = 10.0

    @property
    def axis_xy(self) -> tuple[float, float]:
        return (0.0, -self.radius_mm)


@dataclass(frozen=True)
class CoreSegment:
    """A biopsy core: the needle of hole (i, j), centered at depth z_c."""

    i: int
    j: int
    center_depth_mm: float
    length_mm: float = 20.0

    def __post_init__(self):
        if self.length_mm <= 0:
            raise ValueError("core length must be > 0")


DEFAULT_GRID = TemplateGrid()
DEFAULT_PROBE = ProbeModel()


def grid_to_world(i: int, j: int, grid: TemplateGrid = DEFAULT_GRID) -> tuple[float, float]:
    """Template-plane world (x, y) mm of hole (i, j)."""
    return grid.to_world(i, j)


def plane_angle(i: int, j: int, probe: ProbeModel = DEFAULT_PROBE,
                grid: TemplateGrid = DEFAULT_GRID) -> float:
    """Probe rotation (radians from vertical) whose imaging plane contains
    the needle line of hole (i, j)."""
    x, y = grid.to_world(i, j)
    ax, ay = probe.axis_xy
    return math.atan2(x - ax, y - ay)


def needle_line(i: int, j: int, grid: TemplateGrid = DEFAULT_GRID):
    """(point, unit direction) of the needle through hole (i, j), along +z."""
    x, y = grid.to_world(i, j)
    return np.array([x, y, 0.0]), np.array([0.0, 0.0, 1.0])


def point_line_distance(p, line) -> float:
    """Perpendicular distance of point ``p`` to ``line=(point, unit dir)``."""
    a, d = line
    v = np.asarray(p, dtype=float) - np.asarray(a, dtype=float)
    return float(np.linalg.norm(v - np.dot(v, d) * np.asarray(d)))


def _lookup(vol: LabelVolume, pts: np.ndarray) -> np.ndarray:
    """Nearest-voxel labels at world points (N,3); out-of-volume reads 0."""
    idx = np.floor((pts - np.asarray(vol.origin)) / np.asarray(vol.spacing) + 0.5).astype(int)
    nx, ny, nz = vol.dims
    valid = ((idx[:, 0] >= 0) & (idx[:, 0] < nx)
             & (idx[:, 1] >= 0) & (idx[:, 1] < ny)
             & (idx[:, 2] >= 0) & (idx[:, 2] < nz))
    out = np.zeros(len(pts), dtype=np.uint8)
    iv = idx[valid]
    out[valid] = vol.voxels[iv[:, 2], iv[:, 1], iv[:, 0]]
    return out


def resample_plane(vol: LabelVolume, theta: float,
                   window: tuple[float, float] = (96.0, 96.0),
                   res: tuple[int, int] = (64, 64),
                   probe: ProbeModel = DEFAULT_PROBE,
                   channels: tuple[int, int] = (PROSTATE, LESION)) -> np.ndarray:
    """Binary image of the rotated imaging plane, shape (2, n_u, n_v).

    Pixel (u, v) samples the nearest voxel at
    p = (ax + (r_p + v_mm)·sinθ, ay + (r_p + v_mm)·cosθ, u_mm), with u_mm the
    depth from the template plane and v_mm the in-plane height above the
    probe top; pixel centers at (k + 0.5)·step.
    """
    depth_mm, height_mm = window
    n_u, n_v = res
    ax, ay = probe.axis_xy
    u = (np.arange(n_u) + 0.5) * (depth_mm / n_u)
    v = (np.arange(n_v) + 0.5) * (height_mm / n_v)
    radial = probe.radius_mm + v
    x = ax + radial * math.sin(theta)
    y = ay + radial * math.cos(theta)

    sx, sy, sz = vol.spacing
    ox, oy, oz = vol.origin
    nx, ny, nz = vol.dims
    ix = np.floor((x - ox) / sx + 0.5).astype(int)
    iy = np.floor((y - oy) / sy + 0.5).astype(int)
    iz = np.floor((u - oz) / sz + 0.5).astype(int)
    ok_v = (ix >= 0) & (ix < nx) & (iy >= 0) & (iy < ny)
    ok_u = (iz >= 0) & (iz < nz)
    ixc, iyc, izc = ix.clip(0, nx - 1), iy.clip(0, ny - 1), iz.clip(0, nz - 1)

    labels = vol.voxels[izc[:, None], iyc[None, :], ixc[None, :]]
    labels = labels * (ok_u[:, None] & ok_v[None, :])
    img = np.empty((2, n_u, n_v), dtype=np.uint8)
    img[0] = (labels & channels[0]) > 0
    img[1] = (labels & channels[1]) > 0
    return img


def segment_mask_length(vol: LabelVolume, label: int, seg: CoreSegment,
                        step_mm: float = 0.25,
                        grid: TemplateGrid = DEFAULT_GRID) -> float:
    """Length (mm) of the core segment overlapping ``label``, by uniform
    midpoint sampling along the needle line: (hits / samples) × core length.
    """
    if seg.length_mm <= 0:
        return 0.0
    x, y = grid.to_world(seg.i, seg.j)
    n = max(1, int(round(seg.length_mm / step_mm)))
    z = seg.center_depth_mm - seg.length_mm / 2 + (np.arange(n) + 0.5) * (seg.length_mm / n)
    pts = np.column_stack([np.full(n, x), np.full(n, y), z])
    hits = int(np.count_nonzero(_lookup(vol, pts) & label))
    return hits * seg.length_mm / n


def line_intersects_mask(vol: LabelVolume, label: int, line,
                         step_mm: float | None = None) -> bool:
    """True iff any sample of the (infinite) line inside the volume carries
    ``label``. Sampling step defaults to half the smallest spacing.
    """
    a, d = np.asarray(line[0], dtype=float), np.asarray(line[1], dtype=float)
    if step_mm is None:
        step_mm = min(vol.spacing) / 2.0
    lo, hi = vol.world_bounds()
    # slab clip of the line against the voxel-center bounding box
    t0, t1 = -np.inf, np.inf
    for k in range(3):
        if abs(d[k]) < 1e-12:
            if not (lo[k] - 0.5 * vol.spacing[k] <= a[k] <= hi[k] + 0.5 * vol.spacing[k]):
                return False
        else:
            ta = (lo[k] - a[k]) / d[k]
            tb = (hi[k] - a[k]) / d[k]
            t0 = max(t0, min(ta, tb))
            t1 = min(t1, max(ta, tb))
    if not np.isfinite(t0) or not np.isfinite(t1) or t0 > t1:
        return False
    n = max(2, int(math.ceil((t1 - t0) / step_mm)) + 1)
    ts = np.linspace(t0, t1, n)
    pts = a[None, :] + ts[:, None] * d[None, :]
    return bool(np.any(_lookup(vol, pts) & label))
