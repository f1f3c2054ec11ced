import numpy as np

from bioptx.anatomy import LESION, PROSTATE, LabelVolume


def sphere_volume(center, radius, dims=(81, 91, 81), spacing=1.0,
                  origin=(-40.0, -25.0, 0.0)):
    """Free-floating voxelized sphere labeled as lesion (and prostate)."""
    nx, ny, nz = dims
    xs = origin[0] + np.arange(nx) * spacing
    ys = origin[1] + np.arange(ny) * spacing
    zs = origin[2] + np.arange(nz) * spacing
    d2 = ((xs[None, None, :] - center[0]) ** 2
          + (ys[None, :, None] - center[1]) ** 2
          + (zs[:, None, None] - center[2]) ** 2)
    inside = d2 <= radius * radius
    vox = inside.astype(np.uint8) * (PROSTATE | LESION)
    return LabelVolume(dims, (spacing,) * 3, origin, vox)
