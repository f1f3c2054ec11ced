"""Template grid arithmetic, probe-aligned planes, and chord sampling."""

import math

import numpy as np

from bioptx import (AnatomySpec, CoreSegment, LESION, generate_synthetic,
                    grid_to_world, needle_line, plane_angle,
                    point_line_distance, resample_plane, segment_mask_length)

print("template holes: 13x13, 5mm pitch")
for hole in [(6, 0), (0, 0), (12, 12)]:
    print(f"  hole {hole} -> world {grid_to_world(*hole)} mm, "
          f"plane angle {math.degrees(plane_angle(*hole)):6.2f} deg")

spec = AnatomySpec(lesion_volume_cc=0.4, lesion_center_mm=(5.0, 25.0, 45.0))
vol = generate_synthetic(spec)

theta = plane_angle(7, 5)
img = resample_plane(vol, theta)
print(f"\nplane through hole (7,5): {int(img[0].sum())} prostate px, "
      f"{int(img[1].sum())} lesion px")

for hole in [(7, 5), (6, 5), (8, 5)]:
    line = needle_line(*hole)
    d = point_line_distance((5.0, 25.0, 45.0), line)
    ccl = segment_mask_length(vol, LESION, CoreSegment(*hole, 45.0, 20.0))
    r = 4.571
    chord = 2 * math.sqrt(max(r * r - d * d, 0.0))
    print(f"hole {hole}: distance {d:4.1f}mm, sampled core length {ccl:4.1f}mm, "
          f"analytic chord {chord:4.1f}mm")
