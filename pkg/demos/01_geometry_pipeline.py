"""Walk one face through the geometry pipeline: parse, crop, augment.

Run:  python3 demos/01_geometry_pipeline.py
"""
import numpy as np

from heatmark import AugmentParams, augment, crop_resize, default_flip_pairs, parse_wflw_line
from heatmark.synthetic import format_annotation_line, synthetic_faces

sample = synthetic_faces(1, seed=4)[0]
line = format_annotation_line(sample)
print("annotation line (first 80 chars):")
print(" ", line[:80] + "...")

parsed = parse_wflw_line(line)
assert np.array_equal(parsed.points, sample.points)
print(f"parsed {parsed.points.shape[0]} landmarks, bbox {parsed.bbox}, image {parsed.image_id!r}")
print(f"attribute flags: {parsed.attributes}")

# Map the face crop onto a 256x256 training window with 25% margin.
transform, cropped = crop_resize(parsed, out_size=256, margin=0.25)
print("\nafter crop_resize(out_size=256, margin=0.25):")
print(f"  x range {cropped.points[:, 0].min():.1f} .. {cropped.points[:, 0].max():.1f}")
print(f"  y range {cropped.points[:, 1].min():.1f} .. {cropped.points[:, 1].max():.1f}")
print(f"  affine determinant {np.linalg.det(transform):.4f}")

table = default_flip_pairs()
params = AugmentParams(rotation_deg=20.0, scale_frac=0.15, crop_px=10, flip_prob=1.0,
                       rng_seed=9)
aug = augment(cropped, params, table, image_size=256)
n_valid = len(aug.points) if aug.valid is None else int(aug.valid.sum())
print(f"\nvalid after augmentation: {n_valid}/{len(aug.points)}")

# With flip_prob=1.0 the mirror always fires, so the left outer eye corner
# (index 60) now carries what used to be the right one (index 72).
before = tuple(round(float(v), 2) for v in cropped.points[60])
after = tuple(round(float(v), 2) for v in aug.points[60])
print(f"landmark 60 moved from {before} to {after}")
