"""Encode landmarks as Gaussian heatmaps, then decode them back.

Run:  python3 demos/02_heatmap_codec.py
"""
import numpy as np

from heatmark import (
    decode_stack,
    default_boundary_scheme,
    encode_landmarks,
    rasterize_boundaries,
)
from heatmark.synthetic import synthetic_faces

sample = synthetic_faces(1, seed=2)[0]

# 256-space landmarks rendered on a 64x64 grid (stride 4).
stack = encode_landmarks(sample.points, res=(64, 64), input_size=256.0)
print(f"landmark stack: {stack.shape}, peak {stack.max():.3f}, "
      f"nonzero {100.0 * np.count_nonzero(stack) / stack.size:.1f}% of pixels")

decoded = decode_stack(stack, scale=256.0 / 64.0)
err = np.hypot(*(decoded - sample.points).T)
print(f"decode error in 256-space: max {err.max():.3f} px, mean {err.mean():.3f} px")

# Crude look at one map: mark everything above half the peak.
k = 60
hm = stack[k]
r0, c0 = np.unravel_index(hm.argmax(), hm.shape)
print(f"\nlandmark {k} neighborhood (rows {r0 - 3}..{r0 + 3}):")
for r in range(r0 - 3, r0 + 4):
    cells = ["#" if hm[r, c] > 0.5 else "+" if hm[r, c] > 0.05 else "." for c in range(c0 - 3, c0 + 4)]
    print("   " + " ".join(cells))

scheme = default_boundary_scheme()
bstack = rasterize_boundaries(sample.points, scheme)
print(f"\nboundary stack: {bstack.shape} for {scheme.n_boundaries} curves")
for m in (0, 5, 14):
    print(f"  boundary {m}: {len(scheme.boundaries[m].indices)} landmarks, "
          f"support {np.count_nonzero(bstack[m])} px")
