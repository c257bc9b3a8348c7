"""Deterministic synthetic 98-point faces for tests, demos, and walkthroughs.

No dataset ships with the toolkit, so this builds plausible face-shaped
landmark layouts in the 256^2 crop space: a jaw contour, brows, nose, eyes,
lips, and pupils, positioned to respect the packaged boundary scheme and
flip table. Every point stays inside [8, 248]^2 so all landmarks remain
on-grid after the /4 heatmap downscale.
"""
from __future__ import annotations

import numpy as np

from .geometry import LandmarkSet


def _arc(x0, y0, x1, y1, bulge, n):
    """n points from (x0, y0) to (x1, y1), bowed perpendicular by bulge."""
    t = np.linspace(0.0, 1.0, n)
    x = x0 + (x1 - x0) * t
    y = y0 + (y1 - y0) * t
    return np.stack([x, y + bulge * np.sin(np.pi * t)], axis=1)


def _template() -> np.ndarray:
    """Neutral face, centered at (128, 120), as a (98, 2) array."""
    cx, cy = 128.0, 120.0
    pts = np.zeros((98, 2))

    s = (np.arange(33) - 16.0) / 16.0  # -1 left temple .. +1 right temple
    pts[0:33, 0] = cx + 88.0 * np.sin(s * np.pi / 2.0)
    pts[0:33, 1] = cy - 20.0 + 125.0 * np.cos(s * np.pi / 2.0)

    pts[33:38] = _arc(cx - 70, cy - 40, cx - 30, cy - 40, -9.0, 5)   # left brow top
    pts[38:42] = _arc(cx - 36, cy - 35, cx - 64, cy - 35, -4.0, 4)   # left brow bottom, right to left
    pts[42:47] = _arc(cx + 30, cy - 40, cx + 70, cy - 40, -9.0, 5)   # right brow top
    pts[47:51] = _arc(cx + 64, cy - 35, cx + 36, cy - 35, -4.0, 4)   # right brow bottom

    pts[51:55] = np.stack([np.full(4, cx), np.linspace(cy - 22, cy + 8, 4)], axis=1)
    pts[55:60] = _arc(cx - 18, cy + 16, cx + 18, cy + 16, 5.0, 5)    # nostril line

    pts[60:65] = _arc(cx - 58, cy - 18, cx - 28, cy - 18, -7.0, 5)   # left eye top
    pts[65:68] = _arc(cx - 35, cy - 13, cx - 51, cy - 13, 3.0, 3)    # left eye bottom
    pts[68:73] = _arc(cx + 28, cy - 18, cx + 58, cy - 18, -7.0, 5)   # right eye top
    pts[73:76] = _arc(cx + 51, cy - 13, cx + 35, cy - 13, 3.0, 3)    # right eye bottom

    pts[76:83] = _arc(cx - 32, cy + 55, cx + 32, cy + 55, -8.0, 7)   # outer lip top
    pts[83:88] = _arc(cx + 26, cy + 62, cx - 26, cy + 62, 9.0, 5)    # outer lip bottom
    pts[88:93] = _arc(cx - 24, cy + 56, cx + 24, cy + 56, -3.0, 5)   # inner lip top
    pts[93:96] = _arc(cx + 18, cy + 58, cx - 18, cy + 58, 3.0, 3)    # inner lip bottom

    pts[96] = (cx - 43.0, cy - 16.0)
    pts[97] = (cx + 43.0, cy - 16.0)
    return pts


def synthetic_face(rng: np.random.Generator, jitter: float = 1.5) -> LandmarkSet:
    """One randomized face: template, similarity perturbation, point jitter,
    random attribute flags. Coordinates stay inside [8, 248]^2."""
    pts = _template()
    center = np.array([128.0, 120.0])
    scale = 1.0 + rng.uniform(-0.08, 0.08)
    shift = rng.uniform(-8.0, 8.0, size=2)
    pts = (pts - center) * scale + center + shift
    pts += rng.uniform(-jitter, jitter, size=pts.shape)
    pts = np.clip(pts, 8.0, 248.0)
    attrs = tuple(int(b) for b in rng.integers(0, 2, size=6))
    lo = pts.min(axis=0) - 4.0
    hi = pts.max(axis=0) + 4.0
    return LandmarkSet(
        points=pts,
        image_id=f"synthetic_{rng.integers(1 << 30)}",
        bbox=(float(lo[0]), float(lo[1]), float(hi[0]), float(hi[1])),
        attributes=attrs,
    )


def synthetic_faces(n: int, seed: int = 0, jitter: float = 1.5) -> list[LandmarkSet]:
    rng = np.random.default_rng(seed)
    return [synthetic_face(rng, jitter=jitter) for _ in range(n)]


def format_annotation_line(sample: LandmarkSet) -> str:
    """Serialize a sample in the annotation record layout."""
    coords = " ".join(f"{v}" for v in sample.points.ravel())
    # full repr so parsing the line back reproduces the sample bit for bit
    bbox = " ".join(f"{float(v)}" for v in sample.bbox)
    attrs = " ".join(str(a) for a in sample.attributes)
    image_id = sample.image_id or "synthetic.png"
    return f"{coords} {bbox} {attrs} {image_id}"


def write_annotation_file(path, samples) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for s in samples:
            fh.write(format_annotation_line(s) + "\n")
