"""Landmark data model, annotation parsing, and coordinate transforms.

Coordinates are (x, y) pixels, x growing right and y growing down. All
operations are pure: they return new objects and never mutate inputs.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from importlib import resources

import numpy as np

N_ATTRIBUTES = 6
ATTRIBUTE_NAMES = ("pose", "expression", "illumination", "makeup", "occlusion", "blur")


class MalformedRecordError(ValueError):
    """Annotation record with a wrong field count or an unparsable field."""


@dataclass(frozen=True, eq=False)
class LandmarkSet:
    """One face sample: ordered 2-D landmarks plus bbox and attribute flags.

    points: (K, 2) float64 array of (x, y) pixel coordinates.
    bbox: (x_min, y_min, x_max, y_max) with x_min < x_max, y_min < y_max.
    attributes: six binary flags (pose, expression, illumination, make-up,
        occlusion, blur).
    valid: optional (K,) bool mask; False marks landmarks that left the
        frame during augmentation. None means all valid.
    """

    points: np.ndarray
    image_id: str = ""
    bbox: tuple[float, float, float, float] = (0.0, 0.0, 1.0, 1.0)
    attributes: tuple[int, ...] = (0,) * N_ATTRIBUTES
    valid: np.ndarray | None = None

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 2:
            raise ValueError(f"points must be (K, 2), got {pts.shape}")
        object.__setattr__(self, "points", pts)
        if len(self.attributes) != N_ATTRIBUTES:
            raise ValueError(f"expected {N_ATTRIBUTES} attribute flags, got {len(self.attributes)}")
        if any(a not in (0, 1) for a in self.attributes):
            raise ValueError(f"attribute flags must be 0 or 1, got {self.attributes}")
        x0, y0, x1, y1 = self.bbox
        if not (x0 < x1 and y0 < y1):
            raise ValueError(f"degenerate bbox {self.bbox}")
        if self.valid is not None:
            v = np.asarray(self.valid, dtype=bool)
            if v.shape != (pts.shape[0],):
                raise ValueError("valid mask length must match point count")
            object.__setattr__(self, "valid", v)

    @property
    def n_points(self) -> int:
        return self.points.shape[0]

    def valid_mask(self) -> np.ndarray:
        if self.valid is None:
            return np.ones(self.n_points, dtype=bool)
        return self.valid


@dataclass(frozen=True)
class FlipPairTable:
    """Landmark index permutation under horizontal mirroring."""

    pairs: tuple[tuple[int, int], ...]
    self_paired: tuple[int, ...]
    n_points: int

    def permutation(self) -> np.ndarray:
        perm = np.full(self.n_points, -1, dtype=np.int64)
        for i in self.self_paired:
            perm[i] = i
        for i, j in self.pairs:
            perm[i] = j
            perm[j] = i
        return perm


@dataclass(frozen=True)
class AugmentParams:
    """Symmetric augmentation ranges and the seed driving all draws."""

    rotation_deg: float = 30.0
    scale_frac: float = 0.15
    crop_px: int = 25
    flip_prob: float = 0.5
    rng_seed: int = 0

    def __post_init__(self):
        if self.rotation_deg < 0 or self.scale_frac < 0 or self.crop_px < 0:
            raise ValueError("augmentation ranges must be non-negative")
        if not 0.0 <= self.flip_prob <= 1.0:
            raise ValueError(f"flip_prob must lie in [0, 1], got {self.flip_prob}")


def parse_wflw_line(line: str, n_points: int = 98) -> LandmarkSet:
    """Parse one annotation record.

    Layout: ``x1 y1 ... xK yK xmin ymin xmax ymax a1 ... a6 image_path``,
    whitespace separated, so a record has 2K + 4 + 6 + 1 fields.
    """
    fields = line.split()
    expected = 2 * n_points + 4 + N_ATTRIBUTES + 1
    if len(fields) != expected:
        raise MalformedRecordError(
            f"expected {expected} fields for {n_points} landmarks, found {len(fields)}"
        )

    def _num(idx):
        try:
            return float(fields[idx])
        except ValueError:
            raise MalformedRecordError(
                f"field {idx}: could not parse {fields[idx]!r} as a number"
            ) from None

    coords = np.array([_num(i) for i in range(2 * n_points)], dtype=np.float64)
    bbox = tuple(_num(2 * n_points + i) for i in range(4))
    attr_lo = 2 * n_points + 4
    attrs = []
    for i in range(N_ATTRIBUTES):
        raw = fields[attr_lo + i]
        if raw not in ("0", "1"):
            raise MalformedRecordError(f"field {attr_lo + i}: attribute flag must be 0 or 1, got {raw!r}")
        attrs.append(int(raw))
    return LandmarkSet(
        points=coords.reshape(n_points, 2),
        image_id=fields[-1],
        bbox=bbox,
        attributes=tuple(attrs),
    )


def parse_annotation_file(path, n_points: int = 98) -> list[LandmarkSet]:
    """Parse every non-empty, non-comment line of an annotation file."""
    samples = []
    with open(path, "r", encoding="utf-8") as fh:
        for raw in fh:
            stripped = raw.strip()
            if not stripped or stripped.startswith("#"):
                continue
            samples.append(parse_wflw_line(stripped, n_points=n_points))
    return samples


def apply_affine(transform: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Apply a 3x3 homogeneous affine to an (K, 2) point array."""
    pts = np.asarray(points, dtype=np.float64)
    ones = np.ones((pts.shape[0], 1))
    out = np.hstack([pts, ones]) @ np.asarray(transform, dtype=np.float64).T
    return out[:, :2]


def invert_affine(transform: np.ndarray) -> np.ndarray:
    return np.linalg.inv(np.asarray(transform, dtype=np.float64))


def crop_resize(
    sample: LandmarkSet,
    image_size: tuple[float, float] | None = None,
    out_size: int = 256,
    margin: float = 0.0,
) -> tuple[np.ndarray, LandmarkSet]:
    """Map the sample's bbox onto [0, out_size)^2 and transform its landmarks.

    The bbox may first be padded by ``margin`` (a fraction of its width and
    height per side); when ``image_size`` is given the padded box is clipped
    to the image. Returns the 3x3 affine and the transformed sample. The
    mapping is exact on the bbox corners, anisotropic if the box is not
    square.
    """
    if out_size <= 0:
        raise ValueError(f"out_size must be positive, got {out_size}")
    x0, y0, x1, y1 = map(float, sample.bbox)
    if margin != 0.0:
        mx = margin * (x1 - x0)
        my = margin * (y1 - y0)
        x0, y0, x1, y1 = x0 - mx, y0 - my, x1 + mx, y1 + my
        if image_size is not None:
            w, h = image_size
            x0, y0 = max(x0, 0.0), max(y0, 0.0)
            x1, y1 = min(x1, float(w)), min(y1, float(h))
    if not (x0 < x1 and y0 < y1):
        raise ValueError(f"degenerate crop box ({x0}, {y0}, {x1}, {y1})")
    sx = out_size / (x1 - x0)
    sy = out_size / (y1 - y0)
    transform = np.array(
        [[sx, 0.0, -sx * x0], [0.0, sy, -sy * y0], [0.0, 0.0, 1.0]], dtype=np.float64
    )
    out = LandmarkSet(
        points=apply_affine(transform, sample.points),
        image_id=sample.image_id,
        bbox=(0.0, 0.0, float(out_size), float(out_size)),
        attributes=sample.attributes,
        valid=sample.valid,
    )
    return transform, out


def _rotation_scale_about(angle_deg: float, scale: float, cx: float, cy: float) -> np.ndarray:
    # identity ranges must compose to the exact identity matrix
    if angle_deg == 0.0 and scale == 1.0:
        return np.eye(3)
    rad = np.deg2rad(angle_deg)
    c, s = scale * np.cos(rad), scale * np.sin(rad)
    # T(center) . S . R . T(-center)
    return np.array(
        [[c, -s, cx - c * cx + s * cy], [s, c, cy - s * cx - c * cy], [0.0, 0.0, 1.0]]
    )


def augment(
    sample: LandmarkSet,
    params: AugmentParams,
    flip_table: FlipPairTable | None = None,
    image_size: int = 256,
) -> LandmarkSet:
    """Random rotation, scaling, crop translation, and horizontal flip.

    All randomness comes from ``params.rng_seed``; the draw order (angle,
    scale, crop dx, crop dy, flip) is fixed, so identical seeds give
    bit-identical output. Rotation and scaling act about the image center,
    the crop is an integer-pixel translation, and the mirror maps x to
    (image_size - 1) - x with landmark indices permuted through
    ``flip_table``. Landmarks pushed out of the frame are kept and marked
    invalid in the returned mask rather than clamped.

    A double mirror restores coordinates exactly when they sit on a binary
    grid at least as coarse as 2^-45 (quarter-pixel grids and uniform RNG
    draws qualify); arbitrary decimal inputs can differ by one ulp.
    """
    rng = np.random.default_rng(params.rng_seed)
    angle = float(rng.uniform(-params.rotation_deg, params.rotation_deg))
    scale = 1.0 + float(rng.uniform(-params.scale_frac, params.scale_frac))
    dx = int(rng.integers(-params.crop_px, params.crop_px + 1))
    dy = int(rng.integers(-params.crop_px, params.crop_px + 1))
    do_flip = bool(rng.uniform() < params.flip_prob)

    center = (image_size - 1) / 2.0
    transform = _rotation_scale_about(angle, scale, center, center)
    if dx or dy:
        shift = np.array([[1.0, 0.0, float(dx)], [0.0, 1.0, float(dy)], [0.0, 0.0, 1.0]])
        transform = shift @ transform

    pts = apply_affine(transform, sample.points)
    if do_flip:
        if flip_table is None:
            raise ValueError("flip drawn but no flip table supplied")
        if flip_table.n_points != sample.n_points:
            raise ValueError(
                f"flip table covers {flip_table.n_points} points, sample has {sample.n_points}"
            )
        pts = pts.copy()
        pts[:, 0] = (image_size - 1) - pts[:, 0]
        pts = pts[flip_table.permutation()]

    in_frame = (
        (pts[:, 0] >= 0.0)
        & (pts[:, 0] < image_size)
        & (pts[:, 1] >= 0.0)
        & (pts[:, 1] < image_size)
    )
    prior = sample.valid_mask()
    if do_flip:
        prior = prior[flip_table.permutation()]
    return replace(sample, points=pts, valid=prior & in_frame)


def attribute_fractions(samples: list[LandmarkSet]) -> np.ndarray:
    """Per-class fraction of flagged samples, length 6."""
    if not samples:
        raise ValueError("attribute_fractions needs at least one sample")
    flags = np.array([s.attributes for s in samples], dtype=np.float64)
    return flags.mean(axis=0)


def load_flip_pairs(path, n_points: int) -> FlipPairTable:
    """Read an `i j` pair file; `i i` lines mark self-paired midline points."""
    pairs, selfp, seen = [], [], set()
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            stripped = raw.strip()
            if not stripped or stripped.startswith("#"):
                continue
            parts = stripped.split()
            if len(parts) != 2:
                raise ValueError(f"{path}:{lineno}: expected two indices, got {stripped!r}")
            i, j = int(parts[0]), int(parts[1])
            if not (0 <= i < n_points and 0 <= j < n_points):
                raise ValueError(f"{path}:{lineno}: index out of range for {n_points} points")
            lo, hi = min(i, j), max(i, j)
            if lo in seen or (hi != lo and hi in seen):
                raise ValueError(f"{path}:{lineno}: index listed twice")
            seen.update({lo, hi})
            if i == j:
                selfp.append(i)
            else:
                pairs.append((lo, hi))
    missing = set(range(n_points)) - seen
    if missing:
        raise ValueError(f"flip table misses indices {sorted(missing)}")
    return FlipPairTable(pairs=tuple(pairs), self_paired=tuple(selfp), n_points=n_points)


def default_flip_pairs(n_points: int = 98) -> FlipPairTable:
    ref = resources.files("heatmark").joinpath("data", "wflw98_flip_pairs.txt")
    with resources.as_file(ref) as path:
        return load_flip_pairs(path, n_points)
