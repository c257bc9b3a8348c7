"""Gaussian heatmap encoding/decoding and boundary-curve rasterization.

Landmarks live in an input pixel space (256^2 by default) and maps live on
a smaller grid (64^2 by default); coordinates are divided by the ratio of
the two when encoding. Ground-truth maps are peak-normalized to 1 and
truncated at 3 sigma. Stacks are plain numpy arrays shaped (n_maps, H, W).
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from importlib import resources

import numpy as np

from .geometry import LandmarkSet


class TensorFormatError(ValueError):
    """Raised for bad magic bytes, bad headers, or payload size mismatch."""


@dataclass(frozen=True)
class GaussianParams:
    """Gaussian footprint: std dev in heatmap pixels, radial cut at truncate*sigma."""

    sigma: float = 1.5
    truncate: float = 3.0

    def __post_init__(self):
        if self.sigma <= 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")
        if self.truncate <= 0:
            raise ValueError(f"truncate must be positive, got {self.truncate}")


@dataclass(frozen=True)
class Boundary:
    indices: tuple[int, ...]
    closed: bool = False

    def __post_init__(self):
        if len(self.indices) < 2:
            raise ValueError(f"boundary needs at least 2 landmarks, got {self.indices}")


@dataclass(frozen=True)
class BoundaryScheme:
    """Ordered boundaries, each an ordered landmark index list plus closed flag."""

    boundaries: tuple[Boundary, ...]

    def __post_init__(self):
        if not self.boundaries:
            raise ValueError("a boundary scheme needs at least one boundary")

    @property
    def n_boundaries(self) -> int:
        return len(self.boundaries)

    def max_index(self) -> int:
        return max(max(b.indices) for b in self.boundaries)


def _as_points(sample):
    """Accept a LandmarkSet or a raw (K, 2) array; return (points, valid)."""
    if isinstance(sample, LandmarkSet):
        pts, valid = sample.points, sample.valid_mask()
    else:
        pts = np.asarray(sample, dtype=np.float64)
        valid = np.ones(pts.shape[0], dtype=bool)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise ValueError(f"points must be (K, 2), got {pts.shape}")
    return pts, valid


def encode_landmarks(
    sample,
    res: tuple[int, int] = (64, 64),
    g: GaussianParams = GaussianParams(),
    input_size: float = 256.0,
) -> np.ndarray:
    """Encode each landmark as a truncated, peak-normalized Gaussian map.

    Args:
        sample: LandmarkSet or (K, 2) array in input_size^2 pixel space.
        res: heatmap (H, W).
        g: Gaussian footprint.
        input_size: side of the square input space; coordinates are scaled
            by res/input_size (the 256 -> 64 default divides by 4).

    Returns:
        (K, H, W) float64 stack. A landmark marked invalid, or falling
        outside the heatmap grid after scaling, yields an all-zero map.
    """
    H, W = res
    if H <= 0 or W <= 0:
        raise ValueError(f"resolution must be positive, got {res}")
    pts, valid = _as_points(sample)
    sx = W / float(input_size)
    sy = H / float(input_size)
    cols = np.arange(W, dtype=np.float64)
    rows = np.arange(H, dtype=np.float64)
    r2_cut = (g.truncate * g.sigma) ** 2
    inv = 1.0 / (2.0 * g.sigma * g.sigma)
    out = np.zeros((pts.shape[0], H, W), dtype=np.float64)
    for k, (x, y) in enumerate(pts):
        hx, hy = x * sx, y * sy
        if not valid[k] or not (0.0 <= hx <= W - 1 and 0.0 <= hy <= H - 1):
            continue
        d2 = (cols - hx)[None, :] ** 2 + (rows - hy)[:, None] ** 2
        m = np.where(d2 <= r2_cut, np.exp(-d2 * inv), 0.0)
        peak = m.max()
        if peak > 0.0:
            m /= peak
        out[k] = m
    return out


def decode_heatmap(h: np.ndarray) -> tuple[float, float]:
    """Sub-pixel peak location of one map, quarter-pixel refined.

    The argmax pixel (ties resolved to the lowest (row, col)) is shifted
    0.25 px per axis toward the stronger of its two axis neighbors; equal
    neighbors leave that axis unshifted, so a symmetric peak decodes to its
    exact center. Out-of-grid neighbors count as 0. Returns (x, y) in
    heatmap pixel coordinates; multiply by the encode downscale factor to
    return to input space.
    """
    grid = np.asarray(h, dtype=np.float64)
    if grid.ndim != 2 or grid.shape[0] < 3 or grid.shape[1] < 3:
        raise ValueError(f"decode needs a 2-D map at least 3x3, got {grid.shape}")
    H, W = grid.shape
    flat = int(np.argmax(grid))  # row-major argmax = lexicographic (row, col) tie-break
    r, c = divmod(flat, W)

    def _at(rr, cc):
        return grid[rr, cc] if 0 <= rr < H and 0 <= cc < W else 0.0

    x = c + 0.25 * float(np.sign(_at(r, c + 1) - _at(r, c - 1)))
    y = r + 0.25 * float(np.sign(_at(r + 1, c) - _at(r - 1, c)))
    return x, y


def decode_stack(stack: np.ndarray, scale: float = 1.0) -> np.ndarray:
    """Decode every map of a (K, H, W) stack; returns (K, 2) times scale."""
    arr = np.asarray(stack, dtype=np.float64)
    if arr.ndim != 3:
        raise ValueError(f"expected (K, H, W), got {arr.shape}")
    return np.array([decode_heatmap(m) for m in arr], dtype=np.float64) * scale


def _segment_sq_dist(px, py, p0, p1):
    """Squared distance from grid points to one segment, vectorized."""
    vx, vy = p1[0] - p0[0], p1[1] - p0[1]
    vv = vx * vx + vy * vy
    wx, wy = px - p0[0], py - p0[1]
    if vv == 0.0:
        return wx * wx + wy * wy
    t = np.clip((wx * vx + wy * vy) / vv, 0.0, 1.0)
    dx = wx - t * vx
    dy = wy - t * vy
    return dx * dx + dy * dy


def rasterize_boundaries(
    sample,
    scheme: BoundaryScheme,
    res: tuple[int, int] = (64, 64),
    g: GaussianParams = GaussianParams(),
    input_size: float = 256.0,
) -> np.ndarray:
    """Draw each boundary curve as a blurred polyline heatmap.

    Consecutive listed landmarks are joined by straight segments (closed
    boundaries also join last to first). Each pixel takes
    exp(-d^2 / (2 sigma^2)) of its distance d to the nearest segment,
    values beyond the truncation radius are zero, and the map is
    renormalized so its peak is exactly 1. A boundary containing any
    invalid landmark yields an all-zero map.

    Returns an (M, H, W) float64 stack.
    """
    H, W = res
    if H <= 0 or W <= 0:
        raise ValueError(f"resolution must be positive, got {res}")
    pts, valid = _as_points(sample)
    if scheme.max_index() >= pts.shape[0]:
        raise ValueError(
            f"scheme references landmark {scheme.max_index()}, sample has {pts.shape[0]}"
        )
    sxy = np.array([W / float(input_size), H / float(input_size)])
    px = np.tile(np.arange(W, dtype=np.float64)[None, :], (H, 1))
    py = np.tile(np.arange(H, dtype=np.float64)[:, None], (1, W))
    r2_cut = (g.truncate * g.sigma) ** 2
    inv = 1.0 / (2.0 * g.sigma * g.sigma)

    out = np.zeros((scheme.n_boundaries, H, W), dtype=np.float64)
    for m, boundary in enumerate(scheme.boundaries):
        idx = list(boundary.indices)
        if not valid[idx].all():
            continue
        poly = pts[idx] * sxy[None, :]
        segs = list(zip(poly[:-1], poly[1:]))
        if boundary.closed:
            segs.append((poly[-1], poly[0]))
        d2 = np.full((H, W), np.inf)
        for p0, p1 in segs:
            d2 = np.minimum(d2, _segment_sq_dist(px, py, p0, p1))
        grid = np.where(d2 <= r2_cut, np.exp(-d2 * inv), 0.0)
        peak = grid.max()
        if peak > 0.0:
            grid /= peak
        out[m] = grid
    return out


def load_boundary_scheme(path, n_points: int, expected_count: int | None = None) -> BoundaryScheme:
    """Parse a scheme file: one `closed|open i1 i2 ... ik` line per boundary."""
    boundaries = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            stripped = raw.strip()
            if not stripped or stripped.startswith("#"):
                continue
            parts = stripped.split()
            if parts[0] not in ("closed", "open"):
                raise ValueError(f"{path}:{lineno}: expected closed|open, got {parts[0]!r}")
            if len(parts) < 3:
                raise ValueError(f"{path}:{lineno}: boundary needs at least 2 indices")
            idx = tuple(int(p) for p in parts[1:])
            bad = [i for i in idx if not 0 <= i < n_points]
            if bad:
                raise ValueError(f"{path}:{lineno}: indices {bad} out of range for {n_points} points")
            boundaries.append(Boundary(indices=idx, closed=parts[0] == "closed"))
    if not boundaries:
        raise ValueError(f"{path}: no boundaries found")
    if expected_count is not None and len(boundaries) != expected_count:
        raise ValueError(f"{path}: expected {expected_count} boundaries, found {len(boundaries)}")
    return BoundaryScheme(boundaries=tuple(boundaries))


def default_boundary_scheme(n_points: int = 98) -> BoundaryScheme:
    ref = resources.files("heatmark").joinpath("data", "wflw98_boundaries.txt")
    with resources.as_file(ref) as path:
        return load_boundary_scheme(path, n_points, expected_count=15)


_MAGIC = b"HMK1"
_HEADER = struct.Struct("<4sIII")


def write_tensor(stack: np.ndarray, path) -> None:
    """Write a (n, H, W) stack: `HMK1`, u32 (n, H, W) little-endian, then
    n*H*W little-endian float32 values, row-major within each map."""
    arr = np.ascontiguousarray(np.asarray(stack), dtype="<f4")
    if arr.ndim != 3:
        raise ValueError(f"stack must be (n, H, W), got {arr.shape}")
    n, h, w = arr.shape
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(_MAGIC, n, h, w))
        fh.write(arr.tobytes())


def read_tensor(path) -> np.ndarray:
    """Read a stack written by write_tensor; returns float32 (n, H, W)."""
    with open(path, "rb") as fh:
        header = fh.read(_HEADER.size)
        if len(header) < _HEADER.size:
            raise TensorFormatError(f"{path}: truncated header")
        magic, n, h, w = _HEADER.unpack(header)
        if magic != _MAGIC:
            raise TensorFormatError(f"{path}: bad magic {magic!r}")
        payload = fh.read()
    expected = 4 * n * h * w
    if len(payload) != expected:
        raise TensorFormatError(
            f"{path}: payload holds {len(payload)} bytes, header implies {expected}"
        )
    return np.frombuffer(payload, dtype="<f4").reshape(n, h, w).copy()
