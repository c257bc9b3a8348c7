"""Anti-aliased downsampling, coordinate channels, and a shift-equivariance probe.

Feature maps are (C, H, W) arrays. Downsampling low-pass filters with a
binomial kernel before taking every second sample, which keeps the result
stable under small input shifts; plain subsampling aliases.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_TAPS = {2: (1.0, 1.0), 3: (1.0, 2.0, 1.0), 5: (1.0, 4.0, 6.0, 4.0, 1.0)}


@dataclass(frozen=True, eq=False)
class BlurKernel:
    """Separable normalized low-pass kernel of size n in {2, 3, 5}."""

    size: int
    weights: np.ndarray  # (n, n), sums to 1

    @classmethod
    def of_size(cls, n: int) -> "BlurKernel":
        if n not in _TAPS:
            raise ValueError(f"kernel size must be one of {sorted(_TAPS)}, got {n}")
        taps = np.array(_TAPS[n])
        taps = taps / taps.sum()
        return cls(size=n, weights=np.outer(taps, taps))


def blur_kernel(n: int) -> BlurKernel:
    return BlurKernel.of_size(n)


def _pad_amounts(n):
    # odd kernels center on the anchor; the even kernel hangs off its trailing edge
    if n % 2:
        return n // 2, n // 2
    return 0, n - 1


def blur_downsample(f: np.ndarray, k: BlurKernel, stride: int = 2) -> np.ndarray:
    """Blur with k (reflect padding) and keep every ``stride``-th pixel.

    Output is (C, ceil(H/2), ceil(W/2)) for the fixed stride 2; output
    pixel (i, j) is the kernel-weighted neighborhood of input (2i, 2j).
    Constant inputs pass through unchanged (weights sum to 1).
    """
    if stride != 2:
        raise ValueError(f"stride is fixed at 2, got {stride}")
    arr = np.asarray(f, dtype=np.float64)
    if arr.ndim != 3:
        raise ValueError(f"expected (C, H, W), got {arr.shape}")
    n = k.size
    _, h, w = arr.shape
    if h < n or w < n:
        raise ValueError(f"input {h}x{w} smaller than kernel {n}")
    lo, hi = _pad_amounts(n)
    padded = np.pad(arr, ((0, 0), (lo, hi), (lo, hi)), mode="reflect")
    out_h, out_w = (h + 1) // 2, (w + 1) // 2
    out = np.zeros((arr.shape[0], out_h, out_w))
    for dy in range(n):
        for dx in range(n):
            win = padded[:, dy : dy + h : 2, dx : dx + w : 2]
            out += k.weights[dy, dx] * win
    return out


def max_blur_pool(f: np.ndarray, k: BlurKernel) -> np.ndarray:
    """Dense 2x2 max (stride 1, far edge replicated) followed by
    blur_downsample, so the nonlinearity is evaluated before subsampling."""
    arr = np.asarray(f, dtype=np.float64)
    if arr.ndim != 3:
        raise ValueError(f"expected (C, H, W), got {arr.shape}")
    padded = np.pad(arr, ((0, 0), (0, 1), (0, 1)), mode="edge")
    dense = np.maximum(
        np.maximum(padded[:, :-1, :-1], padded[:, :-1, 1:]),
        np.maximum(padded[:, 1:, :-1], padded[:, 1:, 1:]),
    )
    return blur_downsample(dense, k)


def add_coord_channels(f: np.ndarray) -> np.ndarray:
    """Append x and y coordinate channels spanning [-1, 1].

    Index 0 maps to -1 and the last index to +1; an axis of length 1 uses
    the midpoint 0. Original channels are copied bit-identically.
    """
    arr = np.asarray(f, dtype=np.float64)
    if arr.ndim != 3:
        raise ValueError(f"expected (C, H, W), got {arr.shape}")
    _, h, w = arr.shape
    xs = np.linspace(-1.0, 1.0, w) if w > 1 else np.zeros(1)
    ys = np.linspace(-1.0, 1.0, h) if h > 1 else np.zeros(1)
    x_chan = np.tile(xs[None, :], (h, 1))
    y_chan = np.tile(ys[:, None], (1, w))
    return np.concatenate([arr, x_chan[None], y_chan[None]], axis=0)


def _cosine(a: np.ndarray, b: np.ndarray) -> float:
    # two all-zero maps are trivially consistent, one-sided zero is not
    av, bv = a.ravel(), b.ravel()
    na, nb = np.linalg.norm(av), np.linalg.norm(bv)
    if na < 1e-12 and nb < 1e-12:
        return 1.0
    if na < 1e-12 or nb < 1e-12:
        return 0.0
    return float(av @ bv / (na * nb))


def shift_consistency(pipeline, f: np.ndarray, max_shift: int = 1) -> float:
    """Average agreement between shifted-then-processed and
    processed-then-compensated outputs.

    Every circular input shift (dy, dx) with |dy|, |dx| <= max_shift is
    applied; the reference output is rolled by round(shift / scale), where
    scale is the pipeline's spatial reduction factor. The score is the mean
    cosine similarity clipped to [0, 1]; 1 means perfectly equivariant.
    """
    arr = np.asarray(f, dtype=np.float64)
    if arr.ndim != 3:
        raise ValueError(f"expected (C, H, W), got {arr.shape}")
    if max_shift < 0:
        raise ValueError(f"max_shift must be non-negative, got {max_shift}")
    base = np.asarray(pipeline(arr), dtype=np.float64)
    scale_y = arr.shape[1] / base.shape[1]
    scale_x = arr.shape[2] / base.shape[2]
    scores = []
    for dy in range(-max_shift, max_shift + 1):
        for dx in range(-max_shift, max_shift + 1):
            shifted = np.roll(arr, (dy, dx), axis=(1, 2))
            out = np.asarray(pipeline(shifted), dtype=np.float64)
            comp = np.roll(
                base,
                (int(np.round(dy / scale_y)), int(np.round(dx / scale_x))),
                axis=(1, 2),
            )
            scores.append(_cosine(out, comp))
    return float(np.clip(np.mean(scores), 0.0, 1.0))


def subsample(f: np.ndarray, stride: int = 2) -> np.ndarray:
    """Plain strided subsampling, the aliasing baseline."""
    arr = np.asarray(f, dtype=np.float64)
    if arr.ndim != 3:
        raise ValueError(f"expected (C, H, W), got {arr.shape}")
    return arr[:, ::stride, ::stride]
