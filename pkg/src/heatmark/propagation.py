"""Forward-only landmark-to-boundary propagation with attention modulation.

The module turns a stack of per-landmark heatmaps into one heatmap per
boundary curve (a small stack of 7x7 convolutions per boundary, each fed
only its own landmarks' maps), fuses the boundary maps with backbone
features through a two-level hourglass, and squashes the result into a
single attention map in (0, 1) that multiplies the features.

Everything is deterministic: no normalization layers, no training state,
fixed reduction orders. Weights are plain float64 arrays addressed by
dotted parameter names.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .codec import BoundaryScheme, read_tensor, write_tensor
from .shiftops import BlurKernel, blur_downsample


class ConfigurationError(ValueError):
    """Weights and scheme disagree about shapes or wiring."""


def conv2d(x: np.ndarray, weight: np.ndarray, bias: np.ndarray | None = None) -> np.ndarray:
    """Same-padded (zeros) stride-1 cross-correlation.

    x: (C_in, H, W); weight: (C_out, C_in, kh, kw) with odd kh, kw;
    bias: (C_out,) or None. Returns (C_out, H, W). The reduction runs
    through one tensordot per call, so summation order is fixed.
    """
    x = np.asarray(x, dtype=np.float64)
    weight = np.asarray(weight, dtype=np.float64)
    if x.ndim != 3 or weight.ndim != 4:
        raise ValueError(f"conv2d expects (C,H,W) and (O,I,kh,kw), got {x.shape}, {weight.shape}")
    cout, cin, kh, kw = weight.shape
    if cin != x.shape[0]:
        raise ValueError(f"weight expects {cin} input channels, input has {x.shape[0]}")
    if kh % 2 == 0 or kw % 2 == 0:
        raise ValueError(f"kernel sides must be odd, got {kh}x{kw}")
    ph, pw = kh // 2, kw // 2
    padded = np.pad(x, ((0, 0), (ph, ph), (pw, pw)))
    windows = np.lib.stride_tricks.sliding_window_view(padded, (kh, kw), axis=(1, 2))
    out = np.tensordot(weight, windows, axes=([1, 2, 3], [0, 3, 4]))
    if bias is not None:
        out = out + np.asarray(bias, dtype=np.float64)[:, None, None]
    return out


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


@dataclass(frozen=True, eq=False)
class MultiViewBlockSpec:
    """Three hierarchically fed 3x3 branches whose widths sum to the input
    width, concatenated and added back to the input."""

    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray
    w3: np.ndarray
    b3: np.ndarray

    def __post_init__(self):
        c = self.w1.shape[1]
        widths = self.w1.shape[0] + self.w2.shape[0] + self.w3.shape[0]
        if widths != c:
            raise ConfigurationError(f"branch widths {widths} must sum to input width {c}")
        if self.w2.shape[1] != self.w1.shape[0] or self.w3.shape[1] != self.w2.shape[0]:
            raise ConfigurationError("branch input widths must chain b1 -> b2 -> b3")


def multiview_block(f: np.ndarray, spec: MultiViewBlockSpec) -> np.ndarray:
    """out = f + concat(b1, b2, b3) with b1 = conv(f), b2 = conv(relu(b1)),
    b3 = conv(relu(b2)). Zero weights reduce to the identity."""
    f = np.asarray(f, dtype=np.float64)
    if f.shape[0] != spec.w1.shape[1]:
        raise ConfigurationError(
            f"block expects {spec.w1.shape[1]} channels, input has {f.shape[0]}"
        )
    b1 = conv2d(f, spec.w1, spec.b1)
    b2 = conv2d(relu(b1), spec.w2, spec.b2)
    b3 = conv2d(relu(b2), spec.w3, spec.b3)
    return f + np.concatenate([b1, b2, b3], axis=0)


@dataclass(frozen=True, eq=False)
class PropagationWeights:
    """Named parameter arrays for the whole module.

    Boundary stack m uses keys ``boundary{m}.conv{i}.weight|bias``; the
    hourglass uses ``stem``, ``down1``, ``down2``, ``up1``, ``up2`` (each
    block with branches b1, b2, b3) and the 1x1 ``proj`` head.
    """

    params: dict[str, np.ndarray]

    def __getitem__(self, name: str) -> np.ndarray:
        try:
            return self.params[name]
        except KeyError:
            raise ConfigurationError(f"missing parameter {name!r}") from None

    def stack_depth(self, m: int) -> int:
        depth = 0
        while f"boundary{m}.conv{depth}.weight" in self.params:
            depth += 1
        if depth == 0:
            raise ConfigurationError(f"no conv stack for boundary {m}")
        return depth

    def block_spec(self, prefix: str) -> MultiViewBlockSpec:
        return MultiViewBlockSpec(
            w1=self[f"{prefix}.b1.weight"], b1=self[f"{prefix}.b1.bias"],
            w2=self[f"{prefix}.b2.weight"], b2=self[f"{prefix}.b2.bias"],
            w3=self[f"{prefix}.b3.weight"], b3=self[f"{prefix}.b3.bias"],
        )


def _branch_widths(width: int) -> tuple[int, int, int]:
    c1, c2 = width // 2, width // 4
    return c1, c2, width - c1 - c2


def _param_specs(scheme: BoundaryScheme, n_features: int, width: int, depth: int):
    """Fixed parameter enumeration; also fixes the RNG draw order at init."""
    if not 1 <= depth <= 5:
        raise ValueError(f"stack depth must lie in 1..5, got {depth}")
    if width < 4:
        raise ValueError(f"hourglass width must be at least 4, got {width}")
    specs = []
    for m, boundary in enumerate(scheme.boundaries):
        n_in = len(boundary.indices)
        for i in range(depth):
            n_out = n_in if i < depth - 1 else 1
            specs.append((f"boundary{m}.conv{i}.weight", (n_out, n_in, 7, 7)))
            specs.append((f"boundary{m}.conv{i}.bias", (n_out,)))
    specs.append(("stem.weight", (width, n_features + scheme.n_boundaries, 3, 3)))
    specs.append(("stem.bias", (width,)))
    c1, c2, c3 = _branch_widths(width)
    for blk in ("down1", "down2", "up1", "up2"):
        for name, (o, i) in (("b1", (c1, width)), ("b2", (c2, c1)), ("b3", (c3, c2))):
            specs.append((f"{blk}.{name}.weight", (o, i, 3, 3)))
            specs.append((f"{blk}.{name}.bias", (o,)))
    specs.append(("proj.weight", (1, width, 1, 1)))
    specs.append(("proj.bias", (1,)))
    return specs


def init_propagation_weights(
    scheme: BoundaryScheme,
    n_features: int = 256,
    width: int = 16,
    depth: int = 3,
    seed: int = 0,
) -> PropagationWeights:
    """Seeded uniform init in [-1/sqrt(fan_in), +1/sqrt(fan_in)] per
    parameter, drawn in the fixed enumeration order."""
    rng = np.random.default_rng(seed)
    params = {}
    fan_in = 1
    for name, shape in _param_specs(scheme, n_features, width, depth):
        if name.endswith(".weight"):
            fan_in = int(np.prod(shape[1:]))
        # each bias follows its weight in the enumeration and shares its fan_in
        bound = 1.0 / np.sqrt(fan_in)
        params[name] = rng.uniform(-bound, bound, size=shape)
    return PropagationWeights(params=params)


def zero_propagation_weights(
    scheme: BoundaryScheme, n_features: int = 256, width: int = 16, depth: int = 3
) -> PropagationWeights:
    params = {
        name: np.zeros(shape) for name, shape in _param_specs(scheme, n_features, width, depth)
    }
    return PropagationWeights(params=params)


def propagate_to_boundaries(
    lm: np.ndarray,
    weights: PropagationWeights,
    scheme: BoundaryScheme,
    rectify: bool = True,
) -> np.ndarray:
    """Per-boundary conv stacks over that boundary's landmark maps.

    lm is (K, H, W); boundary m selects its landmark indices as input
    channels and applies conv7x7 (-> relu, unless rectify=False) repeatedly,
    ending in a single-channel projection. Returns (M, H, W).
    """
    lm = np.asarray(lm, dtype=np.float64)
    if lm.ndim != 3:
        raise ValueError(f"landmark stack must be (K, H, W), got {lm.shape}")
    if scheme.max_index() >= lm.shape[0]:
        raise ConfigurationError(
            f"scheme references landmark {scheme.max_index()}, stack has {lm.shape[0]} maps"
        )
    out = np.empty((scheme.n_boundaries, lm.shape[1], lm.shape[2]))
    for m, boundary in enumerate(scheme.boundaries):
        x = lm[list(boundary.indices)]
        depth = weights.stack_depth(m)
        first = weights[f"boundary{m}.conv0.weight"]
        if first.shape[1] != len(boundary.indices):
            raise ConfigurationError(
                f"boundary {m}: weight stack expects {first.shape[1]} input maps, "
                f"scheme lists {len(boundary.indices)}"
            )
        for i in range(depth):
            x = conv2d(x, weights[f"boundary{m}.conv{i}.weight"], weights[f"boundary{m}.conv{i}.bias"])
            if rectify and i < depth - 1:
                x = relu(x)
        if x.shape[0] != 1:
            raise ConfigurationError(f"boundary {m}: stack must end in one map, got {x.shape[0]}")
        out[m] = x[0]
    return out


def _upsample_to(x: np.ndarray, h: int, w: int) -> np.ndarray:
    # nearest neighbor, cropped for odd targets
    up = np.repeat(np.repeat(x, 2, axis=1), 2, axis=2)
    return up[:, :h, :w]


def _sigmoid(x: np.ndarray) -> np.ndarray:
    return 1.0 / (1.0 + np.exp(-x))


def attention_hourglass(
    features: np.ndarray, boundaries: np.ndarray, weights: PropagationWeights
) -> np.ndarray:
    """Two-level hourglass over concat(features, boundaries) ending in a
    logistic attention map.

    Downsampling is blur_downsample(n=3); upsampling is nearest neighbor
    with additive skips from the pre-downsample tensors. Logits are clipped
    to +/-30 before the sigmoid, a numeric guard that keeps every output
    strictly inside (0, 1) in float64. Returns (1, H, W).
    """
    features = np.asarray(features, dtype=np.float64)
    boundaries = np.asarray(boundaries, dtype=np.float64)
    if features.ndim != 3 or boundaries.ndim != 3:
        raise ValueError("features and boundaries must be (C, H, W)")
    if features.shape[1:] != boundaries.shape[1:]:
        raise ValueError(
            f"spatial sizes differ: features {features.shape[1:]}, boundaries {boundaries.shape[1:]}"
        )
    stem_w = weights["stem.weight"]
    cat = np.concatenate([features, boundaries], axis=0)
    if cat.shape[0] != stem_w.shape[1]:
        raise ConfigurationError(
            f"stem expects {stem_w.shape[1]} channels, got {features.shape[0]} features + "
            f"{boundaries.shape[0]} boundary maps"
        )
    k3 = BlurKernel.of_size(3)
    x0 = relu(conv2d(cat, stem_w, weights["stem.bias"]))
    d1 = multiview_block(blur_downsample(x0, k3), weights.block_spec("down1"))
    d2 = multiview_block(blur_downsample(d1, k3), weights.block_spec("down2"))
    u1 = multiview_block(_upsample_to(d2, d1.shape[1], d1.shape[2]) + d1, weights.block_spec("up1"))
    u0 = multiview_block(_upsample_to(u1, x0.shape[1], x0.shape[2]) + x0, weights.block_spec("up2"))
    logits = conv2d(u0, weights["proj.weight"], weights["proj.bias"])
    return _sigmoid(np.clip(logits, -30.0, 30.0))


def apply_attention(features: np.ndarray, attention: np.ndarray, residual: bool = False) -> np.ndarray:
    """Broadcast the single attention map over all feature channels.

    Pure multiplication by default; ``residual=True`` uses f * (1 + att)
    so attention can only amplify, never zero out."""
    features = np.asarray(features, dtype=np.float64)
    att = np.asarray(attention, dtype=np.float64)
    if att.ndim == 3:
        if att.shape[0] != 1:
            raise ValueError(f"attention must be a single map, got {att.shape}")
        att = att[0]
    if att.shape != features.shape[1:]:
        raise ValueError(f"attention {att.shape} does not match features {features.shape[1:]}")
    if residual:
        return features * (1.0 + att)[None]
    return features * att[None]


def forward_module(
    features: np.ndarray,
    lm_heatmaps: np.ndarray,
    weights: PropagationWeights,
    scheme: BoundaryScheme,
    residual: bool = False,
) -> tuple[np.ndarray, np.ndarray]:
    """Full pass: landmark maps -> boundary maps -> attention -> modulated
    features. Returns (boundary_heatmaps (M, H, W), features (F, H, W));
    spatial resolution is preserved end to end."""
    boundaries = propagate_to_boundaries(lm_heatmaps, weights, scheme)
    att = attention_hourglass(features, boundaries, weights)
    return boundaries, apply_attention(features, att, residual=residual)


def save_weights(weights: PropagationWeights, out_dir) -> None:
    """One tensor file per parameter plus a manifest of
    name<TAB>shape<TAB>filename lines. Values are stored as float32 (the
    container's contract), so a round trip equals the float32 cast."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    lines = []
    for name, arr in weights.params.items():
        fname = name.replace(".", "_") + ".hmk"
        flat3 = _as_3d(arr)
        write_tensor(flat3, out / fname)
        shape_txt = ",".join(str(d) for d in arr.shape)
        lines.append(f"{name}\t{shape_txt}\t{fname}")
    (out / "manifest.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_weights(in_dir) -> PropagationWeights:
    src = Path(in_dir)
    manifest = src / "manifest.txt"
    if not manifest.exists():
        raise ConfigurationError(f"no manifest.txt under {src}")
    params = {}
    for lineno, raw in enumerate(manifest.read_text(encoding="utf-8").splitlines(), 1):
        if not raw.strip():
            continue
        parts = raw.split("\t")
        if len(parts) != 3:
            raise ConfigurationError(f"{manifest}:{lineno}: expected name, shape, filename")
        name, shape_txt, fname = parts
        shape = tuple(int(d) for d in shape_txt.split(","))
        arr = read_tensor(src / fname).astype(np.float64)
        params[name] = arr.reshape(shape)
    return PropagationWeights(params=params)


def _as_3d(arr: np.ndarray) -> np.ndarray:
    """Pack any array into the (n, H, W) container layout."""
    if arr.ndim == 4:
        o, i, kh, kw = arr.shape
        return arr.reshape(o * i, kh, kw)
    if arr.ndim == 3:
        return arr
    if arr.ndim == 2:
        return arr[None]
    if arr.ndim == 1:
        return arr[:, None, None]
    raise ValueError(f"cannot pack {arr.ndim}-d array into the tensor container")
