"""Adaptive Wing loss family with analytic gradients and focal batch weights.

The loss treats each heatmap pixel as a regression target whose curvature
adapts to the ground-truth value y: small errors on foreground pixels
(y near 1) are penalized more steeply than on background. Batches carry
six binary attribute flags per sample; under-represented attribute classes
are re-weighted so each represented class contributes the same total
weight to the batch.
"""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np


@dataclass(frozen=True)
class LossParams:
    """Hyper-parameters (omega, epsilon, alpha, theta) of the adaptive wing
    curve plus the boundary-term balance beta."""

    omega: float = 14.0
    epsilon: float = 1.0
    alpha: float = 2.1
    theta: float = 0.5
    beta: float = 0.5

    def __post_init__(self):
        if self.omega <= 0 or self.epsilon <= 0 or self.theta <= 0:
            raise ValueError("omega, epsilon and theta must be positive")
        if self.alpha <= 1.0:
            raise ValueError(f"alpha must exceed 1 so the exponent stays positive, got {self.alpha}")


def load_loss_params(path) -> LossParams:
    """Read key=value lines (omega, epsilon, alpha, theta, beta); missing
    keys keep their defaults, unknown keys are an error."""
    known = {"omega", "epsilon", "alpha", "theta", "beta"}
    values = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            stripped = raw.strip()
            if not stripped or stripped.startswith("#"):
                continue
            if "=" not in stripped:
                raise ValueError(f"{path}:{lineno}: expected key=value, got {stripped!r}")
            key, _, val = stripped.partition("=")
            key = key.strip()
            if key not in known:
                raise ValueError(f"{path}:{lineno}: unknown key {key!r}")
            values[key] = float(val.strip())
    return LossParams(**values)


@dataclass(frozen=True, eq=False)
class BatchAttributes:
    """(N, 6) binary attribute matrix for one batch."""

    s: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.s)
        if arr.ndim != 2 or arr.shape[1] != 6:
            raise ValueError(f"attributes must be (N, 6), got {arr.shape}")
        if arr.shape[0] < 1:
            raise ValueError("batch must hold at least one sample")
        if not np.isin(arr, (0, 1)).all():
            raise ValueError("attribute entries must be 0 or 1")
        object.__setattr__(self, "s", arr.astype(np.int64))

    @property
    def n_samples(self) -> int:
        return self.s.shape[0]

    @classmethod
    def from_samples(cls, samples) -> "BatchAttributes":
        return cls(np.array([s.attributes for s in samples], dtype=np.int64))


def awing_branches(y, y_hat, p: LossParams = LossParams()):
    """Evaluate both pieces of the loss everywhere (for verification).

    Returns (core, linear): the log branch omega*ln(1 + (|y-yhat|/eps)^(alpha-y))
    and the linear branch A*|y-yhat| - Omega, where A and Omega are chosen
    so value and slope agree at |y-yhat| = theta.
    """
    y = np.asarray(y, dtype=np.float64)
    d = np.abs(y - np.asarray(y_hat, dtype=np.float64))
    e = p.alpha - y
    tpe = (p.theta / p.epsilon) ** e
    a = p.omega * e * (p.theta / p.epsilon) ** (e - 1.0) / (1.0 + tpe) / p.epsilon
    big_omega = p.theta * a - p.omega * np.log1p(tpe)
    core = p.omega * np.log1p((d / p.epsilon) ** e)
    linear = a * d - big_omega
    return core, linear


def awing(y, y_hat, p: LossParams = LossParams()):
    """Adaptive wing loss per pixel: log branch for |y - yhat| < theta,
    linear continuation beyond. Non-negative, zero only at y = yhat.
    Broadcasts like numpy; scalars in, scalar out."""
    y_arr = np.asarray(y, dtype=np.float64)
    d = np.abs(y_arr - np.asarray(y_hat, dtype=np.float64))
    core, linear = awing_branches(y, y_hat, p)
    out = np.where(d < p.theta, core, linear)
    if out.ndim == 0:
        return float(out)
    return out


def awing_grad(y, y_hat, p: LossParams = LossParams()):
    """d(awing)/d(y_hat), analytic.

    The log branch differentiates to
    -sign(y - yhat) * omega*(alpha-y)*(d/eps)^(alpha-y-1) / (eps*(1+(d/eps)^(alpha-y)))
    and the linear branch to -sign(y - yhat) * A. At d = 0 the gradient is
    defined as 0 (sign(0) = 0), which is the subgradient choice at the
    loss minimum."""
    y_arr = np.asarray(y, dtype=np.float64)
    diff = y_arr - np.asarray(y_hat, dtype=np.float64)
    d = np.abs(diff)
    e = p.alpha - y_arr
    tpe = (p.theta / p.epsilon) ** e
    a = p.omega * e * (p.theta / p.epsilon) ** (e - 1.0) / (1.0 + tpe) / p.epsilon
    d_safe = np.where(d > 0.0, d, 1.0)  # keep 0**negative out of the power
    core_slope = (
        p.omega * e * (d_safe / p.epsilon) ** (e - 1.0)
        / (p.epsilon * (1.0 + (d_safe / p.epsilon) ** e))
    )
    slope = np.where(d < p.theta, np.where(d > 0.0, core_slope, 0.0), a)
    out = -np.sign(diff) * slope
    if out.ndim == 0:
        return float(out)
    return out


def focal_factor(batch: BatchAttributes, c: int) -> Fraction:
    """Re-weighting factor for attribute class c: N over the class count,
    or 1 when the class is empty.

    Returned as an exact Fraction so the balance identity (the factor
    summed over the class members equals N) holds exactly for every batch;
    call float() on it for numeric work.
    """
    if not 0 <= c < batch.s.shape[1]:
        raise ValueError(f"class index {c} out of range")
    count = int(batch.s[:, c].sum())
    if count == 0:
        return Fraction(1)
    return Fraction(batch.n_samples, count)


def sample_weight(batch: BatchAttributes, n: int) -> float:
    """Weight of sample n: the sum of focal factors of its set attribute
    classes, or 1.0 when it has none (so plain samples are not zeroed)."""
    if not 0 <= n < batch.n_samples:
        raise ValueError(f"sample index {n} out of range")
    flags = batch.s[n]
    if not flags.any():
        return 1.0
    total = sum(focal_factor(batch, c) for c in range(batch.s.shape[1]) if flags[c])
    return float(total)


def batch_weights(batch: BatchAttributes) -> np.ndarray:
    return np.array([sample_weight(batch, n) for n in range(batch.n_samples)])


def _check_stack(gt, pred, batch):
    gt = np.asarray(gt, dtype=np.float64)
    pred = np.asarray(pred, dtype=np.float64)
    if gt.shape != pred.shape:
        raise ValueError(f"gt shape {gt.shape} != pred shape {pred.shape}")
    if gt.ndim != 4:
        raise ValueError(f"expected (N, K, H, W) stacks, got {gt.shape}")
    if gt.shape[0] != batch.n_samples:
        raise ValueError(f"stacks hold {gt.shape[0]} samples, batch holds {batch.n_samples}")
    return gt, pred


def _stack_loss(gt, pred, batch, p):
    # fixed reduction order: pixels (mean) -> maps (sum) -> samples -> /N
    gt, pred = _check_stack(gt, pred, batch)
    per_map = awing(gt, pred, p).mean(axis=(2, 3))
    per_sample = per_map.sum(axis=1)
    w = batch_weights(batch)
    return float((w * per_sample).sum() / batch.n_samples)


def landmark_loss(gt, pred, batch: BatchAttributes, p: LossParams = LossParams()) -> float:
    """Focal-weighted adaptive wing loss over (N, K, H, W) landmark stacks:
    mean over pixels, summed over the K maps, weighted mean over samples."""
    return _stack_loss(gt, pred, batch, p)


def boundary_loss(gt, pred, batch: BatchAttributes, p: LossParams = LossParams()) -> float:
    """Same reduction as landmark_loss over (N, M, H, W) boundary stacks."""
    return _stack_loss(gt, pred, batch, p)


def total_loss(gt_lm, pred_lm, gt_bd, pred_bd, batch: BatchAttributes,
               p: LossParams = LossParams()) -> float:
    """landmark_loss + beta * boundary_loss."""
    return landmark_loss(gt_lm, pred_lm, batch, p) + p.beta * boundary_loss(
        gt_bd, pred_bd, batch, p
    )


def _stack_grad(gt, pred, batch, p, scale=1.0):
    gt, pred = _check_stack(gt, pred, batch)
    n, _, h, w_px = gt.shape
    w = batch_weights(batch)
    g = awing_grad(gt, pred, p)
    return g * (scale * w / (n * h * w_px))[:, None, None, None]


def landmark_loss_grad(gt, pred, batch: BatchAttributes, p: LossParams = LossParams()):
    """d(landmark_loss)/d(pred), same shape as pred."""
    return _stack_grad(gt, pred, batch, p)


def boundary_loss_grad(gt, pred, batch: BatchAttributes, p: LossParams = LossParams()):
    """d(boundary_loss)/d(pred), same shape as pred."""
    return _stack_grad(gt, pred, batch, p)


def total_loss_grad(gt_lm, pred_lm, gt_bd, pred_bd, batch: BatchAttributes,
                    p: LossParams = LossParams()):
    """Gradients of total_loss wrt both prediction stacks: (d_lm, d_bd).
    The boundary part carries the beta factor."""
    return (
        _stack_grad(gt_lm, pred_lm, batch, p),
        _stack_grad(gt_bd, pred_bd, batch, p, scale=p.beta),
    )
