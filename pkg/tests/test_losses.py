import math
from fractions import Fraction

import numpy as np
import pytest

from heatmark.losses import (
    BatchAttributes,
    LossParams,
    awing,
    awing_branches,
    awing_grad,
    batch_weights,
    boundary_loss,
    boundary_loss_grad,
    focal_factor,
    landmark_loss,
    landmark_loss_grad,
    load_loss_params,
    sample_weight,
    total_loss,
    total_loss_grad,
)

P = LossParams()


def batch_of(rows):
    return BatchAttributes(np.array(rows, dtype=np.int64))


SMOKE_BATCH = batch_of(
    [
        [1, 0, 0, 0, 0, 0],
        [0, 0, 0, 0, 0, 0],
        [1, 1, 0, 0, 0, 0],
        [0, 1, 0, 0, 0, 0],
    ]
)


# ---------------------------------------------------------------- params


def test_params_defaults():
    assert (P.omega, P.epsilon, P.alpha, P.theta, P.beta) == (14.0, 1.0, 2.1, 0.5, 0.5)


def test_params_validation():
    with pytest.raises(ValueError, match="positive"):
        LossParams(omega=0.0)
    with pytest.raises(ValueError, match="alpha must exceed 1"):
        LossParams(alpha=1.0)


def test_load_loss_params(tmp_path):
    path = tmp_path / "params.txt"
    path.write_text("# tuning\nomega = 10\ntheta=0.4\n\n")
    p = load_loss_params(path)
    assert p.omega == 10.0 and p.theta == 0.4
    assert p.alpha == 2.1  # untouched keys keep defaults


def test_load_loss_params_rejects_unknown_key(tmp_path):
    path = tmp_path / "params.txt"
    path.write_text("gamma=3\n")
    with pytest.raises(ValueError, match="unknown key 'gamma'"):
        load_loss_params(path)


def test_load_loss_params_rejects_bad_line(tmp_path):
    path = tmp_path / "params.txt"
    path.write_text("omega\n")
    with pytest.raises(ValueError, match="expected key=value"):
        load_loss_params(path)


# ----------------------------------------------------------------- awing


def test_awing_zero_at_agreement():
    assert awing(0.3, 0.3) == 0.0
    assert awing(np.array([0.0, 1.0]), np.array([0.0, 1.0])).tolist() == [0.0, 0.0]


def test_awing_frozen_value():
    # omega * log1p((0.5 / eps)^(alpha - 0)) with the defaults
    want = 14.0 * math.log1p(0.5 ** 2.1)
    assert awing(0.0, 0.5) == pytest.approx(want, rel=1e-15)
    assert want == pytest.approx(2.9352350864887478, rel=1e-15)


def test_awing_symmetric_in_the_residual():
    # dyadic offsets so y + d and y - d carry the same rounded distance
    for y in (0.0, 0.25, 0.75, 1.0):
        for d in (0.125, 0.25, 0.75):
            assert awing(y, y + d) == awing(y, y - d)


def test_awing_branches_touch_at_theta():
    for y in np.linspace(0.0, 1.0, 9):
        core, linear = awing_branches(y, y + P.theta)
        assert abs(core - linear) < 1e-12


def test_awing_linear_past_theta():
    # equal second differences mean the tail is a straight line in d
    a = awing(0.0, 0.8) - awing(0.0, 0.7)
    b = awing(0.0, 0.7) - awing(0.0, 0.6)
    assert a == pytest.approx(b, abs=1e-12)


def test_awing_monotone_in_distance():
    d = np.linspace(0.0, 2.0, 101)
    vals = awing(np.zeros_like(d), d)
    assert (np.diff(vals) > 0.0).all()


def test_awing_adapts_to_target_value():
    # a higher ground-truth pixel lowers the exponent, raising small-d loss
    assert awing(1.0, 1.0 + 0.2) > awing(0.0, 0.2)


def test_awing_grad_matches_finite_difference(rng):
    ys = rng.uniform(0.0, 1.0, size=200)
    ds = rng.uniform(-1.5, 1.5, size=200)
    y_hat = ys + ds
    h = 1e-6
    fd = (awing(ys, y_hat + h) - awing(ys, y_hat - h)) / (2.0 * h)
    an = awing_grad(ys, y_hat)
    np.testing.assert_allclose(an, fd, rtol=1e-5, atol=1e-7)


def test_awing_grad_sign_and_zero():
    assert awing_grad(0.5, 0.5) == 0.0
    assert awing_grad(0.5, 0.4) < 0.0  # raising y_hat would reduce the loss
    assert awing_grad(0.5, 0.6) > 0.0


def test_awing_grad_linear_slope_past_theta():
    g1 = awing_grad(0.0, 0.7)
    g2 = awing_grad(0.0, 1.7)
    assert g1 == pytest.approx(g2, rel=1e-12)


# ------------------------------------------------------------ focal factor


def test_focal_factor_exact_fractions():
    assert focal_factor(SMOKE_BATCH, 0) == Fraction(4, 2)
    assert focal_factor(SMOKE_BATCH, 1) == Fraction(4, 2)
    assert focal_factor(SMOKE_BATCH, 2) == Fraction(1)  # unrepresented class


def test_focal_factor_is_a_fraction():
    b = batch_of([[1, 0, 0, 0, 0, 0]] * 11 + [[0, 0, 0, 0, 0, 0]] * 4)
    f = focal_factor(b, 0)
    assert isinstance(f, Fraction)
    assert f == Fraction(15, 11)


def test_focal_factor_balance_is_exact(rng):
    """Summing the factor over flagged samples gives back N, with no rounding."""
    for _ in range(50):
        n = int(rng.integers(1, 33))
        b = BatchAttributes(rng.integers(0, 2, size=(n, 6)))
        for c in range(6):
            count = int(b.s[:, c].sum())
            if count:
                assert focal_factor(b, c) * count == n


def test_focal_factor_validates_class():
    with pytest.raises(ValueError, match="class index"):
        focal_factor(SMOKE_BATCH, 6)


def test_sample_weight_hand_case():
    assert [sample_weight(SMOKE_BATCH, i) for i in range(4)] == [2.0, 1.0, 4.0, 2.0]
    np.testing.assert_array_equal(batch_weights(SMOKE_BATCH), [2.0, 1.0, 4.0, 2.0])


def test_sample_weight_no_flags_falls_back_to_one():
    b = batch_of([[0, 0, 0, 0, 0, 0], [1, 1, 1, 1, 1, 1]])
    assert sample_weight(b, 0) == 1.0
    assert sample_weight(b, 1) == 12.0  # six classes, each factor 2/1


def test_batch_attribute_validation():
    with pytest.raises(ValueError, match=r"must be \(N, 6\)"):
        batch_of([[1, 0]])
    with pytest.raises(ValueError, match="at least one sample"):
        BatchAttributes(np.zeros((0, 6), dtype=np.int64))
    with pytest.raises(ValueError, match="0 or 1"):
        batch_of([[0, 0, 0, 0, 0, 2]])
    with pytest.raises(ValueError, match="sample index"):
        sample_weight(SMOKE_BATCH, 4)


# ------------------------------------------------------------ stack losses


def brute_stack_loss(gt, pred, batch, p):
    """Double-loop reference: weighted mean over samples of summed map means."""
    n, k, hh, ww = gt.shape
    weights = [sample_weight(batch, i) for i in range(n)]
    total = 0.0
    for i in range(n):
        per_sample = 0.0
        for j in range(k):
            acc = 0.0
            for r in range(hh):
                for c in range(ww):
                    acc += awing(gt[i, j, r, c], pred[i, j, r, c], p)
            per_sample += acc / (hh * ww)
        total += weights[i] * per_sample
    return total / n


def small_stacks(rng, n=2, k=2, side=3):
    gt = rng.uniform(0.0, 1.0, size=(n, k, side, side))
    pred = rng.uniform(-0.3, 1.3, size=(n, k, side, side))
    batch = BatchAttributes(rng.integers(0, 2, size=(n, 6)))
    return gt, pred, batch


def test_landmark_loss_matches_brute_force(rng):
    gt, pred, batch = small_stacks(rng)
    want = brute_stack_loss(gt, pred, batch, P)
    assert landmark_loss(gt, pred, batch) == pytest.approx(want, rel=1e-12)


def test_boundary_loss_same_reduction(rng):
    gt, pred, batch = small_stacks(rng, k=3)
    assert boundary_loss(gt, pred, batch) == landmark_loss(gt, pred, batch)


def test_total_loss_weights_boundary_term(rng):
    gt_lm, pred_lm, batch = small_stacks(rng)
    gt_bd = rng.uniform(size=(2, 1, 3, 3))
    pred_bd = rng.uniform(size=(2, 1, 3, 3))
    want = landmark_loss(gt_lm, pred_lm, batch) + P.beta * boundary_loss(gt_bd, pred_bd, batch)
    got = total_loss(gt_lm, pred_lm, gt_bd, pred_bd, batch)
    assert got == pytest.approx(want, rel=1e-15)


def test_loss_zero_when_prediction_exact(rng):
    gt, _, batch = small_stacks(rng)
    assert landmark_loss(gt, gt.copy(), batch) == 0.0


def test_stack_validation(rng):
    gt, pred, batch = small_stacks(rng)
    with pytest.raises(ValueError, match="!= pred shape"):
        landmark_loss(gt, pred[:, :, :2, :], batch)
    with pytest.raises(ValueError, match=r"expected \(N, K, H, W\)"):
        landmark_loss(gt[0], pred[0], batch)
    with pytest.raises(ValueError, match="batch holds"):
        landmark_loss(gt[:1], pred[:1], batch)


def fd_grad(loss_fn, pred, h=1e-6):
    g = np.zeros_like(pred)
    flat = pred.ravel()
    out = g.ravel()
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + h
        hi = loss_fn()
        flat[i] = old - h
        lo = loss_fn()
        flat[i] = old
        out[i] = (hi - lo) / (2.0 * h)
    return g


def test_landmark_grad_matches_finite_difference(rng):
    gt, pred, batch = small_stacks(rng)
    an = landmark_loss_grad(gt, pred, batch)
    fd = fd_grad(lambda: landmark_loss(gt, pred, batch), pred)
    np.testing.assert_allclose(an, fd, rtol=1e-4, atol=1e-9)


def test_total_grad_components(rng):
    gt_lm, pred_lm, batch = small_stacks(rng)
    gt_bd = rng.uniform(size=(2, 2, 3, 3))
    pred_bd = rng.uniform(-0.2, 1.2, size=(2, 2, 3, 3))
    d_lm, d_bd = total_loss_grad(gt_lm, pred_lm, gt_bd, pred_bd, batch)
    np.testing.assert_allclose(d_lm, landmark_loss_grad(gt_lm, pred_lm, batch), rtol=1e-15)
    np.testing.assert_allclose(
        d_bd, P.beta * boundary_loss_grad(gt_bd, pred_bd, batch), rtol=1e-15
    )
    fd = fd_grad(lambda: total_loss(gt_lm, pred_lm, gt_bd, pred_bd, batch), pred_bd)
    np.testing.assert_allclose(d_bd, fd, rtol=1e-4, atol=1e-9)


def test_grad_zero_at_optimum(rng):
    gt, _, batch = small_stacks(rng)
    g = landmark_loss_grad(gt, gt.copy(), batch)
    assert not g.any()
