import logging

import numpy as np
import pytest

from heatmark.geometry import LandmarkSet
from heatmark.metrics import (
    DegenerateSampleError,
    NormSpec,
    auc_ced,
    ced_value,
    default_norm,
    evaluate,
    failure_rate,
    format_report,
    load_norm_defaults,
    nme,
    write_ced,
)


def face(points, attrs=(0,) * 6):
    pts = np.asarray(points, dtype=np.float64)
    return LandmarkSet(points=pts, image_id="x", bbox=(0, 0, 64, 64), attributes=attrs)


# ------------------------------------------------------------------ norms


def test_norm_interocular_distance():
    gt = np.array([[0.0, 0.0], [3.0, 4.0], [9.0, 9.0]])
    assert NormSpec.interocular(0, 1).distance(gt) == 5.0


def test_norm_interpupil_averages_sets():
    gt = np.array([[0.0, 0.0], [0.0, 2.0], [6.0, 0.0], [6.0, 2.0], [1.0, 1.0]])
    spec = NormSpec.interpupil((0, 1), (2, 3))
    assert spec.distance(gt) == 6.0  # set means (0,1) and (6,1)


def test_norm_fixed():
    assert NormSpec.fixed(64.0).distance(np.zeros((2, 2))) == 64.0
    with pytest.raises(ValueError, match="must be positive"):
        NormSpec.fixed(0.0)


# -------------------------------------------------------------------- nme


def test_nme_hand_oracle():
    """Every point off by (3, 4) and d=10 gives exactly 0.5."""
    gt = np.array([[0.0, 0.0], [10.0, 0.0], [5.0, 5.0]])
    pred = gt + np.array([3.0, 4.0])
    assert nme(pred, gt, NormSpec.fixed(10.0)) == 0.5
    assert nme(pred, gt, NormSpec.interocular(0, 1)) == 0.5


def test_nme_accepts_landmark_sets():
    gt = face([[0.0, 0.0], [10.0, 0.0]])
    pred = face([[0.0, 3.0], [10.0, 3.0]])
    assert nme(pred, gt, NormSpec.fixed(6.0)) == 0.5


def test_nme_distance_comes_from_ground_truth():
    gt = np.array([[0.0, 0.0], [5.0, 0.0]])
    pred = np.array([[0.0, 0.0], [50.0, 0.0]])
    # pred's own spread must not influence d
    assert nme(pred, gt, NormSpec.interocular(0, 1)) == pytest.approx(45.0 / 2.0 / 5.0)


def test_nme_degenerate_distance_raises():
    gt = np.array([[2.0, 2.0], [2.0, 2.0]])
    with pytest.raises(DegenerateSampleError, match="not positive"):
        nme(gt, gt, NormSpec.interocular(0, 1))


def test_nme_shape_mismatch():
    with pytest.raises(ValueError, match="disagree"):
        nme(np.zeros((3, 2)), np.zeros((2, 2)), NormSpec.fixed(1.0))


# ------------------------------------------------------------ ced, fr, auc


def test_ced_value_is_inclusive():
    nmes = [0.05, 0.10, 0.12]
    assert ced_value(nmes, 0.10) == pytest.approx(2.0 / 3.0)
    assert ced_value(nmes, 0.04) == 0.0
    assert ced_value(nmes, 0.12) == 1.0


def test_failure_rate_complements_ced(rng):
    nmes = rng.uniform(0.0, 0.2, size=57)
    for t in (0.05, 0.10, 0.15):
        assert failure_rate(nmes, t) == 1.0 - ced_value(nmes, t)


def test_failure_rate_hand_case():
    assert failure_rate([0.05, 0.12], 0.10) == 0.5


def test_auc_hand_cases():
    auc, _ = auc_ced([0.02, 0.04, 0.06, 0.08], threshold=0.10)
    assert auc == 0.5
    assert auc_ced([0.0, 0.0], threshold=0.10)[0] == 1.0
    assert auc_ced([0.10, 0.25], threshold=0.10)[0] == 0.0
    # one sample clipped at the threshold, one at half of it
    assert auc_ced([0.05, 0.15], threshold=0.10)[0] == 0.25


def test_auc_curve_layout():
    auc, pts = auc_ced([0.05], threshold=0.10, resolution=4)
    assert len(pts) == 5
    np.testing.assert_allclose([e for e, _ in pts], [0.0, 0.025, 0.05, 0.075, 0.10])
    assert [frac for _, frac in pts] == [0.0, 0.0, 1.0, 1.0, 1.0]


def test_auc_validation():
    with pytest.raises(ValueError, match="threshold must be positive"):
        auc_ced([0.1], threshold=0.0)
    with pytest.raises(ValueError, match="resolution"):
        auc_ced([0.1], resolution=0)
    with pytest.raises(ValueError, match="no samples"):
        auc_ced([])


# --------------------------------------------------------------- evaluate


def eval_fixture():
    gts = [
        face([[0.0, 0.0], [10.0, 0.0]], attrs=(1, 0, 0, 0, 0, 0)),
        face([[0.0, 0.0], [10.0, 0.0]], attrs=(0, 1, 0, 0, 0, 0)),
        face([[0.0, 0.0], [10.0, 0.0]], attrs=(1, 0, 0, 0, 0, 0)),
    ]
    preds = [
        face([[0.0, 1.0], [10.0, 1.0]]),   # nme 0.1
        face([[0.0, 2.0], [10.0, 2.0]]),   # nme 0.2
        face([[0.0, 0.0], [10.0, 0.0]]),   # nme 0.0
    ]
    return preds, gts


def test_evaluate_per_sample_and_subsets():
    preds, gts = eval_fixture()
    rep = evaluate(preds, gts, NormSpec.fixed(10.0), thresholds=(0.1,))
    np.testing.assert_allclose(rep.per_sample_nme, [0.1, 0.2, 0.0])
    assert rep.nme_mean == pytest.approx(0.1)
    assert rep.fr[0.1] == pytest.approx(1.0 / 3.0)
    pose = rep.subsets["pose"]
    np.testing.assert_allclose(pose.per_sample_nme[[0, 2]], [0.1, 0.0])
    assert np.isnan(pose.per_sample_nme[1])
    assert pose.nme_mean == pytest.approx(0.05)
    assert rep.subsets["blur"] is None


def test_evaluate_excludes_degenerate_with_warning(caplog):
    preds, gts = eval_fixture()
    gts[1] = face([[5.0, 5.0], [5.0, 5.0]])
    with caplog.at_level(logging.WARNING):
        rep = evaluate(preds, gts, NormSpec.interocular(0, 1), thresholds=(0.1,))
    assert rep.excluded == (1,)
    assert np.isnan(rep.per_sample_nme[1])
    assert rep.nme_mean == pytest.approx(0.05)
    assert any("sample 1 excluded" in r.getMessage() for r in caplog.records)


def test_evaluate_all_degenerate_raises():
    bad = face([[1.0, 1.0], [1.0, 1.0]])
    with pytest.raises(ValueError, match="every sample was degenerate"):
        evaluate([bad], [bad], NormSpec.interocular(0, 1))


def test_evaluate_validation():
    preds, gts = eval_fixture()
    with pytest.raises(ValueError, match="predictions vs"):
        evaluate(preds[:2], gts, NormSpec.fixed(1.0))
    with pytest.raises(ValueError, match="no samples"):
        evaluate([], [], NormSpec.fixed(1.0))
    with pytest.raises(ValueError, match="at least one threshold"):
        evaluate(preds, gts, NormSpec.fixed(1.0), thresholds=())
    with pytest.raises(ValueError, match="subsets must be"):
        evaluate(preds, gts, NormSpec.fixed(1.0), subsets=np.zeros((2, 6)))


def test_evaluate_multiple_thresholds():
    preds, gts = eval_fixture()
    rep = evaluate(preds, gts, NormSpec.fixed(10.0), thresholds=(0.05, 0.15))
    assert set(rep.fr) == {0.05, 0.15}
    assert rep.fr[0.05] == pytest.approx(2.0 / 3.0)
    assert rep.fr[0.15] == pytest.approx(1.0 / 3.0)


# ------------------------------------------------------------------ report


def test_format_report_layout():
    preds, gts = eval_fixture()
    rep = evaluate(preds, gts, NormSpec.fixed(10.0), thresholds=(0.1,))
    text = format_report(rep)
    lines = dict(l.split("\t") for l in text.strip().splitlines())
    assert float(lines["nme"]) == pytest.approx(0.1)
    assert float(lines["fr@0.1"]) == pytest.approx(1.0 / 3.0)
    assert lines["samples"] == "3"
    assert float(lines["pose.nme"]) == pytest.approx(0.05)
    assert lines["pose.samples"] == "2"
    assert lines["blur.samples"] == "0"


def test_write_ced_round_trips(tmp_path):
    preds, gts = eval_fixture()
    rep = evaluate(preds, gts, NormSpec.fixed(10.0))
    path = tmp_path / "ced.txt"
    write_ced(rep.ced, path)
    rows = [tuple(map(float, l.split("\t"))) for l in path.read_text().strip().splitlines()]
    assert rows == [(e, frac) for e, frac in rep.ced]
    assert rows[0][0] == 0.0
    assert rows[-1][0] == 0.1


# ---------------------------------------------------------------- defaults


def test_norm_defaults_table():
    table = load_norm_defaults()
    assert table[98] == NormSpec.interocular(60, 72)
    assert table[68] == NormSpec.interocular(36, 45)
    assert table[29].mode == "interpupil"


def test_default_norm_unknown_count():
    with pytest.raises(ValueError, match="no default normalization for 7-point"):
        default_norm(7)
