"""Normalized mean error, failure rate, AUC, and cumulative error curves.

Per-sample NME is the mean point-to-point distance divided by a face-size
normalization d (outer eye corner distance by default). Aggregates follow
the standard face-alignment conventions: FR counts samples strictly above
the threshold, the CED is the empirical CDF of NMEs, and AUC is the exact
area under the CED from 0 to the threshold, normalized to [0, 1].
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from .geometry import ATTRIBUTE_NAMES, LandmarkSet

log = logging.getLogger(__name__)


class DegenerateSampleError(ValueError):
    """Normalization distance is zero or negative for a sample."""


@dataclass(frozen=True)
class NormSpec:
    """How to compute the per-sample normalization distance d.

    mode 'interocular': distance between ground-truth landmarks i and j.
    mode 'interpupil': distance between the means of two index sets.
    mode 'fixed': a constant d.
    """

    mode: str
    indices: tuple[tuple[int, ...], tuple[int, ...]] | None = None
    d: float | None = None

    @classmethod
    def interocular(cls, i: int, j: int) -> "NormSpec":
        return cls(mode="interocular", indices=((i,), (j,)))

    @classmethod
    def interpupil(cls, left: tuple[int, ...], right: tuple[int, ...]) -> "NormSpec":
        return cls(mode="interpupil", indices=(tuple(left), tuple(right)))

    @classmethod
    def fixed(cls, d: float) -> "NormSpec":
        if d <= 0:
            raise ValueError(f"fixed normalization must be positive, got {d}")
        return cls(mode="fixed", d=d)

    def distance(self, gt_points: np.ndarray) -> float:
        if self.mode == "fixed":
            return float(self.d)
        left, right = self.indices
        a = gt_points[list(left)].mean(axis=0)
        b = gt_points[list(right)].mean(axis=0)
        return float(np.linalg.norm(a - b))


def _points_of(sample) -> np.ndarray:
    if isinstance(sample, LandmarkSet):
        return sample.points
    return np.asarray(sample, dtype=np.float64)


def nme(pred, gt, norm: NormSpec) -> float:
    """Mean per-point Euclidean error over the normalization distance."""
    p = _points_of(pred)
    g = _points_of(gt)
    if p.shape != g.shape:
        raise ValueError(f"pred {p.shape} and gt {g.shape} disagree")
    d = norm.distance(g)
    if d <= 0.0:
        raise DegenerateSampleError(f"normalization distance {d} is not positive")
    return float(np.linalg.norm(p - g, axis=1).mean() / d)


def ced_value(nmes, e: float) -> float:
    """Empirical CDF of the NME list at error level e (inclusive)."""
    arr = np.asarray(nmes, dtype=np.float64)
    if arr.size == 0:
        raise ValueError("no samples")
    return float(np.count_nonzero(arr <= e) / arr.size)


def failure_rate(nmes, threshold: float = 0.10) -> float:
    """Fraction of samples with NME strictly above the threshold.

    Computed as 1 - ced_value(nmes, threshold), so the complement identity
    with the CED holds exactly; a sample exactly at the threshold counts as
    a success."""
    return 1.0 - ced_value(nmes, threshold)


def auc_ced(nmes, threshold: float = 0.10, resolution: int = 100):
    """Exact area under the CED over [0, threshold], normalized by the
    threshold, plus evenly spaced curve points for plotting.

    The area is integrated analytically: each sample contributes a
    rectangle of height 1/N from its NME to the threshold, so no sampling
    resolution enters the headline number. ``resolution`` only controls the
    number of exported (error, fraction) points.

    Returns (auc, points) with points a list of (e, CED(e)).
    """
    arr = np.asarray(nmes, dtype=np.float64)
    if arr.size == 0:
        raise ValueError("no samples")
    if threshold <= 0:
        raise ValueError(f"threshold must be positive, got {threshold}")
    if resolution < 1:
        raise ValueError(f"resolution must be at least 1, got {resolution}")
    auc = float(np.clip((threshold - arr) / threshold, 0.0, 1.0).mean())
    points = [
        (float(e), ced_value(arr, e)) for e in np.linspace(0.0, threshold, resolution + 1)
    ]
    return auc, points


@dataclass
class EvalReport:
    """Aggregated metrics plus the per-sample NMEs they derive from.

    fr and auc are keyed by threshold. ``per_sample_nme`` is aligned with
    the evaluated inputs and holds NaN for samples excluded as degenerate;
    ``excluded`` lists their indices. Subset reports (one per attribute
    class) are None when the subset is empty.
    """

    per_sample_nme: np.ndarray
    nme_mean: float
    fr: dict[float, float]
    auc: dict[float, float]
    ced: list[tuple[float, float]]
    excluded: tuple[int, ...] = ()
    subsets: dict[str, "EvalReport | None"] = field(default_factory=dict)


def _aggregate(nmes: np.ndarray, kept: np.ndarray, thresholds, resolution) -> "EvalReport | None":
    valid = nmes[kept]
    if valid.size == 0:
        return None
    fr = {t: failure_rate(valid, t) for t in thresholds}
    auc = {}
    ced_points = None
    for t in thresholds:
        auc[t], pts = auc_ced(valid, t, resolution)
        if ced_points is None:
            ced_points = pts
    return EvalReport(
        per_sample_nme=np.where(kept, nmes, np.nan),
        nme_mean=float(valid.mean()),
        fr=fr,
        auc=auc,
        ced=ced_points,
        excluded=tuple(int(i) for i in np.flatnonzero(~kept)),
    )


def evaluate(
    preds,
    gts,
    norm: NormSpec,
    thresholds=(0.10,),
    subsets=None,
    resolution: int = 100,
) -> EvalReport:
    """Score a prediction list against ground truth.

    preds and gts are parallel lists of LandmarkSets (or (K, 2) arrays).
    Degenerate samples (zero normalization distance) are excluded with a
    logged warning. ``subsets`` is an (N, 6) binary matrix (defaults to the
    ground-truth attribute flags when gts are LandmarkSets); one sub-report
    per attribute class covers the flagged samples, None when empty.
    """
    if len(preds) != len(gts):
        raise ValueError(f"{len(preds)} predictions vs {len(gts)} ground-truth samples")
    if len(gts) == 0:
        raise ValueError("no samples")
    if not thresholds:
        raise ValueError("need at least one threshold")
    thresholds = tuple(float(t) for t in thresholds)

    n = len(gts)
    nmes = np.zeros(n)
    kept = np.ones(n, dtype=bool)
    for i, (pr, gt) in enumerate(zip(preds, gts)):
        try:
            nmes[i] = nme(pr, gt, norm)
        except DegenerateSampleError as exc:
            log.warning("sample %d excluded: %s", i, exc)
            kept[i] = False

    overall = _aggregate(nmes, kept, thresholds, resolution)
    if overall is None:
        raise ValueError("every sample was degenerate")

    if subsets is None and all(isinstance(g, LandmarkSet) for g in gts):
        subsets = np.array([g.attributes for g in gts], dtype=np.int64)
    if subsets is not None:
        subsets = np.asarray(subsets)
        if subsets.shape != (n, len(ATTRIBUTE_NAMES)):
            raise ValueError(f"subsets must be ({n}, {len(ATTRIBUTE_NAMES)}), got {subsets.shape}")
        for c, name in enumerate(ATTRIBUTE_NAMES):
            member = subsets[:, c].astype(bool)
            overall.subsets[name] = _aggregate(nmes, kept & member, thresholds, resolution)
    return overall


def format_report(report: EvalReport) -> str:
    """Flatten a report into name<TAB>value lines (subset metrics prefixed)."""

    def _lines(rep: EvalReport, prefix: str = ""):
        yield f"{prefix}nme\t{rep.nme_mean!r}"
        for t in sorted(rep.fr):
            yield f"{prefix}fr@{t:g}\t{rep.fr[t]!r}"
        for t in sorted(rep.auc):
            yield f"{prefix}auc@{t:g}\t{rep.auc[t]!r}"
        yield f"{prefix}samples\t{int(np.count_nonzero(~np.isnan(rep.per_sample_nme)))}"
        for name, sub in rep.subsets.items():
            if sub is None:
                yield f"{prefix}{name}.samples\t0"
            else:
                yield from _lines(sub, prefix=f"{prefix}{name}.")

    return "\n".join(_lines(report)) + "\n"


def write_ced(points, path) -> None:
    """Two-column text: error<TAB>cumulative fraction per line."""
    with open(path, "w", encoding="utf-8") as fh:
        for e, frac in points:
            # plain decimal text regardless of the incoming scalar type
            fh.write(f"{float(e)!r}\t{float(frac)!r}\n")


def load_norm_defaults() -> dict[int, NormSpec]:
    """Packaged per-scheme normalization defaults keyed by landmark count."""
    ref = resources.files("heatmark").joinpath("data", "norm_defaults.txt")
    out = {}
    for lineno, raw in enumerate(ref.read_text(encoding="utf-8").splitlines(), 1):
        stripped = raw.strip()
        if not stripped or stripped.startswith("#"):
            continue
        parts = stripped.split()
        if len(parts) < 3:
            raise ValueError(f"norm defaults line {lineno}: expected n_points mode indices")
        n_pts, mode = int(parts[0]), parts[1]
        if mode == "interocular":
            out[n_pts] = NormSpec.interocular(int(parts[2]), int(parts[3]))
        elif mode == "interpupil":
            left, right = parts[2].split("|")
            out[n_pts] = NormSpec.interpupil(
                tuple(int(i) for i in left.split(",")),
                tuple(int(i) for i in right.split(",")),
            )
        else:
            raise ValueError(f"norm defaults line {lineno}: unknown mode {mode!r}")
    return out


def default_norm(n_points: int) -> NormSpec:
    table = load_norm_defaults()
    if n_points not in table:
        raise ValueError(f"no default normalization for {n_points}-point schemes")
    return table[n_points]
