"""Command-line surface: ground-truth generation, evaluation, self-checks,
a toy descent demo, and dataset statistics.

Logs go to stderr, data to stdout or files. Exit codes: 0 success, 1 input
error, 2 verification failure.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import codec, geometry, losses, metrics, shiftops
from .codec import GaussianParams, decode_stack, read_tensor, write_tensor
from .geometry import MalformedRecordError, crop_resize, parse_wflw_line
from .losses import BatchAttributes, LossParams, load_loss_params, total_loss, total_loss_grad
from .metrics import NormSpec

log = logging.getLogger("heatmark")


class VerificationFailure(Exception):
    """A self-check ran fine but its assertion failed (exit code 2)."""


def _parse_norm(text: str | None, n_points: int) -> NormSpec:
    """--norm values: 'interocular', 'interocular:60,72', 'interpupil:96|97',
    'fixed:64'; bare mode names use the packaged per-scheme defaults."""
    if text is None or text == "interocular" or text == "default":
        return metrics.default_norm(n_points)
    mode, _, arg = text.partition(":")
    if mode == "fixed":
        return NormSpec.fixed(float(arg))
    if mode == "interocular":
        i, j = (int(v) for v in arg.split(","))
        return NormSpec.interocular(i, j)
    if mode == "interpupil":
        if not arg:
            return metrics.default_norm(n_points)
        left, right = arg.split("|")
        return NormSpec.interpupil(
            tuple(int(v) for v in left.split(",")),
            tuple(int(v) for v in right.split(",")),
        )
    raise ValueError(f"unknown norm spec {text!r}")


def _load_scheme(path: str | None, n_points: int):
    if path is None:
        return codec.default_boundary_scheme(n_points)
    return codec.load_boundary_scheme(path, n_points)


def _load_loss_params(path: str | None) -> LossParams:
    if path is None:
        return LossParams()
    return load_loss_params(path)


# ---------------------------------------------------------------- gen-gt


def cmd_gen_gt(args) -> int:
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    scheme = _load_scheme(args.scheme, args.points)
    g = GaussianParams(sigma=args.sigma)
    res = (args.res, args.res)

    n_ok = n_bad = 0
    manifest_rows = []
    with open(args.annotations, "r", encoding="utf-8") as fh:
        records = [ln.strip() for ln in fh if ln.strip() and not ln.strip().startswith("#")]
    if not records:
        log.error("no records in %s", args.annotations)
        return 1
    for i, line in enumerate(records):
        try:
            sample = parse_wflw_line(line, n_points=args.points)
            _, cropped = crop_resize(sample, out_size=args.input_size)
            lm = codec.encode_landmarks(cropped, res, g, input_size=args.input_size)
            bd = codec.rasterize_boundaries(cropped, scheme, res, g, input_size=args.input_size)
        except (MalformedRecordError, ValueError) as exc:
            log.error("record %d: %s", i, exc)
            n_bad += 1
            continue
        stem = Path(sample.image_id).stem or "sample"
        sample_id = f"{i:04d}_{stem}"
        lm_name = f"{sample_id}_lm.hmk"
        bd_name = f"{sample_id}_bd.hmk"
        write_tensor(lm, out_dir / lm_name)
        write_tensor(bd, out_dir / bd_name)
        attrs = " ".join(str(a) for a in sample.attributes)
        manifest_rows.append(f"{sample_id}\t{lm_name}\t{bd_name}\t{attrs}")
        n_ok += 1
    (out_dir / "manifest.txt").write_text("\n".join(manifest_rows) + "\n", encoding="utf-8")
    log.info("encoded %d samples (%d failed) into %s", n_ok, n_bad, out_dir)
    return 1 if n_bad else 0


def read_gt_manifest(gt_dir):
    """Rows of (sample_id, lm_path, bd_path, attribute tuple)."""
    gt_dir = Path(gt_dir)
    manifest = gt_dir / "manifest.txt"
    if not manifest.exists():
        raise ValueError(f"no manifest.txt under {gt_dir}")
    rows = []
    for lineno, raw in enumerate(manifest.read_text(encoding="utf-8").splitlines(), 1):
        if not raw.strip():
            continue
        parts = raw.split("\t")
        if len(parts) != 4:
            raise ValueError(f"{manifest}:{lineno}: expected 4 tab-separated fields")
        sid, lm_name, bd_name, attrs = parts
        attr_tuple = tuple(int(a) for a in attrs.split())
        rows.append((sid, gt_dir / lm_name, gt_dir / bd_name, attr_tuple))
    if not rows:
        raise ValueError(f"{manifest}: empty manifest")
    return rows


# ------------------------------------------------------------------ eval


def _parse_prediction_file(path, n_points: int):
    """Full annotation records, or bare `x1 y1 ... xK yK [image_id]` lines."""
    preds = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            stripped = raw.strip()
            if not stripped or stripped.startswith("#"):
                continue
            fields = stripped.split()
            if len(fields) == 2 * n_points + 11:
                preds.append(parse_wflw_line(stripped, n_points=n_points))
                continue
            if len(fields) not in (2 * n_points, 2 * n_points + 1):
                raise MalformedRecordError(
                    f"{path}:{lineno}: expected {2 * n_points} coordinates "
                    f"(optionally plus id) or a full record, found {len(fields)} fields"
                )
            try:
                coords = np.array([float(v) for v in fields[: 2 * n_points]])
            except ValueError as exc:
                raise MalformedRecordError(f"{path}:{lineno}: {exc}") from None
            image_id = fields[-1] if len(fields) == 2 * n_points + 1 else ""
            preds.append(
                geometry.LandmarkSet(points=coords.reshape(n_points, 2), image_id=image_id)
            )
    return preds


def cmd_eval(args) -> int:
    gts = geometry.parse_annotation_file(args.gt_file, n_points=args.points)
    preds = _parse_prediction_file(args.pred_file, args.points)
    if len(preds) != len(gts):
        log.error("record count mismatch: %d predictions vs %d ground truth", len(preds), len(gts))
        return 1
    norm = _parse_norm(args.norm, args.points)
    thresholds = args.threshold or [0.10]
    report = metrics.evaluate(preds, gts, norm, thresholds=thresholds, resolution=args.resolution)
    sys.stdout.write(metrics.format_report(report))
    metrics.write_ced(report.ced, args.out)
    log.info("CED points written to %s", args.out)
    return 0


# ------------------------------------------------------------ check-grad


def grad_check_errors(
    p: LossParams, trials: int = 100, seed: int = 0, h: float = 1e-5, inject_sign_bug: bool = False
) -> dict[str, float]:
    """Max relative error between analytic and central-difference gradients,
    probed at ``trials`` random pixels per loss."""
    rng = np.random.default_rng(seed)
    n, k_lm, m_bd, side = 3, 3, 2, 12
    gt_lm = rng.uniform(0.0, 1.0, (n, k_lm, side, side))
    gt_bd = rng.uniform(0.0, 1.0, (n, m_bd, side, side))
    pred_lm = rng.uniform(-0.3, 1.3, (n, k_lm, side, side))
    pred_bd = rng.uniform(-0.3, 1.3, (n, m_bd, side, side))
    batch = BatchAttributes(rng.integers(0, 2, (n, 6)))

    sign = -1.0 if inject_sign_bug else 1.0

    def _max_err(loss_fn, grad_fn, stacks):
        worst = 0.0
        for _ in range(trials):
            which = rng.integers(len(stacks))
            gt, pred = stacks[which]
            grads = grad_fn()
            analytic = sign * grads[which]
            idx = tuple(rng.integers(s) for s in pred.shape)
            bumped_hi = pred.copy()
            bumped_hi[idx] += h
            bumped_lo = pred.copy()
            bumped_lo[idx] -= h
            originals = [list(s) for s in stacks]
            originals[which][1] = bumped_hi
            hi = loss_fn([tuple(s) for s in originals])
            originals[which][1] = bumped_lo
            lo = loss_fn([tuple(s) for s in originals])
            fd = (hi - lo) / (2.0 * h)
            an = analytic[idx]
            rel = abs(fd - an) / max(abs(fd), abs(an), 1e-12)
            worst = max(worst, rel)
        return worst

    out = {}
    out["landmark_loss"] = _max_err(
        lambda s: losses.landmark_loss(s[0][0], s[0][1], batch, p),
        lambda: [losses.landmark_loss_grad(gt_lm, pred_lm, batch, p)],
        [(gt_lm, pred_lm)],
    )
    out["boundary_loss"] = _max_err(
        lambda s: losses.boundary_loss(s[0][0], s[0][1], batch, p),
        lambda: [losses.boundary_loss_grad(gt_bd, pred_bd, batch, p)],
        [(gt_bd, pred_bd)],
    )
    out["total_loss"] = _max_err(
        lambda s: total_loss(s[0][0], s[0][1], s[1][0], s[1][1], batch, p),
        lambda: list(total_loss_grad(gt_lm, pred_lm, gt_bd, pred_bd, batch, p)),
        [(gt_lm, pred_lm), (gt_bd, pred_bd)],
    )
    return out


def cmd_check_grad(args) -> int:
    p = _load_loss_params(args.loss_params)
    errors = grad_check_errors(
        p, trials=args.trials, seed=args.seed, inject_sign_bug=args.inject_sign_bug
    )
    failed = False
    for name, err in errors.items():
        status = "ok" if err <= args.tolerance else "FAIL"
        failed = failed or err > args.tolerance
        sys.stdout.write(f"{name}\t{err:.3e}\t{status}\n")
    if failed:
        raise VerificationFailure(
            f"gradient check exceeded tolerance {args.tolerance:g}"
        )
    return 0


# ----------------------------------------------------------- check-shift


def circular_lowpass(rng: np.random.Generator, size: int, sigma: float = 2.0) -> np.ndarray:
    """Gaussian-smoothed noise with wrap-around filtering, so circular
    shifts commute with the smoothing exactly."""
    radius = max(1, int(3 * sigma))
    taps = np.exp(-np.arange(-radius, radius + 1) ** 2 / (2 * sigma * sigma))
    taps /= taps.sum()
    x = rng.standard_normal((1, size, size))
    for axis in (1, 2):
        acc = np.zeros_like(x)
        for off, w in zip(range(-radius, radius + 1), taps):
            acc += w * np.roll(x, off, axis=axis)
        x = acc
    return x


def shift_score_table(sizes, trials: int, seed: int, size: int, max_shift: int):
    """Mean shift-consistency scores and per-kernel win counts against the
    plain stride-2 baseline, over low-pass random inputs."""
    rng = np.random.default_rng(seed)
    kernels = {n: shiftops.blur_kernel(n) for n in sizes}
    plain_scores, blur_scores = [], {n: [] for n in sizes}
    wins = {n: 0 for n in sizes}
    for _ in range(trials):
        f = circular_lowpass(rng, size)
        s_plain = shiftops.shift_consistency(shiftops.subsample, f, max_shift)
        plain_scores.append(s_plain)
        for n, k in kernels.items():
            s_blur = shiftops.shift_consistency(
                lambda x, k=k: shiftops.blur_downsample(x, k), f, max_shift
            )
            blur_scores[n].append(s_blur)
            if s_blur > s_plain:
                wins[n] += 1
    const = np.ones((1, size, size)) * 0.7
    const_scores = {
        "plain": shiftops.shift_consistency(shiftops.subsample, const, max_shift),
        **{
            f"blur{n}": shiftops.shift_consistency(
                lambda x, k=k: shiftops.blur_downsample(x, k), const, max_shift
            )
            for n, k in kernels.items()
        },
    }
    return {
        "plain_mean": float(np.mean(plain_scores)),
        "blur_mean": {n: float(np.mean(blur_scores[n])) for n in sizes},
        "wins": wins,
        "trials": trials,
        "constant": const_scores,
    }


def cmd_check_shift(args) -> int:
    sizes = [int(s) for s in args.sizes.split(",")]
    table = shift_score_table(sizes, args.trials, args.seed, args.size, args.max_shift)
    sys.stdout.write(f"plain\t{table['plain_mean']:.6f}\t-\n")
    for n in sizes:
        sys.stdout.write(
            f"blur{n}\t{table['blur_mean'][n]:.6f}\t{table['wins'][n]}/{table['trials']}\n"
        )
    for name, score in table["constant"].items():
        sys.stdout.write(f"constant_{name}\t{score:.6f}\t-\n")
    bad = [n for n in sizes if table["wins"][n] < args.min_win_frac * table["trials"]]
    if bad:
        raise VerificationFailure(
            f"blur kernels {bad} beat plain subsampling in fewer than "
            f"{args.min_win_frac:.0%} of {table['trials']} trials"
        )
    return 0


# --------------------------------------------------------------- fit-toy


def run_fit_toy(
    gt_dir,
    p: LossParams = LossParams(),
    steps: int = 2000,
    lr: float = 1e-2,
    init: str = "0.5",
    stop_loss_frac: float | None = None,
    stop_nme: float | None = None,
    log_stream=None,
) -> dict:
    """Descend on free heatmap variables against stored ground truth.

    The update direction is the loss gradient rescaled by the constant
    N*H*W (a diagonal preconditioner that leaves the direction unchanged);
    the step starts at ``lr`` each iteration and halves until the total
    loss strictly decreases, so the logged losses are strictly monotone
    until the search hits its plateau.

    Reports the decoded NME: predicted and ground-truth stacks are decoded
    map by map and compared with a fixed normalization of 64.
    """
    rows = read_gt_manifest(gt_dir)
    gt_lm = np.stack([read_tensor(r[1]).astype(np.float64) for r in rows])
    gt_bd = np.stack([read_tensor(r[2]).astype(np.float64) for r in rows])
    batch = BatchAttributes(np.array([r[3] for r in rows], dtype=np.int64))

    if init == "gt":
        pred_lm, pred_bd = gt_lm.copy(), gt_bd.copy()
    else:
        fill = float(init)
        pred_lm = np.full_like(gt_lm, fill)
        pred_bd = np.full_like(gt_bd, fill)

    n, _, h_px, w_px = gt_lm.shape
    precond = n * h_px * w_px
    norm64 = NormSpec.fixed(64.0)

    def _nme_now():
        vals = [
            metrics.nme(decode_stack(pred_lm[i]), decode_stack(gt_lm[i]), norm64)
            for i in range(n)
        ]
        return float(np.mean(vals))

    def _emit(text):
        if log_stream is not None:
            log_stream.write(text + "\n")

    loss = total_loss(gt_lm, pred_lm, gt_bd, pred_bd, batch, p)
    initial = loss
    losses_seen = [loss]
    _emit(f"0\t{loss!r}\t-")
    steps_used = 0
    for step_no in range(1, steps + 1):
        if loss == 0.0:
            break
        g_lm, g_bd = total_loss_grad(gt_lm, pred_lm, gt_bd, pred_bd, batch, p)
        d_lm, d_bd = g_lm * precond, g_bd * precond
        step = lr
        accepted = False
        for _ in range(40):
            trial_lm = pred_lm - step * d_lm
            trial_bd = pred_bd - step * d_bd
            trial_loss = total_loss(gt_lm, trial_lm, gt_bd, trial_bd, batch, p)
            if trial_loss < loss:
                pred_lm, pred_bd, loss = trial_lm, trial_bd, trial_loss
                accepted = True
                break
            step *= 0.5
        if not accepted:
            _emit(f"# plateau after {step_no - 1} steps")
            break
        steps_used = step_no
        losses_seen.append(loss)
        _emit(f"{step_no}\t{loss!r}\t{step:g}")
        if stop_loss_frac is not None and loss <= stop_loss_frac * initial:
            if stop_nme is None or _nme_now() <= stop_nme:
                break

    final_nme = _nme_now()
    _emit(f"initial_loss\t{initial!r}")
    _emit(f"final_loss\t{loss!r}")
    _emit(f"final_nme\t{final_nme!r}")
    _emit(f"steps_used\t{steps_used}")
    return {
        "losses": losses_seen,
        "initial_loss": initial,
        "final_loss": loss,
        "final_nme": final_nme,
        "steps_used": steps_used,
    }


def cmd_fit_toy(args) -> int:
    p = _load_loss_params(args.loss_params)
    run_fit_toy(
        args.gt_dir,
        p,
        steps=args.steps,
        lr=args.lr,
        init=args.init,
        stop_loss_frac=args.stop_loss_frac,
        stop_nme=args.stop_nme,
        log_stream=sys.stdout,
    )
    return 0


# ----------------------------------------------------------------- stats


def cmd_stats(args) -> int:
    samples = geometry.parse_annotation_file(args.annotations, n_points=args.points)
    if not samples:
        log.error("no records in %s", args.annotations)
        return 1
    fractions = geometry.attribute_fractions(samples)
    for name, frac in zip(geometry.ATTRIBUTE_NAMES, fractions):
        sys.stdout.write(f"{name}\t{float(frac)!r}\n")
    return 0


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="heatmark", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    def _common(sp, scheme=False, loss_params=False, seed=False):
        sp.add_argument("--points", type=int, default=98, help="landmarks per sample")
        if scheme:
            sp.add_argument("--scheme", default=None, help="boundary scheme file (packaged default)")
        if loss_params:
            sp.add_argument("--loss-params", default=None, help="key=value hyper-parameter file")
        if seed:
            sp.add_argument("--seed", type=int, default=0, help="seed for all randomness")

    sp = sub.add_parser("gen-gt", help="encode annotation records to heatmap tensors")
    sp.add_argument("annotations")
    sp.add_argument("--out", required=True, help="output directory")
    _common(sp, scheme=True, seed=True)
    sp.add_argument("--sigma", type=float, default=1.5)
    sp.add_argument("--res", type=int, default=64, help="heatmap side")
    sp.add_argument("--input-size", type=int, default=256, help="crop side before encoding")
    sp.set_defaults(fn=cmd_gen_gt)

    sp = sub.add_parser("eval", help="score a prediction file against ground truth")
    sp.add_argument("pred_file")
    sp.add_argument("gt_file")
    _common(sp)
    sp.add_argument("--norm", default=None, help="interocular[:i,j] | interpupil[:L|R] | fixed:d")
    sp.add_argument("--threshold", type=float, action="append", help="repeatable FR/AUC threshold")
    sp.add_argument("--resolution", type=int, default=100, help="exported CED point count")
    sp.add_argument("--out", default="ced.txt", help="CED points output file")
    sp.set_defaults(fn=cmd_eval)

    sp = sub.add_parser("check-grad", help="finite-difference gradient verification")
    _common(sp, loss_params=True, seed=True)
    sp.add_argument("--trials", type=int, default=100, help="probed pixels per loss")
    sp.add_argument("--tolerance", type=float, default=1e-4)
    sp.add_argument(
        "--inject-sign-bug", action="store_true",
        help="self-test: flip the analytic sign and expect failure",
    )
    sp.set_defaults(fn=cmd_check_grad)

    sp = sub.add_parser("check-shift", help="shift-consistency score table")
    _common(sp, seed=True)
    sp.add_argument("--sizes", default="2,3,5", help="comma-joined blur kernel sizes")
    sp.add_argument("--trials", type=int, default=100)
    sp.add_argument("--size", type=int, default=64, help="test input side")
    sp.add_argument("--max-shift", type=int, default=1)
    sp.add_argument("--min-win-frac", type=float, default=0.95)
    sp.set_defaults(fn=cmd_check_shift)

    sp = sub.add_parser("fit-toy", help="gradient descent of free heatmaps onto stored ground truth")
    sp.add_argument("gt_dir", help="directory produced by gen-gt")
    _common(sp, loss_params=True, seed=True)
    sp.add_argument("--steps", type=int, default=2000)
    sp.add_argument("--lr", type=float, default=1e-2, help="base step size")
    sp.add_argument("--init", default="0.5", help="initial pixel value, or 'gt'")
    sp.add_argument("--stop-loss-frac", type=float, default=None,
                    help="stop once loss falls below this fraction of the initial loss")
    sp.add_argument("--stop-nme", type=float, default=None,
                    help="with --stop-loss-frac, also require decoded NME at or below this")
    sp.set_defaults(fn=cmd_fit_toy)

    sp = sub.add_parser("stats", help="per-attribute flag fractions of an annotation file")
    sp.add_argument("annotations")
    _common(sp)
    sp.set_defaults(fn=cmd_stats)

    return ap


def main(argv=None) -> int:
    logging.basicConfig(stream=sys.stderr, level=logging.INFO, format="%(levelname)s %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except VerificationFailure as exc:
        log.error("%s", exc)
        return 2
    except (ValueError, OSError) as exc:
        log.error("%s", exc)
        return 1


if __name__ == "__main__":
    sys.exit(main())
