"""Command-line interface.

Exit codes: 0 success, 1 internal error, 2 invalid input, 3 unsupported option.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import audio, paramfile
from .baselines import HrtcConfig, hrtc_build
from .errors import DegenerateInputError, InvalidInputError
from .fdn import constrain, render_constrained
from .losses import edc, edc_db, edp, edp_window, kappa_schedule, soft_edp
from .metrics import compute_metrics, decays_at_all, metric_deltas
from .train import LOG_COLUMNS, TrainConfig, fit

log = logging.getLogger("fdnfit")

EXIT_OK, EXIT_INTERNAL, EXIT_INPUT, EXIT_UNSUPPORTED = 0, 1, 2, 3
BASELINE_METHODS = ("hrtc",)


class UsageError(Exception):
    """Unsupported command-line option (exit code 3)."""


def _sibling(path, suffix):
    p = Path(path)
    return str(p.with_name(p.stem + suffix))


def _dump(obj, path=None):
    text = json.dumps(obj, indent=2, allow_nan=False, default=_json_default)
    if path:
        Path(path).write_text(text + "\n")
    return text


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    raise TypeError(f"cannot serialise {type(o).__name__}")


def _finite_or_none(d):
    return {k: (v if v is None or math.isfinite(v) else None) for k, v in d.items()}


# ------------------------------------------------------------------ fit


def cmd_fit(args):
    raw = audio.load_wav(args.target)
    target = audio.prepare(raw, args.sample_rate)
    config = TrainConfig(max_iterations=args.iters, lam=args.lam, seed=args.seed,
                         learning_rate=args.lr, N=args.N, Q=args.Q, t60=args.t60)
    log_path = args.log or _sibling(args.out, ".log.csv")
    metrics_path = args.metrics or _sibling(args.out, ".metrics.json")

    with open(log_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(LOG_COLUMNS)

        def on_iteration(rec):
            writer.writerow([rec.iteration, repr(rec.loss_total), repr(rec.loss_edc),
                             repr(rec.loss_edp), f"{rec.ms:.3f}"])
            if rec.iteration % 50 == 0:
                fh.flush()
                log.info("iter %4d  loss %.4e  edc %.4e  edp %.4e", rec.iteration,
                         rec.loss_total, rec.loss_edc, rec.loss_edp)

        best, report = fit(target, config, on_iteration=on_iteration)

    cp = constrain(best, config.Q)
    provenance = {
        "source": str(args.target),
        "method": "differentiable",
        "seed": args.seed,
        "best_iteration": report.best_iteration,
        "best_loss": report.best_loss,
        "config": {k: v for k, v in vars(config).items()},
    }
    paramfile.save(args.out, cp, target.sample_rate, unconstrained=best, provenance=provenance)
    summary = report.to_dict()
    for key in ("target_metrics", "fitted_metrics", "metric_deltas"):
        if summary.get(key) is not None:
            summary[key] = _finite_or_none(summary[key])
    _dump(summary, metrics_path)
    print(_dump({"params": args.out, "log": log_path, "metrics": metrics_path,
                 "best_iteration": report.best_iteration, "best_loss": report.best_loss,
                 "metric_deltas": summary.get("metric_deltas")}))
    return EXIT_OK


# --------------------------------------------------------------- render


def cmd_render(args):
    cp, rate, _, _ = paramfile.load(args.params)
    if args.duration <= 0:
        raise InvalidInputError("duration must be positive")
    length = int(round(args.duration * rate))
    h = render_constrained(cp, length)
    audio.save_wav(audio.Rir(h, rate), args.out, encoding="float32")
    print(_dump({"out": args.out, "samples": length, "sample_rate": rate}))
    return EXIT_OK


# -------------------------------------------------------------- metrics


def write_curves(path, h, sample_rate):
    w = edp_window(sample_rate)
    lin = edc(h)
    with np.errstate(divide="ignore"):
        db = edc_db(h)
    hard = edp(h, w)
    soft = soft_edp(h, w, kappa_schedule(len(h)))
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["sample_index", "time_s", "edc_linear", "edc_db", "edp", "soft_edp"])
        for n in range(len(h)):
            writer.writerow([n, n / sample_rate, repr(float(lin[n])), repr(float(db[n])),
                             repr(float(hard[n])), repr(float(soft[n]))])


def cmd_metrics(args):
    ir = audio.load_wav(args.ir)
    m, undefined = compute_metrics(ir, strict=False)
    result = {"metrics": _finite_or_none(m.to_dict())}
    if undefined:
        result["undefined"] = undefined
    status = EXIT_OK if decays_at_all(ir) else EXIT_INPUT
    if args.reference:
        ref = audio.load_wav(args.reference)
        if ref.sample_rate != ir.sample_rate:
            ref = audio.resample(ref, ir.sample_rate)
        rm, _ = compute_metrics(ref, strict=False)
        result["reference"] = _finite_or_none(rm.to_dict())
        n = max(len(ir), len(ref))
        a = np.pad(ref.samples, (0, n - len(ref)))
        b = np.pad(ir.samples, (0, n - len(ir)))
        result["deltas"] = _finite_or_none(
            metric_deltas(a, b, ir.sample_rate, strict=False).to_dict())
    if args.curves:
        write_curves(args.curves, ir.samples, ir.sample_rate)
    print(_dump(result))
    if status != EXIT_OK:
        print("error: impulse response does not decay by 25 dB", file=sys.stderr)
    return status


# ------------------------------------------------------------- baseline


def cmd_baseline(args):
    if args.method not in BASELINE_METHODS:
        raise UsageError(f"unsupported method {args.method!r} (available: hrtc)")
    target = audio.prepare(audio.load_wav(args.target), args.sample_rate)
    cp = hrtc_build(target, HrtcConfig(seed=args.seed))
    provenance = {"source": str(args.target), "method": "hrtc", "seed": args.seed}
    paramfile.save(args.out, cp, target.sample_rate, provenance=provenance)
    print(_dump({"out": args.out, "delays": cp.m.tolist(), "direct_gain": cp.d}))
    return EXIT_OK


# ----------------------------------------------------------------- main


def build_parser():
    parser = argparse.ArgumentParser(prog="fdnfit", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="learn FDN parameters from a measured RIR")
    p.add_argument("target")
    p.add_argument("--out", required=True, help="parameter JSON to write")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--iters", type=int, default=1000)
    p.add_argument("--lambda", dest="lam", type=float, default=0.1, help="EDP loss weight")
    p.add_argument("--lr", type=float, default=0.1)
    p.add_argument("--N", type=int, default=6, help="number of delay lines")
    p.add_argument("--Q", type=int, default=1024, help="delay buffer length")
    p.add_argument("--t60", type=float, default=None, help="override the estimated T60 (s)")
    p.add_argument("--sample-rate", type=int, default=audio.CANONICAL_RATE)
    p.add_argument("--log", help="training log CSV (default: <out>.log.csv)")
    p.add_argument("--metrics", help="report JSON (default: <out>.metrics.json)")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("render", help="render an impulse response from a parameter file")
    p.add_argument("params")
    p.add_argument("--duration", type=float, default=2.0, help="seconds")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("metrics", help="room-acoustic metrics of a WAV file")
    p.add_argument("ir")
    p.add_argument("reference", nargs="?")
    p.add_argument("--curves", help="CSV with EDC and EDP curves")
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("baseline", help="build an analytic baseline FDN")
    p.add_argument("target")
    p.add_argument("--method", default="hrtc")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--sample-rate", type=int, default=audio.CANONICAL_RATE)
    p.set_defaults(func=cmd_baseline)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_UNSUPPORTED
    except (InvalidInputError, FileNotFoundError, IsADirectoryError) as exc:
        kind = "degenerate input" if isinstance(exc, DegenerateInputError) else "invalid input"
        print(f"error: {kind}: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except Exception as exc:  # noqa: BLE001 - last-resort diagnostic
        log.exception("internal error")
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
