"""Command-line interface: fit, msb, simulate, bench and eval.

Exit status is 0 on success, 1 on an internal failure and 2 on bad usage or
unreadable input.  Output is data only (JSON or CSV); indices are 1-based.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import StepFunction
from .msb import QUARTILES, msb_fit
from .segmentation import BOX_ENGINES, COST_RULES, RUNS_MEAN_CONVENTIONS, SegmentationResult, fit
from .simlab import SCENARIOS, MethodConfig, miae, run_batch, scenario, v_measure, write_summaries
from .threshold import DEFAULT_REPS, ThresholdKey, ThresholdTable, default_path, table_get_or_simulate, threshold

FORMAT_VERSION = 1
log = logging.getLogger("mqseg")


class UsageError(Exception):
    """Bad arguments or unreadable input (exit status 2)."""


@dataclass(frozen=True)
class RunConfig:
    command: str
    input: Path | None
    beta: float
    alpha: float | None
    q: float | None
    cost_rule: str
    runs_mean_convention: str
    seed: int
    reps: int
    out: Path | None
    fmt: str

    @classmethod
    def from_args(cls, args: argparse.Namespace) -> "RunConfig":
        q = getattr(args, "q", None)
        alpha = getattr(args, "alpha", None)
        if q is None and alpha is None:
            alpha = 0.1
        return cls(
            args.command,
            Path(args.input) if getattr(args, "input", None) else None,
            getattr(args, "beta", 0.5),
            None if q is not None else alpha,
            q,
            getattr(args, "cost", "koenker"),
            getattr(args, "runs_mean", "classical"),
            getattr(args, "seed", 0),
            getattr(args, "reps", DEFAULT_REPS),
            Path(args.out) if getattr(args, "out", None) else None,
            getattr(args, "format", "json"),
        )


def read_series(path: Path) -> np.ndarray:
    """One observation per line; a non-numeric first line is taken as a header."""
    try:
        text = path.read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise UsageError(f"cannot read {path}: {exc}") from exc
    vals = []
    for lineno, row in enumerate(csv.reader(io.StringIO(text)), start=1):
        if not row or not row[0].strip():
            continue
        try:
            vals.append(float(row[0]))
        except ValueError:
            if lineno == 1:
                continue
            raise UsageError(f"{path}:{lineno}: not a number: {row[0]!r}") from None
    if not vals:
        raise UsageError(f"{path}: no observations")
    arr = np.asarray(vals, dtype=np.float64)
    if not np.isfinite(arr).all():
        raise UsageError(f"{path}: observations must be finite")
    return arr


def _num(x: float):
    # JSON has no infinities; unbounded band edges are written as null
    return float(x) if math.isfinite(x) else None


def result_dict(res: SegmentationResult) -> dict:
    n = res.n
    return {
        "n": n,
        "beta": res.beta,
        "alpha": res.alpha,
        "q": res.q_used,
        "cost_rule": res.cost_rule,
        "runs_mean_convention": res.runs_mean_convention if res.cost_rule == "runs" else None,
        "s_hat": res.s_hat,
        "degenerate": res.degenerate,
        "cost": _num(res.cost),
        "segments": [{"start": a, "end": b, "value": v} for a, b, v in res.fit.segments()],
        "changepoints": list(res.fit.changepoints),
        "tau": [(c - 1) / n for c in res.fit.changepoints],
        "cp_intervals": [[lo, hi] for lo, hi in res.cp_intervals],
        "cp_intervals_tau": [[(lo - 1) / n, (hi - 1) / n] for lo, hi in res.cp_intervals],
        "band": {
            "lower": [_num(v) for v in res.band_lower],
            "upper": [_num(v) for v in res.band_upper],
        },
    }


def _emit(text: str, out: Path | None) -> None:
    if out is None:
        sys.stdout.write(text)
        return
    try:
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(text, encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"cannot write {out}: {exc}") from exc


def _json(obj) -> str:
    return json.dumps(obj, indent=2) + "\n"


def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _table(args) -> ThresholdTable:
    return ThresholdTable(Path(args.table) if args.table else default_path())


def cmd_fit(args) -> int:
    cfg = RunConfig.from_args(args)
    z = read_series(cfg.input)
    q = cfg.q
    if q is None:
        q = threshold(z.size, cfg.beta, cfg.alpha, cfg.reps, cfg.seed, _table(args))
    res = fit(z, cfg.beta, q, cfg.cost_rule, cfg.runs_mean_convention, alpha=cfg.alpha, box_engine=args.engine)
    if cfg.fmt == "json":
        body = {"format_version": FORMAT_VERSION, "command": "fit", **result_dict(res)}
        _emit(_json(body), cfg.out)
    else:
        rows = zip(range(1, z.size + 1), z, res.fit.evaluate(), res.band_lower, res.band_upper)
        _emit(_csv(["index", "z", "fit", "band_lower", "band_upper"], rows), cfg.out)
    return 0


def cmd_msb(args) -> int:
    cfg = RunConfig.from_args(args)
    z = read_series(cfg.input)
    box = msb_fit(z, cfg.alpha if cfg.alpha is not None else 0.1, _table(args), QUARTILES,
                  cfg.cost_rule, cfg.q, cfg.reps, cfg.seed)
    if cfg.fmt == "json":
        body = {
            "format_version": FORMAT_VERSION,
            "command": "msb",
            "alpha": box.alpha,
            "simultaneous_level": box.simultaneous_level,
            "fits": {repr(b): result_dict(r) for b, r in box.fits.items()},
            "merges": [
                {"betas": list(m.betas), "original": list(m.original), "merged": m.merged, "applied": list(m.applied)}
                for m in box.merges
            ],
        }
        _emit(_json(body), cfg.out)
    else:
        header, cols = ["index", "z"], [np.arange(1, z.size + 1), z]
        for b, r in box.fits.items():
            header += [f"fit_{b}", f"lower_{b}", f"upper_{b}"]
            cols += [r.fit.evaluate(), r.band_lower, r.band_upper]
        _emit(_csv(header, zip(*cols)), cfg.out)
    return 0


def cmd_simulate(args) -> int:
    store = _table(args)
    lines = []
    for a in args.alpha:
        q = table_get_or_simulate(store, ThresholdKey(args.n, args.beta, a, args.reps, args.seed), args.workers)
        lines.append(f"{a!r} {q!r}")
    _emit("\n".join(lines) + "\n", None)
    return 0


def cmd_bench(args) -> int:
    try:
        spec = scenario(args.scenario, args.seed)
    except KeyError as exc:
        raise UsageError(exc.args[0]) from None
    method = MethodConfig(args.beta, args.alpha, args.cost, args.q, args.threshold_reps, 0, args.runs_mean)
    summary = run_batch(spec, method, args.reps, store=_table(args))
    if args.out:
        write_summaries(args.out, [summary])
    else:
        row = summary.row()
        _emit(_csv(list(row), [list(row.values())]), None)
    return 0


def cmd_eval(args) -> int:
    est = StepFunction.from_array(read_series(Path(args.est)))
    truth = StepFunction.from_array(read_series(Path(args.truth)))
    if est.n != truth.n:
        raise UsageError(f"length mismatch: estimate has {est.n} values, truth has {truth.n}")
    vals = {"miae": miae(est, truth), "v_measure": v_measure(est, truth)}
    if args.format == "json":
        _emit(_json({"format_version": FORMAT_VERSION, "command": "eval", **vals}), args.out and Path(args.out))
    else:
        _emit(_csv(list(vals), [list(vals.values())]), args.out and Path(args.out))
    return 0


def _probability(text: str) -> float:
    x = float(text)
    if not 0.0 < x < 1.0:
        raise argparse.ArgumentTypeError(f"expected a value in (0, 1), got {text}")
    return x


def _positive(text: str) -> int:
    k = int(text)
    if k < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return k


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mqseg", description="Multiscale quantile segmentation.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def fitting(sp, quantile=True):
        sp.add_argument("--input", required=True, help="CSV with one observation per line")
        if quantile:
            sp.add_argument("--beta", type=_probability, default=0.5)
        level = sp.add_mutually_exclusive_group()
        level.add_argument("--alpha", type=_probability, help="test level (default 0.1)")
        level.add_argument("--q", type=float, help="explicit threshold; skips the table")
        sp.add_argument("--cost", choices=COST_RULES, default="koenker")
        sp.add_argument("--reps", type=_positive, default=DEFAULT_REPS, help="threshold simulation size")
        sp.add_argument("--seed", type=int, default=0, help="threshold simulation seed")
        sp.add_argument("--table", help="threshold table path (default: $MQSEG_THRESHOLD_PATH)")
        sp.add_argument("--format", choices=("json", "csv"), default="json")
        sp.add_argument("--out")

    sp = sub.add_parser("fit", help="segment one quantile")
    fitting(sp)
    sp.add_argument("--runs-mean", choices=RUNS_MEAN_CONVENTIONS, default="classical")
    sp.add_argument("--engine", choices=BOX_ENGINES, default="tree")
    sp.set_defaults(func=cmd_fit)

    sp = sub.add_parser("msb", help="joint quartile fits with merged changepoints")
    fitting(sp, quantile=False)
    sp.set_defaults(func=cmd_msb)

    sp = sub.add_parser("simulate", help="simulate thresholds into the table")
    sp.add_argument("--n", type=_positive, required=True)
    sp.add_argument("--beta", type=_probability, default=0.5)
    sp.add_argument("--alpha", type=_probability, nargs="+", default=[0.1])
    sp.add_argument("--reps", type=_positive, default=DEFAULT_REPS)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--workers", type=_positive, default=1)
    sp.add_argument("--table")
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("bench", help="Monte-Carlo batch on a named scenario")
    sp.add_argument("--scenario", required=True, help=f"one of: {', '.join(sorted(SCENARIOS))}")
    sp.add_argument("--beta", type=_probability, default=0.5)
    level = sp.add_mutually_exclusive_group()
    level.add_argument("--alpha", type=_probability, default=0.1)
    level.add_argument("--q", type=float)
    sp.add_argument("--cost", choices=COST_RULES, default="koenker")
    sp.add_argument("--runs-mean", choices=RUNS_MEAN_CONVENTIONS, default="classical")
    sp.add_argument("--reps", type=_positive, default=200)
    sp.add_argument("--threshold-reps", type=_positive, default=DEFAULT_REPS)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--table")
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_bench)

    sp = sub.add_parser("eval", help="MIAE and V-measure of an estimate against a truth")
    sp.add_argument("--est", required=True)
    sp.add_argument("--truth", required=True)
    sp.add_argument("--format", choices=("json", "csv"), default="json")
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_eval)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except (UsageError, ValueError) as exc:
        print(f"mqseg: error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"mqseg: error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001
        log.debug("internal failure", exc_info=True)
        print(f"mqseg: internal error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
