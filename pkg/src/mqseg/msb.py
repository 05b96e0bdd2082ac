"""Multiscale segment boxplot: joint quartile fits with shared changepoints.

Each quantile is fitted at level ``alpha``, so all three hold simultaneously
at level ``1 - 3 alpha``.  Changepoints of different quantiles whose
confidence intervals overlap are moved to one common index inside the
overlap, provided every quantile's fit stays feasible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from . import _engine
from .core import StepFunction, as_series
from .multiscale import rank_table
from .segmentation import SegmentationResult, _nudge, fit, koenker_cost, runs_cost
from .threshold import ThresholdTable, threshold

QUARTILES = (0.25, 0.5, 0.75)


@dataclass(frozen=True)
class MergeRecord:
    betas: tuple[float, ...]
    original: tuple[int, ...]
    merged: int
    applied: tuple[bool, ...]


@dataclass(frozen=True, eq=False)
class BoxplotResult:
    fits: dict
    merges: tuple[MergeRecord, ...]
    alpha: float | None
    simultaneous_level: float | None

    def __getitem__(self, beta: float) -> SegmentationResult:
        return self.fits[beta]


def segment_range(x: np.ndarray, first: int, last: int, rlo, rhi) -> tuple[float, float]:
    """Values admitted by every box inside positions ``first..last`` (0-based)."""
    pools = _engine.new_pools(1)
    off, end_lo, end_hi, fill, *heaps = pools
    f_lo, f_hi, *_ = _engine.sweep(x, rlo, rhi, first, last, False, off, end_lo, end_hi, fill, *heaps)
    return float(f_lo[0]), float(f_hi[0])


def _refit(x, res: SegmentationResult, cps: tuple[int, ...]):
    """Segment values for changepoints ``cps``; ``None`` if some segment is infeasible."""
    n = x.size
    rlo, rhi = rank_table(n, res.q_used, res.beta)
    bounds = (1, *cps, n + 1)
    vals, ranges = [], []
    for a, b in zip(bounds, bounds[1:]):
        lo, hi = segment_range(x, a - 1, b - 2, rlo, rhi)
        if not lo < hi:
            return None
        seg = np.sort(x[a - 1:b - 1])
        v = float(seg[_engine.beta_rank(seg.size, res.beta) - 1])
        vals.append(float(_engine._clamp(v, lo, hi)))
        ranges.append((lo, hi))
    vals = _nudge(vals, [r[0] for r in ranges], [r[1] for r in ranges])
    return StepFunction(bounds, vals), tuple(ranges)


def _common_index(cps, lo, hi):
    m = math.floor(sum(cps) / len(cps) + 0.5)
    return min(max(m, lo), hi)


def merge_fits(z, fits: dict) -> tuple[dict, tuple[MergeRecord, ...]]:
    """Merge overlapping changepoints across quantile fits, left to right."""
    x = np.ascontiguousarray(as_series(z).values)
    betas = sorted(fits)
    cur = {b: list(fits[b].fit.changepoints) for b in betas}
    todo = sorted(
        (fits[b].cp_intervals[k][0], fits[b].fit.changepoints[k], b, k)
        for b in betas for k in range(len(fits[b].cp_intervals))
    )
    done = set()
    log = []
    for L, c, b, k in todo:
        if (b, k) in done:
            continue
        group = [(b, k)]
        lo, hi = fits[b].cp_intervals[k]
        for other in betas:
            if other == b:
                continue
            cands = [
                (abs(fits[other].fit.changepoints[j] - c), j)
                for j, (l2, r2) in enumerate(fits[other].cp_intervals)
                if (other, j) not in done and max(lo, l2) <= min(hi, r2)
            ]
            if cands:
                j = min(cands)[1]
                group.append((other, j))
                l2, r2 = fits[other].cp_intervals[j]
                lo, hi = max(lo, l2), min(hi, r2)
        done.update(group)
        if len(group) == 1:
            continue
        orig = tuple(fits[g].fit.changepoints[j] for g, j in group)
        m = _common_index(orig, lo, hi)
        trial = {g: list(cur[g]) for g, _ in group}
        for g, j in group:
            trial[g][j] = m
        # a quantile whose fit would become infeasible keeps its own changepoint
        applied = tuple(_refit(x, fits[g], tuple(trial[g])) is not None for g, _ in group)
        for (g, _), ok in zip(group, applied):
            if ok:
                cur[g] = trial[g]
        log.append(MergeRecord(tuple(g for g, _ in group), orig, m, applied))
    out = {}
    for b in betas:
        res = fits[b]
        if tuple(cur[b]) == res.fit.changepoints:
            out[b] = res
            continue
        f, ranges = _refit(x, res, tuple(cur[b]))
        cost = (koenker_cost(x, f, b) if res.cost_rule == "koenker"
                else runs_cost(x, f, b, res.runs_mean_convention))
        out[b] = replace(res, fit=f, segment_ranges=ranges, cost=cost)
    return out, tuple(log)


def msb_fit(z, alpha: float = 0.05, thresholds: ThresholdTable | None = None,
            betas=QUARTILES, cost_rule: str = "koenker", q: dict | float | None = None,
            reps: int = 5000, seed: int = 0) -> BoxplotResult:
    """Fit each quantile in ``betas`` and merge their changepoints.

    ``q`` overrides the simulated thresholds, either one value for all
    quantiles or a mapping from quantile level to threshold.
    """
    z = as_series(z)
    fits = {}
    for b in betas:
        if q is None:
            qb = threshold(z.n, b, alpha, reps, seed, thresholds)
        else:
            qb = q[b] if isinstance(q, dict) else float(q)
        fits[b] = fit(z, b, qb, cost_rule, alpha=alpha if q is None else None)
    merged, log = merge_fits(z, fits)
    level = None if q is not None else 1.0 - len(betas) * alpha
    return BoxplotResult(merged, log, None if q is not None else alpha, level)
