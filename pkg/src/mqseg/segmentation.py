"""Multiscale quantile segmentation: fitting, changepoint intervals and bands.

``fit`` returns the step function with the fewest segments that passes the
multiscale test at threshold ``q`` and, among those, the best one under the
chosen cost rule:

* ``"koenker"``: asymmetric absolute loss, minimized exactly;
* ``"runs"``: runs-based log density, maximized greedily over the last
  changepoint while carrying ones and run counts forward.

Every segment value is the segment's empirical beta-quantile clamped into the
range admitted by all boxes inside that segment.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from . import _engine
from .core import StepFunction, _values_of, as_series, check_beta, runs_count, transform
from .multiscale import multiscale_stat, rank_table, scan_stat

COST_RULES = ("koenker", "runs")
BOX_ENGINES = ("tree", "banks")
RUNS_MEAN_CONVENTIONS = ("classical", "shifted")
ORACLE_MAX_N = 20


def _check_rule(cost_rule: str) -> str:
    if cost_rule not in COST_RULES:
        raise ValueError(f"unknown cost rule {cost_rule!r}; expected one of {COST_RULES}")
    return cost_rule


def _check_convention(conv: str) -> str:
    if conv not in RUNS_MEAN_CONVENTIONS:
        raise ValueError(f"unknown runs mean convention {conv!r}; expected one of {RUNS_MEAN_CONVENTIONS}")
    return conv


def koenker_cost(z, f, beta: float) -> float:
    """Asymmetric absolute loss ``sum (z - f) (beta - 1{z < f})``."""
    z = as_series(z)
    beta = check_beta(beta)
    d = z.values - _values_of(f, z.n)
    return float(np.sum(d * (beta - (d < 0))))


def runs_log_density(r: int, k: int, n: int, beta: float, convention: str = "classical") -> float:
    """Log of the binomial weight times the normal approximation of the run count.

    ``k`` counts ones, ``n - k`` zeros and ``r`` runs.
    """
    beta = check_beta(beta)
    _check_convention(convention)
    if n < 1:
        raise ValueError("n must be positive")
    if not 0 <= k <= n:
        raise ValueError(f"ones count {k} outside 0..{n}")
    if not 1 <= r <= n:
        raise ValueError(f"run count {r} outside 1..{n}")
    return float(_engine.runs_logd(int(r), int(k), int(n), beta, convention == "classical"))


def runs_cost(z, f, beta: float, convention: str = "classical") -> float:
    w = transform(z, f)
    return runs_log_density(runs_count(w), int(w.sum()), w.size, beta, convention)


@dataclass(frozen=True, eq=False)
class SegmentationResult:
    fit: StepFunction
    s_hat: int
    cp_intervals: tuple[tuple[int, int], ...]
    band_lower: np.ndarray
    band_upper: np.ndarray
    q_used: float
    beta: float
    cost_rule: str
    cost: float
    segment_ranges: tuple[tuple[float, float], ...]
    runs_mean_convention: str = "classical"
    degenerate: bool = False
    alpha: float | None = field(default=None)

    @property
    def n(self) -> int:
        return self.fit.n

    @property
    def band(self) -> np.ndarray:
        return np.column_stack([self.band_lower, self.band_upper])

    def in_band(self, f) -> np.ndarray:
        """Per index: does ``f`` lie in ``[lower, upper)``?"""
        v = _values_of(f, self.n)
        return (self.band_lower <= v) & (v < self.band_upper)


def _nudge(values, lows, highs):
    """Separate equal neighbours by one ulp while staying inside each segment's range."""
    vals = list(values)
    for i in range(1, len(vals)):
        if vals[i] != vals[i - 1]:
            continue
        up = np.nextafter(vals[i], np.inf)
        down = np.nextafter(vals[i], -np.inf)
        nxt = vals[i + 1] if i + 1 < len(vals) else None
        if up < highs[i] and up != nxt:
            vals[i] = float(up)
        elif down >= lows[i] and down != nxt:
            vals[i] = float(down)
    return vals


def _empirical_quantile(x: np.ndarray, beta: float) -> float:
    return float(np.sort(x)[_engine.beta_rank(x.size, beta) - 1])


def _band(z, rlo, rhi, L0, R0, banks, pools):
    n = z.size
    S = len(L0) - 1
    lower = np.empty(n)
    upper = np.empty(n)
    off, end_lo, end_hi, fill, *heaps = pools
    F, G = [], []
    for g in range(S):
        a, e = L0[g], L0[g + 1] - 1
        f_lo, f_hi, _, _, *heaps = _engine.sweep(z, rlo, rhi, a, e, banks, off, end_lo, end_hi, fill, *heaps)
        F.append((f_lo, f_hi))
        lower[R0[g]:L0[g + 1]] = f_lo[R0[g] - a]
        upper[R0[g]:L0[g + 1]] = f_hi[R0[g] - a]
        if g < S - 1:
            a, e = R0[g], R0[g + 1] - 1
            _, _, g_lo, g_hi, *heaps = _engine.sweep(z, rlo, rhi, a, e, banks, off, end_lo, end_hi, fill, *heaps)
            G.append((g_lo, g_hi))
    for k in range(1, S):
        f_lo, f_hi = F[k]
        g_lo, g_hi = G[k - 1]
        L, R, a = L0[k], R0[k], R0[k - 1]
        # changepoint b in [L, R]: segment k starts at b, segment k - 1 ends at b - 1
        fl, fh = f_lo[:R - L + 1], f_hi[:R - L + 1]
        gl, gh = g_lo[L - 1 - a:R - a], g_hi[L - 1 - a:R - a]
        adm = (fl < fh) & (gl < gh)
        pre_lo = np.minimum.accumulate(np.where(adm, fl, np.inf))
        pre_hi = np.maximum.accumulate(np.where(adm, fh, -np.inf))
        suf_lo = np.minimum.accumulate(np.where(adm, gl, np.inf)[::-1])[::-1]
        suf_hi = np.maximum.accumulate(np.where(adm, gh, -np.inf)[::-1])[::-1]
        # index x = L + i takes F of b <= x and G of b > x
        lower[L:R] = np.minimum(pre_lo[:-1], suf_lo[1:])
        upper[L:R] = np.maximum(pre_hi[:-1], suf_hi[1:])
    return lower, upper


def fit(z, beta: float, q: float, cost_rule: str = "koenker",
        runs_mean_convention: str = "classical", alpha: float | None = None,
        box_engine: str = "tree") -> SegmentationResult:
    """Minimal-segment quantile fit passing the multiscale test at threshold ``q``.

    ``box_engine`` picks how box edges are tracked: a rank tree rebuilt per
    sweep (``"tree"``, O(n) memory) or banks of sliding double heaps per
    window length (``"banks"``, O(n^2) memory).  Both give identical results.
    """
    z = as_series(z)
    beta = check_beta(beta)
    _check_rule(cost_rule)
    _check_convention(runs_mean_convention)
    if box_engine not in BOX_ENGINES:
        raise ValueError(f"unknown box engine {box_engine!r}; expected one of {BOX_ENGINES}")
    banks = box_engine == "banks"
    q = float(q)
    if not math.isfinite(q):
        raise ValueError("q must be finite")
    n = z.n
    x = np.ascontiguousarray(z.values)
    rlo, rhi = rank_table(n, q, beta)
    if rlo[1] > rhi[1]:
        # single observations already fail: no step function passes
        value = _empirical_quantile(x, beta)
        f = StepFunction.constant(value, n)
        cost = koenker_cost(z, f, beta) if cost_rule == "koenker" else runs_cost(z, f, beta, runs_mean_convention)
        return SegmentationResult(
            f, 1, (), np.full(n, -np.inf), np.full(n, np.inf), q, beta, cost_rule, cost,
            ((-math.inf, math.inf),), runs_mean_convention, True, alpha,
        )
    rule = _engine.KOENKER if cost_rule == "koenker" else _engine.RUNS
    pools = _engine.new_pools(n if banks else 1)
    off, end_lo, end_hi, fill, *heaps = pools
    cnt, prev, val, _, seg_lo, seg_hi, first, last, low, *heaps = _engine.dp(
        x, beta, rlo, rhi, rule, runs_mean_convention == "classical", banks,
        off, end_lo, end_hi, fill, *heaps)
    S = int(cnt[n])
    starts, values, ranges = [], [], []
    p = n
    while p > 0:
        s = int(prev[p])
        starts.append(s)
        values.append(float(val[p]))
        ranges.append((float(seg_lo[p]), float(seg_hi[p])))
        p = s
    starts.reverse()
    values.reverse()
    ranges.reverse()
    values = _nudge(values, [r[0] for r in ranges], [r[1] for r in ranges])
    f = StepFunction((*[s + 1 for s in starts], n + 1), values)
    # 0-based start positions of segment k + 1 across all minimal fits
    R0 = [0] + [int(last[k]) for k in range(1, S)] + [n]
    L0 = [0] + [max(int(first[k]), int(low[last[k]])) for k in range(1, S)] + [n]
    lower, upper = _band(x, rlo, rhi, L0, R0, banks, (off, end_lo, end_hi, fill, *heaps))
    cps = tuple((L0[k] + 1, R0[k] + 1) for k in range(1, S))
    cost = koenker_cost(z, f, beta) if cost_rule == "koenker" else runs_cost(z, f, beta, runs_mean_convention)
    return SegmentationResult(
        f, S, cps, lower, upper, q, beta, cost_rule, cost, tuple(ranges),
        runs_mean_convention, False, alpha,
    )


def changepoint_intervals(result: SegmentationResult) -> list[tuple[float, float]]:
    """Changepoint index intervals mapped to time, ``[(L - 1) / n, (R - 1) / n]``."""
    n = result.n
    return [((lo - 1) / n, (hi - 1) / n) for lo, hi in result.cp_intervals]


def audit(z, result: SegmentationResult) -> float:
    """Exact multiscale statistic of the returned fit; must not exceed ``q_used``."""
    return multiscale_stat(z, result.fit, result.beta)


# brute-force reference --------------------------------------------------------


@dataclass(frozen=True)
class OracleResult:
    s_hat: int | None
    configs: tuple[tuple[int, ...], ...]
    min_koenker: float | None
    ranges: dict = field(repr=False, default_factory=dict)


def _accepted_counts(ell: int, n: int, q: float, beta: float) -> list[int]:
    return [c for c in range(ell + 1) if scan_stat(c, ell, n, beta) <= q]


def _interval_box(sorted_seg: np.ndarray, counts: list[int]):
    """Union of ``[Z_(c), Z_(c+1))`` over accepted counts, as one range (counts are contiguous)."""
    ell = sorted_seg.size
    if not counts:
        return math.inf, -math.inf
    lo_c, hi_c = min(counts), max(counts)
    lo = -math.inf if lo_c == 0 else float(sorted_seg[lo_c - 1])
    hi = math.inf if hi_c == ell else float(sorted_seg[hi_c])
    return lo, hi


def _koenker_min(seg: np.ndarray, lo: float, hi: float, beta: float) -> float:
    cands = [v for v in seg if lo <= v < hi]
    if math.isfinite(lo):
        cands.append(lo)
    if math.isfinite(hi):
        cands.append(float(np.nextafter(hi, -np.inf)))
    best = math.inf
    for t in cands:
        d = seg - t
        best = min(best, float(np.sum(d * (beta - (d < 0)))))
    return best


def brute_force_fit(z, beta: float, q: float) -> OracleResult:
    """Enumerate breakpoint sets for tiny series; returns every minimal feasible one."""
    z = as_series(z)
    beta = check_beta(beta)
    n = z.n
    if n > ORACLE_MAX_N:
        raise ValueError(f"brute force limited to n <= {ORACLE_MAX_N}, got {n}")
    x = z.values
    counts = {ell: _accepted_counts(ell, n, q, beta) for ell in range(1, n + 1)}
    box = {}
    for i in range(n):
        for j in range(i, n):
            box[i, j] = _interval_box(np.sort(x[i:j + 1]), counts[j - i + 1])
    rng = {}
    for i in range(n):
        for j in range(i, n):
            lo = max(box[a, b][0] for a in range(i, j + 1) for b in range(a, j + 1))
            hi = min(box[a, b][1] for a in range(i, j + 1) for b in range(a, j + 1))
            rng[i, j] = (lo, hi)

    def ok(i, j):
        lo, hi = rng[i, j]
        return lo < hi

    for S in range(1, n + 1):
        found = []
        for cuts in itertools.combinations(range(1, n), S - 1):
            bounds = (0, *cuts, n)
            if all(ok(a, b - 1) for a, b in zip(bounds, bounds[1:])):
                found.append(tuple(c + 1 for c in cuts))
        if found:
            losses = []
            for cps in found:
                bounds = (0, *[c - 1 for c in cps], n)
                losses.append(sum(_koenker_min(x[a:b], *rng[a, b - 1], beta) for a, b in zip(bounds, bounds[1:])))
            return OracleResult(S, tuple(found), min(losses), rng)
    return OracleResult(None, (), None, rng)
