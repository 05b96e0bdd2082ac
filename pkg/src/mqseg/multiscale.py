"""Local likelihood-ratio statistics, scale penalty and confidence boxes.

A constant value ``theta`` on the interval ``[i, j]`` of length ``ell`` is
accepted when ``sqrt(2 T) - P(ell, n) <= q`` where ``T`` is the Bernoulli
log-likelihood ratio of the pseudo-data ``1{Z_k <= theta}`` against level
``beta``.  Inverting that test in the count ``c = #{Z_k <= theta}`` gives a
contiguous rank range ``[m_lo, m_hi]`` and hence the half-open box
``[Z_(m_lo), Z_(m_hi + 1))``.  Rank 0 means an unbounded lower edge and
``m_hi = ell`` an unbounded upper edge.

Every accept/reject decision in the package goes through :func:`scan_stat`
so that the rank tables, the reference evaluator and the test oracles agree
bit for bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import xlogy

from .core import _values_of, as_series, check_beta, transform

BISECT_ITERS = 200
H_TOL = 1e-12


class InfeasibleScale(ValueError):
    """No constant value can pass the local test at this scale."""


def kl_bernoulli(x, beta: float):
    """Per-observation log-likelihood ratio ``h(x)``, with ``0 log 0 = 0``."""
    x = np.asarray(x, dtype=np.float64)
    out = xlogy(x, x / beta) + xlogy(1.0 - x, (1.0 - x) / (1.0 - beta))
    return out if out.ndim else float(out)


def local_llr(mean_w: float, ell: int, beta: float) -> float:
    if not 0.0 <= mean_w <= 1.0:
        raise ValueError(f"mean of binary data must lie in [0, 1], got {mean_w!r}")
    if ell < 1:
        raise ValueError("interval length must be positive")
    return float(ell * kl_bernoulli(mean_w, check_beta(beta)))


def _pen(ell, n):
    return np.sqrt(2.0 * np.log(np.e * n / np.asarray(ell, dtype=np.float64)))


@dataclass(frozen=True)
class Penalty:
    ell: int
    n: int
    value: float


def penalty(ell: int, n: int) -> Penalty:
    if not 1 <= ell <= n:
        raise ValueError(f"scale {ell} outside 1..{n}")
    return Penalty(int(ell), int(n), float(_pen(ell, n)))


def scan_stat(count, ell, n: int, beta: float):
    """Penalized root-LLR ``sqrt(2 T) - P`` for ``count`` ones among ``ell`` bits."""
    count = np.asarray(count, dtype=np.float64)
    ell = np.asarray(ell, dtype=np.float64)
    t = ell * kl_bernoulli(count / ell, beta)
    out = np.sqrt(2.0 * np.maximum(t, 0.0)) - _pen(ell, n)
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class LocalThresholdPair:
    lower: float
    upper: float


def _bisect(qt, beta, lo, hi, decreasing):
    """Vectorized bisection for ``h(x) = qt`` on a monotone branch."""
    lo = np.array(lo, dtype=np.float64)
    hi = np.array(hi, dtype=np.float64)
    for _ in range(BISECT_ITERS):
        mid = 0.5 * (lo + hi)
        above = kl_bernoulli(mid, beta) > qt
        # on the decreasing branch h > qt means the root lies to the right
        go_right = above if decreasing else ~above
        new_lo = np.where(go_right, mid, lo)
        new_hi = np.where(go_right, hi, mid)
        if np.array_equal(new_lo, lo) and np.array_equal(new_hi, hi):
            break
        lo, hi = new_lo, new_hi
    # pick whichever bracket end has the smaller residual
    rl = np.abs(kl_bernoulli(lo, beta) - qt)
    rh = np.abs(kl_bernoulli(hi, beta) - qt)
    return np.where(rl <= rh, lo, hi)


def _invert(qt, beta):
    qt = np.asarray(qt, dtype=np.float64)
    h0 = math.log(1.0 / (1.0 - beta))
    h1 = math.log(1.0 / beta)
    lower = _bisect(qt, beta, np.zeros_like(qt), np.full_like(qt, beta), True)
    upper = _bisect(qt, beta, np.full_like(qt, beta), np.ones_like(qt), False)
    lower = np.where(qt >= h0, 0.0, lower)
    upper = np.where(qt >= h1, 1.0, upper)
    lower = np.where(qt <= 0.0, beta, lower)
    upper = np.where(qt <= 0.0, beta, upper)
    return lower, upper


def invert_llr(q_tilde: float, beta: float, tol: float = H_TOL) -> LocalThresholdPair:
    """The two roots of ``h(x) = q_tilde`` around ``beta``, clamped to [0, 1]."""
    beta = check_beta(beta)
    if q_tilde < 0:
        raise ValueError("q_tilde must be nonnegative")
    lower, upper = _invert(q_tilde, beta)
    return LocalThresholdPair(float(lower), float(upper))


def _rank_bounds(ell: np.ndarray, n: int, q: float, beta: float):
    """Vectorized accepted-count ranges; ``ok`` is False for infeasible scales."""
    ell = np.asarray(ell, dtype=np.int64)
    reach = q + _pen(ell, n)
    ok = reach >= 0.0
    qt = np.where(ok, reach, 0.0) ** 2 / (2.0 * ell)
    lower, upper = _invert(qt, beta)
    lo = np.clip(np.ceil(ell * lower), 0, ell).astype(np.int64)
    hi = np.clip(np.floor(ell * upper), 0, ell).astype(np.int64)

    def accept(c):
        inside = (c >= 0) & (c <= ell)
        cc = np.clip(c, 0, ell)
        return inside & (scan_stat(cc, ell, n, beta) <= q)

    # repair rounding at the integer edges with the exact predicate
    for _ in range(4):
        step = accept(lo - 1) & (lo > 0)
        lo = lo - step
        if not step.any():
            break
    for _ in range(4):
        step = (lo <= hi) & ~accept(lo)
        lo = lo + step
        if not step.any():
            break
    for _ in range(4):
        step = accept(hi + 1) & (hi < ell)
        hi = hi + step
        if not step.any():
            break
    for _ in range(4):
        step = (hi >= lo) & ~accept(hi)
        hi = hi - step
        if not step.any():
            break
    return lo, hi, ok


def box_ranks(ell: int, n: int, q: float, beta: float) -> tuple[int, int]:
    """Accepted count range ``(m_lo, m_hi)`` for an interval of length ``ell``.

    ``m_lo > m_hi`` signals that no constant passes on this scale.  A
    negative reach ``q + P`` raises :class:`InfeasibleScale`.
    """
    beta = check_beta(beta)
    if not 1 <= ell <= n:
        raise ValueError(f"scale {ell} outside 1..{n}")
    if q + float(_pen(ell, n)) < 0:
        raise InfeasibleScale(f"q = {q} leaves no admissible value at scale {ell}")
    lo, hi, _ = _rank_bounds(np.array([ell]), n, q, beta)
    return int(lo[0]), int(hi[0])


def rank_table(n: int, q: float, beta: float):
    """``(m_lo, m_hi)`` for every scale ``1..n``, indexed by scale (entry 0 unused).

    Infeasible scales get ``m_lo = m_hi + 1``.  Tables are cached and read-only.
    """
    return _rank_table(int(n), float(q), check_beta(beta))


@lru_cache(maxsize=64)
def _rank_table(n: int, q: float, beta: float):
    ell = np.arange(1, n + 1)
    lo, hi, ok = _rank_bounds(ell, n, q, beta)
    lo = np.where(ok, lo, 1)
    hi = np.where(ok, hi, 0)
    lo = np.where(lo > hi, hi + 1, lo)
    lo = np.concatenate([[0], lo])
    hi = np.concatenate([[0], hi])
    lo.setflags(write=False)
    hi.setflags(write=False)
    return lo, hi


@dataclass(frozen=True)
class ConfidenceBox:
    """Half-open admissible range ``[lower_value, upper_value)``."""

    lower_value: float
    upper_value: float
    lower_rank: int
    upper_rank: int
    interval: tuple[int, int] | None = None

    @property
    def empty(self) -> bool:
        return not self.lower_value < self.upper_value

    def __contains__(self, theta: float) -> bool:
        return self.lower_value <= theta < self.upper_value


def confidence_box(z_segment, ranks: tuple[int, int], interval=None) -> ConfidenceBox:
    z = np.sort(np.asarray(z_segment, dtype=np.float64).ravel())
    ell = z.size
    m_lo, m_hi = int(ranks[0]), int(ranks[1])
    if m_lo < 0 or m_hi > ell:
        raise ValueError(f"ranks {ranks} invalid for {ell} observations")
    if m_lo > m_hi:
        # empty box, reported as a zero-width range so lower <= upper still holds
        edge = math.inf if m_lo > ell else float(z[max(m_lo, 1) - 1])
        return ConfidenceBox(edge, edge, m_lo, m_hi, interval)
    lower = -math.inf if m_lo == 0 else float(z[m_lo - 1])
    upper = math.inf if m_hi == ell else float(z[m_hi])
    return ConfidenceBox(lower, upper, m_lo, m_hi, interval)


def _segment_scan(w: np.ndarray, n: int, beta: float) -> float:
    ell = w.size
    cs = np.concatenate([[0], np.cumsum(w, dtype=np.int64)])
    best = -math.inf
    for length in range(1, ell + 1):
        counts = cs[length:] - cs[:-length]
        # the statistic is convex in the count, so the extremes suffice
        cands = np.array([counts.min(), counts.max()])
        best = max(best, float(np.max(scan_stat(cands, length, n, beta))))
    return best


def multiscale_stat(z, f, beta: float) -> float:
    """Max of the penalized root-LLR over every interval where ``f`` is constant."""
    z = as_series(z)
    beta = check_beta(beta)
    fv = _values_of(f, z.n)
    w = transform(z, fv)
    starts = np.concatenate([[0], np.flatnonzero(np.diff(fv) != 0) + 1, [z.n]])
    return max(_segment_scan(w[a:b], z.n, beta) for a, b in zip(starts, starts[1:]))


def multiscale_stat_exhaustive(z, f, beta: float) -> float:
    """Same statistic by visiting every interval; quadratic, for audits."""
    z = as_series(z)
    beta = check_beta(beta)
    fv = _values_of(f, z.n)
    w = transform(z, fv)
    starts = np.concatenate([[0], np.flatnonzero(np.diff(fv) != 0) + 1, [z.n]])
    best = -math.inf
    for a, b in zip(starts, starts[1:]):
        cs = np.concatenate([[0], np.cumsum(w[a:b], dtype=np.int64)])
        for i in range(b - a):
            ell = np.arange(1, b - a - i + 1)
            counts = cs[i + ell] - cs[i]
            best = max(best, float(np.max(scan_stat(counts, ell, z.n, beta))))
    return best


def boxes_accept(z, f, beta: float, q: float) -> bool:
    """Membership test through the confidence boxes of every within-segment interval."""
    z = as_series(z)
    beta = check_beta(beta)
    fv = _values_of(f, z.n)
    lo_tab, hi_tab = rank_table(z.n, q, beta)
    starts = np.concatenate([[0], np.flatnonzero(np.diff(fv) != 0) + 1, [z.n]])
    for a, b in zip(starts, starts[1:]):
        theta = fv[a]
        for i in range(a, b):
            for j in range(i, b):
                ell = j - i + 1
                box = confidence_box(z.values[i:j + 1], (lo_tab[ell], hi_tab[ell]))
                if theta not in box:
                    return False
    return True
