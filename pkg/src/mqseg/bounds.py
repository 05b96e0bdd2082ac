"""Finite-sample error bounds and the signal characteristics they depend on.

All probability bounds are clamped to ``[0, 1]``; a clamped value at 1 means
the bound carries no information for that configuration.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .core import StepFunction, check_beta

FAMILIES = ("normal", "student_t", "cauchy", "chi_square_centered", "empirical")


@dataclass(frozen=True, eq=False)
class DistributionSpec:
    """A distribution with an evaluable cdf.

    ``params`` by family: normal ``(mu, sigma)``, student_t ``(nu, scale)``,
    cauchy ``(loc, scale)``, chi_square_centered ``(nu, scale)`` (chi-square
    shifted by its median, then scaled) and empirical ``(samples,)``.
    """

    family: str
    params: tuple

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}; expected one of {FAMILIES}")
        if self.family == "empirical":
            xs = np.sort(np.asarray(self.params[0], dtype=np.float64).ravel())
            if xs.size == 0:
                raise ValueError("empirical distribution needs samples")
            object.__setattr__(self, "params", (xs,))

    @classmethod
    def normal(cls, mu: float = 0.0, sigma: float = 1.0):
        return cls("normal", (mu, sigma))

    @classmethod
    def empirical(cls, samples):
        return cls("empirical", (samples,))

    def _frozen(self):
        p = self.params
        if self.family == "normal":
            return stats.norm(loc=p[0], scale=p[1])
        if self.family == "student_t":
            return stats.t(df=p[0], scale=p[1])
        if self.family == "cauchy":
            return stats.cauchy(loc=p[0], scale=p[1])
        nu, scale = p
        med = stats.chi2(nu).median()
        return stats.chi2(nu, loc=-med * scale, scale=scale)

    def cdf(self, x):
        if self.family == "empirical":
            xs = self.params[0]
            # right-continuous step cdf
            return np.searchsorted(xs, x, side="right") / xs.size
        return self._frozen().cdf(x)

    def quantile(self, beta: float) -> float:
        """``inf {t : F(t) >= beta}``."""
        beta = check_beta(beta)
        if self.family == "empirical":
            xs = self.params[0]
            return float(xs[max(math.ceil(beta * xs.size - 1e-9), 1) - 1])
        return float(self._frozen().ppf(beta))


def quantile_jump(F: DistributionSpec, beta: float, delta: float) -> float:
    """How far the cdf moves off ``beta`` when the quantile shifts by ``delta``."""
    beta = check_beta(beta)
    if math.isinf(delta):
        return 1.0 - beta if delta > 0 else beta
    theta = F.quantile(beta)
    return float(abs(F.cdf(theta + delta) - beta))


@dataclass(frozen=True)
class SignalCharacteristics:
    Lambda: float
    Xi: float | None
    lambdas: tuple[float, ...]
    xis: tuple[float, ...]
    deltas: tuple[float, ...]


def signal_characteristics(f: StepFunction, F_min: DistributionSpec, F_max: DistributionSpec,
                           beta: float) -> SignalCharacteristics:
    """Minimal segment length, per-jump quantile jumps and their minimum.

    ``lambdas[s]`` is the shorter of the two segments next to jump ``s``.
    """
    beta = check_beta(beta)
    n = f.n
    lengths = np.diff(f.breakpoints) / n
    Lam = float(lengths.min())
    deltas = tuple(float(b - a) for a, b in zip(f.values, f.values[1:]))
    lambdas = tuple(float(min(a, b)) for a, b in zip(lengths, lengths[1:]))
    xis = tuple(min(quantile_jump(F_min, beta, -d), quantile_jump(F_max, beta, d)) for d in deltas)
    return SignalCharacteristics(Lam, min(xis) if xis else None, lambdas, xis, deltas)


def _prob(x: float) -> float:
    return min(1.0, max(0.0, x))


def over_bound(alpha: float, s: int) -> float:
    """Bound on overestimating the segment count by more than ``s``."""
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    if s < 0:
        raise ValueError("s must be nonnegative")
    return alpha ** (s // 2 + 1)


def _exp_bound(n, S, width, Xi, q):
    if S <= 1:
        return 0.0
    arg = 2.0 * math.sqrt(n * width) * Xi * (q / math.sqrt(2.0) + math.sqrt(math.log(2.0 * math.e / width)))
    # log of 4 (S - 1) exp(-n w Xi^2) (exp(arg) + 1), kept finite for large arguments
    log_val = math.log(4.0 * (S - 1)) - n * width * Xi ** 2 + float(np.logaddexp(arg, 0.0))
    return 1.0 if log_val >= 0.0 else math.exp(log_val)


def under_bound(n: int, S: int, Lambda: float, Xi: float, q: float) -> float:
    """Bound on the probability of missing at least one segment."""
    return _exp_bound(n, S, Lambda, Xi, q)


def location_rate_bound(n: int, S: int, Xi: float, q: float, eps: float) -> float:
    """Bound on some changepoint being estimated more than ``eps`` away."""
    if not 0.0 < eps <= 1.0:
        raise ValueError("eps must lie in (0, 1]")
    return _exp_bound(n, S, eps, Xi, q)


def gamma_ns(n: int, lambda_s: float, xi_s: float, q: float) -> float:
    """Per-jump detection probability lower bound."""
    inner = max(math.sqrt(2.0 * n * lambda_s) * xi_s - q - math.sqrt(2.0 * math.log(2.0 * math.e / lambda_s)), 0.0)
    base = 1.0 - 2.0 * math.exp(-inner ** 2 / 2.0) - 2.0 * math.exp(-n * lambda_s * xi_s ** 2)
    return _prob(max(base, 0.0) ** 2)
