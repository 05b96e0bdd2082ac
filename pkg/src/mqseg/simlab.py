"""Synthetic scenarios, evaluation metrics and Monte-Carlo batches."""

from __future__ import annotations

import csv
import math
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import stats

from .core import Series, StepFunction
from .segmentation import fit
from .threshold import ThresholdTable, threshold

# median of the chi-square distribution with 3 degrees of freedom
CHI3_MEDIAN = 2.365973884375338

NOISE_FAMILIES = ("normal", "student_t3_scaled", "cauchy_scaled", "chi3_centered")


def substream(seed: int, rep: int = 0) -> np.random.Generator:
    """Independent generator for replicate ``rep`` of master ``seed``."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed), spawn_key=(int(rep),))))


@dataclass(frozen=True)
class NoiseSpec:
    """i.i.d. errors; ``scale`` is the variance for every family except Cauchy,
    where it is the scale factor ``c``."""

    family: str = "normal"
    scale: float = 1.0

    def __post_init__(self):
        if self.family not in NOISE_FAMILIES:
            raise ValueError(f"unknown noise family {self.family!r}; expected one of {NOISE_FAMILIES}")
        if not self.scale > 0:
            raise ValueError("noise scale must be positive")

    def draw(self, rng: np.random.Generator, n: int) -> np.ndarray:
        if self.family == "normal":
            return rng.normal(0.0, math.sqrt(self.scale), n)
        if self.family == "student_t3_scaled":
            return rng.standard_t(3, n) * math.sqrt(self.scale) / math.sqrt(3.0)
        if self.family == "cauchy_scaled":
            return rng.standard_cauchy(n) * self.scale
        return (rng.chisquare(3, n) - CHI3_MEDIAN) * math.sqrt(self.scale) / math.sqrt(6.0)

    def quantile(self, beta: float) -> float:
        if self.family == "normal":
            return float(stats.norm.ppf(beta) * math.sqrt(self.scale))
        if self.family == "student_t3_scaled":
            return float(stats.t.ppf(beta, 3) * math.sqrt(self.scale) / math.sqrt(3.0))
        if self.family == "cauchy_scaled":
            return float(stats.cauchy.ppf(beta) * self.scale)
        return float((stats.chi2.ppf(beta, 3) - CHI3_MEDIAN) * math.sqrt(self.scale) / math.sqrt(6.0))


@dataclass(frozen=True)
class AR1Spec:
    """Stationary AR(1) errors with unit marginal variance."""

    theta: float = 0.0

    def __post_init__(self):
        if not abs(self.theta) < 1:
            raise ValueError("AR(1) coefficient must satisfy |theta| < 1")

    def draw_raw(self, rng: np.random.Generator, n: int) -> np.ndarray:
        eps = rng.standard_normal(n)
        x = np.empty(n)
        # start in the stationary law so that every X_i has variance 1 / (1 - theta^2)
        x[0] = eps[0] / math.sqrt(1.0 - self.theta ** 2)
        for i in range(1, n):
            x[i] = self.theta * x[i - 1] + eps[i]
        return x

    def draw(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return math.sqrt(1.0 - self.theta ** 2) * self.draw_raw(rng, n)

    def quantile(self, beta: float) -> float:
        return float(stats.norm.ppf(beta))


@dataclass(frozen=True)
class ScenarioSpec:
    signal: StepFunction
    noise: NoiseSpec | AR1Spec = field(default_factory=NoiseSpec)
    seed: int = 0
    name: str = "custom"

    @property
    def n(self) -> int:
        return self.signal.n

    def truth(self, beta: float) -> StepFunction:
        """The beta-quantile function of the observations."""
        return self.signal.shift(self.noise.quantile(beta))


def gen_additive(spec: ScenarioSpec, rep: int = 0) -> Series:
    if not isinstance(spec.noise, NoiseSpec):
        raise TypeError("gen_additive needs i.i.d. noise")
    rng = substream(spec.seed, rep)
    return Series(spec.signal.evaluate() + spec.noise.draw(rng, spec.n))


def gen_ar1(spec: ScenarioSpec, rep: int = 0) -> Series:
    if not isinstance(spec.noise, AR1Spec):
        raise TypeError("gen_ar1 needs AR(1) noise")
    rng = substream(spec.seed, rep)
    return Series(spec.signal.evaluate() + spec.noise.draw(rng, spec.n))


def generate(spec: ScenarioSpec, rep: int = 0) -> Series:
    return gen_ar1(spec, rep) if isinstance(spec.noise, AR1Spec) else gen_additive(spec, rep)


def bump500() -> StepFunction:
    return StepFunction((1, 126, 376, 501), (0.0, 1.0, 0.0))


def bump700() -> StepFunction:
    return StepFunction((1, 301, 401, 701), (0.0, 1.0, 0.0))


def constant_signal(n: int, value: float = 0.0) -> StepFunction:
    return StepFunction.constant(value, n)


def alternating_signal(n: int, jumps: int, height: float = 3.0) -> StepFunction:
    """Equally spaced jumps between 0 and ``height``."""
    bps = np.unique(np.linspace(1, n + 1, jumps + 2).round().astype(int))
    vals = [height * (s % 2) for s in range(bps.size - 1)]
    return StepFunction(bps, vals)


SCENARIOS = {
    "bump500": lambda: ScenarioSpec(bump500(), NoiseSpec("normal", 1.0), name="bump500"),
    "bump500_t3": lambda: ScenarioSpec(bump500(), NoiseSpec("student_t3_scaled", 0.04), name="bump500_t3"),
    "bump500_cauchy": lambda: ScenarioSpec(bump500(), NoiseSpec("cauchy_scaled", 0.02), name="bump500_cauchy"),
    "bump500_chi3": lambda: ScenarioSpec(bump500(), NoiseSpec("chi3_centered", 0.04), name="bump500_chi3"),
    "bump500_ar1": lambda: ScenarioSpec(bump500(), AR1Spec(0.3), name="bump500_ar1"),
    "bump700": lambda: ScenarioSpec(bump700(), NoiseSpec("normal", 1.0), name="bump700"),
    "constant500": lambda: ScenarioSpec(constant_signal(500), NoiseSpec("normal", 1.0), name="constant500"),
}


def scenario(name: str, seed: int = 0) -> ScenarioSpec:
    if name not in SCENARIOS:
        raise KeyError(f"unknown scenario {name!r}; valid: {', '.join(sorted(SCENARIOS))}")
    spec = SCENARIOS[name]()
    return ScenarioSpec(spec.signal, spec.noise, seed, spec.name)


def miae(est: StepFunction, truth: StepFunction, n: int | None = None) -> float:
    """Mean absolute difference of two step functions over indices ``1..n``."""
    n = truth.n if n is None else n
    if est.n != n or truth.n != n:
        raise ValueError("both functions must cover indices 1..n")
    return float(np.mean(np.abs(est.evaluate() - truth.evaluate())))


def _entropy(counts: np.ndarray) -> float:
    p = counts[counts > 0] / counts.sum()
    return float(-np.sum(p * np.log(p)))


def v_measure(est: StepFunction, truth: StepFunction, n: int | None = None) -> float:
    """Harmonic mean of homogeneity and completeness (natural log)."""
    n = truth.n if n is None else n
    if est.n != n or truth.n != n:
        raise ValueError("both functions must cover indices 1..n")
    classes = truth.segment_labels()
    clusters = est.segment_labels()
    table = np.zeros((classes.max() + 1, clusters.max() + 1))
    np.add.at(table, (classes, clusters), 1)
    h_c = _entropy(table.sum(axis=1))
    h_k = _entropy(table.sum(axis=0))
    h_joint = _entropy(table.ravel())
    # H(C|K) = H(C, K) - H(K) and vice versa
    homogeneity = 1.0 if h_c == 0 else 1.0 - (h_joint - h_k) / h_c
    completeness = 1.0 if h_k == 0 else 1.0 - (h_joint - h_c) / h_k
    if homogeneity + completeness == 0:
        return 0.0
    return float(2 * homogeneity * completeness / (homogeneity + completeness))


@dataclass(frozen=True)
class MethodConfig:
    beta: float = 0.5
    alpha: float = 0.1
    cost_rule: str = "koenker"
    q: float | None = None
    threshold_reps: int = 5000
    threshold_seed: int = 0
    runs_mean_convention: str = "classical"

    def label(self) -> str:
        return f"mqs-{self.cost_rule}"


@dataclass(frozen=True)
class Replicate:
    s_hat: int
    miae: float
    v: float
    ci_cover: bool
    band_cover: bool


@dataclass(frozen=True)
class BatchSummary:
    scenario: str
    method: str
    beta: float
    alpha: float | None
    q: float
    reps: int
    true_segments: int
    seg_counts: dict
    mean_miae: float
    mean_v: float
    ci_coverage: float
    band_coverage: float

    def freq(self, s: int) -> float:
        return self.seg_counts.get(s, 0) / self.reps

    def p_over(self, s: int | None = None) -> float:
        s = self.true_segments if s is None else s
        return sum(c for k, c in self.seg_counts.items() if k > s) / self.reps

    def row(self) -> dict:
        S = self.true_segments
        return {
            "scenario": self.scenario,
            "method": self.method,
            "beta": self.beta,
            "alpha": "" if self.alpha is None else self.alpha,
            "q": self.q,
            "reps": self.reps,
            "p_under": sum(c for k, c in self.seg_counts.items() if k < S) / self.reps,
            "p_exact": self.freq(S),
            "p_over": self.p_over(),
            "seg_freqs": ";".join(f"{k}:{self.seg_counts[k]}" for k in sorted(self.seg_counts)),
            "mean_miae": self.mean_miae,
            "mean_v": self.mean_v,
            "ci_coverage": self.ci_coverage,
            "band_coverage": self.band_coverage,
        }


def evaluate_replicate(spec: ScenarioSpec, method: MethodConfig, q: float, rep: int) -> Replicate:
    z = generate(spec, rep)
    res = fit(z, method.beta, q, method.cost_rule, method.runs_mean_convention)
    truth = spec.truth(method.beta)
    ci_cover = band_cover = False
    if res.s_hat == truth.n_segments:
        ci_cover = all(lo <= b <= hi for (lo, hi), b in zip(res.cp_intervals, truth.changepoints))
        band_cover = bool(res.in_band(truth).all())
    return Replicate(res.s_hat, miae(res.fit, truth), v_measure(res.fit, truth), ci_cover, band_cover)


def run_batch(spec: ScenarioSpec, method: MethodConfig, reps: int, seed: int | None = None,
              store: ThresholdTable | None = None) -> BatchSummary:
    """Fit ``reps`` independent draws of ``spec`` and aggregate in replicate order."""
    if reps < 1:
        raise ValueError("reps must be positive")
    if seed is not None:
        spec = ScenarioSpec(spec.signal, spec.noise, seed, spec.name)
    q = method.q
    if q is None:
        q = threshold(spec.n, method.beta, method.alpha, method.threshold_reps, method.threshold_seed, store)
    out = [evaluate_replicate(spec, method, q, k) for k in range(reps)]
    S = spec.signal.n_segments
    exact = [r for r in out if r.s_hat == S]
    return BatchSummary(
        spec.name, method.label(), method.beta, None if method.q is not None else method.alpha, float(q),
        reps, S, dict(Counter(r.s_hat for r in out)),
        float(np.mean([r.miae for r in out])), float(np.mean([r.v for r in out])),
        float(np.mean([r.ci_cover for r in exact])) if exact else math.nan,
        float(np.mean([r.band_cover for r in exact])) if exact else math.nan,
    )


def write_summaries(path, summaries) -> None:
    rows = [s.row() for s in summaries]
    with open(Path(path), "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]))
        w.writeheader()
        w.writerows(rows)
