"""Monte-Carlo calibration of the multiscale test and a persisted threshold table.

Under the null every pseudo-observation is Bernoulli(beta), so the
distribution of the multiscale statistic ``M_n`` depends only on ``n`` and
``beta``.  Replicate ``k`` of a run with master seed ``s`` draws its bits from
``Philox(SeedSequence(s, spawn_key=(k,)))``, so samples do not depend on how
replicates are split across workers.
"""

from __future__ import annotations

import math
import os
import tempfile
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numba import njit

from .core import check_beta
from .multiscale import scan_stat

HEADER = "mqseg-thresholds v1"
DEFAULT_REPS = 5000
ENV_PATH = "MQSEG_THRESHOLD_PATH"
_CHUNK = 256


def check_alpha(alpha: float) -> float:
    alpha = float(alpha)
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha!r}")
    return alpha


@njit(cache=True, nogil=True)
def _extreme_counts(bits, lo, hi):
    """Per replicate and window length: smallest and largest window count."""
    reps, n = bits.shape
    cs = np.zeros(n + 1, dtype=np.int64)
    for k in range(reps):
        for t in range(n):
            cs[t + 1] = cs[t] + bits[k, t]
        for ell in range(1, n + 1):
            mn = n + 1
            mx = -1
            for i in range(n - ell + 1):
                c = cs[i + ell] - cs[i]
                if c < mn:
                    mn = c
                if c > mx:
                    mx = c
            lo[k, ell - 1] = mn
            hi[k, ell - 1] = mx


def _replicate_bits(n: int, beta: float, seed: int, reps: range) -> np.ndarray:
    out = np.empty((len(reps), n), dtype=np.int8)
    for row, k in enumerate(reps):
        gen = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(k,))))
        out[row] = gen.random(n) < beta
    return out


def _chunk_stats(n: int, beta: float, seed: int, reps: range) -> np.ndarray:
    bits = _replicate_bits(n, beta, seed, reps)
    lo = np.empty((len(reps), n), dtype=np.int64)
    hi = np.empty((len(reps), n), dtype=np.int64)
    _extreme_counts(bits, lo, hi)
    ell = np.arange(1, n + 1)
    # the statistic is convex in the count, so window extremes give the max
    return np.maximum(scan_stat(lo, ell, n, beta), scan_stat(hi, ell, n, beta)).max(axis=1)


@dataclass(frozen=True, eq=False)
class NullSample:
    values: np.ndarray
    n: int
    beta: float
    reps: int
    seed: int


def simulate_Mn(n: int, beta: float, reps: int = DEFAULT_REPS, seed: int = 0,
                workers: int = 1) -> NullSample:
    """Draw ``reps`` copies of the null multiscale statistic for series length ``n``."""
    beta = check_beta(beta)
    if n < 1:
        raise ValueError("n must be positive")
    if reps < 1:
        raise ValueError("reps must be positive")
    chunks = [range(a, min(a + _CHUNK, reps)) for a in range(0, reps, _CHUNK)]
    if workers > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            parts = list(ex.map(lambda r: _chunk_stats(n, beta, seed, r), chunks))
    else:
        parts = [_chunk_stats(n, beta, seed, r) for r in chunks]
    vals = np.concatenate(parts)
    vals.setflags(write=False)
    return NullSample(vals, int(n), beta, int(reps), int(seed))


def quantile_of(sample: NullSample | np.ndarray, alpha: float) -> float:
    """Smallest sample value whose empirical cdf reaches ``1 - alpha``."""
    alpha = check_alpha(alpha)
    vals = np.sort(np.asarray(getattr(sample, "values", sample), dtype=np.float64))
    if vals.size == 0:
        raise ValueError("empty sample")
    x = (1.0 - alpha) * vals.size
    k = math.floor(x)
    if x - k > 1e-9 * max(1.0, x):
        k += 1
    return float(vals[max(k, 1) - 1])


@dataclass(frozen=True, order=True)
class ThresholdKey:
    n: int
    beta: float
    alpha: float
    reps: int = DEFAULT_REPS
    seed: int = 0

    def fields(self) -> tuple:
        return (int(self.n), float(self.beta), float(self.alpha), int(self.reps), int(self.seed))


def default_path() -> Path:
    env = os.environ.get(ENV_PATH)
    if env:
        return Path(env)
    return Path.home() / ".cache" / "mqseg" / "thresholds.txt"


@dataclass
class ThresholdTable:
    """Cached quantiles keyed by ``(n, beta, alpha, reps, seed)``.

    With a ``path`` the table loads on creation and rewrites the whole file
    on every insert.
    """

    path: Path | None = None
    entries: dict = field(default_factory=dict)
    _samples: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if self.path is not None:
            self.path = Path(self.path)
            if self.path.exists():
                self.entries.update(read_table(self.path))

    def get(self, key: ThresholdKey) -> float | None:
        return self.entries.get(key.fields())

    def put(self, key: ThresholdKey, q: float) -> None:
        self.entries[key.fields()] = float(q)
        if self.path is not None:
            write_table(self.path, self.entries)

    def __len__(self) -> int:
        return len(self.entries)


def read_table(path) -> dict:
    path = Path(path)
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise OSError(f"cannot read threshold table {path}: {exc}") from exc
    if not lines or lines[0].strip() != HEADER:
        raise OSError(f"{path}: missing header {HEADER!r}")
    out = {}
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split()
        try:
            if len(parts) != 6:
                raise ValueError(f"expected 6 fields, got {len(parts)}")
            n, beta, alpha, reps, seed, q = parts
            key = (int(n), float(beta), float(alpha), int(reps), int(seed))
            out[key] = float(q)
        except ValueError as exc:
            raise OSError(f"{path}:{lineno}: corrupt entry ({exc})") from exc
    return out


def write_table(path, entries: dict) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    body = [HEADER]
    for (n, beta, alpha, reps, seed), q in sorted(entries.items()):
        body.append(f"{n} {beta!r} {alpha!r} {reps} {seed} {q!r}")
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    with os.fdopen(fd, "w", encoding="utf-8") as fh:
        fh.write("\n".join(body) + "\n")
    os.replace(tmp, path)


def table_get_or_simulate(store: ThresholdTable, key: ThresholdKey, workers: int = 1) -> float:
    cached = store.get(key)
    if cached is not None:
        return cached
    skey = (int(key.n), float(key.beta), int(key.reps), int(key.seed))
    sample = store._samples.get(skey)
    if sample is None:
        sample = simulate_Mn(key.n, key.beta, key.reps, key.seed, workers=workers)
        store._samples[skey] = sample
    q = quantile_of(sample, key.alpha)
    store.put(key, q)
    return q


def threshold(n: int, beta: float, alpha: float, reps: int = DEFAULT_REPS, seed: int = 0,
              store: ThresholdTable | None = None) -> float:
    """``q_n(alpha)`` from ``store`` (default: the on-disk table), simulating on a miss."""
    if store is None:
        store = ThresholdTable(default_path())
    return table_get_or_simulate(store, ThresholdKey(int(n), check_beta(beta), check_alpha(alpha), int(reps), int(seed)))
