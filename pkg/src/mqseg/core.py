"""Domain types shared by every module and the binary pseudo-data transform.

Indices are 1-based in every public interface.  Observation ``i`` sits at
the design point ``x_i = (i - 1) / n``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np


def check_beta(beta: float) -> float:
    beta = float(beta)
    if not 0.0 < beta < 1.0:
        raise ValueError(f"quantile level must lie in (0, 1), got {beta!r}")
    return beta


def _frozen(values, dtype=np.float64) -> np.ndarray:
    arr = np.array(values, dtype=dtype)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Series:
    """Ordered finite observations ``Z_1, ..., Z_n``."""

    values: np.ndarray

    def __init__(self, values: Sequence[float] | np.ndarray):
        arr = np.asarray(values, dtype=np.float64).ravel()
        if arr.size == 0:
            raise ValueError("a series needs at least one observation")
        if not np.all(np.isfinite(arr)):
            bad = int(np.flatnonzero(~np.isfinite(arr))[0]) + 1
            raise ValueError(f"non-finite observation at index {bad}")
        object.__setattr__(self, "values", _frozen(arr))

    @property
    def n(self) -> int:
        return int(self.values.size)

    def __len__(self) -> int:
        return self.n

    def design_points(self) -> np.ndarray:
        return np.arange(self.n) / self.n


def as_series(z) -> Series:
    return z if isinstance(z, Series) else Series(z)


@dataclass(frozen=True, eq=False)
class StepFunction:
    """Right-continuous piecewise-constant function on indices ``1..n``.

    ``breakpoints`` is ``(1, b_1, ..., b_{S-1}, n + 1)``; segment ``s`` covers
    indices ``[b_{s-1}, b_s)`` and takes ``values[s - 1]``.
    """

    breakpoints: tuple[int, ...]
    values: tuple[float, ...]

    def __init__(self, breakpoints: Sequence[int], values: Sequence[float]):
        bps = tuple(int(b) for b in breakpoints)
        vals = tuple(float(v) for v in values)
        if len(bps) < 2 or bps[0] != 1:
            raise ValueError("breakpoints must start at 1 and contain the end marker n + 1")
        if any(b1 >= b2 for b1, b2 in zip(bps, bps[1:])):
            raise ValueError(f"breakpoints must be strictly increasing: {bps}")
        if len(vals) != len(bps) - 1:
            raise ValueError(f"{len(bps) - 1} segments need as many values, got {len(vals)}")
        if not all(math.isfinite(v) for v in vals):
            raise ValueError("segment values must be finite")
        for s, (a, b) in enumerate(zip(vals, vals[1:]), start=1):
            if a == b:
                raise ValueError(f"segments {s} and {s + 1} share the value {a}")
        object.__setattr__(self, "breakpoints", bps)
        object.__setattr__(self, "values", vals)

    @classmethod
    def constant(cls, value: float, n: int) -> "StepFunction":
        return cls((1, n + 1), (value,))

    @classmethod
    def from_changepoints(cls, changepoints: Sequence[int], values: Sequence[float], n: int):
        """Build from the 1-based start indices of segments 2..S."""
        return cls((1, *changepoints, n + 1), values)

    @classmethod
    def from_array(cls, y: Sequence[float] | np.ndarray) -> "StepFunction":
        """Collapse a per-index array into its maximal constant pieces."""
        y = np.asarray(y, dtype=np.float64).ravel()
        if y.size == 0:
            raise ValueError("empty array")
        starts = np.flatnonzero(np.diff(y) != 0) + 2
        return cls((1, *starts.tolist(), y.size + 1), [y[0], *y[starts - 1]])

    @property
    def n(self) -> int:
        return self.breakpoints[-1] - 1

    @property
    def n_segments(self) -> int:
        return len(self.values)

    @property
    def changepoints(self) -> tuple[int, ...]:
        """Start indices of segments 2..S."""
        return self.breakpoints[1:-1]

    def tau(self) -> np.ndarray:
        """Changepoint locations in time units, ``(b_s - 1) / n``."""
        return (np.asarray(self.changepoints, dtype=float) - 1.0) / self.n

    def segments(self) -> list[tuple[int, int, float]]:
        """``(first index, last index, value)`` per segment, inclusive."""
        return [(a, b - 1, v) for a, b, v in zip(self.breakpoints, self.breakpoints[1:], self.values)]

    def segment_labels(self) -> np.ndarray:
        return np.repeat(np.arange(self.n_segments), np.diff(self.breakpoints))

    def evaluate(self) -> np.ndarray:
        return np.repeat(np.asarray(self.values), np.diff(self.breakpoints))

    def __call__(self, i: int) -> float:
        if not 1 <= i <= self.n:
            raise IndexError(f"index {i} outside 1..{self.n}")
        s = int(np.searchsorted(self.breakpoints, i, side="right")) - 1
        return self.values[s]

    def shift(self, c: float) -> "StepFunction":
        return StepFunction(self.breakpoints, [v + c for v in self.values])

    def __eq__(self, other) -> bool:
        if not isinstance(other, StepFunction):
            return NotImplemented
        return self.breakpoints == other.breakpoints and self.values == other.values

    def __hash__(self) -> int:
        return hash((self.breakpoints, self.values))


def _values_of(f, n: int) -> np.ndarray:
    if isinstance(f, StepFunction):
        if f.n != n:
            raise ValueError(f"step function covers {f.n} indices, series has {n}")
        return f.evaluate()
    arr = np.asarray(f, dtype=np.float64).ravel()
    if arr.size == 1:
        return np.full(n, arr[0])
    if arr.size != n:
        raise ValueError(f"candidate has {arr.size} values, series has {n}")
    return arr


def transform(z, f) -> np.ndarray:
    """Binary pseudo-data: 1 where ``z_i <= f(x_i)``, else 0 (ties count as 1)."""
    z = as_series(z)
    return (z.values <= _values_of(f, z.n)).astype(np.int8)


def runs_count(w) -> int:
    w = np.asarray(w).ravel()
    if w.size == 0:
        raise ValueError("runs of an empty sequence are undefined")
    return int(np.count_nonzero(w[1:] != w[:-1])) + 1


def ones_count(w) -> int:
    return int(np.count_nonzero(np.asarray(w)))
