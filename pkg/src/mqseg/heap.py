"""Double heap holding a fixed-rank order statistic under element replacement.

Two binary heaps share a root: a max-heap with the ``r - 1`` smallest
entries below it and a min-heap with the rest above.  Replacing one element
walks at most one branch of each heap, so the root (the ``r``-th order
statistic) is maintained in ``O(log m)``.

Storage is flat so the same kernels drive both the :class:`DoubleHeap`
wrapper and the per-scale heap banks of the segmentation engine.  A heap of
size ``m`` and rank ``r`` occupies ``slots[base:base + m]``::

    slots[base]                  root
    slots[base + 1 + t]          node t of the max-heap (t < r - 1)
    slots[base + r + t]          node t of the min-heap (t < m - r)

Slots hold element ids; ``keys[id]`` is the value and
``pos[pbase + id % mod]`` the slot offset of that id.
"""

from __future__ import annotations

import math
from collections import defaultdict

import numpy as np
from numba import njit


@njit(cache=True, inline="always")
def _put(slots, pos, base, pbase, mod, rel, idv):
    slots[base + rel] = idv
    pos[pbase + idv % mod] = rel


@njit(cache=True)
def _sift_up(keys, slots, pos, base, pbase, mod, off, t, sgn):
    idv = slots[base + off + t]
    x = sgn * keys[idv]
    steps = 0
    while t > 0:
        p = (t - 1) >> 1
        pid = slots[base + off + p]
        if sgn * keys[pid] < x:
            _put(slots, pos, base, pbase, mod, off + t, pid)
            t = p
            steps += 1
        else:
            break
    _put(slots, pos, base, pbase, mod, off + t, idv)
    return steps


@njit(cache=True)
def _sift_down(keys, slots, pos, base, pbase, mod, off, t, cnt, sgn):
    idv = slots[base + off + t]
    x = sgn * keys[idv]
    steps = 0
    while True:
        c = 2 * t + 1
        if c >= cnt:
            break
        if c + 1 < cnt and sgn * keys[slots[base + off + c + 1]] > sgn * keys[slots[base + off + c]]:
            c += 1
        cid = slots[base + off + c]
        if sgn * keys[cid] > x:
            _put(slots, pos, base, pbase, mod, off + t, cid)
            t = c
            steps += 1
        else:
            break
    _put(slots, pos, base, pbase, mod, off + t, idv)
    return steps


@njit(cache=True)
def dh_build(keys, ids, slots, pos, base, pbase, mod, r):
    """Lay out ``ids`` (sorted ascending by key) as a valid double heap."""
    m = ids.size
    _put(slots, pos, base, pbase, mod, 0, ids[r - 1])
    # descending order is a max-heap, ascending order a min-heap
    for t in range(r - 1):
        _put(slots, pos, base, pbase, mod, 1 + t, ids[r - 2 - t])
    for t in range(m - r):
        _put(slots, pos, base, pbase, mod, r + t, ids[r + t])


@njit(cache=True)
def dh_replace(keys, slots, pos, base, pbase, mod, r, m, p, nid):
    """Put id ``nid`` into slot offset ``p`` and restore order; returns levels moved."""
    x = keys[nid]
    nb = r - 1
    na = m - r
    steps = 0
    if p == 0:
        _put(slots, pos, base, pbase, mod, 0, nid)
        if nb > 0 and keys[slots[base + 1]] > x:
            bid = slots[base + 1]
            _put(slots, pos, base, pbase, mod, 0, bid)
            _put(slots, pos, base, pbase, mod, 1, nid)
            steps += 1 + _sift_down(keys, slots, pos, base, pbase, mod, 1, 0, nb, 1.0)
        elif na > 0 and keys[slots[base + r]] < x:
            aid = slots[base + r]
            _put(slots, pos, base, pbase, mod, 0, aid)
            _put(slots, pos, base, pbase, mod, r, nid)
            steps += 1 + _sift_down(keys, slots, pos, base, pbase, mod, r, 0, na, -1.0)
        return steps
    rid = slots[base]
    if p < r:
        t = p - 1
        if x <= keys[rid]:
            _put(slots, pos, base, pbase, mod, p, nid)
            moved = _sift_up(keys, slots, pos, base, pbase, mod, 1, t, 1.0)
            if moved == 0:
                moved = _sift_down(keys, slots, pos, base, pbase, mod, 1, t, nb, 1.0)
            return moved
        # the old root is no smaller than anything below, so it only rises
        _put(slots, pos, base, pbase, mod, p, rid)
        steps += _sift_up(keys, slots, pos, base, pbase, mod, 1, t, 1.0)
        if na > 0 and keys[slots[base + r]] < x:
            aid = slots[base + r]
            _put(slots, pos, base, pbase, mod, 0, aid)
            _put(slots, pos, base, pbase, mod, r, nid)
            steps += 1 + _sift_down(keys, slots, pos, base, pbase, mod, r, 0, na, -1.0)
        else:
            _put(slots, pos, base, pbase, mod, 0, nid)
        return steps
    t = p - r
    if x >= keys[rid]:
        _put(slots, pos, base, pbase, mod, p, nid)
        moved = _sift_up(keys, slots, pos, base, pbase, mod, r, t, -1.0)
        if moved == 0:
            moved = _sift_down(keys, slots, pos, base, pbase, mod, r, t, na, -1.0)
        return moved
    _put(slots, pos, base, pbase, mod, p, rid)
    steps += _sift_up(keys, slots, pos, base, pbase, mod, r, t, -1.0)
    if nb > 0 and keys[slots[base + 1]] > x:
        bid = slots[base + 1]
        _put(slots, pos, base, pbase, mod, 0, bid)
        _put(slots, pos, base, pbase, mod, 1, nid)
        steps += 1 + _sift_down(keys, slots, pos, base, pbase, mod, 1, 0, nb, 1.0)
    else:
        _put(slots, pos, base, pbase, mod, 0, nid)
    return steps


class DoubleHeap:
    """Fixed-size multiset with its ``target_rank``-th order statistic at the root.

    >>> h = DoubleHeap(2, [3.0, 1.0, 2.0])
    >>> h.root
    2.0
    >>> h.replace(1.0, 10.0).root
    3.0
    """

    def __init__(self, target_rank: int, initial):
        vals = np.asarray(initial, dtype=np.float64).ravel()
        if vals.size and not 1 <= target_rank <= vals.size:
            raise ValueError(f"rank {target_rank} outside 1..{vals.size}")
        if target_rank < 1:
            raise ValueError("target rank must be positive")
        self.target_rank = int(target_rank)
        self.size = int(vals.size)
        self._keys = vals.copy()
        self._slots = np.zeros(max(self.size, 1), dtype=np.int32)
        self._pos = np.zeros(max(self.size, 1), dtype=np.int32)
        self._where = defaultdict(list)
        for i, v in enumerate(vals.tolist()):
            self._where[v].append(i)
        self.last_steps = 0
        self.total_steps = 0
        if self.size:
            order = np.argsort(vals, kind="mergesort").astype(np.int32)
            dh_build(self._keys, order, self._slots, self._pos, 0, 0, self.size, self.target_rank)

    @property
    def root(self) -> float:
        if self.size < self.target_rank or self.size == 0:
            raise ValueError(f"heap holds {self.size} entries, rank {self.target_rank} undefined")
        return float(self._keys[self._slots[0]])

    def replace(self, out_value: float, in_value: float) -> "DoubleHeap":
        out_value = float(out_value)
        in_value = float(in_value)
        ids = self._where.get(out_value)
        if not ids:
            raise ValueError(f"{out_value!r} is not stored in the heap")
        idv = ids.pop()
        if not ids:
            del self._where[out_value]
        self._keys[idv] = in_value
        self._where[in_value].append(idv)
        p = int(self._pos[idv])
        self.last_steps = int(
            dh_replace(self._keys, self._slots, self._pos, 0, 0, self.size,
                       self.target_rank, self.size, p, idv)
        )
        self.total_steps += self.last_steps
        return self

    def values(self) -> np.ndarray:
        return self._keys.copy()

    def depth_bound(self) -> int:
        """Levels one replacement may move: both branches plus the root swap."""
        return 2 * math.ceil(math.log2(max(self.size, 2))) + 2

    def check(self) -> None:
        """Structural audit of both heap orders and the position map."""
        r, m = self.target_rank, self.size
        key = self._keys
        slots = self._slots
        root = key[slots[0]]
        below = [key[slots[1 + t]] for t in range(r - 1)]
        above = [key[slots[r + t]] for t in range(m - r)]
        for t in range(1, len(below)):
            assert below[(t - 1) // 2] >= below[t], "max-heap order broken"
        for t in range(1, len(above)):
            assert above[(t - 1) // 2] <= above[t], "min-heap order broken"
        assert all(b <= root for b in below) and all(a >= root for a in above)
        for rel in range(m):
            assert self._pos[slots[rel]] == rel, "position map out of sync"


def heap_new(target_rank: int, initial) -> DoubleHeap:
    return DoubleHeap(target_rank, initial)


def heap_replace(h: DoubleHeap, out_value: float, in_value: float) -> DoubleHeap:
    return h.replace(out_value, in_value)


def heap_root(h: DoubleHeap) -> float:
    return h.root
