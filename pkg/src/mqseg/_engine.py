"""Compiled kernels for the segmentation dynamic program.

Positions are 0-based here.  A segment ``[s, e]`` is inclusive and a prefix
of length ``p`` covers positions ``0..p-1``.

Box edges are order statistics of ranks ``m_lo[ell]`` and ``m_hi[ell] + 1``.
Two ways to get them are implemented:

* rank tree (default): for a fixed right end the sweep over starts only adds
  elements.  A Fenwick tree over the global ranks of the data counts the
  elements inserted so far, and both edges are found by descending the tree.
  Memory is O(n).
* heap banks: one sliding double heap per window length and rank, each
  replaced one element per step.  Heaps live in pooled flat arrays and are
  allocated the first time a length is used.  Memory is O(n^2).
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

from .heap import dh_build, dh_replace

KOENKER = 0
RUNS = 1


@njit(cache=True)
def beta_rank(m, beta):
    """``ceil(m * beta)`` robust to representation error, at least 1."""
    x = m * beta
    f = math.floor(x)
    r = int(f) if x - f < 1e-9 * max(1.0, x) else int(f) + 1
    return max(r, 1)


def new_pools(n: int, cap: int = 0):
    """Empty heap banks for series of length ``n``."""
    cap = max(cap, 4 * n + 16)
    off = np.full(n + 2, -1, dtype=np.int64)
    end_lo = np.full(n + 2, -1, dtype=np.int64)
    end_hi = np.full(n + 2, -1, dtype=np.int64)
    fill = np.zeros(1, dtype=np.int64)
    return (off, end_lo, end_hi, fill,
            np.zeros(cap, np.int32), np.zeros(cap, np.int32),
            np.zeros(cap, np.int32), np.zeros(cap, np.int32))


@njit(cache=True)
def _grown(a, need):
    b = np.zeros(max(2 * a.size, need), dtype=a.dtype)
    b[:a.size] = a
    return b


@njit(cache=True)
def _sync(z, slots, pos, ends, base, ell, r, e):
    """Move heap ``ell`` of one bank so that it holds window ``[e - ell + 1, e]``."""
    cur = ends[ell]
    if cur < 0 or e < cur or e - cur >= ell:
        s = e - ell + 1
        ids = (np.argsort(z[s:e + 1], kind="mergesort") + s).astype(np.int32)
        dh_build(z, ids, slots, pos, base, base, ell, r)
    else:
        for t in range(cur + 1, e + 1):
            p = pos[base + (t - ell) % ell]
            dh_replace(z, slots, pos, base, base, ell, r, ell, p, t)
    ends[ell] = e
    return z[slots[base]]


@njit(cache=True)
def _box(z, s, e, rlo, rhi, off, end_lo, end_hi, sl_lo, ps_lo, sl_hi, ps_hi):
    ell = e - s + 1
    mlo = rlo[ell]
    mhi = rhi[ell]
    if mlo > mhi:
        return np.inf, -np.inf
    base = off[ell]
    lo = -np.inf
    if mlo >= 1:
        lo = _sync(z, sl_lo, ps_lo, end_lo, base, ell, mlo, e)
    hi = np.inf
    if mhi < ell:
        hi = _sync(z, sl_hi, ps_hi, end_hi, base, ell, mhi + 1, e)
    return lo, hi


@njit(cache=True, inline="always")
def _heap_push(h, size, x):
    t = size
    while t > 0:
        p = (t - 1) >> 1
        if h[p] < x:
            h[t] = h[p]
            t = p
        else:
            break
    h[t] = x


@njit(cache=True, inline="always")
def _heap_pop(h, size):
    top = h[0]
    size -= 1
    x = h[size]
    t = 0
    while True:
        c = 2 * t + 1
        if c >= size:
            break
        if c + 1 < size and h[c + 1] > h[c]:
            c += 1
        if h[c] > x:
            h[t] = h[c]
            t = c
        else:
            break
    if size > 0:
        h[t] = x
    return top


@njit(cache=True, inline="always")
def _ginsert(bel, abv, st, sm, x):
    """Insert into a growing double heap; ``bel`` holds the ``st[0]`` smallest."""
    if st[0] > 0 and x < bel[0]:
        _heap_push(bel, st[0], x)
        st[0] += 1
        sm[0] += x
    else:
        _heap_push(abv, st[1], -x)
        st[1] += 1


@njit(cache=True, inline="always")
def _grank(bel, abv, st, sm, r):
    """Re-balance so that the max of ``bel`` is the ``r``-th smallest (``r >= 1``)."""
    while st[0] > r:
        v = _heap_pop(bel, st[0])
        st[0] -= 1
        sm[0] -= v
        _heap_push(abv, st[1], -v)
        st[1] += 1
    while st[0] < r:
        v = -_heap_pop(abv, st[1])
        st[1] -= 1
        _heap_push(bel, st[0], v)
        st[0] += 1
        sm[0] += v
    return bel[0]


@njit(cache=True, inline="always")
def _fw_add(tree, i, d):
    n = tree.size - 1
    i += 1
    while i <= n:
        tree[i] += d
        i += i & (-i)


@njit(cache=True, inline="always")
def _fw_kth(tree, top, r):
    """0-based global rank of the ``r``-th smallest inserted element."""
    n = tree.size - 1
    pos = 0
    st = top
    while st > 0:
        nx = pos + st
        if nx <= n and tree[nx] < r:
            pos = nx
            r -= tree[nx]
        st >>= 1
    return pos


@njit(cache=True)
def _ranks(z):
    order = np.argsort(z, kind="mergesort")
    rk = np.empty(z.size, dtype=np.int64)
    for i in range(z.size):
        rk[order[i]] = i
    top = 1
    while top * 2 <= z.size:
        top *= 2
    return rk, z[order], top


@njit(cache=True, inline="always")
def _tbox(s, ell, mlo, mhi, rk, zs, tree, top):
    """Box edges after adding position ``s`` to the rank tree."""
    _fw_add(tree, rk[s], 1)
    if mlo > mhi:
        return np.inf, -np.inf
    lo = -np.inf
    if mlo >= 1:
        lo = zs[_fw_kth(tree, top, mlo)]
    hi = np.inf
    if mhi < ell:
        hi = zs[_fw_kth(tree, top, mhi + 1)]
    return lo, hi


@njit(cache=True)
def runs_logd(r, k, n, beta, classical):
    """Log of the runs-based density; ``k`` ones among ``n`` bits, ``r`` runs."""
    n1 = n - k
    n0 = k
    logw = (math.lgamma(n + 1.0) - math.lgamma(k + 1.0) - math.lgamma(n - k + 1.0))
    if k > 0:
        logw += k * math.log(beta)
    if n - k > 0:
        logw += (n - k) * math.log(1.0 - beta)
    prod = 2.0 * n1 * n0
    var = 0.0
    if n > 1:
        var = prod * (prod - n) / (n * n * (n - 1.0))
    if var <= 0.0:
        forced = 1 if n1 * n0 == 0 else 2
        return logw if r == forced else -np.inf
    mu = 1.0 + prod / n if classical else prod / n - 1.0
    return logw - 0.5 * math.log(2.0 * math.pi * var) - (r - mu) ** 2 / (2.0 * var)


@njit(cache=True, inline="always")
def _clamp(theta, a, b):
    if theta < a:
        return a
    if theta >= b:
        return np.nextafter(b, -np.inf)
    return theta


@njit(cache=True)
def _koenker_seg(z, s, e, theta, beta):
    tot = 0.0
    for t in range(s, e + 1):
        d = z[t] - theta
        tot += beta * d if d >= 0.0 else (beta - 1.0) * d
    return tot


@njit(cache=True, nogil=True)
def dp(z, beta, rlo, rhi, rule, classical, banks,
       off, end_lo, end_hi, fill, sl_lo, ps_lo, sl_hi, ps_hi):
    """Minimal-count segmentation with cost-optimal last changepoints.

    Returns per-prefix arrays (count, predecessor, value, cost, admissible
    range of the last segment), the first/last prefix length per count, the
    smallest feasible start per right end, and the possibly grown pools.
    """
    n = z.size
    csum = np.zeros(n + 1)
    for t in range(n):
        csum[t + 1] = csum[t] + z[t]
    cnt = np.full(n + 1, -1, dtype=np.int64)
    cnt[0] = 0
    first = np.full(n + 2, -1, dtype=np.int64)
    last = np.full(n + 2, -1, dtype=np.int64)
    first[0] = 0
    last[0] = 0
    prev = np.zeros(n + 1, dtype=np.int64)
    val = np.zeros(n + 1)
    cost = np.zeros(n + 1)
    seg_lo = np.zeros(n + 1)
    seg_hi = np.zeros(n + 1)
    low = np.zeros(n, dtype=np.int64)
    n0 = np.zeros(n + 1, dtype=np.int64)
    nr = np.zeros(n + 1, dtype=np.int64)
    lastbit = np.zeros(n + 1, dtype=np.int8)
    alo = np.empty(n)
    ahi = np.empty(n)
    th = np.empty(n)
    rc = np.empty(n)
    bel = np.empty(n)
    abv = np.empty(n)
    bst = np.zeros(2, dtype=np.int64)
    bsm = np.zeros(1)
    rk, zs, top = _ranks(z)
    tree = np.zeros(n + 1, dtype=np.int32)
    live = 0
    for e in range(n):
        k = cnt[e]
        floor_s = first[k - 1] if k >= 1 else 0
        smin = max(live, floor_s)
        bst[:] = 0
        bsm[0] = 0.0
        cl = -np.inf
        ch = np.inf
        lowest = e + 1
        reached = e + 1
        alo[e] = -np.inf
        ahi[e] = np.inf
        for s in range(e, smin - 1, -1):
            ell = e - s + 1
            if banks:
                if off[ell] < 0:
                    need = fill[0] + ell
                    if need > sl_lo.size:
                        sl_lo = _grown(sl_lo, need)
                        ps_lo = _grown(ps_lo, need)
                        sl_hi = _grown(sl_hi, need)
                        ps_hi = _grown(ps_hi, need)
                    off[ell] = fill[0]
                    fill[0] = need
                blo, bhi = _box(z, s, e, rlo, rhi, off, end_lo, end_hi, sl_lo, ps_lo, sl_hi, ps_hi)
            else:
                blo, bhi = _tbox(s, ell, rlo[ell], rhi[ell], rk, zs, tree, top)
                reached = s
            if blo > cl:
                cl = blo
            if bhi < ch:
                ch = bhi
            a = max(alo[s], cl)
            b = min(ahi[s], ch)
            alo[s] = a
            ahi[s] = b
            if not a < b:
                live = s + 1
                break
            lowest = s
            # grow the running beta-quantile heap by z[s]
            _ginsert(bel, abv, bst, bsm, z[s])
            root = _grank(bel, abv, bst, bsm, beta_rank(ell, beta))
            theta = _clamp(root, a, b)
            th[s] = theta
            if theta == root:
                tot = csum[e + 1] - csum[s]
                rc[s] = beta * (tot - ell * theta) - (bsm[0] - bst[0] * theta)
            else:
                rc[s] = np.nan
        if not banks:
            for t in range(reached, e + 1):
                _fw_add(tree, rk[t], -1)
        low[e] = lowest
        # predecessors with count k - 1 first, count k only as a fallback
        if k >= 1 and lowest <= last[k - 1]:
            g_lo = max(first[k - 1], lowest)
            g_hi = last[k - 1]
            newk = k
        else:
            g_lo = max(first[k], lowest)
            g_hi = e
            newk = k + 1
        best = np.inf if rule == KOENKER else -np.inf
        arg = -1
        b_n0 = 0
        b_nr = 0
        b_last = 0
        for s in range(g_hi, g_lo - 1, -1):
            theta = th[s]
            if rule == KOENKER:
                seg = rc[s]
                if seg != seg:
                    seg = _koenker_seg(z, s, e, theta, beta)
                c = cost[s] + seg
                if c <= best:
                    best = c
                    arg = s
            else:
                ones = 0
                runs = 1
                prevbit = 1 if z[s] <= theta else 0
                firstbit = prevbit
                ones += prevbit
                for t in range(s + 1, e + 1):
                    bit = 1 if z[t] <= theta else 0
                    ones += bit
                    if bit != prevbit:
                        runs += 1
                    prevbit = bit
                tot_ones = n0[s] + ones
                tot_runs = nr[s] + runs
                if s >= 1 and lastbit[s] == firstbit:
                    tot_runs -= 1
                c = runs_logd(tot_runs, tot_ones, e + 1, beta, classical)
                if c >= best:
                    best = c
                    arg = s
                    b_n0 = tot_ones
                    b_nr = tot_runs
                    b_last = prevbit
        p = e + 1
        cnt[p] = newk
        if first[newk] < 0:
            first[newk] = p
        last[newk] = p
        prev[p] = arg
        val[p] = th[arg]
        seg_lo[p] = alo[arg]
        seg_hi[p] = ahi[arg]
        if rule == KOENKER:
            cost[p] = best
        else:
            cost[p] = best
            n0[p] = b_n0
            nr[p] = b_nr
            lastbit[p] = b_last
    return (cnt, prev, val, cost, seg_lo, seg_hi, first, last, low,
            sl_lo, ps_lo, sl_hi, ps_hi)


@njit(cache=True, nogil=True)
def sweep(z, rlo, rhi, a, e, banks, off, end_lo, end_hi, fill, sl_lo, ps_lo, sl_hi, ps_hi):
    """Admissible ranges for the families ``[s, e]`` and ``[a, u]`` with ``a <= s, u <= e``.

    ``f_lo/f_hi[s - a]`` is the range of ``[s, e]``, ``g_lo/g_hi[u - a]`` the
    range of ``[a, u]``; empty ranges have ``lo >= hi``.
    """
    m = e - a + 1
    alo = np.empty(m)
    ahi = np.empty(m)
    g_lo = np.full(m, np.inf)
    g_hi = np.full(m, -np.inf)
    rk, zs, top = _ranks(z[a:e + 1])
    tree = np.zeros(m + 1, dtype=np.int32)
    dead = a - 1
    for u in range(a, e + 1):
        reached = u + 1
        alo[u - a] = -np.inf
        ahi[u - a] = np.inf
        cl = -np.inf
        ch = np.inf
        for s in range(u, dead, -1):
            ell = u - s + 1
            if banks:
                if off[ell] < 0:
                    need = fill[0] + ell
                    if need > sl_lo.size:
                        sl_lo = _grown(sl_lo, need)
                        ps_lo = _grown(ps_lo, need)
                        sl_hi = _grown(sl_hi, need)
                        ps_hi = _grown(ps_hi, need)
                    off[ell] = fill[0]
                    fill[0] = need
                blo, bhi = _box(z, s, u, rlo, rhi, off, end_lo, end_hi, sl_lo, ps_lo, sl_hi, ps_hi)
            else:
                blo, bhi = _tbox(s - a, ell, rlo[ell], rhi[ell], rk, zs, tree, top)
                reached = s
            cl = max(cl, blo)
            ch = min(ch, bhi)
            lo = max(alo[s - a], cl)
            hi = min(ahi[s - a], ch)
            alo[s - a] = lo
            ahi[s - a] = hi
            if not lo < hi:
                dead = s
                break
        if not banks:
            for t in range(reached, u + 1):
                _fw_add(tree, rk[t - a], -1)
        if dead < a:
            g_lo[u - a] = alo[0]
            g_hi[u - a] = ahi[0]
    f_lo = np.full(m, np.inf)
    f_hi = np.full(m, -np.inf)
    for s in range(dead + 1, e + 1):
        f_lo[s - a] = alo[s - a]
        f_hi[s - a] = ahi[s - a]
    return f_lo, f_hi, g_lo, g_hi, sl_lo, ps_lo, sl_hi, ps_hi
