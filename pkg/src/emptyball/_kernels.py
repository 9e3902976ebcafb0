"""JIT kernels for the branching particle system.

Two exact samplers of the same law live here:

``event_advance``
    Gillespie-style superposition of per-particle exponential clocks of
    rate ``2b``.  At each ring the particle dies or splits with probability
    1/2; its position is only brought forward (by an exact Gaussian
    increment) when it is touched.

``tree_advance``
    Samples only the particles alive at the target time.  Each ancestor
    survives with probability 1 / (1 + b dt); given survival its number of
    descendants is geometric with mean 1 + b dt and their genealogy is a
    coalescent point process with i.i.d. node depths, P(H > s) = 1/(1 + b s),
    truncated at dt.  Positions follow by Brownian motion on that tree,
    filled in with Brownian bridges from a stack of known checkpoints.

Both take a ``numpy.random.Generator`` so a replica is reproducible from its
stream alone.
"""
from __future__ import annotations

import math

import numpy as np
from numba import njit


@njit(cache=True)
def _geometric(rng, q):
    # number of trials to first success, success prob 1 - q
    if q <= 0.0:
        return 1
    u = 1.0 - rng.random()
    return 1 + int(math.floor(math.log(u) / math.log(q)))


@njit(cache=True)
def tree_counts(rng, n, dt, b):
    """Descendant counts at ``dt`` for ``n`` independent ancestors."""
    counts = np.zeros(n, dtype=np.int64)
    bdt = b * dt
    p_survive = 1.0 / (1.0 + bdt)
    q = bdt / (1.0 + bdt)
    for i in range(n):
        if rng.random() < p_survive:
            counts[i] = _geometric(rng, q)
    return counts


@njit(cache=True)
def tree_positions(rng, x0, counts, dt, b, out):
    """Fill ``out`` with descendant positions, family by family.

    ``out`` has ``counts.sum()`` rows; family i occupies a contiguous block.
    """
    n, d = x0.shape
    bdt = b * dt
    qmax = bdt / (1.0 + bdt)
    kmax = 0
    for i in range(n):
        if counts[i] > kmax:
            kmax = counts[i]
    sdepth = np.empty(kmax + 2)
    spos = np.empty((kmax + 2, d))
    row = 0
    sq_dt = math.sqrt(dt)
    for i in range(n):
        k = counts[i]
        if k == 0:
            continue
        # stack bottom: the ancestor at depth dt
        sdepth[0] = dt
        for c in range(d):
            spos[0, c] = x0[i, c]
        # first tip: a full Brownian path
        for c in range(d):
            spos[1, c] = x0[i, c] + sq_dt * rng.standard_normal()
            out[row, c] = spos[1, c]
        sdepth[1] = 0.0
        top = 1
        row += 1
        for _ in range(k - 1):
            qq = rng.random() * qmax
            h = qq / (b * (1.0 - qq))
            # drop checkpoints below the attachment depth
            lo = top
            while sdepth[top] < h:
                lo = top
                top -= 1
            d_lo = sdepth[lo]
            d_hi = sdepth[top]
            span = d_hi - d_lo
            top += 1
            sdepth[top] = h
            if span > 0.0:
                w = (d_hi - h) / span
                sd = math.sqrt(max((d_hi - h) * (h - d_lo) / span, 0.0))
                for c in range(d):
                    mean = spos[top - 1, c] + w * (spos[lo, c] - spos[top - 1, c])
                    spos[top, c] = mean + sd * rng.standard_normal()
            else:
                for c in range(d):
                    spos[top, c] = spos[top - 1, c]
            # new tip hangs off the attachment point
            sh = math.sqrt(h)
            top += 1
            sdepth[top] = 0.0
            for c in range(d):
                spos[top, c] = spos[top - 1, c] + sh * rng.standard_normal()
                out[row, c] = spos[top, c]
            row += 1
    return row


@njit(cache=True)
def event_advance(rng, x0, dt, b, cap):
    """Event-driven advance of all particles by ``dt``.

    Returns ``(positions, n_events, peak, overflow)``.
    """
    n, d = x0.shape
    size = max(2 * n, 16)
    pos = np.empty((size, d))
    last = np.zeros(size)
    for i in range(n):
        for c in range(d):
            pos[i, c] = x0[i, c]
    t = 0.0
    events = 0
    peak = n
    overflow = False
    rate = 2.0 * b
    while n > 0:
        t += rng.exponential() / (rate * n)
        if t >= dt:
            break
        i = min(int(rng.random() * n), n - 1)
        s = math.sqrt(t - last[i])
        for c in range(d):
            pos[i, c] += s * rng.standard_normal()
        last[i] = t
        events += 1
        if rng.random() < 0.5:
            n -= 1
            if i != n:
                for c in range(d):
                    pos[i, c] = pos[n, c]
                last[i] = last[n]
        else:
            if n + 1 > cap:
                overflow = True
                break
            if n + 1 > size:
                size *= 2
                grown = np.empty((size, d))
                grown[:n] = pos[:n]
                pos = grown
                grown_last = np.zeros(size)
                grown_last[:n] = last[:n]
                last = grown_last
            for c in range(d):
                pos[n, c] = pos[i, c]
            last[n] = t
            n += 1
            if n > peak:
                peak = n
    for i in range(n):
        s = math.sqrt(max(dt - last[i], 0.0))
        for c in range(d):
            pos[i, c] += s * rng.standard_normal()
    return pos[:n].copy(), events, peak, overflow


@njit(cache=True)
def min_norm(x, center):
    n, d = x.shape
    best = np.inf
    for i in range(n):
        s = 0.0
        for c in range(d):
            v = x[i, c] - center[c]
            s += v * v
        if s < best:
            best = s
    return math.sqrt(best)


@njit(cache=True)
def count_within(x, center, radius):
    n, d = x.shape
    r2 = radius * radius
    k = 0
    for i in range(n):
        s = 0.0
        for c in range(d):
            v = x[i, c] - center[c]
            s += v * v
        if s < r2:
            k += 1
    return k
