"""Array kernels for dense-output evaluation and closeness scanning.

Both kernels ship in two equivalent implementations: a numba-compiled one and a
pure-numpy fallback. The environment variable HYBRIDSIM_NO_NUMBA=1 forces the
fallback even when numba is installed. Both paths evaluate the same candidate
sets in the same order, so results agree bitwise.
"""
from __future__ import annotations

import os

import numpy as np

_FORCED_OFF = os.environ.get("HYBRIDSIM_NO_NUMBA", "") not in ("", "0")

try:
    if _FORCED_OFF:
        raise ImportError("numba disabled by HYBRIDSIM_NO_NUMBA")
    from numba import njit

    HAS_NUMBA = True
except ImportError:
    HAS_NUMBA = False

    def njit(*args, **kwargs):
        def wrap(fn):
            return fn

        if args and callable(args[0]):
            return args[0]
        return wrap


USING_NUMBA = HAS_NUMBA


def _hermite_weights(s: np.ndarray):
    s2 = s * s
    s3 = s2 * s
    h00 = 2.0 * s3 - 3.0 * s2 + 1.0
    h10 = s3 - 2.0 * s2 + s
    h01 = -2.0 * s3 + 3.0 * s2
    h11 = s3 - s2
    return h00, h10, h01, h11


def hermite_eval_many_numpy(times, states, derivs, tq):
    """Cubic Hermite evaluation of a breakpoint record at query times tq.

    Exact at breakpoints. Degenerate panels (zero width) return the left state.
    """
    tq = np.asarray(tq, dtype=np.float64)
    n_pts = times.shape[0]
    if n_pts == 1:
        return np.repeat(states, tq.shape[0], axis=0)
    idx = np.searchsorted(times, tq, side="right") - 1
    idx = np.clip(idx, 0, n_pts - 2)
    t0 = times[idx]
    t1 = times[idx + 1]
    h = t1 - t0
    safe = np.where(h > 0.0, h, 1.0)
    s = (tq - t0) / safe
    # land exactly on a stored breakpoint when the query equals it
    s = np.where(tq == t0, 0.0, s)
    s = np.where(tq == t1, 1.0, s)
    h00, h10, h01, h11 = _hermite_weights(s)
    out = (
        h00[:, None] * states[idx]
        + (h10 * h)[:, None] * derivs[idx]
        + h01[:, None] * states[idx + 1]
        + (h11 * h)[:, None] * derivs[idx + 1]
    )
    degen = h <= 0.0
    if np.any(degen):
        out[degen] = states[idx[degen]]
    return out


@njit(cache=True)
def _hermite_eval_many_jit(times, states, derivs, tq):  # pragma: no cover - numba path
    n_q = tq.shape[0]
    n_pts = times.shape[0]
    dim = states.shape[1]
    out = np.empty((n_q, dim))
    for q in range(n_q):
        t = tq[q]
        if n_pts == 1:
            for c in range(dim):
                out[q, c] = states[0, c]
            continue
        k = np.searchsorted(times, t, side="right") - 1
        if k < 0:
            k = 0
        if k > n_pts - 2:
            k = n_pts - 2
        t0 = times[k]
        t1 = times[k + 1]
        h = t1 - t0
        if h <= 0.0:
            for c in range(dim):
                out[q, c] = states[k, c]
            continue
        s = (t - t0) / h
        if t == t0:
            s = 0.0
        if t == t1:
            s = 1.0
        s2 = s * s
        s3 = s2 * s
        h00 = 2.0 * s3 - 3.0 * s2 + 1.0
        h10 = s3 - 2.0 * s2 + s
        h01 = -2.0 * s3 + 3.0 * s2
        h11 = s3 - s2
        for c in range(dim):
            out[q, c] = (
                h00 * states[k, c]
                + h10 * h * derivs[k, c]
                + h01 * states[k + 1, c]
                + h11 * h * derivs[k + 1, c]
            )
    return out


def hermite_eval_many_numba(times, states, derivs, tq):
    return _hermite_eval_many_jit(
        np.ascontiguousarray(times, dtype=np.float64),
        np.ascontiguousarray(states, dtype=np.float64),
        np.ascontiguousarray(derivs, dtype=np.float64),
        np.ascontiguousarray(tq, dtype=np.float64),
    )


def clause_bests_numpy(ta, xa, tb, xb, eps, slack):
    """For each grid point (ta[i], xa[i]) the best achievable value of
    max(|ta[i]-s|, ||xa[i]-y||) over candidates (s, y) from (tb, xb).

    Candidates are every tb entry within eps+slack of ta[i] plus the two
    nearest neighbours, so the window never misses the true minimizer when it
    beats eps.
    """
    n_a = ta.shape[0]
    lo = np.searchsorted(tb, ta - (eps + slack), side="left")
    hi = np.searchsorted(tb, ta + (eps + slack), side="right")
    near = np.searchsorted(tb, ta, side="left")
    w = int(np.max(hi - lo)) if n_a else 0
    n_b = tb.shape[0]
    cols = []
    offsets = np.arange(max(w, 1))
    idx = lo[:, None] + offsets[None, :]
    valid = idx < hi[:, None]
    idx_c = np.clip(idx, 0, n_b - 1)
    cols.append((idx_c, valid))
    near_idx = np.stack([np.clip(near - 1, 0, n_b - 1), np.clip(near, 0, n_b - 1)], axis=1)
    cols.append((near_idx, np.ones_like(near_idx, dtype=bool)))
    best = np.full(n_a, np.inf)
    for idx_c, valid in cols:
        dt = np.abs(ta[:, None] - tb[idx_c])
        diff = xa[:, None, :] - xb[idx_c]
        dist = np.sqrt(np.sum(diff * diff, axis=2))
        val = np.maximum(dt, dist)
        val = np.where(valid, val, np.inf)
        best = np.minimum(best, np.min(val, axis=1))
    return best


@njit(cache=True)
def _clause_bests_jit(ta, xa, tb, xb, eps, slack):  # pragma: no cover - numba path
    n_a = ta.shape[0]
    n_b = tb.shape[0]
    dim = xa.shape[1]
    best = np.empty(n_a)
    for i in range(n_a):
        t = ta[i]
        lo = np.searchsorted(tb, t - (eps + slack), side="left")
        hi = np.searchsorted(tb, t + (eps + slack), side="right")
        near = np.searchsorted(tb, t, side="left")
        b = np.inf
        for k in range(lo, hi):
            dt = abs(t - tb[k])
            acc = 0.0
            for c in range(dim):
                d = xa[i, c] - xb[k, c]
                acc += d * d
            dist = np.sqrt(acc)
            v = dt if dt > dist else dist
            if v < b:
                b = v
        for k0 in (near - 1, near):
            k = k0
            if k < 0:
                k = 0
            if k > n_b - 1:
                k = n_b - 1
            dt = abs(t - tb[k])
            acc = 0.0
            for c in range(dim):
                d = xa[i, c] - xb[k, c]
                acc += d * d
            dist = np.sqrt(acc)
            v = dt if dt > dist else dist
            if v < b:
                b = v
        best[i] = b
    return best


def clause_bests_numba(ta, xa, tb, xb, eps, slack):
    return _clause_bests_jit(
        np.ascontiguousarray(ta, dtype=np.float64),
        np.ascontiguousarray(xa, dtype=np.float64),
        np.ascontiguousarray(tb, dtype=np.float64),
        np.ascontiguousarray(xb, dtype=np.float64),
        float(eps),
        float(slack),
    )


if USING_NUMBA:
    hermite_eval_many = hermite_eval_many_numba
    clause_bests = clause_bests_numba
else:
    hermite_eval_many = hermite_eval_many_numpy
    clause_bests = clause_bests_numpy
