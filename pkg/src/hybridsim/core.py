"""Hybrid time domains, hybrid arcs, and the (T, J, eps)-closeness metric.

An arc stores breakpoint times, states, and state derivatives per interval and
evaluates between breakpoints with cubic Hermite interpolation, so evaluation
is exact at breakpoints and 4th-order accurate between them.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from typing import Callable, Iterable, Optional, Sequence, TextIO

import numpy as np

from ._kernels import clause_bests, hermite_eval_many

COMPARE_SLACK = 1e-12


class DomainError(ValueError):
    """Evaluation outside the hybrid time domain, or an invalid start point."""


class DimensionMismatch(ValueError):
    """Operands with incompatible state dimensions."""


class NumericFailure(RuntimeError):
    """Integrator breakdown or an exhausted numeric budget."""


@dataclass(frozen=True)
class HybridTimeDomain:
    """Union of intervals [t_start, t_end] x {j} with consecutive j.

    The final interval may be marked right-open via open_end.
    """

    intervals: tuple[tuple[float, float, int], ...]
    open_end: bool = False

    def __post_init__(self):
        if not self.intervals:
            raise ValueError("domain needs at least one interval")
        a0, b0, j0 = self.intervals[0]
        if j0 != 0:
            raise ValueError("first interval must sit at j=0")
        prev_end = None
        prev_j = None
        for a, b, j in self.intervals:
            if not (math.isfinite(a) and (math.isfinite(b) or b == math.inf)):
                raise ValueError("interval bounds must be finite (or +inf at the end)")
            if b < a:
                raise ValueError(f"interval [{a}, {b}] reversed")
            if prev_j is not None:
                if j != prev_j + 1:
                    raise ValueError("jump counter must increase by exactly 1")
                if a != prev_end:
                    raise ValueError("intervals must chain: t_end == next t_start")
            prev_end, prev_j = b, j
        if self.intervals[-1][1] == math.inf and not self.open_end:
            raise ValueError("unbounded final interval requires open_end")

    @property
    def t_max(self) -> float:
        return self.intervals[-1][1]

    @property
    def j_max(self) -> int:
        return self.intervals[-1][2]

    def level_span(self, j: int) -> Optional[tuple[float, float]]:
        j0 = self.intervals[0][2]
        k = j - j0
        if k < 0 or k >= len(self.intervals):
            return None
        a, b, jj = self.intervals[k]
        return (a, b)

    def contains(self, t: float, j: int, slack: float = COMPARE_SLACK) -> bool:
        span = self.level_span(j)
        if span is None:
            return False
        a, b = span
        if t < a - slack or t > b + slack:
            return False
        if self.open_end and j == self.j_max and t >= b - slack and a < b:
            return False
        return True


@dataclass(frozen=True)
class Segment:
    """Breakpoint record for one interval: times, states, and derivatives."""

    times: np.ndarray
    states: np.ndarray
    derivs: np.ndarray

    def __post_init__(self):
        times = np.array(self.times, dtype=np.float64, order="C")
        states = np.array(self.states, dtype=np.float64, order="C")
        derivs = np.array(self.derivs, dtype=np.float64, order="C")
        if times.ndim != 1 or states.ndim != 2 or derivs.shape != states.shape:
            raise ValueError("segment arrays malformed")
        if times.shape[0] != states.shape[0] or times.shape[0] < 2:
            raise ValueError("segment needs >= 2 breakpoints")
        if np.any(np.diff(times) < 0.0):
            raise ValueError("segment times must be nondecreasing")
        for name, arr in (("times", times), ("states", states), ("derivs", derivs)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    def eval_many(self, tq: np.ndarray) -> np.ndarray:
        return hermite_eval_many(self.times, self.states, self.derivs, np.asarray(tq, np.float64))

    def eval_deriv(self, t: float) -> np.ndarray:
        times, states, derivs = self.times, self.states, self.derivs
        k = int(np.clip(np.searchsorted(times, t, side="right") - 1, 0, len(times) - 2))
        h = times[k + 1] - times[k]
        if h <= 0.0:
            return derivs[k].copy()
        s = (t - times[k]) / h
        dh00 = (6.0 * s * s - 6.0 * s) / h
        dh10 = 3.0 * s * s - 4.0 * s + 1.0
        dh01 = (-6.0 * s * s + 6.0 * s) / h
        dh11 = 3.0 * s * s - 2.0 * s
        return (
            dh00 * states[k]
            + dh10 * derivs[k]
            + dh01 * states[k + 1]
            + dh11 * derivs[k + 1]
        )


def _fd_derivs(times: np.ndarray, states: np.ndarray) -> np.ndarray:
    """Reconstruct breakpoint derivatives from times/states alone."""
    n = times.shape[0]
    if n < 2 or times[-1] <= times[0]:
        return np.zeros_like(states)
    uniq = np.diff(times) > 0.0
    if n >= 4 and np.all(uniq):
        from scipy.interpolate import CubicSpline

        return CubicSpline(times, states, bc_type="not-a-knot")(times, 1)
    out = np.zeros_like(states)
    for i in range(n):
        lo = max(0, i - 1)
        hi = min(n - 1, i + 1)
        if times[hi] > times[lo]:
            out[i] = (states[hi] - states[lo]) / (times[hi] - times[lo])
    return out


@dataclass(frozen=True)
class HybridArc:
    """A hybrid arc: one breakpoint segment per domain interval."""

    domain: HybridTimeDomain
    segments: tuple[Segment, ...]
    state_dim: int

    def __post_init__(self):
        if len(self.segments) != len(self.domain.intervals):
            raise ValueError("one segment per interval required")
        for seg, (a, b, j) in zip(self.segments, self.domain.intervals):
            if seg.states.shape[1] != self.state_dim:
                raise DimensionMismatch("segment width != state_dim")
            scale = max(1.0, abs(a), abs(b) if math.isfinite(b) else 1.0)
            if abs(seg.times[0] - a) > 1e-9 * scale:
                raise ValueError("segment must start at the interval start")
            if math.isfinite(b) and abs(seg.times[-1] - b) > 1e-9 * scale:
                raise ValueError("segment must end at the interval end")

    @property
    def t_max(self) -> float:
        return self.domain.t_max

    @property
    def j_max(self) -> int:
        return self.domain.j_max

    @property
    def jump_times(self) -> tuple[float, ...]:
        return tuple(b for (a, b, j) in self.domain.intervals[:-1])

    def _segment_at(self, j: int) -> Segment:
        j0 = self.domain.intervals[0][2]
        return self.segments[j - j0]

    def eval(self, t: float, j: int) -> np.ndarray:
        if not self.domain.contains(t, j):
            raise DomainError(f"(t, j) = ({t}, {j}) outside the arc domain")
        seg = self._segment_at(j)
        t_cl = min(max(t, seg.times[0]), seg.times[-1])
        return seg.eval_many(np.array([t_cl]))[0]

    def eval_many(self, ts: np.ndarray, j: int) -> np.ndarray:
        ts = np.asarray(ts, np.float64)
        span = self.domain.level_span(j)
        if span is None:
            raise DomainError(f"level j = {j} outside the arc domain")
        seg = self._segment_at(j)
        return seg.eval_many(np.clip(ts, seg.times[0], seg.times[-1]))

    def truncate(self, T: float, J: int) -> "HybridArc":
        new_ivs = []
        new_segs = []
        for seg, (a, b, j) in zip(self.segments, self.domain.intervals):
            if j > J or a > T + COMPARE_SLACK:
                break
            b_new = min(b, max(T, a))
            if b_new >= b:
                new_ivs.append((a, b, j))
                new_segs.append(seg)
                continue
            keep = seg.times <= b_new
            times = np.concatenate([seg.times[keep], [b_new]])
            states = np.concatenate([seg.states[keep], seg.eval_many(np.array([b_new]))])
            derivs = np.concatenate([seg.derivs[keep], seg.eval_deriv(b_new)[None, :]])
            if times.shape[0] < 2:
                times = np.array([b_new, b_new])
                states = np.repeat(states[-1:], 2, axis=0)
                derivs = np.repeat(derivs[-1:], 2, axis=0)
            new_ivs.append((a, b_new, j))
            new_segs.append(Segment(times, states, derivs))
            break
        if not new_ivs:
            raise DomainError("truncation removes the whole domain")
        open_end = self.domain.open_end and new_ivs[-1] == self.domain.intervals[-1]
        return HybridArc(
            HybridTimeDomain(tuple(new_ivs), open_end), tuple(new_segs), self.state_dim
        )

    def to_json_dict(self) -> dict:
        return {
            "state_dim": self.state_dim,
            "intervals": [
                {
                    "t0": t0,
                    "t1": t1,
                    "j": j,
                    "open_end": bool(self.domain.open_end and k == len(self.segments) - 1),
                }
                for k, (t0, t1, j) in enumerate(self.domain.intervals)
            ],
            "segments": [
                {"times": seg.times.tolist(), "states": seg.states.tolist()}
                for seg in self.segments
            ],
        }

    @staticmethod
    def from_json_dict(d: dict) -> "HybridArc":
        dim = int(d["state_dim"])
        ivs = tuple((float(iv["t0"]), float(iv["t1"]), int(iv["j"])) for iv in d["intervals"])
        open_end = bool(d["intervals"][-1].get("open_end", False))
        segs = []
        for raw in d["segments"]:
            times = np.asarray(raw["times"], np.float64)
            states = np.asarray(raw["states"], np.float64).reshape(len(times), dim)
            segs.append(Segment(times, states, _fd_derivs(times, states)))
        return HybridArc(HybridTimeDomain(ivs, open_end), tuple(segs), dim)

    def to_json(self, fh: TextIO) -> None:
        json.dump(self.to_json_dict(), fh, sort_keys=True)
        fh.write("\n")

    @staticmethod
    def from_json(fh: TextIO) -> "HybridArc":
        return HybridArc.from_json_dict(json.load(fh))

    def to_csv(self, fh: TextIO) -> None:
        cols = ["t", "j"] + [f"x_{i + 1}" for i in range(self.state_dim)]
        fh.write(",".join(cols) + "\n")
        for seg, (a, b, j) in zip(self.segments, self.domain.intervals):
            for t, row in zip(seg.times, seg.states):
                cells = [repr(float(t)), str(int(j))] + [repr(float(v)) for v in row]
                fh.write(",".join(cells) + "\n")

    @staticmethod
    def from_csv(fh: TextIO) -> "HybridArc":
        header = fh.readline().strip().split(",")
        if header[:2] != ["t", "j"]:
            raise ValueError("arc csv must start with columns t, j")
        dim = len(header) - 2
        rows = []
        for line in fh:
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            rows.append((float(parts[0]), int(parts[1]), [float(v) for v in parts[2:]]))
        if not rows:
            raise ValueError("arc csv has no data rows")
        ivs = []
        segs = []
        k = 0
        while k < len(rows):
            j = rows[k][1]
            chunk = []
            while k < len(rows) and rows[k][1] == j:
                chunk.append(rows[k])
                k += 1
            times = np.asarray([r[0] for r in chunk], np.float64)
            states = np.asarray([r[2] for r in chunk], np.float64)
            if times.shape[0] == 1:
                times = np.repeat(times, 2)
                states = np.repeat(states, 2, axis=0)
            ivs.append((float(times[0]), float(times[-1]), int(j)))
            segs.append(Segment(times, states, _fd_derivs(times, states)))
        return HybridArc(HybridTimeDomain(tuple(ivs)), tuple(segs), dim)


@dataclass(frozen=True)
class ClosenessWitness:
    """A point of one arc with no admissible partner on the other arc."""

    side: str  # "a-to-b" or "b-to-a"
    t: float
    j: int
    best_s: Optional[float]
    best_distance: float


@dataclass(frozen=True)
class ClosenessVerdict:
    close: bool
    T: float
    J: int
    epsilon: float
    witness: Optional[ClosenessWitness] = None


def _level_grid(arc: HybridArc, j: int, t_hi: float, step: float):
    """Evaluation grid for one side of a closeness clause: breakpoints plus a
    uniform refinement of the given step, clipped to t <= t_hi."""
    span = arc.domain.level_span(j)
    if span is None:
        return None
    a, b = span
    if a > t_hi + COMPARE_SLACK:
        return None
    b_eff = min(b, t_hi)
    seg = arc._segment_at(j)
    base = seg.times[seg.times <= b_eff + COMPARE_SLACK]
    n_ref = int(math.floor((b_eff - a) / step)) if b_eff > a else 0
    n_ref = min(n_ref, 400000)
    refine = a + step * np.arange(n_ref + 1) if n_ref > 0 else np.array([a])
    ts = np.unique(np.concatenate([base, refine, [a, b_eff]]))
    keep = np.ones(ts.shape[0], dtype=bool)
    if ts.shape[0] > 2:
        tiny = np.diff(ts) < step / 100.0
        keep[1:-1] = ~tiny[:-1]
    ts = ts[keep]
    return ts, arc.eval_many(ts, j)


def _clause_violation(outer, inner, eps: float):
    """First outer grid point whose best achievable value is not < eps."""
    ta, xa = outer
    tb, xb = inner
    bests = clause_bests(ta, xa, tb, xb, eps, COMPARE_SLACK)
    bad = np.nonzero(bests >= eps + COMPARE_SLACK)[0]
    if bad.size == 0:
        return None
    i = int(bad[0])
    # recover the minimizing partner time for the witness
    window = np.abs(tb - ta[i]) <= eps + COMPARE_SLACK
    cand = np.nonzero(window)[0]
    if cand.size == 0:
        k = int(np.clip(np.searchsorted(tb, ta[i]), 0, tb.shape[0] - 1))
        cand = np.array([k])
    dt = np.abs(tb[cand] - ta[i])
    dist = np.linalg.norm(xb[cand] - xa[i], axis=1)
    vals = np.maximum(dt, dist)
    k = int(np.argmin(vals))
    return float(ta[i]), float(tb[cand[k]]), float(vals[k])


def closeness_check(
    a: HybridArc, b: HybridArc, T: float, J: int, epsilon: float
) -> ClosenessVerdict:
    """Decide (T, J, epsilon)-closeness of two arcs.

    Each point (t, j) of one arc with t <= T and j <= J needs a point (s, j) of
    the other arc with |t - s| < epsilon and states within epsilon in the
    Euclidean norm (strict inequalities, evaluated with a fixed comparison
    slack). Points are taken on the arcs' breakpoints plus a uniform grid of
    step epsilon / 10; the partner search uses the full grid of the matching
    level with no horizon clipping.
    """
    if a.state_dim != b.state_dim:
        raise DimensionMismatch("arcs have different state dimensions")
    if epsilon <= 0.0 or T < 0.0 or J < 0:
        raise ValueError("need epsilon > 0, T >= 0, J >= 0")
    step = epsilon / 10.0
    for side, first, second in (("a-to-b", a, b), ("b-to-a", b, a)):
        for (a0, b0, j) in first.domain.intervals:
            if j > J:
                break
            outer = _level_grid(first, j, T, step)
            if outer is None:
                continue
            inner = _level_grid(second, j, math.inf, step)
            if inner is None:
                w = ClosenessWitness(side, float(outer[0][0]), j, None, math.inf)
                return ClosenessVerdict(False, T, J, epsilon, w)
            hit = _clause_violation(outer, inner, epsilon)
            if hit is not None:
                t_bad, s_best, v_best = hit
                w = ClosenessWitness(side, t_bad, j, s_best, v_best)
                return ClosenessVerdict(False, T, J, epsilon, w)
    return ClosenessVerdict(True, T, J, epsilon)


def closeness_margin(a: HybridArc, b: HybridArc, T: float, J: int) -> float:
    """Smallest epsilon (up to bisection tolerance) making the arcs close.

    Returns +inf when one arc has a level j <= J with points at t <= T that is
    entirely absent from the other arc, since no finite epsilon repairs a
    missing level.
    """
    if a.state_dim != b.state_dim:
        raise DimensionMismatch("arcs have different state dimensions")
    for first, second in ((a, b), (b, a)):
        for (a0, b0, j) in first.domain.intervals:
            if j > J:
                break
            if a0 > T + COMPARE_SLACK:
                continue
            if second.domain.level_span(j) is None:
                return math.inf
    hi = 1e-3
    while not closeness_check(a, b, T, J, hi).close:
        hi *= 4.0
        if hi > 1e12:
            return math.inf
    lo = 0.0
    while hi - lo > max(1e-9, 1e-6 * hi):
        mid = 0.5 * (lo + hi)
        if closeness_check(a, b, T, J, mid).close:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


def arc_from_breakpoints(
    intervals: Sequence[tuple[float, float, int]],
    segments: Sequence[tuple[np.ndarray, np.ndarray, np.ndarray]],
    state_dim: int,
    open_end: bool = False,
) -> HybridArc:
    """Assemble an arc from raw per-interval (times, states, derivs) triples."""
    segs = tuple(Segment(t, x, d) for (t, x, d) in segments)
    return HybridArc(HybridTimeDomain(tuple(intervals), open_end), segs, state_dim)
