"""Execution of hybrid systems: flow integration with event detection, jump
sequencing under pluggable strategies, derived single-valued implementations,
and solution certification by residuals.

Strategies resolve flow/jump nondeterminism: "jumping-first" jumps as soon as
the jump set is reached, "flowing-first" flows as long as a flow staying in C
exists, "enumerate-all" branches on every admissible choice up to a budget,
and Scripted(durations) forces jumps at prescribed flow durations.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable, Optional, Sequence, Union

import numpy as np
from scipy.integrate import RK45

from .core import (
    COMPARE_SLACK,
    DomainError,
    HybridArc,
    HybridTimeDomain,
    NumericFailure,
    Segment,
)
from .model import TOL_SET, HybridSystem, MarginFunction
from .perturbation import PerturbedSystem

JUMPING_FIRST = "jumping-first"
FLOWING_FIRST = "flowing-first"
ENUMERATE_ALL = "enumerate-all"

# time signals force fine steps so interpolation keeps up with the forcing
_TIME_SIGNAL_MAX_STEP = 5e-4
_VIAB_KAPPA = 1e-6


@dataclass(frozen=True)
class Scripted:
    """Flow for each listed duration, jumping at the end of each one."""

    durations: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "durations", tuple(float(d) for d in self.durations))
        if any(d < 0.0 or not math.isfinite(d) for d in self.durations):
            raise ValueError("scripted durations must be finite and >= 0")


Strategy = Union[str, Scripted]


@dataclass(frozen=True)
class SolverConfig:
    rel_tol: float = 1e-10
    abs_tol: float = 1e-12
    tol_event: float = 1e-9
    tol_set: float = TOL_SET
    h_viab: float = 1e-3
    max_step: float = 0.01
    max_branches: int = 128
    horizon_T: float = 3.0
    horizon_J: int = 1
    branch_dt: float = 0.05
    scan_samples: int = 17
    res_tol_flow: float = 1e-6
    res_tol_jump: float = 1e-9

    def __post_init__(self):
        for name in (
            "rel_tol",
            "abs_tol",
            "tol_event",
            "tol_set",
            "h_viab",
            "max_step",
            "branch_dt",
        ):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"{name} must be positive")
        if self.horizon_T <= 0.0 or self.horizon_J < 0:
            raise ValueError("need horizon_T > 0 and horizon_J >= 0")
        if self.max_branches < 1 or self.scan_samples < 5:
            raise ValueError("need max_branches >= 1 and scan_samples >= 5")

    def with_(self, **kw) -> "SolverConfig":
        return replace(self, **kw)


class _Run:
    """Uniform view of a plain or perturbed system for the integrator."""

    def __init__(self, system, config: SolverConfig):
        self.cfg = config
        self.perturbed = isinstance(system, PerturbedSystem)
        self.sys = system
        self.base = system.base if self.perturbed else system
        if not isinstance(self.base, HybridSystem):
            raise TypeError("system must be a HybridSystem or PerturbedSystem")
        self.n = self.base.n
        self.max_step = config.max_step
        self.stops: tuple[tuple[float, int], ...] = ()
        if self.perturbed:
            self.stops = system.signal.mandatory_stops
            if system.signal.kind in ("time", "state-aware"):
                self.max_step = min(config.max_step, _TIME_SIGNAL_MAX_STEP)

    def rhs(self, t: float, x: np.ndarray, j: int) -> np.ndarray:
        if self.perturbed:
            return self.sys.rhs(t, x, j)
        return np.asarray(self.base.f(x), np.float64)

    def mC(self, t: float, x: np.ndarray, j: int) -> float:
        if self.perturbed:
            return self.sys.m_C_at(t, x, j)
        return self.base.m_C(x)

    def mD(self, t: float, x: np.ndarray, j: int) -> float:
        if self.perturbed:
            return self.sys.m_D_at(t, x, j)
        return self.base.m_D(x)

    def jump(self, t: float, x: np.ndarray, j: int) -> np.ndarray:
        if self.perturbed:
            return self.sys.jump(t, x, j)
        return np.asarray(self.base.g(x), np.float64)

    def jump_enabled(self, t: float, x: np.ndarray, j: int) -> bool:
        if self.perturbed:
            return self.sys.jump_enabled(t, x, j, self.cfg.tol_set)
        return self.base.jump_enabled(x, self.cfg.tol_set)

    def in_domain(self, t: float, x: np.ndarray, j: int) -> bool:
        tol = self.cfg.tol_set
        return self.mC(t, x, j) <= tol or self.mD(t, x, j) <= tol

    def next_stop(self, t: float, j: int, upper: float) -> tuple[float, bool]:
        best = upper
        hit = False
        for s, jj in self.stops:
            if jj == j and t + 1e-14 < s < best:
                best = s
                hit = True
        return best, hit

    def in_stop_window(self, t: float, j: int) -> bool:
        w = self.cfg.tol_event
        return any(jj == j and abs(t - s) <= w for s, jj in self.stops)


def _bisect_up(phi: Callable[[float], float], a: float, b: float, width: float) -> float:
    """Earliest crossing of phi from <= 0 to > 0 on (a, b]; returns the last
    point with phi <= 0."""
    for _ in range(80):
        if b - a <= width:
            break
        mid = 0.5 * (a + b)
        if phi(mid) > 0.0:
            b = mid
        else:
            a = mid
    return a


def _bisect_down(phi: Callable[[float], float], a: float, b: float, width: float) -> float:
    """Earliest crossing of phi from > 0 to <= 0 on (a, b]; returns the first
    point with phi <= 0."""
    for _ in range(80):
        if b - a <= width:
            break
        mid = 0.5 * (a + b)
        if phi(mid) <= 0.0:
            b = mid
        else:
            a = mid
    return b


def _ternary_min(
    phi: Callable[[float], float], a: float, b: float, width: float
) -> tuple[float, float]:
    for _ in range(200):
        if b - a <= width:
            break
        m1 = a + (b - a) / 3.0
        m2 = b - (b - a) / 3.0
        if phi(m1) <= phi(m2):
            b = m2
        else:
            a = m1
    t = 0.5 * (a + b)
    return t, phi(t)


def _integrate_leg(
    run: _Run,
    t0: float,
    x0: np.ndarray,
    j: int,
    t_limit: float,
    stop_on_D: bool,
    armed: bool,
):
    """Integrate one flow leg at fixed j until an event or t_limit.

    Returns (times, states, derivs, reason, armed) with reason one of
    "left_C", "hit_D_boundary", "reached_limit". When armed is False the leg
    starts inside the jump-set band and D events re-arm only after the margin
    climbs back above tol_set.
    """
    cfg = run.cfg
    tol = cfg.tol_set
    x0 = np.asarray(x0, np.float64)
    mc0 = run.mC(t0, x0, j)
    if mc0 > tol and not run.in_stop_window(t0, j):
        raise DomainError(f"flow started outside C at t={t0:.12g} (m_C={mc0:.3g})")
    ts_out = [float(t0)]
    xs_out = [np.array(x0)]
    ds_out = [run.rhs(t0, x0, j)]
    if t_limit - t0 <= 1e-14 * max(1.0, abs(t0)):
        return ts_out, xs_out, ds_out, "reached_limit", armed
    if stop_on_D and armed and run.mD(t0, x0, j) <= tol:
        armed = False
    # samples this close to a mandatory signal stop at this level are not
    # events: the leg lands on the stop and the strategy decides there
    stop_ts = [s for s, jj in run.stops if jj == j]

    rk = RK45(
        lambda t, y: run.rhs(t, y, j),
        t0,
        x0,
        t_bound=t_limit,
        max_step=run.max_step,
        rtol=cfg.rel_tol,
        atol=cfg.abs_tol,
    )
    while True:
        msg = rk.step()
        if rk.status == "failed":
            raise NumericFailure(
                f"flow integration failed near t={rk.t:.12g}: {msg or 'step rejected'}"
            )
        sol = rk.dense_output()
        a, b = float(rk.t_old), float(rk.t)
        m = cfg.scan_samples
        ts = np.linspace(a, b, m)
        xs = sol(ts).T
        mc = np.array([run.mC(float(ts[i]), xs[i], j) for i in range(m)])
        skip = np.zeros(m, dtype=bool)
        for s in stop_ts:
            skip |= np.abs(ts - s) <= cfg.tol_event

        t_exit = math.inf
        bad = np.nonzero((mc > tol) & ~skip)[0]
        if bad.size:
            i = int(bad[0])
            if i == 0:
                t_exit = float(ts[0])
            else:
                k = i - 1
                while k > 0 and skip[k]:
                    k -= 1
                t_exit = _bisect_up(
                    lambda tt: run.mC(tt, sol(tt), j) - tol,
                    float(ts[k]),
                    float(ts[i]),
                    cfg.tol_event,
                )

        # a narrow excursion of the flow margin above tol can fit between
        # samples (a jumping-first implementation carves a band only two set
        # tolerances wide out of C): refine sharp interior maxima to catch it
        lam_stop = int(bad[0]) if bad.size else m - 1
        for i in range(1, lam_stop):
            if skip[i] or skip[i - 1] or skip[i + 1]:
                continue
            if mc[i] > tol:
                continue
            if not (mc[i] > mc[i - 1] and mc[i] >= mc[i + 1]):
                continue
            if 3.0 * mc[i] < mc[i - 1] + mc[i + 1]:
                continue
            t_pk, neg_pk = _ternary_min(
                lambda tt: -run.mC(tt, sol(tt), j),
                float(ts[i - 1]),
                float(ts[i + 1]),
                max(1e-13 * max(1.0, abs(b)), cfg.tol_event * 1e-3),
            )
            if -neg_pk > tol:
                if run.mD(t_pk, np.asarray(sol(t_pk), np.float64), j) <= tol:
                    # the excursion sits on the jump set: stop on it so the
                    # jump decision happens at the touching point
                    cand = t_pk
                else:
                    k = i - 1
                    while k > 0 and skip[k]:
                        k -= 1
                    cand = _bisect_up(
                        lambda tt: run.mC(tt, sol(tt), j) - tol,
                        float(ts[k]),
                        t_pk,
                        cfg.tol_event,
                    )
                t_exit = min(t_exit, cand)
                break

        t_hit = math.inf
        if stop_on_D:
            md = np.array([run.mD(float(ts[i]), xs[i], j) for i in range(m)])
            arm = armed
            for i in range(m):
                if skip[i]:
                    continue
                if not arm:
                    if md[i] > tol:
                        arm = True
                    continue
                if md[i] <= tol:
                    if i == 0:
                        t_hit = float(ts[0])
                    else:
                        k = i - 1
                        while k > 0 and skip[k]:
                            k -= 1
                        t_hit = _bisect_down(
                            lambda tt: run.mD(tt, sol(tt), j) - tol,
                            float(ts[k]),
                            float(ts[i]),
                            cfg.tol_event,
                        )
                    break
                if (
                    1 <= i <= m - 2
                    and not (skip[i - 1] or skip[i + 1])
                    and md[i] < md[i - 1]
                    and md[i] <= md[i + 1]
                    and 3.0 * md[i] <= md[i - 1] + md[i + 1]
                ):
                    # V-shaped local minimum: refine for a touching event
                    t_min, v_min = _ternary_min(
                        lambda tt: run.mD(tt, sol(tt), j),
                        float(ts[i - 1]),
                        float(ts[i + 1]),
                        max(1e-13 * max(1.0, abs(b)), cfg.tol_event * 1e-3),
                    )
                    if v_min <= tol:
                        t_hit = t_min
                        break
            if t_hit > b:
                armed = arm

        if t_exit < math.inf or t_hit < math.inf:
            # when the flow-set exit and the jump-set hit are simultaneous
            # within event resolution (the two margins can share a zero
            # surface), the jump-set hit wins the tie
            if t_hit <= t_exit + 3.0 * cfg.tol_event:
                te, reason = t_hit, "hit_D_boundary"
            else:
                te, reason = t_exit, "left_C"
            te = min(max(te, a), b)
            xe = np.asarray(sol(te), np.float64)
            if te > ts_out[-1]:
                ts_out.append(float(te))
                xs_out.append(xe)
                ds_out.append(run.rhs(te, xe, j))
            return ts_out, xs_out, ds_out, reason, armed

        ts_out.append(float(rk.t))
        xs_out.append(np.asarray(rk.y, np.float64))
        ds_out.append(run.rhs(float(rk.t), rk.y, j))
        if rk.status == "finished":
            return ts_out, xs_out, ds_out, "reached_limit", armed


def integrate_flow(
    system,
    x0,
    t0: float,
    config: SolverConfig,
    j: int = 0,
    stop_on_D: bool = True,
) -> tuple[Segment, str]:
    """Integrate a single flow leg of the system from (t0, x0) at level j.

    Stops at the first of: exit from the flow set ("left_C"), entry into the
    jump set when stop_on_D ("hit_D_boundary"), a mandatory signal stop at
    this level ("mandatory_stop"), or the time horizon ("reached_T").
    """
    run = _Run(system, config)
    x0 = np.asarray(x0, np.float64)
    stop, is_mand = run.next_stop(t0, j, config.horizon_T)
    armed = run.mD(t0, x0, j) > config.tol_set
    ts, xs, ds, reason, _ = _integrate_leg(run, t0, x0, j, stop, stop_on_D, armed)
    if len(ts) == 1:
        ts = ts + ts
        xs = xs + [xs[0].copy()]
        ds = ds + [ds[0].copy()]
    seg = Segment(np.array(ts), np.vstack(xs), np.vstack(ds))
    if reason == "reached_limit":
        reason = "mandatory_stop" if is_mand else "reached_T"
    return seg, reason


def _viab_flow_ok(run: _Run, t: float, x: np.ndarray, j: int, h: float) -> bool:
    tol = run.cfg.tol_set + _VIAB_KAPPA * h
    try:
        rk = RK45(
            lambda tt, y: run.rhs(tt, y, j),
            t,
            x,
            t_bound=t + h,
            max_step=h / 4.0,
            rtol=run.cfg.rel_tol,
            atol=run.cfg.abs_tol,
        )
        while rk.status == "running":
            rk.step()
            if rk.status == "failed":
                return False
            sol = rk.dense_output()
            ts = np.linspace(rk.t_old, rk.t, 9)
            for tt in ts:
                if run.mC(float(tt), np.asarray(sol(tt), np.float64), j) > tol:
                    return False
    except Exception:
        return False
    return True


def _viable(run: _Run, t: float, x: np.ndarray, j: int) -> bool:
    if not run.perturbed and run.base.viability_override is not None:
        r = run.base.viability_override(np.asarray(x, np.float64))
        if r is not None:
            return bool(r)
    for h in (run.cfg.h_viab, run.cfg.h_viab / 2.0, run.cfg.h_viab / 4.0):
        if not _viab_flow_ok(run, t, x, j, h):
            return False
    return True


def viability_in_C(system, x, config: SolverConfig, t: float = 0.0, j: int = 0) -> bool:
    """Whether some flow from x stays in the flow set for a positive time.

    Uses the system's analytic override when it answers; otherwise integrates
    short test flows at three step scales and requires the flow-set margin to
    stay within tol_set plus a step-proportional allowance on all of them.
    """
    run = _Run(system, config)
    x = np.asarray(x, np.float64)
    mc = run.mC(t, x, j)
    if mc > config.tol_set:
        raise DomainError(f"viability query outside C (m_C={mc:.3g})")
    return _viable(run, t, x, j)


def _flow_feasible(run: _Run, t: float, x: np.ndarray, j: int) -> bool:
    mc = run.mC(t, x, j)
    tol = run.cfg.tol_set
    if mc > tol:
        return False
    if mc < -tol:
        return True  # interior of the flow set: short flows cannot leave
    return _viable(run, t, x, j)


class _Acc:
    """Breakpoint accumulator for the interval currently being flowed."""

    def __init__(self, t: float, x: np.ndarray, d: np.ndarray):
        self.ts = [float(t)]
        self.xs = [np.asarray(x, np.float64)]
        self.ds = [np.asarray(d, np.float64)]

    def extend(self, ts, xs, ds):
        for k in range(len(ts)):
            if k == 0 and ts[0] <= self.ts[-1]:
                continue
            self.ts.append(float(ts[k]))
            self.xs.append(np.asarray(xs[k], np.float64))
            self.ds.append(np.asarray(ds[k], np.float64))

    def copy(self) -> "_Acc":
        out = _Acc.__new__(_Acc)
        out.ts = list(self.ts)
        out.xs = list(self.xs)
        out.ds = list(self.ds)
        return out

    def segment(self) -> Segment:
        ts, xs, ds = self.ts, self.xs, self.ds
        if len(ts) == 1:
            ts = ts + ts
            xs = xs + [xs[0].copy()]
            ds = ds + [ds[0].copy()]
        return Segment(np.array(ts), np.vstack(xs), np.vstack(ds))


def _build_arc(run: _Run, ivs: list, segs: list) -> HybridArc:
    return HybridArc(HybridTimeDomain(tuple(ivs)), tuple(segs), run.n)


def _end_reason(run: _Run, t: float, x: np.ndarray, j: int, at_T: bool) -> str:
    if at_T:
        return "horizon_T"
    if run.jump_enabled(t, x, j) and j >= run.cfg.horizon_J:
        return "horizon_J"
    return "dead_end"


def _single(run: _Run, xi: np.ndarray, jump_priority: bool) -> tuple[HybridArc, str]:
    cfg = run.cfg
    tol = cfg.tol_set
    t, j, x = 0.0, 0, np.asarray(xi, np.float64)
    ivs: list = []
    segs: list = []
    iv_start = t
    acc = _Acc(t, x, run.rhs(t, x, j))
    reason = "dead_end"
    for _ in range(100000):
        at_T = t >= cfg.horizon_T - 1e-14
        can_jump = run.jump_enabled(t, x, j) and j < cfg.horizon_J
        if jump_priority and can_jump:
            segs.append(acc.segment())
            ivs.append((iv_start, t, j))
            x = run.jump(t, x, j)
            j += 1
            iv_start = t
            acc = _Acc(t, x, run.rhs(t, x, j))
            continue
        can_flow = (not at_T) and _flow_feasible(run, t, x, j)
        if can_flow:
            stop, is_mand = run.next_stop(t, j, cfg.horizon_T)
            armed = run.mD(t, x, j) > tol
            t_before = t
            ts, xs, ds, leg_reason, _ = _integrate_leg(
                run, t, x, j, stop, stop_on_D=jump_priority, armed=armed
            )
            acc.extend(ts, xs, ds)
            t, x = acc.ts[-1], acc.xs[-1]
            if leg_reason == "reached_limit" and not is_mand:
                reason = "horizon_T"
                break
            if leg_reason != "left_C" or t > t_before:
                continue
            # the feasibility probe admits flow but the leg cannot advance:
            # fall through to the jump / dead-end decision at this point
        if can_jump:
            segs.append(acc.segment())
            ivs.append((iv_start, t, j))
            x = run.jump(t, x, j)
            j += 1
            iv_start = t
            acc = _Acc(t, x, run.rhs(t, x, j))
            continue
        reason = _end_reason(run, t, x, j, at_T)
        break
    else:  # pragma: no cover - defensive
        raise NumericFailure("strategy loop exceeded its iteration budget")
    segs.append(acc.segment())
    ivs.append((iv_start, t, j))
    return _build_arc(run, ivs, segs), reason


def _scripted(run: _Run, xi: np.ndarray, script: Scripted) -> tuple[HybridArc, str]:
    cfg = run.cfg
    t, j, x = 0.0, 0, np.asarray(xi, np.float64)
    ivs: list = []
    segs: list = []
    iv_start = t
    acc = _Acc(t, x, run.rhs(t, x, j))
    reason = None

    def flow_until(target: float) -> str:
        nonlocal t, x
        while t < target - 1e-14:
            stop, _ = run.next_stop(t, j, target)
            ts, xs, ds, leg_reason, _ = _integrate_leg(
                run, t, x, j, stop, stop_on_D=False, armed=False
            )
            acc.extend(ts, xs, ds)
            t, x = acc.ts[-1], acc.xs[-1]
            if leg_reason == "left_C":
                return "left_C"
        return "reached"

    for dur in script.durations:
        target = t + dur
        if target > cfg.horizon_T + COMPARE_SLACK:
            r = flow_until(cfg.horizon_T)
            reason = "horizon_T" if r == "reached" else "dead_end"
            break
        if flow_until(target) == "left_C":
            reason = "dead_end"
            break
        if run.jump_enabled(t, x, j) and j < cfg.horizon_J:
            segs.append(acc.segment())
            ivs.append((iv_start, t, j))
            x = run.jump(t, x, j)
            j += 1
            iv_start = t
            acc = _Acc(t, x, run.rhs(t, x, j))
        else:
            reason = (
                "horizon_J"
                if run.jump_enabled(t, x, j)
                else "scripted_jump_unavailable"
            )
            break
    if reason is None:
        r = flow_until(cfg.horizon_T)
        reason = "horizon_T" if r == "reached" else "dead_end"
    segs.append(acc.segment())
    ivs.append((iv_start, t, j))
    return _build_arc(run, ivs, segs), reason


def _enumerate(run: _Run, xi: np.ndarray) -> tuple[list[HybridArc], dict]:
    cfg = run.cfg
    tol = cfg.tol_set
    arcs: list[HybridArc] = []
    reasons: list[str] = []
    info = {"truncated_by_budget": False}

    def emit(ivs: list, segs: list, reason: str):
        if len(arcs) >= cfg.max_branches:
            info["truncated_by_budget"] = True
            return
        arcs.append(_build_arc(run, ivs, segs))
        reasons.append(reason)

    # depth-first over (flow, jump) forks with an explicit stack: the jump
    # child is pushed last so it pops first, which keeps the emission order
    # of the recursive formulation (jump subtree before flow subtree)
    x0 = np.asarray(xi, np.float64)
    stack = [(0.0, 0, x0, [], [], 0.0, _Acc(0.0, x0, run.rhs(0.0, x0, 0)), None)]
    while stack:
        t, j, x, ivs, segs, iv_start, acc, walk_anchor = stack.pop()
        if len(arcs) >= cfg.max_branches:
            info["truncated_by_budget"] = True
            continue
        at_T = t >= cfg.horizon_T - 1e-14
        can_jump = run.jump_enabled(t, x, j) and j < cfg.horizon_J

        def jump_node(t=t, j=j, x=x, ivs=ivs, segs=segs, iv_start=iv_start, acc=acc):
            x2 = run.jump(t, x, j)
            return (
                t,
                j + 1,
                x2,
                ivs + [(iv_start, t, j)],
                segs + [acc.segment()],
                t,
                _Acc(t, x2, run.rhs(t, x2, j + 1)),
                None,
            )

        if at_T:
            emit(ivs + [(iv_start, t, j)], segs + [acc.segment()], "horizon_T")
            if can_jump:
                stack.append(jump_node())
            continue
        flow_node = None
        can_flow = _flow_feasible(run, t, x, j)
        if can_flow:
            in_band = run.mD(t, x, j) <= tol
            if in_band:
                anchor = walk_anchor if walk_anchor is not None else t
                k = math.floor((t - anchor) / cfg.branch_dt + 1e-9) + 1
                grid_stop = min(anchor + k * cfg.branch_dt, cfg.horizon_T)
                if cfg.horizon_T - grid_stop <= 10.0 * cfg.tol_event:
                    # a grid point a hair before the horizon would fork a
                    # duplicate of the at-horizon jump
                    grid_stop = cfg.horizon_T
                stop, _ = run.next_stop(t, j, grid_stop)
                ts, xs, ds, leg_reason, _ = _integrate_leg(
                    run, t, x, j, stop, stop_on_D=False, armed=False
                )
                acc2 = acc.copy()
                acc2.extend(ts, xs, ds)
                t2, x2 = acc2.ts[-1], acc2.xs[-1]
                if leg_reason == "left_C" and t2 - t <= 10.0 * cfg.tol_event:
                    if can_jump:
                        # the band exit collapses onto the forked jump
                        stack.append(jump_node())
                        continue
                    if t2 > t and run.jump_enabled(t2, x2, j) and j < cfg.horizon_J:
                        # the exit point sits on the jump set: continue there
                        stack.append((t2, j, x2, ivs, segs, iv_start, acc2, anchor))
                        continue
                    # the feasibility probe admits flow but no leg advances:
                    # this branch cannot make progress and ends here
                    emit(
                        ivs + [(iv_start, t2, j)],
                        segs + [acc2.segment()],
                        _end_reason(run, t2, x2, j, False),
                    )
                    continue
                flow_node = (t2, j, x2, ivs, segs, iv_start, acc2, anchor)
            else:
                stop, _ = run.next_stop(t, j, cfg.horizon_T)
                ts, xs, ds, leg_reason, _ = _integrate_leg(
                    run, t, x, j, stop, stop_on_D=True, armed=True
                )
                acc2 = acc.copy()
                acc2.extend(ts, xs, ds)
                t2, x2 = acc2.ts[-1], acc2.xs[-1]
                if leg_reason == "left_C" and t2 <= t:
                    # the feasibility probe admits flow but no leg advances
                    # and the jump set is out of reach: the branch ends here
                    if not can_jump:
                        emit(
                            ivs + [(iv_start, t2, j)],
                            segs + [acc2.segment()],
                            _end_reason(run, t2, x2, j, False),
                        )
                else:
                    flow_node = (t2, j, x2, ivs, segs, iv_start, acc2, None)
        if not can_jump and not can_flow:
            emit(
                ivs + [(iv_start, t, j)],
                segs + [acc.segment()],
                _end_reason(run, t, x, j, False),
            )
        if flow_node is not None:
            stack.append(flow_node)
        if can_jump:
            stack.append(jump_node())
    info["reasons"] = tuple(reasons)
    return arcs, info


def simulate_with_info(system, strategy: Strategy, xi, config: SolverConfig):
    """Like simulate(), returning (result, info) with stop reasons and flags."""
    run = _Run(system, config)
    x0 = np.asarray(xi, np.float64)
    if x0.shape != (run.n,):
        raise DomainError(f"initial state must have width {run.n}")
    if not run.in_domain(0.0, x0, 0):
        raise DomainError(
            f"initial state {x0.tolist()} lies outside C u D "
            f"(m_C={run.mC(0.0, x0, 0):.3g}, m_D={run.mD(0.0, x0, 0):.3g})"
        )
    if isinstance(strategy, Scripted):
        arc, reason = _scripted(run, x0, strategy)
        return arc, {"stop_reason": reason}
    if strategy == ENUMERATE_ALL:
        arcs, info = _enumerate(run, x0)
        return arcs, info
    if strategy == JUMPING_FIRST:
        arc, reason = _single(run, x0, jump_priority=True)
        return arc, {"stop_reason": reason}
    if strategy == FLOWING_FIRST:
        arc, reason = _single(run, x0, jump_priority=False)
        return arc, {"stop_reason": reason}
    raise ValueError(f"unknown strategy: {strategy!r}")


def simulate(system, strategy: Strategy, xi, config: SolverConfig):
    """Simulate the system from xi under the given strategy up to the config
    horizon. Returns one arc, or a list of arcs for "enumerate-all"."""
    result, _ = simulate_with_info(system, strategy, xi, config)
    return result


def derive_jumping_first(H: HybridSystem) -> HybridSystem:
    """Single-valued implementation that always jumps: the flow set is carved
    back to keep a band of two set tolerances clear of the jump set, so flow
    is impossible wherever a jump is enabled."""
    two_tol = 2.0 * TOL_SET
    base_mC, base_mD = H.m_C, H.m_D
    mC = MarginFunction(
        lambda x: max(base_mC(x), two_tol - base_mD(x)),
        f"{base_mC.description or 'flow set'} minus the jump band",
    )
    base_override = H.viability_override

    def override(x: np.ndarray) -> Optional[bool]:
        if base_mD(x) <= two_tol:
            return False
        return base_override(x) if base_override is not None else None

    return HybridSystem(
        n=H.n,
        m_C=mC,
        m_D=H.m_D,
        f=H.f,
        g=H.g,
        viability_override=override,
        jump_gate=H.jump_gate,
        name=f"{H.name}#jumping-first",
    )


def derive_flowing_first(H: HybridSystem, config: Optional[SolverConfig] = None) -> HybridSystem:
    """Single-valued implementation that always flows: jumps are gated off at
    points where some flow staying in the flow set exists."""
    cfg = config if config is not None else SolverConfig()

    def gate(x: np.ndarray) -> bool:
        if H.m_C(x) > cfg.tol_set:
            return True  # no flow from outside C, the jump stays enabled
        return not viability_in_C(H, x, cfg)

    return HybridSystem(
        n=H.n,
        m_C=H.m_C,
        m_D=H.m_D,
        f=H.f,
        g=H.g,
        viability_override=H.viability_override,
        jump_gate=gate,
        name=f"{H.name}#flowing-first",
    )


@dataclass(frozen=True)
class ResidualReport:
    ok: bool
    flow_residual: float
    flow_membership: float
    jump_residual: float
    jump_membership: float
    notes: tuple[str, ...] = ()


def is_solution(arc: HybridArc, system, config: SolverConfig) -> ResidualReport:
    """Certify an arc against a system by residuals.

    Flow intervals are resampled and differentiated with 5-point 4th-order
    finite differences; the derivative must match the flow map within
    res_tol_flow away from impulse instants (which are measure zero for the
    flow condition), and the flow-set margin must stay within tol_set (plus an
    interpolation allowance) on [t_start, t_end). Jumps must reproduce the
    jump map within res_tol_jump from points inside the jump set.
    """
    run = _Run(system, config)
    if arc.state_dim != run.n:
        raise DomainError("arc and system dimensions differ")
    notes: list[str] = []
    flow_res = 0.0
    flow_mem = -math.inf
    stop_times = [s for (s, jj) in run.stops]
    for seg, (a, b, j) in zip(arc.segments, arc.domain.intervals):
        if b - a <= 0.0:
            continue
        h_fd = min(1e-3, (b - a) / 8.0)
        m = max(9, int(math.ceil((b - a) / h_fd)) + 1)
        ts = np.linspace(a, b, m)
        d = ts[1] - ts[0]
        xs = seg.eval_many(ts)
        fd = np.empty_like(xs)
        fd[2:-2] = (xs[:-4] - 8.0 * xs[1:-3] + 8.0 * xs[3:-1] - xs[4:]) / (12.0 * d)
        fd[0] = (-25.0 * xs[0] + 48.0 * xs[1] - 36.0 * xs[2] + 16.0 * xs[3] - 3.0 * xs[4]) / (
            12.0 * d
        )
        fd[1] = (-3.0 * xs[0] - 10.0 * xs[1] + 18.0 * xs[2] - 6.0 * xs[3] + xs[4]) / (12.0 * d)
        fd[-1] = (
            25.0 * xs[-1] - 48.0 * xs[-2] + 36.0 * xs[-3] - 16.0 * xs[-4] + 3.0 * xs[-5]
        ) / (12.0 * d)
        fd[-2] = (3.0 * xs[-1] + 10.0 * xs[-2] - 18.0 * xs[-3] + 6.0 * xs[-4] - xs[-5]) / (
            12.0 * d
        )
        for i in range(m):
            t_i = float(ts[i])
            if any(abs(t_i - s) <= 2.0 * config.tol_event for s in stop_times):
                continue  # impulse support: excluded from the a.e. flow condition
            r = float(np.linalg.norm(fd[i] - run.rhs(t_i, xs[i], j)))
            flow_res = max(flow_res, r)
        for i in range(m - 1):
            flow_mem = max(flow_mem, run.mC(float(ts[i]), xs[i], j))
        for s in stop_times:
            if a <= s < b:
                flow_mem = max(flow_mem, run.mC(s, seg.eval_many(np.array([s]))[0], j))
    jump_res = 0.0
    jump_mem = -math.inf
    for k in range(len(arc.segments) - 1):
        a, b, j = arc.domain.intervals[k]
        x_pre = arc.segments[k].states[-1]
        x_post = arc.segments[k + 1].states[0]
        expected = run.jump(b, x_pre, j)
        jump_res = max(jump_res, float(np.linalg.norm(x_post - expected)))
        jump_mem = max(jump_mem, run.mD(b, x_pre, j))
    mem_allow = config.tol_set + 1e-8
    ok = (
        flow_res <= config.res_tol_flow
        and (flow_mem <= mem_allow)
        and jump_res <= config.res_tol_jump
        and (jump_mem <= config.tol_set + COMPARE_SLACK)
    )
    if flow_res > config.res_tol_flow:
        notes.append(f"flow residual {flow_res:.3g} exceeds {config.res_tol_flow:g}")
    if flow_mem > mem_allow:
        notes.append(f"flow-set margin reaches {flow_mem:.3g}")
    if jump_res > config.res_tol_jump:
        notes.append(f"jump residual {jump_res:.3g} exceeds {config.res_tol_jump:g}")
    if jump_mem > config.tol_set + COMPARE_SLACK:
        notes.append(f"jump-set margin at a jump reaches {jump_mem:.3g}")
    return ResidualReport(
        ok,
        flow_res,
        max(flow_mem, -1e308) if flow_mem > -math.inf else 0.0,
        jump_res,
        max(jump_mem, -1e308) if jump_mem > -math.inf else 0.0,
        tuple(notes),
    )
