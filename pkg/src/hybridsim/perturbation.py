"""Admissible perturbations of a hybrid system.

A perturbation is three unit-bounded signals (n1, n2, n3) scaled by one
magnitude delta: n1 shifts the state seen by the maps and the set membership
tests, n2 adds to the flow map, and n3 adds to the jump map. Signals may
depend on hybrid time (t, j); the bound ||n_i||_inf <= 1 is asserted on every
evaluation.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .core import DimensionMismatch
from .model import ControlLoopSpec, HybridSystem, TOL_SET

BOUND_SLACK = 1e-12


class SignalBoundError(RuntimeError):
    """A perturbation direction exceeded the unit sup-norm bound."""


def _checked(v: np.ndarray, channel: str, t: float, j: int) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    m = float(np.max(np.abs(v))) if v.size else 0.0
    if not math.isfinite(m) or m > 1.0 + BOUND_SLACK:
        raise SignalBoundError(
            f"|{channel}(t={t}, j={j})|_inf = {m:.6g} exceeds the unit bound"
        )
    return v


@dataclass(frozen=True)
class PerturbationSignal:
    """Unit-bounded perturbation directions on hybrid time.

    n2_state, when present, replaces n2 with a state-aware direction
    (t, j, x) -> R^n; it is used by flow integration while n2 remains the
    state-independent restriction for reporting.
    """

    dim: int
    n1: Callable[[float, int], np.ndarray]
    n2: Callable[[float, int], np.ndarray]
    n3: Callable[[float, int], np.ndarray]
    kind: str = "time"  # "time" | "impulse" | "zero" | "state-aware"
    mandatory_stops: tuple[tuple[float, int], ...] = ()
    n2_state: Optional[Callable[[float, int, np.ndarray], np.ndarray]] = None

    def eval1(self, t: float, j: int) -> np.ndarray:
        return _checked(self.n1(t, j), "n1", t, j)

    def eval2(self, t: float, j: int, x: Optional[np.ndarray] = None) -> np.ndarray:
        if self.n2_state is not None and x is not None:
            return _checked(self.n2_state(t, j, x), "n2", t, j)
        return _checked(self.n2(t, j), "n2", t, j)

    def eval3(self, t: float, j: int) -> np.ndarray:
        return _checked(self.n3(t, j), "n3", t, j)


def zero_signal(dim: int) -> PerturbationSignal:
    z = lambda t, j: np.zeros(dim)
    return PerturbationSignal(dim, z, z, z, kind="zero")


def make_time_signal(
    dim: int,
    n1: Optional[Callable[[float], Sequence[float]]] = None,
    n2: Optional[Callable[[float], Sequence[float]]] = None,
    n3: Optional[Callable[[float], Sequence[float]]] = None,
) -> PerturbationSignal:
    """Signal defined by ordinary-time functions, constant across jumps."""

    def lift(fn):
        if fn is None:
            return lambda t, j: np.zeros(dim)
        return lambda t, j: np.asarray(fn(t), dtype=np.float64)

    return PerturbationSignal(dim, lift(n1), lift(n2), lift(n3), kind="time")


def make_impulse_signal(
    dim: int,
    ch1: Sequence[tuple[tuple[float, int], Sequence[float]]] = (),
    ch2: Sequence[tuple[tuple[float, int], Sequence[float]]] = (),
    ch3: Sequence[tuple[tuple[float, int], Sequence[float]]] = (),
    tol_event: float = 1e-9,
) -> PerturbationSignal:
    """Signal supported on finitely many hybrid instants.

    Each channel is a list of ((t, j), value) pairs; the value acts only when
    the query time is within tol_event of t at the same j. The listed instants
    become mandatory integrator stops so no impulse is skipped over.
    """

    def build(entries):
        table = tuple(((float(t), int(j)), np.asarray(v, np.float64)) for (t, j), v in entries)
        for (t, j), v in table:
            if v.shape != (dim,):
                raise DimensionMismatch("impulse value width must match dim")
            if float(np.max(np.abs(v))) > 1.0 + BOUND_SLACK:
                raise SignalBoundError("impulse value exceeds the unit bound")

        def fn(t: float, j: int) -> np.ndarray:
            for (ti, ji), v in table:
                if ji == j and abs(t - ti) <= tol_event:
                    return v
            return np.zeros(dim)

        return fn, table

    f1, t1 = build(ch1)
    f2, t2 = build(ch2)
    f3, t3 = build(ch3)
    stops = tuple(sorted({(t, j) for (t, j), _ in (*t1, *t2, *t3)}))
    return PerturbationSignal(dim, f1, f2, f3, kind="impulse", mandatory_stops=stops)


@dataclass(frozen=True)
class PerturbedSystem:
    """A hybrid system driven by an admissible perturbation of size delta.

    Flows follow f(x + delta n1) + delta n2 while x + delta n1 lies in C;
    jumps apply g(x + delta n1) + delta n3 when x + delta n1 lies in D.
    """

    base: HybridSystem
    signal: PerturbationSignal
    delta: float

    def __post_init__(self):
        if self.delta <= 0.0 or not math.isfinite(self.delta):
            raise ValueError("delta must be positive and finite")
        if self.signal.dim != self.base.n:
            raise DimensionMismatch("signal width must match the state dimension")

    @property
    def n(self) -> int:
        return self.base.n

    @property
    def name(self) -> str:
        return f"{self.base.name}+{self.signal.kind}(delta={self.delta:g})"

    def measured(self, t: float, x: np.ndarray, j: int) -> np.ndarray:
        return np.asarray(x, np.float64) + self.delta * self.signal.eval1(t, j)

    def rhs(self, t: float, x: np.ndarray, j: int) -> np.ndarray:
        xm = self.measured(t, x, j)
        return np.asarray(self.base.f(xm), np.float64) + self.delta * self.signal.eval2(t, j, x)

    def m_C_at(self, t: float, x: np.ndarray, j: int) -> float:
        return self.base.m_C(self.measured(t, x, j))

    def m_D_at(self, t: float, x: np.ndarray, j: int) -> float:
        return self.base.m_D(self.measured(t, x, j))

    def jump(self, t: float, x: np.ndarray, j: int) -> np.ndarray:
        xm = self.measured(t, x, j)
        return np.asarray(self.base.g(xm), np.float64) + self.delta * self.signal.eval3(t, j)

    def jump_enabled(self, t: float, x: np.ndarray, j: int, tol: float = TOL_SET) -> bool:
        xm = self.measured(t, x, j)
        if self.base.m_D(xm) > tol:
            return False
        if self.base.jump_gate is None:
            return True
        return bool(self.base.jump_gate(xm))


def embed_control_noise(
    spec: ControlLoopSpec,
    d1: Callable[[float], Sequence[float]],
    d2: Optional[Callable[[float], Sequence[float]]] = None,
    bound: float = 1.0,
) -> tuple[PerturbationSignal, float]:
    """Express plant-side measurement noise d1 and input noise d2 as an
    admissible perturbation of the closed loop.

    The returned directions satisfy: n1 shifts only the plant state, the
    state-aware n2 cancels the artificial plant shift so the plant still flows
    from its true state under the noisy input, and n3 removes the shift across
    jumps. `bound` must dominate the sup-norm of every derived direction; the
    signal is normalized by it and (signal, bound) is returned so callers use
    delta_effective = delta * bound.
    """
    n = spec.n_p + spec.n_c
    if bound <= 0.0:
        raise ValueError("bound must be positive")

    def n1(t: float, j: int) -> np.ndarray:
        out = np.zeros(n)
        out[: spec.n_p] = np.asarray(d1(t), np.float64)
        return out / bound

    def n3(t: float, j: int) -> np.ndarray:
        return -n1(t, j)

    def n2_state(t: float, j: int, x: np.ndarray) -> np.ndarray:
        xp = np.asarray(x[: spec.n_p], np.float64)
        d1v = np.asarray(d1(t), np.float64)
        x_meas = np.array(x, dtype=np.float64)
        x_meas[: spec.n_p] = xp + d1v
        u_meas = np.asarray(spec.k_c(x_meas), np.float64)
        d2v = np.asarray(d2(t), np.float64) if d2 is not None else np.zeros(spec.n_u)
        out = np.zeros(n)
        out[: spec.n_p] = np.asarray(spec.f_p(xp, u_meas + d2v), np.float64) - np.asarray(
            spec.f_p(xp + d1v, u_meas), np.float64
        )
        return out / bound

    def n2(t: float, j: int) -> np.ndarray:
        return np.zeros(n)

    sig = PerturbationSignal(
        n, n1, n2, n3, kind="state-aware", n2_state=n2_state
    )
    return sig, bound
