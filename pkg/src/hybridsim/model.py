"""Hybrid system descriptions: margin-rendered sets, flow and jump maps,
closed-loop assembly, and structural audits.

Sets are rendered by margin functions: x belongs to a set when its margin is
<= tol_set. Margins are continuous surrogates for set membership, so boundary
queries degrade gracefully under perturbation.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .core import DimensionMismatch

TOL_SET = 1e-9


@dataclass(frozen=True)
class MarginFunction:
    """Scalar margin m(x); the rendered set is {x : m(x) <= tol}."""

    evaluator: Callable[[np.ndarray], float]
    description: str = ""

    def __call__(self, x) -> float:
        return float(self.evaluator(np.asarray(x, dtype=np.float64)))


def affine_margin(a: Sequence[float], b: float, description: str = "") -> MarginFunction:
    """Margin a . x - b for the half-space {a . x <= b}."""
    a_vec = np.asarray(a, dtype=np.float64)
    return MarginFunction(lambda x: float(a_vec @ x) - b, description or "half-space")


def margin_max(margins: Sequence[MarginFunction], description: str = "") -> MarginFunction:
    """Intersection of margin-rendered sets."""
    ms = tuple(margins)
    return MarginFunction(lambda x: max(m(x) for m in ms), description or "intersection")


def margin_min(margins: Sequence[MarginFunction], description: str = "") -> MarginFunction:
    """Union of margin-rendered sets."""
    ms = tuple(margins)
    return MarginFunction(lambda x: min(m(x) for m in ms), description or "union")


def negate_margin(m: MarginFunction, description: str = "") -> MarginFunction:
    """Margin of the closed complement closure({m > 0})."""
    return MarginFunction(lambda x: -m(x), description or f"complement of ({m.description})")


@dataclass(frozen=True)
class HybridSystem:
    """Flow set / flow map / jump set / jump map, rendered numerically.

    viability_override, when present, answers "does a flow staying in C exist
    from x for some positive time" analytically; it may return None to defer
    to the numeric probe. jump_gate, when present, restricts the jump set to
    the points where it returns True.
    """

    n: int
    m_C: MarginFunction
    m_D: MarginFunction
    f: Callable[[np.ndarray], np.ndarray]
    g: Callable[[np.ndarray], np.ndarray]
    viability_override: Optional[Callable[[np.ndarray], Optional[bool]]] = None
    jump_gate: Optional[Callable[[np.ndarray], bool]] = None
    name: str = "system"

    def in_C(self, x, tol: float = TOL_SET) -> bool:
        return self.m_C(x) <= tol

    def in_D(self, x, tol: float = TOL_SET) -> bool:
        return self.m_D(x) <= tol

    def in_domain(self, x, tol: float = TOL_SET) -> bool:
        return self.in_C(x, tol) or self.in_D(x, tol)

    def jump_enabled(self, x, tol: float = TOL_SET) -> bool:
        if not self.in_D(x, tol):
            return False
        if self.jump_gate is None:
            return True
        return bool(self.jump_gate(np.asarray(x, dtype=np.float64)))


@dataclass(frozen=True)
class ControlLoopSpec:
    """A plant in feedback with a hybrid controller.

    State order is (x_p, x_c). The plant flows with f_p(x_p, u) under feedback
    u = k_c(x); the controller state flows with f_c(x) and resets to g_c(x) on
    jumps, which leave the plant state unchanged. Flow and jump sets are given
    as margins on the full state.
    """

    n_p: int
    n_c: int
    n_u: int
    f_p: Callable[[np.ndarray, np.ndarray], np.ndarray]
    k_c: Callable[[np.ndarray], np.ndarray]
    f_c: Callable[[np.ndarray], np.ndarray]
    g_c: Callable[[np.ndarray], np.ndarray]
    m_C: MarginFunction
    m_D: MarginFunction
    name: str = "closed-loop"


def build_closed_loop(
    spec: ControlLoopSpec,
    viability_override: Optional[Callable[[np.ndarray], Optional[bool]]] = None,
) -> HybridSystem:
    """Assemble the closed-loop hybrid system from a plant/controller pair."""
    n = spec.n_p + spec.n_c

    def f(x: np.ndarray) -> np.ndarray:
        xp = x[: spec.n_p]
        u = np.asarray(spec.k_c(x), dtype=np.float64)
        return np.concatenate(
            [np.asarray(spec.f_p(xp, u), np.float64), np.asarray(spec.f_c(x), np.float64)]
        )

    def g(x: np.ndarray) -> np.ndarray:
        return np.concatenate(
            [x[: spec.n_p], np.asarray(spec.g_c(x), dtype=np.float64)]
        )

    probe = np.zeros(n)
    u0 = np.asarray(spec.k_c(probe), dtype=np.float64)
    if u0.shape != (spec.n_u,):
        raise DimensionMismatch("k_c must return an input of width n_u")
    if np.asarray(spec.f_p(probe[: spec.n_p], u0)).shape != (spec.n_p,):
        raise DimensionMismatch("f_p must return a plant derivative of width n_p")
    if np.asarray(spec.f_c(probe)).shape != (spec.n_c,):
        raise DimensionMismatch("f_c must return a controller derivative of width n_c")
    if np.asarray(spec.g_c(probe)).shape != (spec.n_c,):
        raise DimensionMismatch("g_c must return a controller reset of width n_c")
    float(spec.m_C(probe))
    float(spec.m_D(probe))

    return HybridSystem(
        n=n,
        m_C=spec.m_C,
        m_D=spec.m_D,
        f=f,
        g=g,
        viability_override=viability_override,
        name=spec.name,
    )


@dataclass(frozen=True)
class AuditReport:
    samples_checked: int
    violations: tuple[str, ...]
    lipschitz_f: float
    lipschitz_g: float
    notes: tuple[str, ...] = ()

    @property
    def ok(self) -> bool:
        return not self.violations


def audit_basic_conditions(
    system: HybridSystem,
    box: Sequence[tuple[float, float]],
    samples: int = 200,
    seed: int = 0,
    lipschitz_cap: float = 1e6,
    tol: float = TOL_SET,
) -> AuditReport:
    """Sampling audit of regularity needed for well-posed simulation: finite
    continuous maps on the sampled box, and jumps that land back in C u D.

    Margin-rendered sets are closed sublevel sets by construction, which the
    report records as a note rather than re-deriving.
    """
    rng = np.random.default_rng(seed)
    lo = np.asarray([b[0] for b in box], np.float64)
    hi = np.asarray([b[1] for b in box], np.float64)
    if lo.shape != (system.n,):
        raise DimensionMismatch("box must have one (lo, hi) pair per state")
    pts = rng.uniform(lo, hi, size=(samples, system.n))
    violations: list[str] = []
    lip_f = 0.0
    lip_g = 0.0
    h = 1e-5 * max(1.0, float(np.max(hi - lo)))
    for x in pts:
        fx = np.asarray(system.f(x), np.float64)
        gx = np.asarray(system.g(x), np.float64)
        if fx.shape != (system.n,) or not np.all(np.isfinite(fx)):
            violations.append(f"f not finite/sized at {x.tolist()}")
            continue
        if gx.shape != (system.n,) or not np.all(np.isfinite(gx)):
            violations.append(f"g not finite/sized at {x.tolist()}")
            continue
        d = rng.normal(size=system.n)
        d /= np.linalg.norm(d)
        y = x + h * d
        r_f = float(np.linalg.norm(np.asarray(system.f(y), np.float64) - fx)) / h
        r_g = float(np.linalg.norm(np.asarray(system.g(y), np.float64) - gx)) / h
        lip_f = max(lip_f, r_f)
        lip_g = max(lip_g, r_g)
        if r_f > lipschitz_cap:
            violations.append(f"f growth {r_f:.3g} exceeds cap near {x.tolist()}")
        if r_g > lipschitz_cap:
            violations.append(f"g growth {r_g:.3g} exceeds cap near {x.tolist()}")
        if system.in_D(x, tol) and not system.in_domain(gx, tol):
            violations.append(f"jump from {x.tolist()} lands outside C u D at {gx.tolist()}")
    notes = ("sets rendered as closed sublevel sets of continuous margins",)
    return AuditReport(samples, tuple(violations), lip_f, lip_g, notes)


@dataclass(frozen=True)
class UniquenessPointReport:
    point: tuple[float, ...]
    classification: str  # "flow-only", "flow-and-jump", "jump-only", "outside"
    unique: Optional[bool]
    detail: str


def check_uniqueness_conditions(
    system: HybridSystem,
    points: Sequence[np.ndarray],
    horizon: float = 0.25,
    tol: float = TOL_SET,
) -> tuple[UniquenessPointReport, ...]:
    """Point-wise check of the two conditions that make solutions unique:
    from C \\ D only one flow stays in C, and from C n D no flow stays in C.
    """
    from .simulate import SolverConfig, integrate_flow, viability_in_C

    reports = []
    for p in points:
        x = np.asarray(p, dtype=np.float64)
        c_mem = system.in_C(x, tol)
        d_mem = system.in_D(x, tol)
        if not c_mem and not d_mem:
            reports.append(UniquenessPointReport(tuple(x.tolist()), "outside", None, ""))
            continue
        if not c_mem:
            reports.append(
                UniquenessPointReport(
                    tuple(x.tolist()), "jump-only", True, "no flow from D \\ C"
                )
            )
            continue
        if d_mem:
            cfg = SolverConfig(horizon_T=horizon, horizon_J=0)
            viable = viability_in_C(system, x, cfg)
            detail = (
                "flow staying in C exists, so flow and jump both continue"
                if viable
                else "no flow stays in C, the jump is the only continuation"
            )
            reports.append(
                UniquenessPointReport(tuple(x.tolist()), "flow-and-jump", not viable, detail)
            )
            continue
        cfg_a = SolverConfig(rel_tol=1e-10, abs_tol=1e-12, horizon_T=horizon, horizon_J=0)
        cfg_b = SolverConfig(rel_tol=3e-8, abs_tol=1e-10, horizon_T=horizon, horizon_J=0)
        try:
            seg_a, _ = integrate_flow(system, x, 0.0, cfg_a)
            seg_b, _ = integrate_flow(system, x, 0.0, cfg_b)
        except Exception as exc:  # pragma: no cover - defensive
            reports.append(
                UniquenessPointReport(tuple(x.tolist()), "flow-only", False, f"probe failed: {exc}")
            )
            continue
        t_common = min(seg_a.times[-1], seg_b.times[-1])
        xa = seg_a.eval_many(np.array([t_common]))[0]
        xb = seg_b.eval_many(np.array([t_common]))[0]
        gap = float(np.linalg.norm(xa - xb))
        scale = 1.0 + float(np.linalg.norm(xa))
        unique = gap <= 1e-6 * scale
        reports.append(
            UniquenessPointReport(
                tuple(x.tolist()),
                "flow-only",
                unique,
                f"tolerance-perturbed flows differ by {gap:.3g} at t={t_common:.6g}",
            )
        )
    return tuple(reports)
