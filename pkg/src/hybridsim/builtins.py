"""Built-in example systems, perturbation signals, and reproducible
experiment bundles.

Two systems ship with the package: a planar constant-flow system whose jump
set is a wedge met tangentially by the flow, and a plant in feedback with a
reset controller whose nominal trajectory slides along the jump-set boundary.
Both make the difference between jump-priority and flow-priority execution,
and the effect of arbitrarily small measurement error, directly observable.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from .core import NumericFailure
from .model import (
    TOL_SET,
    ControlLoopSpec,
    HybridSystem,
    MarginFunction,
    build_closed_loop,
)
from .perturbation import (
    PerturbationSignal,
    PerturbedSystem,
    make_impulse_signal,
    make_time_signal,
)
from .simulate import (
    FLOWING_FIRST,
    JUMPING_FIRST,
    SolverConfig,
    is_solution,
    simulate_with_info,
)


def planar_system() -> HybridSystem:
    """Constant rightward flow against a wedge-shaped jump set.

    The jump set is the wedge above the lines x2 = x1 + 1 and x2 = 1 - x1
    (vertex at (0, 1)); the flow set is the closure of its complement; every
    jump resets the state to the origin. Flowing along x2 = 1 meets the wedge
    only at the vertex, so solutions started on that ray admit both a jump
    and a continued flow there.
    """

    def m1(x: np.ndarray) -> float:
        return float(x[0] - x[1] + 1.0)

    def m2(x: np.ndarray) -> float:
        return float(-x[0] - x[1] + 1.0)

    m_D = MarginFunction(lambda x: max(m1(x), m2(x)), "wedge above both edge lines")
    m_C = MarginFunction(lambda x: -max(m1(x), m2(x)), "closure of the wedge complement")

    def viable(x: np.ndarray) -> bool:
        mc = -max(m1(x), m2(x))
        if mc > TOL_SET:
            return False  # outside the flow set
        if mc < -TOL_SET:
            return True  # interior point: flow continues for a while
        # boundary: the flow (1, 0) raises m1 and lowers m2, so the state
        # stays out of the wedge interior exactly when the right edge margin
        # is not already negative
        return m1(x) >= -2.0 * TOL_SET

    return HybridSystem(
        n=2,
        m_C=m_C,
        m_D=m_D,
        f=lambda x: np.array([1.0, 0.0]),
        g=lambda x: np.array([0.0, 0.0]),
        viability_override=viable,
        name="planar",
    )


def planar_grazing(x, tol: float = 1e-9) -> bool:
    """Initial points whose nominal flow meets the wedge boundary without
    crossing it: the horizontal ray into the vertex and the right edge.
    Solutions from these points are non-unique and fragile under measurement
    error; everywhere else the jump-set entry is transversal."""
    x = np.asarray(x, dtype=np.float64)
    on_left_ray = abs(x[1] - 1.0) <= tol and x[0] <= tol
    on_right_edge = abs(x[0] - x[1] + 1.0) <= tol and x[0] >= -tol
    return bool(on_left_ray or on_right_edge)


def fore_system(eps: float = 0.1, rho: float = 0.1, lam: float = 1.0) -> HybridSystem:
    """A two-state plant in feedback with a first-order reset controller.

    State (x1, x2, xr, tau): the plant output x2 is fed back through the
    controller state xr, which resets to zero when sigma = eps*x2^2 -
    2*x2*xr reaches zero from above, and tau is a dwell timer that keeps
    resets at least rho apart. Flow is allowed while sigma >= 0 or tau <=
    rho; a reset is allowed when sigma <= 0 and tau >= rho. From
    (1, 0, -1, 0) the output stays identically zero, so the trajectory
    slides along the reset-set boundary once the dwell expires.
    """

    def sigma(x: np.ndarray) -> float:
        return float(eps * x[1] * x[1] - 2.0 * x[1] * x[2])

    m_C = MarginFunction(
        lambda x: min(-sigma(x), float(x[3]) - rho), "reset not yet favorable or dwell running"
    )
    m_D = MarginFunction(
        lambda x: max(sigma(x), rho - float(x[3])), "reset favorable after dwell"
    )

    atol = 1e-8

    def viable(x: np.ndarray) -> Optional[bool]:
        s = sigma(x)
        tau = float(x[3])
        if tau < rho - TOL_SET:
            return True  # dwell branch has time left
        if s > TOL_SET:
            return True  # interior of the sigma branch
        if s < -TOL_SET:
            # only the dwell face holds x in the flow set, and tau rises
            # through rho immediately
            return False
        # on the sigma = 0 boundary with the dwell elapsed: first-order test
        f2 = float(x[0]) - 0.2 * float(x[1]) + float(x[2])
        f3 = -float(x[1]) - lam * float(x[2])
        sdot = (2.0 * eps * float(x[1]) - 2.0 * float(x[2])) * f2 - 2.0 * float(x[1]) * f3
        if sdot > atol:
            return True
        if sdot < -atol:
            return False
        if lam == 1.0 and abs(float(x[1])) <= atol and abs(float(x[0]) + float(x[2])) <= atol:
            return True  # x2 = 0, x1 + xr = 0 is invariant: sigma stays 0
        if abs(float(x[1])) <= atol and abs(float(x[2])) <= atol:
            return True  # sigma ~ eps*x2^2 stays nonnegative near xr = 0
        return None  # degenerate tangency: defer to the numeric probe

    spec = ControlLoopSpec(
        n_p=2,
        n_c=2,
        n_u=1,
        f_p=lambda xp, u: np.array([u[0], xp[0] - 0.2 * xp[1] + u[0]]),
        k_c=lambda x: np.array([x[2]]),
        f_c=lambda x: np.array([-lam * x[2] - x[1], 1.0]),
        g_c=lambda x: np.array([0.0, 0.0]),
        m_C=m_C,
        m_D=m_D,
        name="fore",
    )
    return build_closed_loop(spec, viability_override=viable)


def output_noise_signal(n: Callable[[float], float]) -> PerturbationSignal:
    """Measurement error on the regulated output of the reset-control loop.

    Only the controller sees x2 + delta*n(t): the flow correction restores
    the true plant dynamics and the jump correction removes the shift from
    the preserved plant state. |n| must stay within 1.
    """
    return make_time_signal(
        4,
        n1=lambda t: (0.0, n(t), 0.0, 0.0),
        n2=lambda t: (0.0, 0.2 * n(t), 0.0, 0.0),
        n3=lambda t: (0.0, -n(t), 0.0, 0.0),
    )


def planar_impulse(direction: float) -> PerturbationSignal:
    """One measurement impulse of the given sign on x2 at hybrid time (1, 0),
    exactly when the nominal planar flow from (-1, 1) reaches the wedge
    vertex. +1 pushes the measured state into the wedge (forcing the jump),
    -1 pulls it away (suppressing the jump)."""
    return make_impulse_signal(2, ch1=(((1.0, 0), (0.0, direction)),))


_SYSTEMS: dict[str, Callable[[], HybridSystem]] = {
    "planar": planar_system,
    "fore": fore_system,
}

_SIGNALS: dict[str, Callable[[], PerturbationSignal]] = {
    "na": lambda: output_noise_signal(lambda t: math.exp(-t) * math.cos(10.0 * math.pi * t)),
    "nb": lambda: output_noise_signal(lambda t: math.cos(10.0 * math.pi * t)),
    "n1a": lambda: planar_impulse(1.0),
    "n1b": lambda: planar_impulse(-1.0),
}

SIGNAL_SYSTEM: dict[str, str] = {"na": "fore", "nb": "fore", "n1a": "planar", "n1b": "planar"}

SAMPLE_BOXES: dict[str, tuple[tuple[float, float], ...]] = {
    "planar": ((-3.0, 3.0), (-3.0, 3.0)),
    "fore": ((-2.0, 2.0), (-2.0, 2.0), (-2.0, 2.0), (0.0, 0.3)),
}


def get_system(name: str) -> HybridSystem:
    try:
        return _SYSTEMS[name]()
    except KeyError:
        raise KeyError(f"unknown system {name!r}; available: {sorted(_SYSTEMS)}") from None


def get_signal(name: str) -> PerturbationSignal:
    try:
        return _SIGNALS[name]()
    except KeyError:
        raise KeyError(f"unknown signal {name!r}; available: {sorted(_SIGNALS)}") from None


def list_builtins() -> dict:
    return {
        "systems": sorted(_SYSTEMS),
        "signals": {k: SIGNAL_SYSTEM[k] for k in sorted(_SIGNALS)},
        "experiments": sorted(EXPERIMENTS),
    }


def system_from_config(cfg: dict) -> HybridSystem:
    """Build an affine hybrid system from a plain-dict description.

    Schema "hybridsim/1": flow_map/jump_map are {"A": matrix, "b": vector}
    rendered as x -> A x + b; jump_set is {"combine": "max"|"min", "terms":
    [{"a": vector, "b": scalar}, ...]} where each term renders the half-space
    a . x <= b, combined by intersection ("max") or union ("min"); flow_set
    follows the same schema or is {"complement": true} for the closure of
    the jump set's complement.
    """
    if cfg.get("schema") != "hybridsim/1":
        raise ValueError('config must declare "schema": "hybridsim/1"')
    n = int(cfg["n"])

    def affine_map(d: dict) -> Callable[[np.ndarray], np.ndarray]:
        A = np.asarray(d["A"], dtype=np.float64)
        b = np.asarray(d["b"], dtype=np.float64)
        if A.shape != (n, n) or b.shape != (n,):
            raise ValueError(f"map must have an {n}x{n} matrix and length-{n} offset")
        return lambda x: A @ x + b

    def margin_from(d: dict) -> MarginFunction:
        terms = d["terms"]
        if not terms:
            raise ValueError("a set needs at least one term")
        avs = [np.asarray(t["a"], dtype=np.float64) for t in terms]
        bvs = [float(t["b"]) for t in terms]
        for a in avs:
            if a.shape != (n,):
                raise ValueError(f"set terms must have length-{n} normals")
        combine = d.get("combine", "max")
        if combine == "max":
            return MarginFunction(
                lambda x: max(float(a @ x) - b for a, b in zip(avs, bvs)), "intersection"
            )
        if combine == "min":
            return MarginFunction(
                lambda x: min(float(a @ x) - b for a, b in zip(avs, bvs)), "union"
            )
        raise ValueError('combine must be "max" or "min"')

    m_D = margin_from(cfg["jump_set"])
    flow_d = cfg["flow_set"]
    if flow_d.get("complement"):
        m_C = MarginFunction(lambda x: -m_D(x), "closure of the jump set complement")
    else:
        m_C = margin_from(flow_d)
    return HybridSystem(
        n=n,
        m_C=m_C,
        m_D=m_D,
        f=affine_map(cfg["flow_map"]),
        g=affine_map(cfg["jump_map"]),
        name=str(cfg.get("name", "custom")),
    )


@dataclass(frozen=True)
class RunSpec:
    """One trajectory of an experiment: a strategy, and optionally a signal
    scaled by delta with the start displaced by delta * xi_offset."""

    label: str
    strategy: str = JUMPING_FIRST
    delta: float = 0.0
    signal: Optional[str] = None
    xi_offset: Optional[tuple[float, ...]] = None


@dataclass(frozen=True)
class ExperimentSpec:
    name: str
    system: str
    xi: tuple[float, ...]
    runs: tuple[RunSpec, ...]
    horizon_T: float = 3.0
    horizon_J: int = 2
    overrides: tuple[tuple[str, float], ...] = ()


_FORE_XI = (1.0, 0.0, -1.0, 0.0)
_FORE_OFFSET = (0.0, 1.0, 0.0, 0.0)


def _fore_sweep(name: str, signal: str) -> ExperimentSpec:
    return ExperimentSpec(
        name=name,
        system="fore",
        xi=_FORE_XI,
        runs=(
            RunSpec("nominal", FLOWING_FIRST),
            RunSpec("delta-1e-01", JUMPING_FIRST, 0.1, signal, _FORE_OFFSET),
            RunSpec("delta-1e-02", JUMPING_FIRST, 0.01, signal, _FORE_OFFSET),
            RunSpec("delta-1e-06", JUMPING_FIRST, 1e-6, signal, _FORE_OFFSET),
        ),
        horizon_T=3.0,
        horizon_J=2,
    )


EXPERIMENTS: dict[str, ExperimentSpec] = {
    "fore-na-sweep": _fore_sweep("fore-na-sweep", "na"),
    "fore-nb-sweep": _fore_sweep("fore-nb-sweep", "nb"),
    "planar-fig2": ExperimentSpec(
        name="planar-fig2",
        system="planar",
        xi=(-1.0, 1.0),
        runs=(
            RunSpec("jumping-first", JUMPING_FIRST),
            RunSpec("flowing-first", FLOWING_FIRST),
            RunSpec("forced-delta-1e-01", JUMPING_FIRST, 0.1, "n1a"),
            RunSpec("suppressed-delta-1e-01", JUMPING_FIRST, 0.1, "n1b"),
        ),
        horizon_T=3.0,
        horizon_J=1,
        overrides=(("max_step", 0.05),),
    ),
}


def _write_signal_csv(sig: PerturbationSignal, path: Path, T: float) -> None:
    dim = sig.dim
    cols = (
        ["t", "j"]
        + [f"n1_{i + 1}" for i in range(dim)]
        + [f"n2_{i + 1}" for i in range(dim)]
        + [f"n3_{i + 1}" for i in range(dim)]
    )
    if sig.kind == "impulse":
        instants = list(sig.mandatory_stops)
    else:
        instants = [(t, 0) for t in np.linspace(0.0, T, 2001)]
    with open(path, "w") as fh:
        fh.write(",".join(cols) + "\n")
        for t, j in instants:
            vals = np.concatenate([sig.eval1(t, j), sig.eval2(t, j), sig.eval3(t, j)])
            cells = [repr(float(t)), str(int(j))] + [repr(float(v)) for v in vals]
            fh.write(",".join(cells) + "\n")


def run_experiment(spec: ExperimentSpec, out_dir, config: Optional[SolverConfig] = None) -> dict:
    """Execute every run of the spec, certify each arc as a solution of the
    system it was produced from, and write a bundle: one CSV per run, one CSV
    per signal, report.json, and summary.txt. Returns the report dict."""
    base = get_system(spec.system)
    cfg = (config or SolverConfig()).with_(
        horizon_T=spec.horizon_T, horizon_J=spec.horizon_J, **dict(spec.overrides)
    )
    out = Path(out_dir) / spec.name
    out.mkdir(parents=True, exist_ok=True)
    runs = []
    lines = []
    signals_used: dict[str, PerturbationSignal] = {}
    for r in spec.runs:
        xi = np.asarray(spec.xi, dtype=np.float64)
        if r.delta > 0.0:
            if r.signal is None:
                raise ValueError(f"run {r.label}: delta > 0 requires a signal")
            sig = get_signal(r.signal)
            signals_used[r.signal] = sig
            system = PerturbedSystem(base, sig, r.delta)
            if r.xi_offset is not None:
                xi = xi + r.delta * np.asarray(r.xi_offset, dtype=np.float64)
        else:
            system = base
        arc, info = simulate_with_info(system, r.strategy, xi, cfg)
        cert = is_solution(arc, system, cfg)
        if not cert.ok:
            raise NumericFailure(
                f"run {r.label} failed residual certification: {'; '.join(cert.notes)}"
            )
        csv_name = f"{r.label}.csv"
        with open(out / csv_name, "w") as fh:
            arc.to_csv(fh)
        entry = {
            "label": r.label,
            "strategy": r.strategy,
            "delta": r.delta,
            "signal": r.signal,
            "xi": [float(v) for v in xi],
            "csv": csv_name,
            "stop_reason": info.get("stop_reason"),
            "t_max": arc.t_max,
            "j_max": arc.j_max,
            "jump_times": [float(t) for t in arc.jump_times],
        }
        runs.append(entry)
        jt = ", ".join(f"{t:.6f}" for t in arc.jump_times) or "none"
        lines.append(
            f"{r.label}: stop={entry['stop_reason']}, t_max={arc.t_max:.6f}, "
            f"jumps={entry['j_max']} at [{jt}]"
        )
    for sid, sig in sorted(signals_used.items()):
        _write_signal_csv(sig, out / f"signal_{sid}.csv", spec.horizon_T)
    report = {
        "name": spec.name,
        "system": spec.system,
        "xi": [float(v) for v in spec.xi],
        "horizon_T": spec.horizon_T,
        "horizon_J": spec.horizon_J,
        "runs": runs,
    }
    with open(out / "report.json", "w") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")
    with open(out / "summary.txt", "w") as fh:
        fh.write(f"{spec.name}: system={spec.system}, xi={list(spec.xi)}\n")
        for line in lines:
            fh.write(line + "\n")
    return report


def write_experiment_bundles(out_root, names=None) -> list[str]:
    """Run the named experiments (all by default) into out_root."""
    done = []
    for name in sorted(names or EXPERIMENTS):
        run_experiment(EXPERIMENTS[name], out_root)
        done.append(name)
    return done
