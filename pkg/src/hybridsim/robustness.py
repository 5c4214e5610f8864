"""Falsification probes for robustness of solutions under admissible
perturbations, and sampling verification that a derived implementation stands
in for the system it was derived from.

Both probes work on finite grids: initial-condition samples, a perturbation
magnitude grid, a signal library, and closeness queries (T, J, eps). A probe
reports a counterexample only when the failure persists down the entire lower
part of the magnitude grid, so isolated large-magnitude artifacts are not
mistaken for asymptotic non-robustness. Verdicts are grid-relative: absence of
a counterexample certifies nothing beyond the sampled grid.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .core import ClosenessWitness, DomainError, HybridArc, closeness_check
from .model import HybridSystem
from .perturbation import PerturbationSignal, PerturbedSystem
from .simulate import ENUMERATE_ALL, SolverConfig, is_solution, simulate_with_info


@dataclass(frozen=True)
class RobustnessProbeConfig:
    K_samples: tuple
    delta_grid: tuple[float, ...]
    signals: tuple[PerturbationSignal, ...]
    signal_ids: tuple[str, ...]
    queries: tuple[tuple[float, int, float], ...]
    solver: SolverConfig
    init_ball_samples: int = 0  # 0 keeps the full axis stencil (1 + 2n points)

    def __post_init__(self):
        if not self.K_samples or not self.delta_grid or not self.signals or not self.queries:
            raise ValueError("probe needs samples, deltas, signals, and queries")
        if len(self.signal_ids) != len(self.signals):
            raise ValueError("one id per signal required")
        if any(d <= 0.0 for d in self.delta_grid):
            raise ValueError("delta grid must be positive")


@dataclass(frozen=True)
class Counterexample:
    kind: str  # "robustness" or "strong-robustness"
    signal_id: str
    query: tuple[float, int, float]
    delta_threshold: float
    failing_deltas: tuple[float, ...]
    xi: tuple[float, ...]
    xi_delta: tuple[float, ...]
    target: HybridArc
    candidates: tuple[HybridArc, ...]
    witness: Optional[ClosenessWitness]

    def recheck(self) -> bool:
        """Re-run the stored closeness comparisons; True when the failure
        reproduces (no candidate is close to the target)."""
        T, J, eps = self.query
        return all(
            not closeness_check(self.target, c, T, J, eps).close for c in self.candidates
        )


@dataclass(frozen=True)
class ProbeReport:
    verdict: str  # "counterexample_found" | "no_counterexample_found"
    counterexample: Optional[Counterexample]
    coverage: dict
    dead_ends: tuple[str, ...]


def _ball_stencil(xi: np.ndarray, delta: float, cap: int) -> list[np.ndarray]:
    pts = [np.array(xi, np.float64)]
    n = xi.shape[0]
    for i in range(n):
        e = np.zeros(n)
        e[i] = delta
        pts.append(xi + e)
        pts.append(xi - e)
    if cap > 0:
        pts = pts[:cap]
    return pts


def _variants(arc: HybridArc) -> list[HybridArc]:
    """An arc together with its jump-level prefixes."""
    out = [arc]
    for J in range(arc.j_max):
        out.append(arc.truncate(math.inf, J))
    return out


def _enumerate_arcs(system, xi, solver, dead_ends: list, label: str):
    arcs, info = simulate_with_info(system, ENUMERATE_ALL, xi, solver)
    for arc, reason in zip(arcs, info.get("reasons", ())):
        if reason == "dead_end":
            dead_ends.append(
                f"{label}: dead end at (t={arc.t_max:.6g}, j={arc.j_max}) "
                f"from {np.asarray(xi).tolist()} (reported, run continues)"
            )
    if info.get("truncated_by_budget"):
        dead_ends.append(f"{label}: branch budget exhausted from {np.asarray(xi).tolist()}")
    return arcs


def _failing_prefix(grid: Sequence[float], failing: set) -> tuple[float, ...]:
    out = []
    for d in sorted(grid):
        if d in failing:
            out.append(d)
        else:
            break
    return tuple(out)


def probe_robustness(H: HybridSystem, cfg: RobustnessProbeConfig) -> ProbeReport:
    """Search for perturbed solutions with no close nominal partner.

    Nominal solutions are enumerated from every sample; perturbed solutions
    are enumerated from each sample's axis stencil in the delta ball. A query
    fails at magnitude delta when some perturbed arc is close to no nominal
    arc (jump-level prefixes included); a counterexample needs the failure at
    every grid magnitude from the bottom up.
    """
    solver = cfg.solver
    dead_ends: list[str] = []
    K = [np.asarray(x, np.float64) for x in cfg.K_samples]
    nominal: list[list[HybridArc]] = []
    for i, xi in enumerate(K):
        arcs = _enumerate_arcs(H, xi, solver, dead_ends, f"nominal[{i}]")
        nominal.append(arcs)
    variants: list[list[HybridArc]] = [
        [v for arc in arcs for v in _variants(arc)] for arcs in nominal
    ]
    matches_checked = 0
    perturbed_runs = 0
    skipped_starts = 0
    # evidence[(signal, query)] = {delta: (xi, xi_delta, target, candidates, witness)}
    evidence: dict = {}
    failing: dict = {}
    grid = sorted(cfg.delta_grid)
    for s_idx, sig in enumerate(cfg.signals):
        for delta in grid:
            pert = PerturbedSystem(H, sig, delta)
            for i, xi in enumerate(K):
                for xd in _ball_stencil(xi, delta, cfg.init_ball_samples):
                    try:
                        arcs = _enumerate_arcs(
                            pert, xd, solver, dead_ends, f"perturbed[{i}]"
                        )
                    except DomainError:
                        skipped_starts += 1
                        continue
                    perturbed_runs += 1
                    pool = variants[i] + [v for k in range(len(K)) if k != i for v in variants[k]]
                    for q in cfg.queries:
                        T, J, eps = q
                        for p in arcs:
                            hit = False
                            last_witness = None
                            for cand in pool:
                                matches_checked += 1
                                verdict = closeness_check(p, cand, T, J, eps)
                                if verdict.close:
                                    hit = True
                                    break
                                last_witness = verdict.witness
                            if not hit:
                                key = (s_idx, q)
                                failing.setdefault(key, set()).add(delta)
                                evidence.setdefault(key, {}).setdefault(
                                    delta,
                                    (
                                        tuple(xi.tolist()),
                                        tuple(np.asarray(xd).tolist()),
                                        p,
                                        tuple(pool),
                                        last_witness,
                                    ),
                                )
    best: Optional[Counterexample] = None
    for (s_idx, q), fail_set in sorted(failing.items(), key=lambda kv: (kv[0][1][2], kv[0][0])):
        prefix = _failing_prefix(grid, fail_set)
        if not prefix:
            continue
        xi_t, xd_t, target, cands, wit = evidence[(s_idx, q)][prefix[0]]
        best = Counterexample(
            "robustness",
            cfg.signal_ids[s_idx],
            q,
            prefix[-1],
            prefix,
            xi_t,
            xd_t,
            target,
            cands,
            wit,
        )
        break
    coverage = {
        "initial_points": len(K),
        "signals": len(cfg.signals),
        "deltas": len(grid),
        "queries": len(cfg.queries),
        "nominal_arcs": sum(len(a) for a in nominal),
        "perturbed_runs": perturbed_runs,
        "skipped_starts": skipped_starts,
        "matches_checked": matches_checked,
    }
    verdict = "counterexample_found" if best is not None else "no_counterexample_found"
    return ProbeReport(verdict, best, coverage, tuple(dead_ends))


def probe_strong_robustness(H: HybridSystem, cfg: RobustnessProbeConfig) -> ProbeReport:
    """Search for nominal solutions that some perturbed start cannot shadow.

    For each sample, every maximal nominal solution must have a close
    perturbed partner from every start in the sample's delta-ball stencil
    (partners include jump-level prefixes). A query fails at delta when some
    (nominal arc, perturbed start) pair has no close partner; a counterexample
    needs the failure at every grid magnitude from the bottom up.
    """
    solver = cfg.solver
    dead_ends: list[str] = []
    K = [np.asarray(x, np.float64) for x in cfg.K_samples]
    matches_checked = 0
    perturbed_runs = 0
    skipped_starts = 0
    evidence: dict = {}
    failing: dict = {}
    grid = sorted(cfg.delta_grid)
    nominal: list[list[HybridArc]] = []
    for i, xi in enumerate(K):
        nominal.append(_enumerate_arcs(H, xi, solver, dead_ends, f"nominal[{i}]"))
    for s_idx, sig in enumerate(cfg.signals):
        for delta in grid:
            pert = PerturbedSystem(H, sig, delta)
            for i, xi in enumerate(K):
                pools: list[tuple[tuple, list[HybridArc]]] = []
                for xd in _ball_stencil(xi, delta, cfg.init_ball_samples):
                    try:
                        arcs = _enumerate_arcs(
                            pert, xd, solver, dead_ends, f"perturbed[{i}]"
                        )
                    except DomainError:
                        skipped_starts += 1
                        continue
                    perturbed_runs += 1
                    pools.append(
                        (tuple(np.asarray(xd).tolist()), [v for a in arcs for v in _variants(a)])
                    )
                for q in cfg.queries:
                    T, J, eps = q
                    for n_arc in nominal[i]:
                        for xd_t, cands in pools:
                            hit = False
                            last_witness = None
                            for cand in cands:
                                matches_checked += 1
                                verdict = closeness_check(n_arc, cand, T, J, eps)
                                if verdict.close:
                                    hit = True
                                    break
                                last_witness = verdict.witness
                            if not hit:
                                key = (s_idx, q)
                                failing.setdefault(key, set()).add(delta)
                                evidence.setdefault(key, {}).setdefault(
                                    delta,
                                    (
                                        tuple(xi.tolist()),
                                        xd_t,
                                        n_arc,
                                        tuple(cands),
                                        last_witness,
                                    ),
                                )
    best: Optional[Counterexample] = None
    for (s_idx, q), fail_set in sorted(failing.items(), key=lambda kv: (kv[0][1][2], kv[0][0])):
        prefix = _failing_prefix(grid, fail_set)
        if not prefix:
            continue
        xi_t, xd_t, target, cands, wit = evidence[(s_idx, q)][prefix[0]]
        best = Counterexample(
            "strong-robustness",
            cfg.signal_ids[s_idx],
            q,
            prefix[-1],
            prefix,
            xi_t,
            xd_t,
            target,
            cands,
            wit,
        )
        break
    coverage = {
        "initial_points": len(K),
        "signals": len(cfg.signals),
        "deltas": len(grid),
        "queries": len(cfg.queries),
        "perturbed_runs": perturbed_runs,
        "skipped_starts": skipped_starts,
        "matches_checked": matches_checked,
    }
    verdict = "counterexample_found" if best is not None else "no_counterexample_found"
    return ProbeReport(verdict, best, coverage, tuple(dead_ends))


@dataclass(frozen=True)
class ImplReport:
    ok: bool
    samples: int
    skipped: int
    membership_mismatches: tuple[str, ...]
    nonunique: tuple[str, ...]
    residual_failures: tuple[str, ...]


def verify_implementation(
    H_impl: HybridSystem,
    H: HybridSystem,
    samples: Sequence,
    config: SolverConfig,
) -> ImplReport:
    """Check that a derived implementation covers the original domain, has a
    unique solution from each sample, and that those solutions solve the
    original system (by residual certification).
    """
    membership: list[str] = []
    nonunique: list[str] = []
    residual: list[str] = []
    tol = config.tol_set
    skipped = 0
    pts = [np.asarray(raw, np.float64) for raw in samples]
    for x in pts:
        u_impl = H_impl.in_C(x, tol) or H_impl.jump_enabled(x, tol)
        u_base = H.in_domain(x, tol)
        if u_impl != u_base:
            membership.append(
                f"{x.tolist()}: implementation union {u_impl} vs original {u_base}"
            )
        if not u_base:
            skipped += 1
            continue
        arcs, info = simulate_with_info(H_impl, ENUMERATE_ALL, x, config)
        if info.get("truncated_by_budget") or len(arcs) != 1:
            nonunique.append(f"{x.tolist()}: {len(arcs)} solutions enumerated")
            continue
        rep = is_solution(arcs[0], H, config)
        if not rep.ok:
            residual.append(f"{x.tolist()}: {'; '.join(rep.notes) or 'residuals exceeded'}")
    ok = not membership and not nonunique and not residual
    return ImplReport(
        ok,
        len(pts),
        skipped,
        tuple(membership),
        tuple(nonunique),
        tuple(residual),
    )
