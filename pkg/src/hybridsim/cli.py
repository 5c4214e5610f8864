"""Command-line interface.

Exit codes: 0 success; 1 probe counterexample or failed verification; 2 usage
error; 3 numeric failure. All trajectory output is deterministic CSV.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import builtins as lib
from .core import DomainError, HybridArc, NumericFailure, closeness_check, closeness_margin
from .perturbation import PerturbedSystem
from .robustness import (
    RobustnessProbeConfig,
    probe_robustness,
    probe_strong_robustness,
    verify_implementation,
)
from .simulate import (
    ENUMERATE_ALL,
    FLOWING_FIRST,
    JUMPING_FIRST,
    Scripted,
    SolverConfig,
    derive_flowing_first,
    derive_jumping_first,
    is_solution,
    simulate_with_info,
)

_STRATEGIES = (JUMPING_FIRST, FLOWING_FIRST, ENUMERATE_ALL)


def _parse_vector(text: str) -> np.ndarray:
    try:
        return np.array([float(v) for v in text.split(",") if v.strip() != ""])
    except ValueError:
        raise ValueError(f"not a comma-separated vector: {text!r}") from None


def _parse_floats(text: str) -> tuple[float, ...]:
    return tuple(float(v) for v in text.split(",") if v.strip() != "")


def _parse_queries(text: str) -> tuple[tuple[float, int, float], ...]:
    out = []
    for part in text.split(";"):
        part = part.strip()
        if not part:
            continue
        fields = part.split(":")
        if len(fields) != 3:
            raise argparse.ArgumentTypeError(f"query must be T:J:eps, got {part!r}")
        out.append((float(fields[0]), int(fields[1]), float(fields[2])))
    return tuple(out)


def _load_system(args) -> object:
    if getattr(args, "config", None):
        with open(args.config) as fh:
            return lib.system_from_config(json.load(fh))
    return lib.get_system(args.system)


def _solver(args) -> SolverConfig:
    cfg = SolverConfig()
    kw = {}
    if getattr(args, "T", None) is not None:
        kw["horizon_T"] = args.T
    if getattr(args, "J", None) is not None:
        kw["horizon_J"] = args.J
    if getattr(args, "max_step", None) is not None:
        kw["max_step"] = args.max_step
    return cfg.with_(**kw) if kw else cfg


def _cmd_simulate(args) -> int:
    base = _load_system(args)
    cfg = _solver(args)
    xi = _parse_vector(args.xi)
    system = base
    if args.delta > 0.0:
        if not args.signal:
            print("error: --delta requires --signal", file=sys.stderr)
            return 2
        system = PerturbedSystem(base, lib.get_signal(args.signal), args.delta)
    strategy = args.strategy
    if args.jump_at:
        durations = list(_parse_floats(args.jump_at))
        gaps = [durations[0]] + [b - a for a, b in zip(durations, durations[1:])]
        if any(g < 0 for g in gaps):
            print("error: --jump-at times must be nondecreasing", file=sys.stderr)
            return 2
        strategy = Scripted(tuple(gaps))
    result, info = simulate_with_info(system, strategy, xi, cfg)
    arcs = result if isinstance(result, list) else [result]
    out = Path(args.out) if args.out else None
    if strategy == ENUMERATE_ALL:
        if out is None:
            print("error: enumerate-all needs --out DIRECTORY", file=sys.stderr)
            return 2
        out.mkdir(parents=True, exist_ok=True)
        for i, arc in enumerate(arcs):
            with open(out / f"arc_{i:03d}.csv", "w") as fh:
                arc.to_csv(fh)
        print(f"{len(arcs)} solutions -> {out}")
        for i, (arc, reason) in enumerate(zip(arcs, info.get("reasons", ()))):
            print(f"arc_{i:03d}: stop={reason}, t_max={arc.t_max:.6f}, j_max={arc.j_max}")
    else:
        arc = arcs[0]
        if out is not None:
            with open(out, "w") as fh:
                arc.to_csv(fh)
        else:
            arc.to_csv(sys.stdout)
        print(
            f"stop={info.get('stop_reason')}, t_max={arc.t_max:.6f}, "
            f"j_max={arc.j_max}, jumps at {[round(t, 6) for t in arc.jump_times]}",
            file=sys.stderr,
        )
    return 0


def _cmd_compare(args) -> int:
    with open(args.a) as fh:
        arc_a = HybridArc.from_csv(fh)
    with open(args.b) as fh:
        arc_b = HybridArc.from_csv(fh)
    verdict = closeness_check(arc_a, arc_b, args.T, args.J, args.eps)
    print(f"close: {str(verdict.close).lower()} (T={args.T}, J={args.J}, eps={args.eps})")
    if verdict.witness is not None and not verdict.close:
        w = verdict.witness
        print(
            f"witness: side={w.side}, t={w.t!r}, j={w.j}, "
            f"best_s={w.best_s!r}, best_distance={w.best_distance!r}"
        )
    if args.margin:
        m = closeness_margin(arc_a, arc_b, args.T, args.J)
        print(f"margin: {m!r}")
    return 0


def _probe_config(args, system) -> RobustnessProbeConfig:
    if args.samples_file:
        pts = np.loadtxt(args.samples_file, delimiter=",", ndmin=2)
        samples = tuple(tuple(float(v) for v in row) for row in pts)
    else:
        samples = tuple(tuple(_parse_vector(s)) for s in args.xi)
    names = tuple(s.strip() for s in args.signals.split(",") if s.strip())
    return RobustnessProbeConfig(
        K_samples=samples,
        delta_grid=_parse_floats(args.delta_grid),
        signals=tuple(lib.get_signal(n) for n in names),
        signal_ids=names,
        queries=_parse_queries(args.queries),
        solver=_solver(args),
    )


def _cmd_probe(args) -> int:
    base = _load_system(args)
    system = {
        "none": lambda s: s,
        "jumping-first": derive_jumping_first,
        "flowing-first": derive_flowing_first,
    }[args.impl](base)
    cfg = _probe_config(args, system)
    probe = probe_strong_robustness if args.kind == "strong" else probe_robustness
    report = probe(system, cfg)
    payload = {
        "verdict": report.verdict,
        "coverage": report.coverage,
        "dead_ends": list(report.dead_ends),
    }
    if report.counterexample is not None:
        ce = report.counterexample
        payload["counterexample"] = {
            "kind": ce.kind,
            "signal": ce.signal_id,
            "query": list(ce.query),
            "delta_threshold": ce.delta_threshold,
            "failing_deltas": list(ce.failing_deltas),
            "xi": list(ce.xi),
            "xi_delta": list(ce.xi_delta),
        }
    text = json.dumps(payload, indent=2, sort_keys=True)
    if args.out:
        Path(args.out).write_text(text + "\n")
    print(text)
    return 1 if report.verdict == "counterexample_found" else 0


def _cmd_verify_impl(args) -> int:
    base = _load_system(args)
    impl = {"jumping-first": derive_jumping_first, "flowing-first": derive_flowing_first}[
        args.impl
    ](base)
    rng = np.random.default_rng(args.seed)
    box = lib.SAMPLE_BOXES[args.system]
    samples = [
        [rng.uniform(lo, hi) for lo, hi in box] for _ in range(args.samples)
    ]
    report = verify_implementation(impl, base, samples, _solver(args))
    print(
        f"ok: {str(report.ok).lower()} (samples={report.samples}, "
        f"outside domain={report.skipped})"
    )
    for group, items in (
        ("membership", report.membership_mismatches),
        ("uniqueness", report.nonunique),
        ("residual", report.residual_failures),
    ):
        for item in items:
            print(f"{group}: {item}")
    return 0 if report.ok else 1


def _cmd_list(args) -> int:
    info = lib.list_builtins()
    print("systems: " + ", ".join(info["systems"]))
    print("signals: " + ", ".join(f"{k} (for {v})" for k, v in info["signals"].items()))
    print("experiments: " + ", ".join(info["experiments"]))
    return 0


def _cmd_bundle(args) -> int:
    names = args.names or sorted(lib.EXPERIMENTS)
    for name in names:
        if name not in lib.EXPERIMENTS:
            print(f"error: unknown experiment {name!r}", file=sys.stderr)
            return 2
        report = lib.run_experiment(lib.EXPERIMENTS[name], args.out)
        print(f"{name}: {len(report['runs'])} runs -> {Path(args.out) / name}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="hybridsim",
        description="Simulate hybrid systems, compare trajectories, and probe robustness.",
    )
    sub = p.add_subparsers(dest="command", required=True)

    def add_system_args(sp, with_horizon=True):
        sp.add_argument("--system", default="planar", help="built-in system name")
        sp.add_argument("--config", help="JSON file describing a custom affine system")
        if with_horizon:
            sp.add_argument("--T", type=float, help="flow-time horizon")
            sp.add_argument("--J", type=int, help="jump-count horizon")
        sp.add_argument("--max-step", dest="max_step", type=float, help="integrator step cap")

    sp = sub.add_parser("simulate", help="integrate one system and write CSV")
    add_system_args(sp)
    sp.add_argument("--strategy", choices=_STRATEGIES, default=JUMPING_FIRST)
    sp.add_argument("--jump-at", dest="jump_at", help="comma-separated scripted jump times")
    sp.add_argument("--xi", required=True, help="initial state, comma-separated")
    sp.add_argument("--delta", type=float, default=0.0, help="perturbation magnitude")
    sp.add_argument("--signal", help="built-in signal name (with --delta)")
    sp.add_argument("--out", help="output CSV file (directory for enumerate-all)")
    sp.set_defaults(fn=_cmd_simulate)

    sp = sub.add_parser("compare", help="closeness of two trajectory CSVs")
    sp.add_argument("--a", required=True, help="first trajectory CSV")
    sp.add_argument("--b", required=True, help="second trajectory CSV")
    sp.add_argument("--T", type=float, required=True)
    sp.add_argument("--J", type=int, required=True)
    sp.add_argument("--eps", type=float, required=True)
    sp.add_argument("--margin", action="store_true", help="also print the closeness margin")
    sp.set_defaults(fn=_cmd_compare)

    sp = sub.add_parser("probe", help="falsify robustness on a sample grid")
    add_system_args(sp)
    sp.add_argument("--kind", choices=("robustness", "strong"), default="strong")
    sp.add_argument(
        "--impl",
        choices=("none", "jumping-first", "flowing-first"),
        default="none",
        help="probe a derived implementation instead of the system itself",
    )
    sp.add_argument("--xi", action="append", default=[], help="sample point (repeatable)")
    sp.add_argument("--samples-file", help="CSV of sample points, one per row")
    sp.add_argument("--delta-grid", default="0.1,0.01,0.001")
    sp.add_argument("--signals", required=True, help="comma-separated signal names")
    sp.add_argument("--queries", required=True, help="semicolon-separated T:J:eps triples")
    sp.add_argument("--out", help="write the JSON report here as well")
    sp.set_defaults(fn=_cmd_probe)

    sp = sub.add_parser("verify-impl", help="check a derived implementation against its source")
    add_system_args(sp)
    sp.add_argument("--impl", choices=("jumping-first", "flowing-first"), required=True)
    sp.add_argument("--samples", type=int, default=50)
    sp.add_argument("--seed", type=int, default=0)
    sp.set_defaults(fn=_cmd_verify_impl)

    sp = sub.add_parser("list", help="list built-in systems, signals, and experiments")
    sp.set_defaults(fn=_cmd_list)

    sp = sub.add_parser("bundle", help="run built-in experiments and write CSV bundles")
    sp.add_argument("--out", required=True, help="output root directory")
    sp.add_argument("names", nargs="*", help="experiment names (default: all)")
    sp.set_defaults(fn=_cmd_bundle)

    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code not in (0, None) else 0
    try:
        return args.fn(args)
    except (DomainError, KeyError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericFailure as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
