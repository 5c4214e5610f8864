"""Simulation and analysis toolkit for hybrid dynamical systems.

A hybrid system flows through a flow set under a flow map and jumps from a
jump set under a jump map. This package renders such systems numerically,
integrates them under jump-priority, flow-priority, scripted, and
exhaustive-branching strategies, measures how far two trajectories are from
each other in hybrid time, injects bounded measurement perturbations, and
probes initial conditions for failures of robustness.
"""
from ._kernels import HAS_NUMBA, USING_NUMBA
from .builtins import (
    EXPERIMENTS,
    SAMPLE_BOXES,
    SIGNAL_SYSTEM,
    ExperimentSpec,
    RunSpec,
    fore_system,
    get_signal,
    get_system,
    list_builtins,
    output_noise_signal,
    planar_grazing,
    planar_impulse,
    planar_system,
    run_experiment,
    system_from_config,
    write_experiment_bundles,
)
from .core import (
    COMPARE_SLACK,
    ClosenessVerdict,
    ClosenessWitness,
    DimensionMismatch,
    DomainError,
    HybridArc,
    HybridTimeDomain,
    NumericFailure,
    Segment,
    arc_from_breakpoints,
    closeness_check,
    closeness_margin,
)
from .model import (
    TOL_SET,
    AuditReport,
    ControlLoopSpec,
    HybridSystem,
    MarginFunction,
    UniquenessPointReport,
    affine_margin,
    audit_basic_conditions,
    build_closed_loop,
    check_uniqueness_conditions,
    margin_max,
    margin_min,
    negate_margin,
)
from .perturbation import (
    PerturbationSignal,
    PerturbedSystem,
    SignalBoundError,
    embed_control_noise,
    make_impulse_signal,
    make_time_signal,
    zero_signal,
)
from .robustness import (
    Counterexample,
    ImplReport,
    ProbeReport,
    RobustnessProbeConfig,
    probe_robustness,
    probe_strong_robustness,
    verify_implementation,
)
from .simulate import (
    ENUMERATE_ALL,
    FLOWING_FIRST,
    JUMPING_FIRST,
    ResidualReport,
    Scripted,
    SolverConfig,
    derive_flowing_first,
    derive_jumping_first,
    integrate_flow,
    is_solution,
    simulate,
    simulate_with_info,
    viability_in_C,
)

__version__ = "0.1.0"

__all__ = [
    "COMPARE_SLACK",
    "ENUMERATE_ALL",
    "EXPERIMENTS",
    "FLOWING_FIRST",
    "HAS_NUMBA",
    "JUMPING_FIRST",
    "SAMPLE_BOXES",
    "SIGNAL_SYSTEM",
    "TOL_SET",
    "USING_NUMBA",
    "AuditReport",
    "ClosenessVerdict",
    "ClosenessWitness",
    "ControlLoopSpec",
    "Counterexample",
    "DimensionMismatch",
    "DomainError",
    "ExperimentSpec",
    "HybridArc",
    "HybridSystem",
    "HybridTimeDomain",
    "ImplReport",
    "MarginFunction",
    "NumericFailure",
    "PerturbationSignal",
    "PerturbedSystem",
    "ProbeReport",
    "ResidualReport",
    "RobustnessProbeConfig",
    "RunSpec",
    "Scripted",
    "Segment",
    "SignalBoundError",
    "SolverConfig",
    "UniquenessPointReport",
    "affine_margin",
    "arc_from_breakpoints",
    "audit_basic_conditions",
    "build_closed_loop",
    "check_uniqueness_conditions",
    "closeness_check",
    "closeness_margin",
    "derive_flowing_first",
    "derive_jumping_first",
    "embed_control_noise",
    "fore_system",
    "get_signal",
    "get_system",
    "integrate_flow",
    "is_solution",
    "list_builtins",
    "make_impulse_signal",
    "make_time_signal",
    "margin_max",
    "margin_min",
    "negate_margin",
    "output_noise_signal",
    "planar_grazing",
    "planar_impulse",
    "planar_system",
    "probe_robustness",
    "probe_strong_robustness",
    "run_experiment",
    "simulate",
    "simulate_with_info",
    "system_from_config",
    "verify_implementation",
    "viability_in_C",
    "write_experiment_bundles",
    "zero_signal",
]
