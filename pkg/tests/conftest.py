import numpy as np
import pytest

import hybridsim as hs


@pytest.fixture(scope="session")
def planar() -> hs.HybridSystem:
    return hs.get_system("planar")


@pytest.fixture(scope="session")
def fore() -> hs.HybridSystem:
    return hs.get_system("fore")


@pytest.fixture(scope="session")
def planar_cfg() -> hs.SolverConfig:
    return hs.SolverConfig(horizon_T=3.0, horizon_J=1, max_step=0.05)


@pytest.fixture(scope="session")
def fore_cfg() -> hs.SolverConfig:
    return hs.SolverConfig(horizon_T=2.0, horizon_J=2, max_step=0.01)


def _line(ts: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    xs = np.stack([-1.0 + ts, np.ones_like(ts)], axis=1)
    ds = np.stack([np.ones_like(ts), np.zeros_like(ts)], axis=1)
    return ts, xs, ds


@pytest.fixture(scope="session")
def phi_flow() -> hs.HybridArc:
    """Closed form of the flow-through behavior: (-1 + t, 1) on [0, 3] x {0}."""
    return hs.arc_from_breakpoints([(0.0, 3.0, 0)], [_line(np.linspace(0.0, 3.0, 7))], 2)


@pytest.fixture(scope="session")
def phi_jump() -> hs.HybridArc:
    """Closed form of the jump-at-corner behavior: the same line to t = 1,
    then (t - 1, 0) on [1, 3] x {1} after the reset to the origin."""
    ts1 = np.linspace(1.0, 3.0, 5)
    xs1 = np.stack([ts1 - 1.0, np.zeros_like(ts1)], axis=1)
    ds1 = np.stack([np.ones_like(ts1), np.zeros_like(ts1)], axis=1)
    return hs.arc_from_breakpoints(
        [(0.0, 1.0, 0), (1.0, 3.0, 1)],
        [_line(np.linspace(0.0, 1.0, 3)), (ts1, xs1, ds1)],
        2,
    )
