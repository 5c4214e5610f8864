"""Batch plotting for trajectory CSV bundles.

Consumes the trajectory schema (columns t, j, x_1..x_n) and the signal schema
(columns t, j, n1_1..n1_n, n2_1..n2_n, n3_1..n3_n), assembles multi-panel
time-trace figures, and saves them as PNG or SVG. A jump renders as a vertical
dashed connector at the shared time coordinate, since a trajectory is
multi-valued in t at a jump instant. Perturbation signals are drawn added to
the trace they accompany (the measured value the perturbed run actually saw).
Strictly presentation: nothing here integrates dynamics or computes metrics.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import matplotlib
import matplotlib.pyplot as plt
import numpy as np

# SVG element ids are salted; pin the salt so re-renders are byte-identical
matplotlib.rcParams["svg.hashsalt"] = "figures"

ROLES = ("nominal", "perturbed")

_ROLE_STYLE = {
    "nominal": {"color": "tab:blue", "linewidth": 1.6},
    "perturbed": {"color": "tab:red", "linewidth": 1.2},
}
_SIGNAL_STYLE = {"color": "black", "linewidth": 0.9}
# an impulse signal has a handful of rows; a sampled signal has thousands
_IMPULSE_ROW_LIMIT = 8


class SchemaError(ValueError):
    """A CSV input does not match the expected column layout."""


@dataclass(frozen=True)
class ArcTable:
    """One trajectory: rows ordered by jump level, times ordered per level."""

    times: np.ndarray
    jumps: np.ndarray
    states: np.ndarray

    def levels(self) -> list[tuple[int, slice]]:
        out = []
        start = 0
        for k in range(1, len(self.jumps) + 1):
            if k == len(self.jumps) or self.jumps[k] != self.jumps[start]:
                out.append((int(self.jumps[start]), slice(start, k)))
                start = k
        return out


@dataclass(frozen=True)
class SignalTable:
    """One perturbation signal: bounded samples or a list of impulse rows."""

    times: np.ndarray
    jumps: np.ndarray
    n1: np.ndarray
    n2: np.ndarray
    n3: np.ndarray

    @property
    def is_impulse(self) -> bool:
        return len(self.times) <= _IMPULSE_ROW_LIMIT


def _read_rows(path: Path) -> tuple[list[str], np.ndarray]:
    try:
        with open(path) as fh:
            header = fh.readline().strip().split(",")
            rows = [line.strip().split(",") for line in fh if line.strip()]
    except OSError as exc:
        raise SchemaError(f"{path}: unreadable ({exc})") from None
    if header[:2] != ["t", "j"]:
        raise SchemaError(f"{path}: header must start with t, j")
    if not rows:
        raise SchemaError(f"{path}: no data rows")
    width = len(header)
    if any(len(r) != width for r in rows):
        raise SchemaError(f"{path}: ragged rows")
    try:
        data = np.asarray(rows, dtype=np.float64)
    except ValueError:
        raise SchemaError(f"{path}: non-numeric cell") from None
    return header, data


def load_arc_csv(path) -> ArcTable:
    path = Path(path)
    header, data = _read_rows(path)
    cols = header[2:]
    if not cols or cols != [f"x_{i + 1}" for i in range(len(cols))]:
        raise SchemaError(f"{path}: state columns must be x_1..x_n, got {cols}")
    jumps = data[:, 1]
    if not np.array_equal(jumps, np.round(jumps)) or np.any(np.diff(jumps) < 0):
        raise SchemaError(f"{path}: j column must be non-decreasing integers")
    arc = ArcTable(data[:, 0], jumps.astype(int), data[:, 2:])
    for _, sl in arc.levels():
        if np.any(np.diff(arc.times[sl]) < 0.0):
            raise SchemaError(f"{path}: times must be non-decreasing within a level")
    return arc


def load_signal_csv(path) -> SignalTable:
    path = Path(path)
    header, data = _read_rows(path)
    cols = header[2:]
    if not cols or len(cols) % 3 != 0:
        raise SchemaError(f"{path}: signal needs equal n1/n2/n3 blocks")
    dim = len(cols) // 3
    want = [f"n{k}_{i + 1}" for k in (1, 2, 3) for i in range(dim)]
    if cols != want:
        raise SchemaError(f"{path}: signal columns must be {want}, got {cols}")
    return SignalTable(
        data[:, 0],
        data[:, 1].astype(int),
        data[:, 2 : 2 + dim],
        data[:, 2 + dim : 2 + 2 * dim],
        data[:, 2 + 2 * dim :],
    )


@dataclass(frozen=True)
class SeriesSpec:
    """One trace on a panel: a trajectory CSV, its role, and the 1-based
    state component to draw. A signal CSV with a scale adds the measured
    value (trace + scale * n1) in black on top of the trace."""

    csv: str
    role: str
    component: int
    label: str = ""
    signal_csv: str = ""
    signal_scale: float = 0.0

    def __post_init__(self):
        if self.role not in ROLES:
            raise ValueError(f"role must be one of {ROLES}, got {self.role!r}")
        if self.component < 1:
            raise ValueError("component is 1-based")
        if bool(self.signal_csv) != (self.signal_scale > 0.0):
            raise ValueError("signal_csv and a positive signal_scale go together")


@dataclass(frozen=True)
class PanelSpec:
    series: tuple[SeriesSpec, ...]
    title: str = ""
    xlabel: str = "t"
    ylabel: str = ""

    def __post_init__(self):
        if not self.series:
            raise ValueError("a panel needs at least one series")


@dataclass(frozen=True)
class FigureSpec:
    """A figure: panels placed row-major on a (rows, cols) grid."""

    panels: tuple[PanelSpec, ...]
    layout: tuple[int, int]
    out: str
    size: tuple[float, float] = (0.0, 0.0)  # (0, 0) picks a size per layout

    def __post_init__(self):
        rows, cols = self.layout
        if rows < 1 or cols < 1:
            raise ValueError("layout must be positive")
        if not self.panels or len(self.panels) > rows * cols:
            raise ValueError("panel count must fit the layout")
        if Path(self.out).suffix.lower() not in (".png", ".svg"):
            raise ValueError("out must end in .png or .svg")


def _draw_series(ax, s: SeriesSpec) -> None:
    arc = load_arc_csv(s.csv)
    if s.component > arc.states.shape[1]:
        raise SchemaError(f"{s.csv}: has no component x_{s.component}")
    comp = s.component - 1
    style = _ROLE_STYLE[s.role]
    levels = arc.levels()
    prev_end = None
    for idx, (j, sl) in enumerate(levels):
        ts, ys = arc.times[sl], arc.states[sl, comp]
        ax.plot(ts, ys, label=s.label if idx == 0 else None, **style)
        if prev_end is not None:
            # the jump happens at one time coordinate: connect both values
            ax.plot(
                [prev_end[0], prev_end[0]],
                [prev_end[1], ys[0]],
                linestyle="--",
                color=style["color"],
                linewidth=0.9,
            )
        prev_end = (ts[-1], ys[-1])
    if s.signal_csv:
        _draw_signal(ax, s, arc, comp)


def _draw_signal(ax, s: SeriesSpec, arc: ArcTable, comp: int) -> None:
    sig = load_signal_csv(s.signal_csv)
    if sig.n1.shape[1] != arc.states.shape[1]:
        raise SchemaError(
            f"{s.signal_csv}: signal dimension {sig.n1.shape[1]} does not match "
            f"trajectory dimension {arc.states.shape[1]}"
        )
    first = True
    for j, sl in arc.levels():
        ts, ys = arc.times[sl], arc.states[sl, comp]
        if sig.is_impulse:
            hit = (sig.jumps == j) & (sig.times >= ts[0]) & (sig.times <= ts[-1])
            if not np.any(hit):
                continue
            tq = sig.times[hit]
            measured = np.interp(tq, ts, ys) + s.signal_scale * sig.n1[hit, comp]
            ax.plot(
                tq,
                measured,
                "o",
                markersize=4,
                label="measured" if first else None,
                color=_SIGNAL_STYLE["color"],
            )
        else:
            inside = (sig.times >= ts[0]) & (sig.times <= ts[-1])
            if not np.any(inside):
                continue
            tq = sig.times[inside]
            measured = np.interp(tq, ts, ys) + s.signal_scale * sig.n1[inside, comp]
            ax.plot(tq, measured, label="measured" if first else None, **_SIGNAL_STYLE)
        first = False


def build_figure(spec: FigureSpec):
    """Assemble the matplotlib figure for a spec without saving it."""
    rows, cols = spec.layout
    size = spec.size
    if size == (0.0, 0.0):
        size = (4.5 * cols, 2.6 * rows)
    fig, axes = plt.subplots(rows, cols, figsize=size, squeeze=False)
    flat = [ax for row in axes for ax in row]
    for ax in flat[len(spec.panels) :]:
        ax.set_axis_off()
    for ax, panel in zip(flat, spec.panels):
        for s in panel.series:
            _draw_series(ax, s)
        if panel.title:
            ax.set_title(panel.title, fontsize=10)
        ax.set_xlabel(panel.xlabel)
        if panel.ylabel:
            ax.set_ylabel(panel.ylabel)
        if any(s.label for s in panel.series):
            ax.legend(fontsize=8, loc="best")
    fig.tight_layout()
    return fig


def render(spec: FigureSpec) -> Path:
    """Render a spec to its output path and return the path."""
    out = Path(spec.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    fig = build_figure(spec)
    try:
        if out.suffix.lower() == ".svg":
            # strip the volatile creation date so re-renders are identical
            fig.savefig(out, metadata={"Date": None})
        else:
            fig.savefig(out)
    finally:
        plt.close(fig)
    return out


def _delta_from_label(label: str) -> float:
    # run labels end in the delta magnitude, e.g. delta-1e-02
    return float(label.split("delta-", 1)[1])


def bundle_figure_specs(bundles_root, out_dir, fmt: str = "png") -> tuple[FigureSpec, ...]:
    """Figure specs for the three shipped bundles: a two-panel priority
    comparison for the planar corner system and one three-delta stack per
    reset-loop noise sweep."""
    root = Path(bundles_root)
    out = Path(out_dir)
    planar = root / "planar-fig2"
    panels = (
        PanelSpec(
            series=(
                SeriesSpec(str(planar / "flowing-first.csv"), "nominal", 2, "flow priority"),
                SeriesSpec(
                    str(planar / "forced-delta-1e-01.csv"),
                    "perturbed",
                    2,
                    "forcing pulse",
                    signal_csv=str(planar / "signal_n1a.csv"),
                    signal_scale=0.1,
                ),
            ),
            title="flow priority vs forcing pulse",
            ylabel="x_2",
        ),
        PanelSpec(
            series=(
                SeriesSpec(str(planar / "jumping-first.csv"), "nominal", 2, "jump priority"),
                SeriesSpec(
                    str(planar / "suppressed-delta-1e-01.csv"),
                    "perturbed",
                    2,
                    "suppressing pulse",
                    signal_csv=str(planar / "signal_n1b.csv"),
                    signal_scale=0.1,
                ),
            ),
            title="jump priority vs suppressing pulse",
            ylabel="x_2",
        ),
    )
    specs = [FigureSpec(panels, (1, 2), str(out / f"planar-priorities.{fmt}"))]
    for sweep, signal in (("fore-na-sweep", "signal_na.csv"), ("fore-nb-sweep", "signal_nb.csv")):
        d = root / sweep
        stack = []
        for label in ("delta-1e-01", "delta-1e-02", "delta-1e-06"):
            delta = _delta_from_label(label)
            stack.append(
                PanelSpec(
                    series=(
                        SeriesSpec(str(d / "nominal.csv"), "nominal", 2, "noise free"),
                        SeriesSpec(
                            str(d / f"{label}.csv"),
                            "perturbed",
                            2,
                            f"delta = {delta:g}",
                            signal_csv=str(d / signal),
                            signal_scale=delta,
                        ),
                    ),
                    ylabel="x_2",
                )
            )
        specs.append(FigureSpec(tuple(stack), (3, 1), str(out / f"{sweep}.{fmt}")))
    return tuple(specs)
