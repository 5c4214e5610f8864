"""Rendering the shipped bundles and validating the CSV contract."""

from pathlib import Path

import numpy as np
import pytest

import figures as fig

BUNDLES = Path(__file__).resolve().parents[2] / "bundles"
PLANAR = BUNDLES / "planar-fig2"


def connectors(ax) -> list[float]:
    """Time coordinates of the vertical dashed jump connectors on an axes."""
    out = []
    for line in ax.lines:
        xs, ys = line.get_xdata(), line.get_ydata()
        if line.get_linestyle() == "--" and len(xs) == 2 and xs[0] == xs[1]:
            out.append(float(xs[0]))
    return out


class TestLoaders:
    def test_arc_roundtrip(self):
        arc = fig.load_arc_csv(PLANAR / "jumping-first.csv")
        assert arc.states.shape[1] == 2
        levels = arc.levels()
        assert [j for j, _ in levels] == [0, 1]
        for _, sl in levels:
            assert np.all(np.diff(arc.times[sl]) >= 0.0)
        t_jump = arc.times[levels[0][1]][-1]
        assert t_jump == pytest.approx(1.0, abs=1e-9)

    def test_signal_shapes(self):
        sig = fig.load_signal_csv(PLANAR / "signal_n1a.csv")
        assert sig.n1.shape == sig.n2.shape == sig.n3.shape
        assert sig.is_impulse
        dense = fig.load_signal_csv(BUNDLES / "fore-na-sweep" / "signal_na.csv")
        assert not dense.is_impulse
        assert dense.n1.shape[1] == 4

    def test_rejects_wrong_header(self, tmp_path):
        bad = tmp_path / "bad.csv"
        bad.write_text("a,b,x_1\n0.0,0,1.0\n")
        with pytest.raises(fig.SchemaError):
            fig.load_arc_csv(bad)

    def test_rejects_misnamed_state_columns(self, tmp_path):
        bad = tmp_path / "bad.csv"
        bad.write_text("t,j,y_1\n0.0,0,1.0\n")
        with pytest.raises(fig.SchemaError):
            fig.load_arc_csv(bad)

    def test_rejects_decreasing_j(self, tmp_path):
        bad = tmp_path / "bad.csv"
        bad.write_text("t,j,x_1\n0.0,1,1.0\n1.0,0,1.0\n")
        with pytest.raises(fig.SchemaError):
            fig.load_arc_csv(bad)

    def test_rejects_non_numeric(self, tmp_path):
        bad = tmp_path / "bad.csv"
        bad.write_text("t,j,x_1\n0.0,0,oops\n")
        with pytest.raises(fig.SchemaError):
            fig.load_arc_csv(bad)

    def test_rejects_unbalanced_signal_blocks(self, tmp_path):
        bad = tmp_path / "bad.csv"
        bad.write_text("t,j,n1_1,n2_1\n0.0,0,1.0,1.0\n")
        with pytest.raises(fig.SchemaError):
            fig.load_signal_csv(bad)

    def test_signal_as_arc_is_a_schema_mismatch(self):
        with pytest.raises(fig.SchemaError):
            fig.load_arc_csv(PLANAR / "signal_n1a.csv")


class TestSpecValidation:
    def test_rejects_unknown_role(self):
        with pytest.raises(ValueError):
            fig.SeriesSpec("a.csv", "reference", 1)

    def test_rejects_scale_without_signal(self):
        with pytest.raises(ValueError):
            fig.SeriesSpec("a.csv", "nominal", 1, signal_scale=0.1)

    def test_rejects_overfull_layout(self):
        panel = fig.PanelSpec((fig.SeriesSpec("a.csv", "nominal", 1),))
        with pytest.raises(ValueError):
            fig.FigureSpec((panel, panel), (1, 1), "out.png")

    def test_rejects_unknown_format(self):
        panel = fig.PanelSpec((fig.SeriesSpec("a.csv", "nominal", 1),))
        with pytest.raises(ValueError):
            fig.FigureSpec((panel,), (1, 1), "out.pdf")


class TestBundleFigures:
    def test_two_panel_priority_figure(self, tmp_path):
        spec, _, _ = fig.bundle_figure_specs(BUNDLES, tmp_path)
        assert spec.layout == (1, 2)
        figure = fig.build_figure(spec)
        try:
            axes = figure.axes
            assert len(axes) == 2
            # left: the forcing pulse makes the perturbed run jump at t = 1
            # while the nominal run flows; right: the mirror image
            for ax in axes:
                assert connectors(ax) == [pytest.approx(1.0, abs=1e-6)]
                assert len(ax.lines) >= 4  # two traces, connector, measured
        finally:
            import matplotlib.pyplot as plt

            plt.close(figure)

    @pytest.mark.parametrize(
        "idx,lo,hi", [(1, 1.08, 1.11), (2, 0.09, 0.11)], ids=["decaying", "persistent"]
    )
    def test_three_delta_stacks(self, tmp_path, idx, lo, hi):
        spec = fig.bundle_figure_specs(BUNDLES, tmp_path)[idx]
        assert spec.layout == (3, 1)
        figure = fig.build_figure(spec)
        try:
            axes = figure.axes
            assert len(axes) == 3
            for ax in axes:
                marks = connectors(ax)
                assert len(marks) == 1 and lo <= marks[0] <= hi
                # nominal trace, two perturbed levels, measured overlays
                assert len(ax.lines) >= 5
        finally:
            import matplotlib.pyplot as plt

            plt.close(figure)

    def test_single_trace_plot(self, tmp_path):
        panel = fig.PanelSpec(
            (fig.SeriesSpec(str(BUNDLES / "fore-na-sweep" / "nominal.csv"), "nominal", 2),),
            ylabel="x_2",
        )
        spec = fig.FigureSpec((panel,), (1, 1), str(tmp_path / "single.png"))
        path = fig.render(spec)
        assert path.exists() and path.stat().st_size > 0
        figure = fig.build_figure(spec)
        try:
            assert len(figure.axes) == 1
            assert len(figure.axes[0].lines) == 1
            assert connectors(figure.axes[0]) == []
        finally:
            import matplotlib.pyplot as plt

            plt.close(figure)

    def test_render_writes_all_standard_figures(self, tmp_path):
        for spec in fig.bundle_figure_specs(BUNDLES, tmp_path):
            path = fig.render(spec)
            assert path.exists() and path.stat().st_size > 0

    @pytest.mark.parametrize("fmt", ["png", "svg"])
    def test_rerender_is_byte_identical(self, tmp_path, fmt):
        spec, _, _ = fig.bundle_figure_specs(BUNDLES, tmp_path / "a", fmt)
        first = fig.render(spec).read_bytes()
        spec2, _, _ = fig.bundle_figure_specs(BUNDLES, tmp_path / "b", fmt)
        second = fig.render(spec2).read_bytes()
        assert first == second

    def test_render_flags_dimension_mismatch(self, tmp_path):
        # a planar trajectory cannot carry the four-dimensional loop signal
        panel = fig.PanelSpec(
            (
                fig.SeriesSpec(
                    str(PLANAR / "jumping-first.csv"),
                    "perturbed",
                    2,
                    signal_csv=str(BUNDLES / "fore-na-sweep" / "signal_na.csv"),
                    signal_scale=0.1,
                ),
            ),
        )
        spec = fig.FigureSpec((panel,), (1, 1), str(tmp_path / "bad.png"))
        with pytest.raises(fig.SchemaError):
            fig.render(spec)

    def test_render_flags_missing_component(self, tmp_path):
        panel = fig.PanelSpec(
            (fig.SeriesSpec(str(PLANAR / "jumping-first.csv"), "nominal", 7),),
        )
        spec = fig.FigureSpec((panel,), (1, 1), str(tmp_path / "bad.png"))
        with pytest.raises(fig.SchemaError):
            fig.render(spec)
