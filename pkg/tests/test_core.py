"""Arc containers, serialization, and the closeness metric."""

import importlib
import io
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import hybridsim as hs

core = importlib.import_module("hybridsim.core")

# frozen by tests/oracles/corner_split_margin_oracle.py: analytic margin 1.0,
# measured one bisection width below it
CORNER_MARGIN = 0.99999951171875


def random_arc(seed: int, linear: bool = False) -> hs.HybridArc:
    """Small random arc; linear=True keeps slopes <= 2 with exact derivatives
    so grid refinement arguments stay valid for the monotonicity properties."""
    rng = np.random.default_rng(seed)
    dim = int(rng.integers(1, 4))
    n_iv = int(rng.integers(1, 4))
    t = float(rng.uniform(0.0, 0.5))
    ivs, segs = [], []
    for j in range(n_iv):
        k = int(rng.integers(2, 6))
        incs = rng.uniform(0.05, 0.5, size=k - 1)
        ts = t + np.concatenate([[0.0], np.cumsum(incs)])
        if linear:
            x0 = rng.uniform(-2.0, 2.0, size=dim)
            slope = rng.uniform(-2.0, 2.0, size=dim)
            xs = x0[None, :] + (ts - ts[0])[:, None] * slope[None, :]
            ds = np.repeat(slope[None, :], k, axis=0)
        else:
            xs = rng.uniform(-2.0, 2.0, size=(k, dim))
            ds = rng.uniform(-1.0, 1.0, size=(k, dim))
        ivs.append((float(ts[0]), float(ts[-1]), j))
        segs.append((ts, xs, ds))
        t = float(ts[-1])
    return hs.arc_from_breakpoints(ivs, segs, dim)


def jitter(arc: hs.HybridArc, seed: int, scale: float) -> hs.HybridArc:
    rng = np.random.default_rng(seed)
    segs = [
        (s.times, s.states + rng.normal(0.0, scale, s.states.shape), s.derivs)
        for s in arc.segments
    ]
    return hs.arc_from_breakpoints(list(arc.domain.intervals), segs, arc.state_dim)


def brute_force_check(a, b, T, J, eps):
    """Straight nested-loop rendering of the closeness clauses on the same
    evaluation grids: each outer point needs some partner at the same j with
    max(|t - s|, ||x - y||) < eps + slack, minimized over ALL partner points."""
    slack = hs.COMPARE_SLACK
    step = eps / 10.0
    for side, first, second in (("a-to-b", a, b), ("b-to-a", b, a)):
        for (a0, b0, j) in first.domain.intervals:
            if j > J:
                break
            outer = core._level_grid(first, j, T, step)
            if outer is None:
                continue
            inner = core._level_grid(second, j, math.inf, step)
            if inner is None:
                return False, side, j, float(outer[0][0])
            ta, xa = outer
            tb, xb = inner
            for i in range(len(ta)):
                best = math.inf
                for k in range(len(tb)):
                    dt = abs(float(ta[i]) - float(tb[k]))
                    dist = float(np.linalg.norm(xa[i] - xb[k]))
                    best = min(best, max(dt, dist))
                if best >= eps + slack:
                    return False, side, j, float(ta[i])
    return True, None, None, None


class TestHybridTimeDomain:
    def test_basic_shape(self):
        dom = hs.HybridTimeDomain(((0.0, 1.0, 0), (1.0, 3.0, 1)))
        assert dom.t_max == 3.0
        assert dom.j_max == 1
        assert dom.level_span(0) == (0.0, 1.0)
        assert dom.level_span(1) == (1.0, 3.0)
        assert dom.level_span(2) is None

    def test_contains_with_slack(self):
        dom = hs.HybridTimeDomain(((0.0, 1.0, 0),))
        assert dom.contains(1.0, 0)
        assert dom.contains(1.0 + 1e-13, 0)
        assert not dom.contains(1.1, 0)
        assert not dom.contains(0.5, 1)

    def test_rejects_malformed(self):
        with pytest.raises(ValueError):
            hs.HybridTimeDomain(((1.0, 0.5, 0),))
        with pytest.raises(ValueError):
            hs.HybridTimeDomain(((0.0, 1.0, 0), (2.0, 3.0, 1)))
        with pytest.raises(ValueError):
            hs.HybridTimeDomain(((0.0, 1.0, 0), (1.0, 2.0, 2)))
        with pytest.raises(ValueError):
            hs.HybridTimeDomain(())


class TestSegment:
    def test_arrays_are_frozen(self):
        seg = hs.Segment(np.array([0.0, 1.0]), np.zeros((2, 1)), np.zeros((2, 1)))
        with pytest.raises(ValueError):
            seg.times[0] = 5.0

    def test_rejects_malformed(self):
        with pytest.raises(ValueError):
            hs.Segment(np.array([0.0]), np.zeros((1, 1)), np.zeros((1, 1)))
        with pytest.raises(ValueError):
            hs.Segment(np.array([1.0, 0.0]), np.zeros((2, 1)), np.zeros((2, 1)))
        with pytest.raises(ValueError):
            hs.Segment(np.array([0.0, 1.0]), np.zeros((2, 1)), np.zeros((3, 1)))

    def test_hermite_reproduces_cubics(self):
        # cubic data with exact derivatives is reproduced up to rounding
        ts = np.array([0.0, 0.7, 1.3, 2.0])
        xs = (ts**3 - ts)[:, None]
        ds = (3.0 * ts**2 - 1.0)[:, None]
        seg = hs.Segment(ts, xs, ds)
        tq = np.linspace(0.0, 2.0, 41)
        expect = (tq**3 - tq)[:, None]
        assert np.allclose(seg.eval_many(tq), expect, atol=1e-12)
        assert abs(seg.eval_deriv(1.1)[0] - (3.0 * 1.1**2 - 1.0)) < 1e-12


class TestHybridArc:
    def test_eval_and_jump_times(self, phi_jump):
        assert phi_jump.jump_times == (1.0,)
        assert phi_jump.t_max == 3.0
        assert phi_jump.j_max == 1
        assert np.allclose(phi_jump.eval(1.0, 0), [0.0, 1.0])
        assert np.allclose(phi_jump.eval(1.0, 1), [0.0, 0.0])
        with pytest.raises(hs.DomainError):
            phi_jump.eval(2.0, 0)
        with pytest.raises(hs.DomainError):
            phi_jump.eval(0.5, 1)

    def test_segment_interval_consistency_enforced(self):
        ts = np.array([0.0, 1.0])
        seg = (ts, np.zeros((2, 1)), np.zeros((2, 1)))
        with pytest.raises(ValueError):
            hs.arc_from_breakpoints([(0.0, 2.0, 0)], [seg], 1)

    def test_truncate_time(self, phi_flow):
        cut = phi_flow.truncate(1.7, 0)
        assert cut.t_max == 1.7
        assert cut.j_max == 0
        assert np.allclose(cut.eval(1.7, 0), [0.7, 1.0])
        # truncating beyond the domain changes nothing
        same = phi_flow.truncate(10.0, 5)
        assert same.domain.intervals == phi_flow.domain.intervals

    def test_truncate_levels(self, phi_jump):
        cut = phi_jump.truncate(math.inf, 0)
        assert cut.domain.intervals == ((0.0, 1.0, 0),)
        cut2 = phi_jump.truncate(2.0, 1)
        assert cut2.domain.intervals == ((0.0, 1.0, 0), (1.0, 2.0, 1))
        assert np.allclose(cut2.eval(2.0, 1), [1.0, 0.0])

    def test_truncate_before_start_degenerates(self, phi_jump):
        cut = phi_jump.truncate(0.0, 1)
        assert cut.domain.intervals == ((0.0, 0.0, 0),)
        assert np.allclose(cut.eval(0.0, 0), [-1.0, 1.0])

    def test_csv_round_trip_and_determinism(self, phi_jump):
        buf = io.StringIO()
        phi_jump.to_csv(buf)
        text = buf.getvalue()
        back = hs.HybridArc.from_csv(io.StringIO(text))
        assert back.domain.intervals == phi_jump.domain.intervals
        for s1, s2 in zip(back.segments, phi_jump.segments):
            assert np.array_equal(s1.times, s2.times)
            assert np.array_equal(s1.states, s2.states)
        buf2 = io.StringIO()
        phi_jump.to_csv(buf2)
        assert buf2.getvalue() == text

    def test_json_round_trip(self, phi_jump):
        back = hs.HybridArc.from_json_dict(phi_jump.to_json_dict())
        assert back.domain.intervals == phi_jump.domain.intervals
        for s1, s2 in zip(back.segments, phi_jump.segments):
            assert np.array_equal(s1.times, s2.times)
            assert np.array_equal(s1.states, s2.states)
            assert np.array_equal(s1.derivs, s2.derivs)


class TestClosenessOnCornerSplit:
    def test_close_just_above_margin(self, phi_flow, phi_jump):
        assert hs.closeness_check(phi_flow, phi_jump, 2.0, 0, 1.01).close

    def test_not_close_just_below_margin(self, phi_flow, phi_jump):
        verdict = hs.closeness_check(phi_flow, phi_jump, 2.0, 0, 0.99)
        assert not verdict.close
        assert verdict.witness is not None
        assert verdict.witness.j == 0

    def test_frozen_margin(self, phi_flow, phi_jump):
        m = hs.closeness_margin(phi_flow, phi_jump, 2.0, 0)
        assert abs(m - CORNER_MARGIN) < 1e-12

    def test_missing_level_gives_absence_witness(self, phi_flow, phi_jump):
        verdict = hs.closeness_check(phi_jump, phi_flow, 2.0, 1, 0.5)
        assert not verdict.close
        w = verdict.witness
        assert w.j == 1
        assert w.best_s is None
        assert w.best_distance == math.inf
        assert hs.closeness_margin(phi_flow, phi_jump, 2.0, 1) == math.inf

    def test_identical_lines_are_close_at_any_eps(self, phi_flow):
        twin = phi_flow.truncate(3.0, 0)
        assert hs.closeness_check(phi_flow, twin, 3.0, 0, 1e-6).close

    def test_input_validation(self, phi_flow):
        other = random_arc(0)
        if other.state_dim != phi_flow.state_dim:
            with pytest.raises(hs.DimensionMismatch):
                hs.closeness_check(phi_flow, other, 1.0, 0, 0.1)
        with pytest.raises(ValueError):
            hs.closeness_check(phi_flow, phi_flow, 1.0, 0, 0.0)
        with pytest.raises(ValueError):
            hs.closeness_check(phi_flow, phi_flow, -1.0, 0, 0.1)


class TestMetricProperties:
    @settings(max_examples=40, deadline=None, derandomize=True)
    @given(st.integers(0, 10**6), st.floats(0.05, 2.0))
    def test_reflexive_at_full_horizon(self, seed, eps):
        arc = random_arc(seed)
        assert hs.closeness_check(arc, arc, arc.t_max, arc.j_max, eps).close

    @settings(max_examples=40, deadline=None, derandomize=True)
    @given(st.integers(0, 10**6), st.floats(0.05, 2.0), st.floats(0.0, 1.0))
    def test_symmetric(self, seed, eps, tfrac):
        a = random_arc(seed)
        b = jitter(a, seed + 1, scale=eps / 2.0)
        T = tfrac * a.t_max
        J = a.j_max
        assert (
            hs.closeness_check(a, b, T, J, eps).close
            == hs.closeness_check(b, a, T, J, eps).close
        )

    @settings(max_examples=40, deadline=None, derandomize=True)
    @given(st.integers(0, 10**6), st.floats(0.05, 0.4), st.floats(0.0, 0.3))
    def test_monotone_in_eps(self, seed, eps, scale):
        # bounded-slope arcs: the eps/10 refinement of the coarser check is
        # nested in the finer one up to a slope-controlled correction
        a = random_arc(seed, linear=True)
        b = jitter(a, seed + 1, scale=scale)
        T, J = a.t_max, a.j_max
        if hs.closeness_check(a, b, T, J, eps).close:
            assert hs.closeness_check(a, b, T, J, 10.0 * eps).close

    @settings(max_examples=40, deadline=None, derandomize=True)
    @given(st.integers(0, 10**6), st.floats(0.05, 1.0), st.floats(0.0, 0.4))
    def test_monotone_in_T_and_J(self, seed, eps, scale):
        # horizons drawn from the arcs' breakpoints, which every evaluation
        # grid contains, so shrinking (T, J) only removes checked points
        a = random_arc(seed, linear=True)
        b = jitter(a, seed + 1, scale=scale)
        bps = np.concatenate([s.times for s in a.segments])
        rng = np.random.default_rng(seed + 2)
        T1 = float(rng.choice(bps))
        T2, J2 = a.t_max, a.j_max
        J1 = int(rng.integers(0, J2 + 1))
        if hs.closeness_check(a, b, T2, J2, eps).close:
            assert hs.closeness_check(a, b, T1, J1, eps).close

    def test_brute_force_agreement_on_50_random_pairs(self):
        mismatches = []
        for seed in range(50):
            rng = np.random.default_rng(10_000 + seed)
            a = random_arc(10_000 + seed)
            if seed % 2:
                b = jitter(a, seed, scale=float(rng.uniform(0.01, 0.6)))
            else:
                b = random_arc(20_000 + seed)
                while b.state_dim != a.state_dim:
                    b = random_arc(int(rng.integers(0, 10**6)))
            T = float(rng.uniform(0.0, a.t_max + 0.5))
            J = int(rng.integers(0, a.j_max + 2))
            eps = float(rng.uniform(0.05, 1.5))
            verdict = hs.closeness_check(a, b, T, J, eps)
            ok, side, j, t_bad = brute_force_check(a, b, T, J, eps)
            if verdict.close != ok:
                mismatches.append((seed, "verdict"))
                continue
            if not ok:
                w = verdict.witness
                if (w.side, w.j) != (side, j) or abs(w.t - t_bad) > 1e-12:
                    mismatches.append((seed, "witness"))
        assert mismatches == []
