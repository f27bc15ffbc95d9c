import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conleykit.field import ScalarField, pseudo_gradient
from conleykit.flow import (FlowError, IntegratorConfig, first_exit, first_exits, flow_map,
                            flow_points, orbit_in_set, orbits_in_set, trajectory)
from conleykit.grid import CellSet, CubicalGrid, Domain

DOM = Domain((-1.0,), (1.0,))
GRID = CubicalGrid(DOM, 256)
Y = pseudo_gradient(ScalarField.from_text("x0^2", DOM), "raw")
CFG = IntegratorConfig(step=1e-3, t_max=10.0)


class TestIntegratorConfig:
    @pytest.mark.parametrize("kw", [{"step": 0}, {"t_max": -1}, {"threads": 0}])
    def test_rejects(self, kw):
        with pytest.raises(ValueError):
            IntegratorConfig(**kw)


class TestFlowMap:
    @settings(max_examples=30, deadline=None)
    @given(st.floats(-0.5, 0.5), st.floats(-1.0, 1.0))
    def test_linear_closed_form(self, x, t):
        assert flow_map([x], t, Y, CFG)[0] == pytest.approx(x * np.exp(2 * t), abs=1e-9)

    def test_group_property(self):
        a = flow_map([0.1], 0.3, Y, CFG)
        b = flow_map(flow_map([0.1], 0.1, Y, CFG), 0.2, Y, CFG)
        assert a[0] == pytest.approx(b[0], rel=1e-9)
        assert flow_map(a, -0.3, Y, CFG)[0] == pytest.approx(0.1, rel=1e-9)

    def test_t_max(self):
        with pytest.raises(FlowError):
            flow_map([0.1], 11.0, Y, CFG)

    def test_trajectory(self):
        tr = trajectory([0.1], 0.01, Y, CFG)
        assert tr.times[-1] == pytest.approx(0.01)
        assert tr.points.shape == (11, 1)

    def test_thread_count_irrelevant(self):
        X = np.linspace(-0.4, 0.4, 5000)[:, None]
        one = flow_points(Y, X, 0.2, CFG)
        four = flow_points(Y, X, 0.2, IntegratorConfig(1e-3, 10.0, threads=4))
        assert np.array_equal(one, four)


class TestExits:
    @settings(max_examples=20, deadline=None)
    @given(st.floats(0.05, 0.9))
    def test_first_exit_closed_form(self, x):
        half = CellSet.from_box(GRID, (-1.0,), (0.0,)) | CellSet.from_box(GRID, (0.0,), (1.0,))
        box = CellSet.from_box(GRID, (-0.9375,), (0.9375,))
        assert len(half) == 256
        t = first_exit([x], box, Y, CFG)
        if x >= 0.9375:
            assert t == 0.0
        else:
            assert t == pytest.approx(0.5 * np.log(0.9375 / x), abs=2e-5)

    def test_rest_point_never_exits(self):
        box = CellSet.from_box(GRID, (-0.5,), (0.5,))
        assert first_exit([0.0], box, Y, CFG) is None
        assert np.isnan(first_exits(Y, np.array([[0.0]]), box, CFG, t_max=1.0)[0])

    def test_orbit_in_set(self):
        box = CellSet.from_box(GRID, (-0.5,), (0.5,))
        assert orbit_in_set([0.2], -1.0, 0.4, box, Y, CFG)
        assert not orbit_in_set([0.2], 0.0, 0.5, box, Y, CFG)
        ok = orbits_in_set(Y, np.array([[0.2], [0.4]]), 0.1, 0.2, box, CFG)
        assert ok.tolist() == [True, False]
        with pytest.raises(ValueError):
            orbits_in_set(Y, np.array([[0.2]]), 1.0, 0.0, box, CFG)
