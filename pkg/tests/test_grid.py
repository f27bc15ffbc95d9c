import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conleykit.grid import (CellSet, CubicalGrid, DistanceField, Domain, GridError,
                            closed_difference, combinatorial_boundary, combinatorial_interior,
                            distance_to_set)

LINE = CubicalGrid(Domain((-1.0,), (1.0,)), 8)
SQUARE = CubicalGrid(Domain((0.0, 0.0), (1.0, 1.0)), 4)
TORUS = CubicalGrid(Domain((0.0, 0.0), (1.0, 1.0), (True, True)), 4)


class TestDomainAndGrid:
    def test_bad_bounds(self):
        with pytest.raises(GridError):
            Domain((1.0,), (0.0,))

    def test_resolution_floor(self):
        with pytest.raises(GridError, match=">= 2"):
            CubicalGrid(Domain((0.0,), (1.0,)), 1)

    def test_budget(self):
        with pytest.raises(GridError, match="budget"):
            CubicalGrid(Domain((0.0, 0.0), (1.0, 1.0)), 100, budget=1000)

    def test_displacement_wraps(self):
        d = TORUS.domain.displacement(np.array([0.9, 0.1]), np.array([0.1, 0.9]))
        np.testing.assert_allclose(d, [0.2, -0.2])

    def test_locate(self):
        idx, ok = LINE.locate(np.array([[-1.0], [1.0], [0.1], [1.5]]))
        assert ok.tolist() == [True, True, True, False]
        assert idx[:3, 0].tolist() == [0, 7, 4]
        idx, ok = TORUS.locate(np.array([[1.1, -0.1]]))
        assert ok[0] and idx[0].tolist() == [0, 3]

    def test_centers(self):
        np.testing.assert_allclose(LINE.centers(np.array([[0], [7]]))[:, 0], [-0.875, 0.875])


class TestCellSet:
    def test_set_algebra(self):
        a = CellSet.from_box(SQUARE, (0, 0), (0.5, 1))
        b = CellSet.from_box(SQUARE, (0, 0), (1, 0.5))
        assert len(a) == 8 and len(b) == 8
        assert len(a & b) == 4 and len(a | b) == 12 and len(a - b) == 4
        assert (a & b).issubset(a) and (a - b).isdisjoint(b)
        assert len(~a) == 8

    def test_mismatched_grids(self):
        with pytest.raises(GridError):
            CellSet.full(SQUARE) | CellSet.full(TORUS)

    def test_interior_and_boundary(self):
        full = CellSet.full(SQUARE)
        assert len(combinatorial_interior(full)) == 4
        assert combinatorial_interior(CellSet.full(TORUS)) == CellSet.full(TORUS)
        assert len(combinatorial_boundary(full)) == 12

    def test_dilate_wraps_on_torus(self):
        one = CellSet.from_indices(TORUS, [(0, 0)])
        assert len(one.dilate()) == 5
        assert len(one.dilate(diagonal=True)) == 9
        corner = CellSet.from_indices(SQUARE, [(0, 0)])
        assert len(corner.dilate()) == 3

    def test_components(self):
        s = CellSet.from_indices(SQUARE, [(0, 0), (1, 1), (3, 3)])
        assert s.components()[1] == 3
        assert s.components(diagonal=True)[1] == 2
        ring = CellSet.from_indices(TORUS, [(0, k) for k in range(4)])
        assert ring.components()[1] == 1

    def test_closed_difference(self):
        N = CellSet.from_box(LINE, (-0.5,), (0.5,))
        L = CellSet.from_indices(LINE, [(2,), (5,)])
        V = closed_difference(N, L)
        assert V == N
        inner = CellSet.from_indices(LINE, [(3,), (4,)])
        assert closed_difference(N, N - inner) == N
        with pytest.warns(UserWarning, match="degenerate"):
            assert not closed_difference(N, N)
        with pytest.raises(GridError):
            closed_difference(L, N)

    def test_csv_roundtrip(self, tmp_path):
        s = CellSet.from_indices(SQUARE, [(0, 1), (3, 2)])
        s.to_csv(tmp_path / "s.csv")
        assert CellSet.from_csv(SQUARE, tmp_path / "s.csv") == s
        (tmp_path / "bad.csv").write_text("k0,k1\n1,x\n")
        with pytest.raises(GridError, match=":2"):
            CellSet.from_csv(SQUARE, tmp_path / "bad.csv")

    def test_contains_points_outside_domain(self):
        full = CellSet.full(SQUARE)
        assert full.contains_points(np.array([[0.5, 0.5], [1.5, 0.5]])).tolist() == [True, False]


class TestDistance:
    def test_empty(self):
        with pytest.raises(GridError):
            DistanceField(CellSet.empty(SQUARE))

    def test_wraparound(self):
        s = CellSet.from_indices(TORUS, [(0, 0)])
        assert distance_to_set((0.9, 0.125), s) == pytest.approx(0.225)

    @settings(max_examples=40, deadline=None)
    @given(st.lists(st.tuples(st.integers(0, 3), st.integers(0, 3)), min_size=1, max_size=6),
           st.tuples(st.floats(-0.5, 1.5), st.floats(-0.5, 1.5)))
    def test_matches_brute_force(self, cells, p):
        for grid in (SQUARE, TORUS):
            s = CellSet.from_indices(grid, cells)
            c = s.centers()
            d = grid.domain.displacement(np.asarray(p)[None, :], c)
            brute = float(np.min(np.linalg.norm(d, axis=1)))
            assert distance_to_set(p, s) == pytest.approx(brute, abs=1e-9)
