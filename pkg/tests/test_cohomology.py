import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conleykit.cohomology import (CohomologyError, betti_mod2, build_excised_pair, build_pair,
                                  check_delta_squared, compute_cohomology, cup, cuplength,
                                  euler_consistent, relative_cuplength, ring_laws, ring_structure,
                                  shuffle_tables)
from conleykit.grid import CellSet, CubicalGrid, Domain

from gf2_oracle import relative_betti


def grid(shape, periodic=None):
    n = len(shape)
    return CubicalGrid(Domain((0.0,) * n, tuple(float(r) for r in shape), periodic), shape)


def interval_rel_endpoints():
    g = grid((3,))
    N = CellSet.full(g)
    return N, CellSet.from_indices(g, [(0,), (2,)])


def torus(r=3):
    g = grid((r, r), (True, True))
    return CellSet.full(g), CellSet.empty(g)


def annulus_rel_boundary():
    g = grid((7, 7))
    N = CellSet.full(g) - CellSet.from_indices(g, [(3, 3)])
    inner = CellSet.from_box(g, (2, 2), (5, 5)) - CellSet.from_indices(g, [(3, 3)])
    outer = N - CellSet.from_box(g, (1, 1), (6, 6))
    return N, inner | outer


def circle(r=8):
    g = grid((r,), (True,))
    return CellSet.full(g), CellSet.empty(g)


def oracle(N, L):
    g = N.grid
    top = [tuple(int(v) for v in k) for k in N.indices()]
    sub = [tuple(int(v) for v in k) for k in L.indices()]
    # with L empty the basepoint convention gives the groups of N itself
    return relative_betti(top, sub, g.shape, g.periodic)


def ring(N, L):
    return ring_structure(build_pair(N, L))


class TestOracleAgreement:
    @pytest.mark.parametrize("make, expected", [
        (interval_rel_endpoints, (0, 1)),
        (torus, (1, 2, 1)),
        (annulus_rel_boundary, (0, 1, 1)),
    ])
    def test_minimal_complexes(self, make, expected):
        N, L = make()
        assert oracle(N, L) == expected
        assert ring(N, L).betti_relative == expected

    @settings(max_examples=40, deadline=None)
    @given(st.lists(st.booleans(), min_size=16, max_size=16),
           st.lists(st.booleans(), min_size=16, max_size=16),
           st.booleans())
    def test_random_pairs(self, top, sub, periodic):
        g = grid((4, 4), (periodic, periodic))
        mask = np.array(top).reshape(4, 4)
        if not mask.any():
            mask[0, 0] = True
        N = CellSet(g, mask)
        L = CellSet(g, mask & np.array(sub).reshape(4, 4))
        pair = build_pair(N, L)
        assert compute_cohomology(pair.relative).betti == oracle(N, L)
        assert compute_cohomology(pair.absolute).betti == oracle(N, CellSet.empty(g))


class TestComplex:
    @pytest.mark.parametrize("make", [interval_rel_endpoints, torus, annulus_rel_boundary])
    def test_delta_squared_and_euler(self, make):
        N, L = make()
        p = build_pair(N, L)
        assert check_delta_squared(p.absolute) and check_delta_squared(p.relative)
        assert euler_consistent(p, compute_cohomology(p.relative).betti)

    def test_L_not_subset(self):
        g = grid((3,))
        with pytest.raises(CohomologyError):
            build_pair(CellSet.from_indices(g, [(0,)]), CellSet.from_indices(g, [(1,)]))

    def test_betti_mod2_degree_range(self):
        p = build_pair(*torus())
        assert betti_mod2(p, 1) == 2
        with pytest.raises(CohomologyError):
            betti_mod2(p, 3)

    def test_excision_preserves_groups(self):
        N, L = annulus_rel_boundary()
        ex = ring_structure(build_excised_pair(N, L))
        assert ex.betti_relative == (0, 1, 1)


class TestCup:
    def test_torus_products(self):
        r = ring(*torus())
        assert cup(r, (1, 0), (1, 1)) == (2, 1)
        assert cup(r, (1, 0), (1, 0)) == (2, 0)
        assert cup(r, (1, 0), (2, 0)) == (3, 0)

    @pytest.mark.parametrize("make, cl, rel", [
        (torus, 3, 3),
        (circle, 2, 2),
        (interval_rel_endpoints, 1, 1),
        (annulus_rel_boundary, 2, 2),
    ])
    def test_cuplengths(self, make, cl, rel):
        r = ring(*make())
        assert cuplength(r) == cl
        assert relative_cuplength(r) == rel

    def test_thom_trivial_bundle(self):
        assert relative_cuplength(ring(*annulus_rel_boundary())) == cuplength(ring(*circle()))

    def test_contractible(self):
        g = grid((3, 3))
        r = ring(CellSet.full(g), CellSet.empty(g))
        assert cuplength(r) == 1 and relative_cuplength(r) == 1

    def test_vanishing_relative_group_warns(self):
        g = grid((3,))
        N = CellSet.full(g)
        r = ring(N, CellSet.from_indices(g, [(0,)]))
        with pytest.warns(UserWarning, match="vanishes"):
            assert relative_cuplength(r) == 0

    @pytest.mark.parametrize("make", [torus, circle, annulus_rel_boundary])
    def test_ring_laws(self, make):
        assert ring_laws(ring(*make()))["ok"]

    def test_shuffled_tables_break_laws(self):
        bad = shuffle_tables(ring(*torus()))
        laws = ring_laws(bad)
        assert not laws["ok"] and laws["problems"]

    def test_scales_with_resolution(self):
        r = ring(*torus(16))
        assert r.betti_relative == (1, 2, 1) and cuplength(r) == 3
