import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conleykit.field import ScalarField, alpha, pseudo_gradient
from conleykit.grid import Domain

SQUARE = Domain((-2.0, -2.0), (2.0, 2.0))
TORUS = Domain((0.0, 0.0), (1.0, 1.0), (True, True))
coords = st.floats(-2, 2, allow_nan=False)


class TestScalarField:
    def test_values_and_gradient_closed_form(self):
        f = ScalarField.from_text("x0^2 - x1^2", SQUARE)
        P = np.array([[1.0, 0.5], [-0.3, 2.0]])
        np.testing.assert_allclose(f.values(P), P[:, 0] ** 2 - P[:, 1] ** 2)
        np.testing.assert_allclose(f.gradient(P), np.c_[2 * P[:, 0], -2 * P[:, 1]])
        assert f((1.0, 1.0)) == pytest.approx(0.0)

    def test_hessian_symmetric(self):
        f = ScalarField.from_text("x0^3*x1 + sin(x1)", SQUARE)
        H = f.hessian(np.array([[0.4, -0.7]]))[0]
        np.testing.assert_allclose(H, H.T)
        assert H[0, 0] == pytest.approx(6 * 0.4 * -0.7)

    def test_periodic_canonicalization(self):
        f = ScalarField.from_text("cos(2*pi*x0) + x1", TORUS)
        assert f((0.25, 0.5)) == pytest.approx(f((1.25, 1.5)))

    def test_periodicity_warning(self):
        f = ScalarField.from_text("x0", TORUS)
        with pytest.warns(UserWarning, match="not periodic"):
            assert not f.check_periodicity()
        g = ScalarField.from_text("sin(2*pi*x0)*cos(2*pi*x1)", TORUS)
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            assert g.check_periodicity()

    def test_dimension_mismatch(self):
        f = ScalarField.from_text("x0", SQUARE)
        with pytest.raises(ValueError):
            f.values(np.zeros((3, 3)))

    @settings(max_examples=50, deadline=None)
    @given(coords, coords)
    def test_symbolic_gradient_matches_finite_difference(self, a, b):
        f = ScalarField.from_text("(x0^2 + x1^2 - 1)^2 + 0.1*x0 + cos(x0*x1)", SQUARE)
        P = np.array([[a, b]])
        sym = f.gradient(P)
        fd = f.finite_difference_gradient(P)
        assert np.all(np.abs(sym - fd) <= 1e-6 * np.maximum(1.0, np.abs(sym)))


class TestPseudoGradient:
    def test_unknown_mode(self):
        with pytest.raises(ValueError):
            pseudo_gradient(ScalarField.from_text("x0", SQUARE), "fancy")

    def test_raw_is_gradient(self):
        f = ScalarField.from_text("x0^2", SQUARE)
        Y = pseudo_gradient(f, "raw")
        P = np.array([[0.3, 0.1]])
        np.testing.assert_allclose(Y(P), [[0.6, 0.0]])
        np.testing.assert_allclose(Y.yf(P), [0.36])

    @settings(max_examples=50, deadline=None)
    @given(coords, coords)
    def test_normalized_bounds(self, a, b):
        f = ScalarField.from_text("3*x0^3 - x0*x1 + exp(x1)", SQUARE)
        Y = pseudo_gradient(f)
        P = np.array([[a, b]])
        g = f.gradient(P)
        assert np.linalg.norm(Y(P)) < 1.0
        yf = float(np.dot(Y(P)[0], g[0]))
        assert yf == pytest.approx(float(alpha(np.linalg.norm(g))), abs=1e-12)
        assert yf == pytest.approx(float(Y.yf(P)[0]), abs=1e-12)

    @given(st.floats(0, 1e3))
    def test_alpha_monotone_and_below_s(self, s):
        assert alpha(s) <= s + 1e-12
        assert alpha(s + 1.0) >= alpha(s)
