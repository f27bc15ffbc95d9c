import math

import numpy as np
import pytest
from scipy.integrate import quad

from conleykit.grid import CellSet
from conleykit.indexpair import IndexPairData
from conleykit.lyapunov import (ForwardCore, LyapunovError, UrysohnRho, forward_core,
                                lyapunov_sample, regularize, sup_envelope, urysohn_rho)


def repeller_g_oracle(x: float) -> float:
    """Discounted integral of rho = 1 - 2y along y = x e^{2t} until y reaches 1/2."""
    tau = 0.5 * math.log(0.5 / x)
    return quad(lambda t: math.exp(-t) * (1 - 2 * x * math.exp(2 * t)), 0, tau)[0]


@pytest.fixture(scope="module")
def rep(repeller):
    repeller.lyapunov
    return repeller


class TestForwardCore:
    def test_core_holds_rest_point_and_avoids_L(self, rep):
        core = rep.lyapunov_values.core.cells
        assert core.contains_points(np.array([[0.0]]))[0]
        assert core.isdisjoint(rep.pair.L)
        assert len(core) <= 4

    def test_empty_V(self, rep):
        p = IndexPairData(rep.pair.N, rep.pair.N)
        with pytest.raises(LyapunovError):
            forward_core(p, 1.0, rep.Y, rep.cfg)


class TestUrysohn:
    def test_anchors(self, rep):
        core = rep.lyapunov_values.core
        vals = urysohn_rho(rep.pair, core)
        idx = rep.pair.N.indices()
        assert np.all(vals[rep.pair.L.mask[tuple(idx.T)]] == 0.0)
        assert np.all(vals[core.cells.mask[tuple(idx.T)]] == 1.0)
        assert np.all((vals >= 0) & (vals <= 1))

    def test_midpoint(self, rep):
        rho = UrysohnRho(rep.pair, rep.lyapunov_values.core)
        assert rho([0.25])[0] == pytest.approx(0.5, abs=0.01)

    def test_rejects_overlap(self, rep):
        bad = ForwardCore(rep.pair.L, 1.0)
        with pytest.raises(LyapunovError):
            UrysohnRho(rep.pair, bad)


class TestLyapunovFunction:
    @pytest.mark.parametrize("x", [0.1, 0.25, 0.4])
    def test_matches_quadrature(self, rep, x):
        g = rep.lyapunov_function.g_at(np.array([[x], [-x]]))
        assert g == pytest.approx([repeller_g_oracle(x)] * 2, abs=0.01)

    def test_envelope_is_rho_for_monotone_orbits(self, rep):
        env = rep.lyapunov_function.envelope_at(np.array([[0.25]]))[0]
        assert env == pytest.approx(0.5, abs=0.01)

    def test_anchoring(self, rep):
        s = rep.lyapunov_values
        assert np.all(s.values_on(rep.pair.L) == 0.0)
        assert np.all(s.values_on(s.core.cells) >= 0.99)
        rest = rep.pair.interior - s.core.cells
        assert np.all((s.values_on(rest) > 0) & (s.values_on(rest) < 1))

    def test_sup_envelope_bounds(self, rep):
        env = sup_envelope(rep.lyapunov_function)
        assert np.all((env >= 0) & (env <= 1))

    def test_monotonicity_report(self, rep):
        m = rep.lyapunov["monotonicity"]
        assert m["checked"] > 0 and m["violations"] == 0

    def test_csv(self, rep, tmp_path):
        rep.lyapunov_values.to_csv(tmp_path / "g.csv")
        lines = (tmp_path / "g.csv").read_text().splitlines()
        assert lines[0] == "k0,c0,rho,envelope,g"
        assert len(lines) == len(rep.pair.N) + 1


class TestRegularize:
    def test_nesting(self, rep):
        s = rep.lyapunov_values
        pairs = [regularize(rep.pair, s, e) for e in (0.03, 0.05, 0.08)]
        assert rep.pair.L.issubset(pairs[0].L)
        assert pairs[0].L.issubset(pairs[1].L) and pairs[1].L.issubset(pairs[2].L)
        assert pairs[0].N == rep.pair.N

    @pytest.mark.parametrize("eps", [0.0, 1.0, 1 - 1e-10])
    def test_rejects_eps(self, rep, eps):
        with pytest.raises(LyapunovError):
            regularize(rep.pair, rep.lyapunov_values, eps)

    def test_regularized_pair_is_regular(self, rep):
        assert rep.lyapunov["regularized_criterion"]["status"] == "pass"
        assert rep.lyapunov["regularized_criterion"]["violations"] == 0
