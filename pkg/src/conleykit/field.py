"""Scalar objectives with symbolic gradients, and pseudo-gradient vector fields."""

from __future__ import annotations

import logging
import warnings
from functools import cached_property

import numpy as np

from .expr import (
    Expression, compile_expression, differentiate, parse_expression, to_text,
)
from .grid import Domain

logger = logging.getLogger(__name__)

MODES = ("normalized", "raw")


def alpha(s):
    """``s^2 / sqrt(1 + s^2)``: the lower bound on ``Y.f`` in normalized mode."""
    s = np.asarray(s, dtype=float)
    return s * s / np.sqrt(1.0 + s * s)


class ScalarField:
    """An objective ``f`` on a :class:`Domain` with its symbolic partials.

    Evaluation methods take points of shape ``(m, n)`` (or ``(n,)``) and reduce
    periodic coordinates into ``[lo, hi)`` first.
    """

    def __init__(self, expression: Expression, domain: Domain, text: str | None = None):
        self.domain = domain
        self.dim = domain.dim
        self.expression = expression
        self.text = text if text is not None else to_text(expression)
        self.partials = tuple(differentiate(expression, i) for i in range(self.dim))
        self._f = compile_expression(expression)
        self._df = [compile_expression(p) for p in self.partials]

    @classmethod
    def from_text(cls, text: str, domain: Domain) -> "ScalarField":
        return cls(parse_expression(text, domain.dim), domain, text=text)

    def __repr__(self):
        return f"ScalarField({self.text!r}, dim={self.dim})"

    @cached_property
    def second_partials(self):
        return tuple(tuple(differentiate(p, j) for j in range(self.dim)) for p in self.partials)

    @cached_property
    def _d2f(self):
        return [[compile_expression(e) for e in row] for row in self.second_partials]

    def _cols(self, points):
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if pts.shape[-1] != self.dim:
            raise ValueError(f"expected points of dimension {self.dim}, got {pts.shape[-1]}")
        if any(self.domain.periodic):
            pts = self.domain.canonicalize(pts)
        return pts, [pts[:, i] for i in range(self.dim)]

    @staticmethod
    def _broadcast(v, m):
        return np.broadcast_to(np.asarray(v, dtype=float), (m,)).copy()

    def values(self, points) -> np.ndarray:
        pts, cols = self._cols(points)
        return self._broadcast(self._f(cols), len(pts))

    def __call__(self, point) -> float:
        """Value at a single point."""
        return float(self.values(np.atleast_1d(point)[None, :])[0])

    def gradient(self, points) -> np.ndarray:
        pts, cols = self._cols(points)
        m = len(pts)
        return np.stack([self._broadcast(d(cols), m) for d in self._df], axis=1)

    def hessian(self, points) -> np.ndarray:
        pts, cols = self._cols(points)
        m = len(pts)
        return np.stack([np.stack([self._broadcast(e(cols), m) for e in row], axis=1)
                         for row in self._d2f], axis=1)

    def check_periodicity(self, samples: int = 64, tol: float = 1e-9) -> bool:
        """Compare f at ``lo`` and ``hi`` on sampled sections of each periodic axis."""
        ok = True
        rng = np.random.default_rng(0)
        lo, hi = np.asarray(self.domain.lo), np.asarray(self.domain.hi)
        for ax, per in enumerate(self.domain.periodic):
            if not per:
                continue
            pts = rng.uniform(lo, hi, size=(samples, self.dim))
            a, b = pts.copy(), pts.copy()
            a[:, ax], b[:, ax] = lo[ax], hi[ax]
            # evaluate without canonicalisation so the seam is really compared
            fa = self._broadcast(self._f([a[:, i] for i in range(self.dim)]), samples)
            fb = self._broadcast(self._f([b[:, i] for i in range(self.dim)]), samples)
            gap = float(np.max(np.abs(fa - fb)))
            if gap > tol:
                ok = False
                warnings.warn(f"objective is not periodic along axis {ax} "
                              f"(seam mismatch {gap:.3g})", stacklevel=2)
        return ok

    def finite_difference_gradient(self, points, h: float = 1e-5) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        out = np.empty_like(pts)
        for i in range(self.dim):
            e = np.zeros(self.dim)
            e[i] = h
            out[:, i] = (self.values(pts + e) - self.values(pts - e)) / (2 * h)
        return out


class PseudoGradientField:
    """Vector field ``Y`` with ``Y.f >= alpha(|Df|)`` and, if normalized, ``|Y| < 1``.

    ``normalized``: ``Y = grad f / sqrt(1 + |grad f|^2)``, so that ``Y.f`` equals
    :func:`alpha` of the gradient norm exactly.  ``raw``: ``Y = grad f``; kept so
    that linear test problems have closed-form flows.
    """

    def __init__(self, field: ScalarField, mode: str = "normalized"):
        if mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
        self.field = field
        self.mode = mode
        self.dim = field.dim
        self.domain = field.domain

    def __repr__(self):
        return f"PseudoGradientField({self.field.text!r}, mode={self.mode!r})"

    def __call__(self, points) -> np.ndarray:
        g = self.field.gradient(points)
        if self.mode == "raw":
            return g
        return g / np.sqrt(1.0 + np.einsum("ij,ij->i", g, g))[:, None]

    def yf(self, points) -> np.ndarray:
        """``<Df(x), Y(x)>`` at each point."""
        g = self.field.gradient(points)
        s2 = np.einsum("ij,ij->i", g, g)
        if self.mode == "raw":
            return s2
        return s2 / np.sqrt(1.0 + s2)

    def alpha(self, s):
        if self.mode == "raw":
            return np.asarray(s, dtype=float) ** 2
        return alpha(s)


def pseudo_gradient(f: ScalarField, mode: str = "normalized") -> PseudoGradientField:
    return PseudoGradientField(f, mode)
