"""Lyapunov function on ``N/L`` separating ``[L]`` from the forward core, and
the regularized exit set ``L' = {g <= eps}``.

Construction: a metric Urysohn function ``rho`` (0 on L, 1 on the forward core),
its sup-envelope along quotient-flow orbits, and the discounted integral
``g(x) = int_0^inf e^{-t} envelope(phi_#^t x) dt``.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .flow import IntegratorConfig, first_exits, rk4_step
from .grid import CellSet, DistanceField, _shift_fill
from .indexpair import IndexPairData

logger = logging.getLogger(__name__)

DEFAULT_T_CUT = 20.0
CELL_CHUNK = 256


class LyapunovError(ValueError):
    pass


@dataclass(frozen=True)
class ForwardCore:
    cells: CellSet
    horizon: float


def forward_core(pair: IndexPairData, horizon: float, Y, cfg: IntegratorConfig,
                 samples_per_cell: int | None = None) -> ForwardCore:
    """Outer approximation of ``I+(V)``, the points of V whose forward orbit stays in V.

    A cell of V is kept if one of its samples stays in V up to ``horizon``, or if
    samples in it (or in a face-neighbour) leave V through different connected
    pieces of the exit set: by connectedness some point in between never leaves.
    """
    V = pair.V
    if not V:
        raise LyapunovError("V is empty")
    g = V.grid
    if V.mask.all() and all(g.periodic):
        # nothing leaves a closed manifold
        return ForwardCore(V, horizon)
    idx = V.indices()
    S = V.samples(samples_per_cell)
    m, s, n = S.shape
    times, last = first_exits(Y, S.reshape(-1, n), V, cfg, t_max=horizon, return_points=True)
    stays = np.isnan(times).reshape(m, s)

    if pair.L:
        labels, _ = pair.L.components(diagonal=True)
    else:
        labels = np.zeros(g.shape, dtype=np.int64)
    # a sample that left V is labelled by the exit-set piece it left through
    cell, ok = g.locate(last)
    lab = np.where(ok, labels[tuple(cell.T)], 0)
    lab = np.where(np.isnan(times), -1, lab).reshape(m, s)

    mixed = np.array([len(set(row)) > 1 for row in lab])
    keep = stays.any(axis=1) | mixed
    uniform = np.full(g.shape, -2, dtype=np.int64)
    uni_rows = ~mixed & ~stays.any(axis=1)
    uniform[tuple(idx[uni_rows].T)] = lab[uni_rows, 0]
    in_v = V.mask
    for ax in range(g.dim):
        for step in (1, -1):
            nb = g.shift(uniform, ax, step) if g.periodic[ax] else _shift_fill(uniform, ax, step, -2)
            nb_in = g.shift(in_v, ax, step)
            here = uniform[tuple(idx.T)]
            there = nb[tuple(idx.T)]
            differ = nb_in[tuple(idx.T)] & (there != -2) & (here != -2) & (there != here)
            keep |= differ
    return ForwardCore(CellSet.from_indices(g, idx[keep]), horizon)


class UrysohnRho:
    """``rho(x) = d(x, L) / (d(x, L) + d(x, core))`` using distances to cell centers.

    With L empty, ``d(x, L)`` is the constant ``1 + diam(domain)`` (a far virtual
    basepoint).  With an empty core, ``d(x, core)`` uses the same constant.
    """

    def __init__(self, pair: IndexPairData, core: ForwardCore):
        if pair.L and core.cells and not pair.L.isdisjoint(core.cells):
            raise LyapunovError("L meets the forward core: the pair is not weakly regular")
        far = 1.0 + pair.grid.domain.diameter
        self._far = far
        self._dL = DistanceField(pair.L) if pair.L else None
        self._dC = DistanceField(core.cells) if core.cells else None

    def __call__(self, points) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        dL = self._dL(pts) if self._dL is not None else np.full(len(pts), self._far)
        dC = self._dC(pts) if self._dC is not None else np.full(len(pts), self._far)
        tot = dL + dC
        return np.where(tot > 0, dL / np.where(tot > 0, tot, 1.0), 0.0)


def urysohn_rho(pair: IndexPairData, core: ForwardCore) -> np.ndarray:
    """Per-cell values on N (row-major order): exactly 0 on L, exactly 1 on the core."""
    rho = UrysohnRho(pair, core)
    vals = rho(pair.N.centers())
    idx = pair.N.indices()
    vals[pair.L.mask[tuple(idx.T)]] = 0.0
    vals[core.cells.mask[tuple(idx.T)]] = 1.0
    return vals


def _orbit_quadrature(pair, rho, Y, X, cfg, t_cut):
    """Envelope at t=0 and discounted integral along quotient-flow orbits of ``X``."""
    h = cfg.step
    n_steps = int(math.ceil(t_cut / h - 1e-9))
    dt = t_cut / n_steps
    inner = pair.interior
    env0 = np.zeros(len(X))
    gval = np.zeros(len(X))
    for lo in range(0, len(X), CELL_CHUNK):
        P = np.array(X[lo:lo + CELL_CHUNK], dtype=float)
        k = len(P)
        alive = inner.contains_points(P)
        hist = [np.where(alive, rho(P), 0.0)]
        act = np.flatnonzero(alive)
        steps = 0
        while len(act) and steps < n_steps:
            Q = rk4_step(Y, P[act], dt)
            P[act] = Q
            ins = inner.contains_points(Q)
            row = np.zeros(k)
            row[act[ins]] = rho(Q[ins]) if ins.any() else 0.0
            hist.append(row)
            act = act[ins]
            steps += 1
        H = np.asarray(hist)
        # the orbit is absorbed at [L] after the last recorded sample
        env = np.maximum.accumulate(H[::-1], axis=0)[::-1]
        t = np.arange(len(H)) * dt
        w = np.exp(-t)[:, None] * env
        integral = dt * (w[:-1] + w[1:]).sum(axis=0) / 2.0 if len(H) > 1 else np.zeros(k)
        # orbits never absorbed keep contributing past t_cut; that tail is dropped
        env0[lo:lo + k] = env[0]
        gval[lo:lo + k] = integral
    return env0, gval


class LyapunovFunction:
    """Holds ``rho`` and evaluates the sup-envelope and ``g`` at arbitrary points."""

    def __init__(self, pair: IndexPairData, core: ForwardCore, Y, cfg: IntegratorConfig,
                 t_cut: float = DEFAULT_T_CUT):
        self.pair = pair
        self.core = core
        self.Y = Y
        self.cfg = cfg
        self.t_cut = float(t_cut)
        self.rho = UrysohnRho(pair, core)

    @property
    def tail_bound(self) -> float:
        return math.exp(-self.t_cut)

    def envelope_at(self, X) -> np.ndarray:
        return _orbit_quadrature(self.pair, self.rho, self.Y, np.atleast_2d(X), self.cfg,
                                 self.t_cut)[0]

    def g_at(self, X) -> np.ndarray:
        """``g`` by re-running the trajectory quadrature at each query point."""
        return _orbit_quadrature(self.pair, self.rho, self.Y, np.atleast_2d(X), self.cfg,
                                 self.t_cut)[1]


@dataclass(frozen=True)
class LyapunovSample:
    indices: np.ndarray
    centers: np.ndarray
    rho: np.ndarray
    envelope: np.ndarray
    g: np.ndarray
    t_cut: float
    core: ForwardCore
    epsilon: Optional[float] = None
    L_prime: Optional[CellSet] = None

    def to_csv(self, path) -> None:
        n = self.indices.shape[1]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow([f"k{i}" for i in range(n)] + [f"c{i}" for i in range(n)]
                       + ["rho", "envelope", "g"])
            for k, c, r, e, gv in zip(self.indices, self.centers, self.rho, self.envelope,
                                      self.g):
                w.writerow([int(v) for v in k] + [repr(float(v)) for v in c]
                           + [repr(float(r)), repr(float(e)), repr(float(gv))])

    def values_on(self, S: CellSet) -> np.ndarray:
        keep = S.mask[tuple(self.indices.T)]
        return self.g[keep]


def sup_envelope(lyap: LyapunovFunction) -> np.ndarray:
    """Per-cell ``sup_t rho(phi_#^t x)`` at cell centers of N (row-major)."""
    return _per_cell(lyap)[1]


def lyapunov_g(lyap: LyapunovFunction) -> np.ndarray:
    """Per-cell ``g`` at cell centers of N (row-major)."""
    return _per_cell(lyap)[2]


def _per_cell(lyap: LyapunovFunction):
    pair = lyap.pair
    idx = pair.N.indices()
    ctr = pair.grid.centers(idx)
    rho = urysohn_rho(pair, lyap.core)
    in_L = pair.L.mask[tuple(idx.T)]
    in_core = lyap.core.cells.mask[tuple(idx.T)]
    env = np.zeros(len(idx))
    g = np.zeros(len(idx))
    # core cells stand for I+(V): rho is identically 1 along their orbits
    env[in_core] = 1.0
    g[in_core] = 1.0 - lyap.tail_bound
    rest = ~in_L & ~in_core
    if rest.any():
        e, gv = _orbit_quadrature(pair, lyap.rho, lyap.Y, ctr[rest], lyap.cfg, lyap.t_cut)
        env[rest], g[rest] = e, gv
    return rho, env, g


def lyapunov_sample(pair: IndexPairData, core: ForwardCore, Y, cfg: IntegratorConfig,
                    t_cut: float = DEFAULT_T_CUT) -> tuple[LyapunovFunction, LyapunovSample]:
    lyap = LyapunovFunction(pair, core, Y, cfg, t_cut)
    rho, env, g = _per_cell(lyap)
    idx = pair.N.indices()
    return lyap, LyapunovSample(idx, pair.grid.centers(idx), rho, env, g, lyap.t_cut, core)


def regularize(pair: IndexPairData, sample: LyapunovSample, epsilon: float) -> IndexPairData:
    """``(N, L')`` with ``L' = {cells of N with g <= epsilon}``; flags unchecked."""
    if not 0 < epsilon < 1:
        raise LyapunovError("epsilon must lie in (0, 1)")
    core_g = sample.values_on(sample.core.cells)
    if len(core_g) and epsilon >= core_g.min():
        raise LyapunovError(f"epsilon {epsilon} does not separate L from the core "
                            f"(min core g = {core_g.min():.4g})")
    low = sample.indices[sample.g <= epsilon]
    L_prime = pair.L | CellSet.from_indices(pair.grid, low)
    return IndexPairData(pair.N, L_prime, T=pair.T)


def check_monotonicity(lyap: LyapunovFunction, X: np.ndarray, t: np.ndarray,
                       tol: float = 1e-4) -> dict:
    """Strict decrease of ``g`` along the quotient flow at sampled ``(x, t)``.

    Only points with ``0 < g(x) < 1`` count, where values within the tail bound
    of 1 are read as 1.  Each point is flowed with its own step ``t_i / n`` so one
    batched integration serves all sampled times.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    t = np.asarray(t, dtype=float)
    gx = lyap.g_at(X)
    one = 1.0 - lyap.tail_bound - 1e-9
    usable = (gx > 0) & (gx < one)
    X, t, gx = X[usable], t[usable], gx[usable]
    inner = lyap.pair.interior
    P = X.copy()
    alive = inner.contains_points(P)
    n = int(math.ceil(float(t.max()) / lyap.cfg.step - 1e-9)) if len(t) else 0
    dt = t / n if n else t
    for _ in range(n):
        act = np.flatnonzero(alive)
        if not len(act):
            break
        P[act] = rk4_step(lyap.Y, P[act], dt[act])
        alive[act[~inner.contains_points(P[act])]] = False
    gy = np.zeros(len(X))
    if alive.any():
        gy[alive] = lyap.g_at(P[alive])
    excess = gy - gx
    worst = int(np.argmax(excess)) if len(excess) else None
    return {
        "checked": int(len(X)),
        "violations": int(np.sum(excess > tol)),
        "non_strict": int(np.sum(excess >= 0)),
        "max_excess": float(excess[worst]) if worst is not None else None,
        "witness": X[worst].tolist() if worst is not None and excess[worst] > tol else None,
    }
