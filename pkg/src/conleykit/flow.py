"""Fixed-step RK4 integration of ``x' = Y(x)`` and orbit queries against cell sets.

All query functions are batched: they take an ``(m, n)`` array of initial
points and return one answer per point.  Containment is decided at the
integration samples only.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .grid import CellSet, combinatorial_interior

MAX_STEPS = 10_000_000
CHUNK = 2048


class FlowError(RuntimeError):
    """Requested integration exceeds the configured time or step budget."""


@dataclass(frozen=True)
class IntegratorConfig:
    step: float = 1e-3
    t_max: float = 50.0
    safety_margin: bool = False
    threads: int = 1

    def __post_init__(self):
        if not self.step > 0:
            raise ValueError("integrator step must be positive")
        if not self.t_max > 0:
            raise ValueError("t_max must be positive")
        if self.threads < 1:
            raise ValueError("threads must be >= 1")


@dataclass(frozen=True)
class Trajectory:
    times: np.ndarray
    points: np.ndarray

    def to_csv(self, path) -> None:
        n = self.points.shape[1]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t"] + [f"x{i}" for i in range(n)])
            for t, p in zip(self.times, self.points):
                w.writerow([repr(float(t))] + [repr(float(v)) for v in p])


VectorField = Callable[[np.ndarray], np.ndarray]


def rk4_step(Y: VectorField, X: np.ndarray, dt) -> np.ndarray:
    """One classical Runge-Kutta step; ``dt`` may be a scalar or per-row array."""
    dt = np.asarray(dt, dtype=float)
    if dt.ndim == 1:
        dt = dt[:, None]
    k1 = Y(X)
    k2 = Y(X + 0.5 * dt * k1)
    k3 = Y(X + 0.5 * dt * k2)
    k4 = Y(X + dt * k3)
    return X + (dt / 6.0) * (k1 + 2.0 * (k2 + k3) + k4)


def _steps(t: float, cfg: IntegratorConfig) -> tuple[int, float]:
    if abs(t) > cfg.t_max * (1 + 1e-12):
        raise FlowError(f"|t| = {abs(t):g} exceeds t_max = {cfg.t_max:g}")
    n = int(math.ceil(abs(t) / cfg.step - 1e-9))
    if n > MAX_STEPS:
        raise FlowError(f"{n} integration steps exceed the step budget")
    return n, (t / n if n else 0.0)


def _directed(Y: VectorField, sign: float) -> VectorField:
    if sign >= 0:
        return Y
    return lambda X: -Y(X)


def map_chunks(fn, X: np.ndarray, threads: int = 1, chunk: int = CHUNK):
    """Apply ``fn`` to fixed-size row chunks and concatenate.

    Chunk boundaries do not depend on ``threads``, so results are identical for
    every worker count.
    """
    X = np.asarray(X)
    if len(X) <= chunk:
        return fn(X)
    parts = [X[i:i + chunk] for i in range(0, len(X), chunk)]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            outs = list(ex.map(fn, parts))
    else:
        outs = [fn(p) for p in parts]
    if isinstance(outs[0], tuple):
        return tuple(np.concatenate(o) for o in zip(*outs))
    return np.concatenate(outs)


def flow_points(Y: VectorField, X: np.ndarray, t: float, cfg: IntegratorConfig) -> np.ndarray:
    """RK4 approximation of ``phi^t`` applied to every row of ``X``."""
    X = np.array(np.atleast_2d(X), dtype=float)
    n, dt = _steps(t, cfg)
    Yd = _directed(Y, dt)

    def run(P):
        P = P.copy()
        for _ in range(n):
            P = rk4_step(Yd, P, abs(dt))
        return P

    return map_chunks(run, X, cfg.threads)


def flow_map(x, t: float, Y: VectorField, cfg: IntegratorConfig) -> np.ndarray:
    """``phi^t(x)`` for a single point; negative ``t`` integrates ``-Y``."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if t == 0:
        return x.copy()
    return flow_points(Y, x[None, :], t, cfg)[0]


def trajectory(x, t: float, Y: VectorField, cfg: IntegratorConfig) -> Trajectory:
    x = np.atleast_1d(np.asarray(x, dtype=float))
    n, dt = _steps(t, cfg)
    Yd = _directed(Y, dt)
    pts = [x.copy()]
    P = x[None, :].copy()
    for _ in range(n):
        P = rk4_step(Yd, P, abs(dt))
        pts.append(P[0].copy())
    times = np.arange(n + 1) * dt
    return Trajectory(times, np.asarray(pts))


def _effective(S: CellSet, cfg: IntegratorConfig) -> CellSet:
    return combinatorial_interior(S) if cfg.safety_margin else S


def _stays(Y, X, t, S, cfg):
    """True where the samples of ``phi^{[0, t]}`` (t signed) stay in ``S``."""
    n, dt = _steps(t, cfg)
    Yd = _directed(Y, dt)
    ok = S.contains_points(X)
    P = X.copy()
    alive = np.flatnonzero(ok)
    for _ in range(n):
        if not len(alive):
            break
        Q = rk4_step(Yd, P[alive], abs(dt))
        P[alive] = Q
        inside = S.contains_points(Q)
        ok[alive[~inside]] = False
        alive = alive[inside]
    return ok


def orbits_in_set(Y: VectorField, X: np.ndarray, t0: float, t1: float, S: CellSet,
                  cfg: IntegratorConfig) -> np.ndarray:
    """Per point: do all integration samples of ``phi^{[t0, t1]}(x)`` lie in ``S``?"""
    if t0 > t1:
        raise ValueError("orbits_in_set needs t0 <= t1")
    S = _effective(S, cfg)
    X = np.array(np.atleast_2d(X), dtype=float)

    def run(P):
        if t0 <= 0 <= t1:
            ok = _stays(Y, P, t1, S, cfg)
            if t0 < 0:
                ok &= _stays(Y, P, t0, S, cfg)
            return ok
        start = t0 if t0 > 0 else t1
        end = t1 if t0 > 0 else t0
        Q = flow_points(Y, P, start, IntegratorConfig(cfg.step, cfg.t_max))
        return _stays(Y, Q, end - start, S, cfg)

    return map_chunks(run, X, cfg.threads)


def orbit_in_set(x, t0: float, t1: float, S: CellSet, Y: VectorField,
                 cfg: IntegratorConfig) -> bool:
    return bool(orbits_in_set(Y, np.atleast_1d(x)[None, :], t0, t1, S, cfg)[0])


def first_exits(Y: VectorField, X: np.ndarray, S: CellSet, cfg: IntegratorConfig,
                t_max: float | None = None, return_points: bool = False):
    """First time each orbit leaves ``S`` (``nan`` when it stays up to ``t_max``).

    The exit is bracketed by integration steps and refined by bisection to
    ``step / 100``.  Points starting outside ``S`` get time 0.  With
    ``return_points`` also returns the last position known to be inside ``S``
    (the start point for orbits that never left).
    """
    S = _effective(S, cfg)
    horizon = cfg.t_max if t_max is None else min(t_max, cfg.t_max)
    n, dt = _steps(horizon, cfg)
    tol = cfg.step / 100.0
    X = np.array(np.atleast_2d(X), dtype=float)

    def run(P0):
        m = len(P0)
        times = np.full(m, np.nan)
        last = P0.copy()
        inside0 = S.contains_points(P0)
        times[~inside0] = 0.0
        P = P0.copy()
        alive = np.flatnonzero(inside0)
        for k in range(n):
            if not len(alive):
                break
            prev = P[alive]
            Q = rk4_step(Y, prev, dt)
            inside = S.contains_points(Q)
            P[alive] = Q
            gone = ~inside
            if gone.any():
                idx = alive[gone]
                lo = np.zeros(len(idx))
                hi = np.full(len(idx), dt)
                base = prev[gone]
                while np.any(hi - lo > tol):
                    mid = 0.5 * (lo + hi)
                    inn = S.contains_points(rk4_step(Y, base, mid))
                    lo = np.where(inn, mid, lo)
                    hi = np.where(inn, hi, mid)
                times[idx] = k * dt + hi
                last[idx] = rk4_step(Y, base, lo)
            alive = alive[inside]
        last[alive] = P[alive]
        return times, last

    times, last = map_chunks(run, X, cfg.threads)
    return (times, last) if return_points else times


def first_exit(x, S: CellSet, Y: VectorField, cfg: IntegratorConfig):
    """Scalar version of :func:`first_exits`; returns ``None`` for no exit."""
    t = first_exits(Y, np.atleast_1d(x)[None, :], S, cfg)[0]
    return None if np.isnan(t) else float(t)
