"""Critical points, the Palais-Smale witness, deformation and covering checks,
and the lower bound ``#critical points >= CL(N/L, [L])``."""

from __future__ import annotations

import itertools
import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.stats import qmc

from .cohomology import RingStructure, build_pair, relative_cuplength, cuplength, ring_laws, \
    ring_structure
from .field import PseudoGradientField, ScalarField
from .flow import FlowError, IntegratorConfig, first_exits, rk4_step
from .grid import CellSet
from .indexpair import FAIL, PASS, IndexPairData, quotient_flow_points

logger = logging.getLogger(__name__)

DEFAULT_SAMPLES = 500
DEFAULT_SEED = 0
MAX_WITNESSES = 5


class VerifyError(ValueError):
    pass


class PreconditionError(VerifyError):
    """A lemma was invoked outside its hypotheses (e.g. a critical value in the band)."""


class DegenerateCriticalError(VerifyError):
    """A refined critical point has a singular Hessian: not an isolated critical point."""


class ContradictionError(VerifyError):
    """Some point of L never leaves V: the pair is not weakly regular."""


@dataclass(frozen=True)
class CriticalPoint:
    location: tuple
    value: float
    grad_norm: float
    cell: tuple

    def as_dict(self) -> dict:
        return {"location": list(self.location), "value": self.value,
                "grad_norm": self.grad_norm, "cell": list(self.cell)}


@dataclass(frozen=True)
class Box:
    """Closed axis-aligned box ``|x - center|_inf <= half_width`` (periodic-aware)."""

    center: tuple
    half_width: float

    def contains(self, points: np.ndarray, domain) -> np.ndarray:
        pts = np.atleast_2d(points)
        d = domain.displacement(pts, np.asarray(self.center)[None, :])
        return np.all(np.abs(d) <= self.half_width, axis=1)

    def cells(self, grid) -> CellSet:
        """Cells whose center lies in the box."""
        return CellSet.from_predicate(grid, lambda c: self.contains(c, grid.domain))

    def boundary_points(self, domain, per_side: int = 16) -> np.ndarray:
        n = len(self.center)
        c = np.asarray(self.center)
        s = np.linspace(-self.half_width, self.half_width, per_side)
        pts = []
        for ax in range(n):
            others = [s] * (n - 1)
            for face in (-self.half_width, self.half_width):
                for combo in itertools.product(*others) if others else [()]:
                    p = np.insert(np.asarray(combo, dtype=float), ax, face)
                    pts.append(c + p)
        return domain.canonicalize(np.asarray(pts))

    def as_dict(self) -> dict:
        return {"center": list(self.center), "half_width": self.half_width}


def default_neighborhood(grid, point, cells_per_side: int = 3) -> Box:
    return Box(tuple(float(v) for v in point), 0.5 * cells_per_side * grid.max_width)


@dataclass
class DeformationReport:
    kind: str
    levels: dict
    delta: float
    T: float
    epsilon: Optional[float]
    checked: int
    failures: int
    witnesses: list
    seed: int
    status: str = PASS
    note: str = ""

    def as_dict(self) -> dict:
        return {
            "kind": self.kind, "levels": self.levels, "delta": self.delta, "T": self.T,
            "epsilon": self.epsilon, "checked": self.checked, "failures": self.failures,
            "witnesses": self.witnesses, "seed": self.seed, "status": self.status,
            "note": self.note,
        }


@dataclass
class CoveringReport:
    times: list
    neighborhoods: list
    checked: int
    uncovered: int
    witnesses: list
    seed: int
    status: str = PASS

    @property
    def coverage(self) -> float:
        return 1.0 - self.uncovered / self.checked if self.checked else 1.0

    def as_dict(self) -> dict:
        return {
            "times": self.times, "neighborhoods": [b.as_dict() for b in self.neighborhoods],
            "checked": self.checked, "uncovered": self.uncovered, "coverage": self.coverage,
            "witnesses": self.witnesses, "seed": self.seed, "status": self.status,
        }


@dataclass
class BoundReport:
    critical_points: list
    CL: int
    cuplength: int
    ring_laws_ok: bool
    ring_problems: list
    covering: Optional[CoveringReport] = None
    lemma41_T: Optional[float] = None
    verdict: str = PASS
    note: str = ""

    @property
    def count(self) -> int:
        return len(self.critical_points)

    def as_dict(self) -> dict:
        return {
            "critical_points": [c.as_dict() for c in self.critical_points],
            "count": self.count, "CL": self.CL, "cuplength": self.cuplength,
            "ring_laws": self.ring_laws_ok, "ring_problems": self.ring_problems[:MAX_WITNESSES],
            "covering": self.covering.as_dict() if self.covering else None,
            "lemma41_T": self.lemma41_T,
            "chain": "#critical >= nu_H >= nu_C >= CL (nu_H, nu_C not computed)",
            "verdict": self.verdict, "note": self.note,
        }


def _wit(points) -> list:
    return [[float(v) for v in p] for p in np.asarray(points)[:MAX_WITNESSES]]


# ---------------------------------------------------------------------------
# Critical points
# ---------------------------------------------------------------------------

def _local_minima(values: np.ndarray, periodic) -> np.ndarray:
    """Non-strict local minima over the ``3^n`` neighbourhood (``inf`` = excluded)."""
    keep = np.isfinite(values)
    n = values.ndim
    for off in itertools.product((-1, 0, 1), repeat=n):
        if not any(off):
            continue
        nb = values
        for ax, o in enumerate(off):
            if not o:
                continue
            if periodic[ax]:
                nb = np.roll(nb, o, axis=ax)
            else:
                pad = np.full_like(nb, np.inf)
                src = [slice(None)] * n
                dst = [slice(None)] * n
                if o > 0:
                    src[ax], dst[ax] = slice(None, -1), slice(1, None)
                else:
                    src[ax], dst[ax] = slice(1, None), slice(None, -1)
                pad[tuple(dst)] = nb[tuple(src)]
                nb = pad
        keep &= values <= nb
    return keep


def _newton(f: ScalarField, x: np.ndarray, grad_tol: float, max_iter: int = 60):
    dom = f.domain
    for _ in range(max_iter):
        g = f.gradient(x[None, :])[0]
        gn = float(np.linalg.norm(g))
        if gn <= grad_tol:
            return x, gn, True
        H = f.hessian(x[None, :])[0]
        try:
            step = np.linalg.solve(H, g)
        except np.linalg.LinAlgError:
            return x, gn, False
        lam = 1.0
        while lam > 1e-6:
            y = dom.canonicalize((x - lam * step)[None, :])[0]
            if np.linalg.norm(f.gradient(y[None, :])[0]) < gn:
                break
            lam *= 0.5
        else:
            return x, gn, False
        x = y
    gn = float(np.linalg.norm(f.gradient(x[None, :])[0]))
    return x, gn, gn <= grad_tol


def find_critical_points(V: CellSet, f: ScalarField, grad_tol: float = 1e-10,
                         cond_limit: float = 1e10) -> list[CriticalPoint]:
    """Grid scan for local minima of ``|Df|`` at cell centers, then damped Newton.

    Seeds that diverge are logged and dropped.  Converged points with a
    singular Hessian raise :class:`DegenerateCriticalError`.
    """
    if not V:
        raise VerifyError("V is empty")
    g = V.grid
    # scan one cell beyond V so critical points on its boundary still get seeds
    region = V.dilate(diagonal=True)
    vals = np.full(g.shape, np.inf)
    idx = region.indices()
    vals[tuple(idx.T)] = np.linalg.norm(f.gradient(g.centers(idx)), axis=1)
    seeds = np.argwhere(_local_minima(vals, g.periodic))
    # coarse threshold: |Df| at a seed cannot exceed the Hessian bound times a cell
    H = f.hessian(g.centers(idx))
    bound = 2.0 * float(np.max(np.linalg.norm(H, ord=2, axis=(1, 2)))) * g.cell_diameter
    seeds = seeds[vals[tuple(seeds.T)] <= max(bound, grad_tol)]
    found: list[CriticalPoint] = []
    sep = 2 * g.max_width
    for s in seeds:
        x0 = g.centers(s[None, :])[0]
        x, gn, ok = _newton(f, x0, grad_tol)
        if not ok:
            logger.info("Newton did not converge from seed %s (|Df| = %.3g)", x0, gn)
            continue
        if not V.contains_points(x[None, :])[0]:
            continue
        if found:
            locs = np.asarray([c.location for c in found])
            d = np.linalg.norm(g.domain.displacement(locs, x[None, :]), axis=1)
            if np.any(d < sep):
                continue
        Hx = f.hessian(x[None, :])[0]
        if np.linalg.cond(Hx) > cond_limit:
            raise DegenerateCriticalError(
                f"critical point at {x.tolist()} has a singular Hessian; the objective "
                "has a non-isolated critical set")
        cell, _ = g.locate(x[None, :])
        found.append(CriticalPoint(tuple(float(v) for v in x), float(f(x)), gn,
                                   tuple(int(v) for v in cell[0])))
    found.sort(key=lambda c: (c.value, c.location))
    return found


# ---------------------------------------------------------------------------
# Palais-Smale witness and superlevel sets
# ---------------------------------------------------------------------------

def _points(S: CellSet, samples_per_cell=None) -> np.ndarray:
    if not S:
        return np.zeros((0, S.grid.dim))
    return S.samples(samples_per_cell).reshape(-1, S.grid.dim)


def min_Yf(S: CellSet, Y: PseudoGradientField, exclusions: Sequence = (),
           band: Optional[tuple] = None, samples_per_cell=None) -> float:
    """Minimum of ``Y.f`` over sample points of ``S`` outside every exclusion.

    Exclusions may be cell sets or :class:`Box` objects; ``band = (lo, hi)`` keeps
    only sample points with ``lo <= f <= hi``.
    """
    X = _points(S, samples_per_cell)
    keep = np.ones(len(X), dtype=bool)
    dom = S.grid.domain
    for ex in exclusions:
        keep &= ~(ex.contains(X, dom) if isinstance(ex, Box) else ex.contains_points(X))
    X = X[keep]
    if band is not None:
        fv = Y.field.values(X) if len(X) else np.zeros(0)
        X = X[(fv >= band[0]) & (fv <= band[1])]
    if not len(X):
        raise VerifyError("no sample points remain after exclusions")
    delta = float(np.min(Y.yf(X)))
    if delta <= 1e-12:
        warnings.warn(f"Y.f is essentially zero on the sampled set (min {delta:.3g}); "
                      "a critical point is present", stacklevel=2)
    return delta


def superlevel(pair: IndexPairData, f: ScalarField, a: float) -> CellSet:
    """``[L]`` together with the cells of ``N - L`` whose center has ``f >= a``."""
    inner = pair.interior
    if not inner:
        return pair.L
    idx = inner.indices()
    keep = f.values(pair.grid.centers(idx)) >= a
    return pair.L | CellSet.from_indices(pair.grid, idx[keep])


def sample_region(S: CellSet, n: int, seed: int = DEFAULT_SEED, predicate=None) -> np.ndarray:
    """``n`` scrambled-Halton points in the cells of ``S`` (optionally filtered)."""
    if not S:
        return np.zeros((0, S.grid.dim))
    g = S.grid
    idx = S.indices()
    lo = np.asarray(g.domain.lo) + idx.min(axis=0) * g.h
    hi = np.asarray(g.domain.lo) + (idx.max(axis=0) + 1) * g.h
    eng = qmc.Halton(d=g.dim, scramble=True, seed=seed)
    out = []
    got = 0
    for _ in range(200):
        P = qmc.scale(eng.random(max(4 * n, 256)), lo, hi)
        keep = S.contains_points(P)
        if predicate is not None and keep.any():
            keep[keep] = predicate(P[keep])
        out.append(P[keep])
        got += int(keep.sum())
        if got >= n:
            break
    P = np.concatenate(out)[:n]
    if len(P) < n:
        raise VerifyError(f"could only sample {len(P)} of {n} points from the region")
    return P


# ---------------------------------------------------------------------------
# Lemma 4.1 / 4.2 witness
# ---------------------------------------------------------------------------

def lemma41_witness(pair: IndexPairData, Y, cfg: IntegratorConfig,
                    samples_per_cell=None) -> dict:
    """Smallest ``T`` in the doubling sequence ``h_t, 2 h_t, ...`` by which every sampled
    point of L has left the one-cell collar of V, plus the neighbourhood check.

    The collar makes "leaving V" robust to the cell resolution.  The neighbourhood
    check reports the time by which all samples of cells face-adjacent to L are
    absorbed into ``[L]``.
    """
    if not pair.L:
        return {"T": 0.0, "neighborhood_time": 0.0, "neighborhood": PASS,
                "note": "L is empty: vacuous"}
    XL = _points(pair.L, samples_per_cell)
    collar = pair.V.dilate(diagonal=True) if pair.V else pair.V
    t = first_exits(Y, XL, collar, cfg) if collar else np.zeros(len(XL))
    if np.any(np.isnan(t)):
        bad = XL[np.isnan(t)]
        raise ContradictionError(f"points of L never leave V, e.g. {bad[0].tolist()}")
    tmax = float(np.max(t)) if len(t) else 0.0
    T = cfg.step
    while T < tmax:
        T *= 2.0
    adj = pair.L.dilate(diagonal=False) & pair.interior
    status, t_nb = PASS, 0.0
    if adj:
        tn = first_exits(Y, _points(adj, samples_per_cell), pair.interior, cfg)
        if np.any(np.isnan(tn)):
            status, t_nb = FAIL, float("inf")
        else:
            t_nb = float(np.max(tn))
    return {"T": T, "neighborhood_time": t_nb, "neighborhood": status, "note": ""}


# ---------------------------------------------------------------------------
# Quotient flow with snapshots
# ---------------------------------------------------------------------------

def _snapshots(pair: IndexPairData, X: np.ndarray, times: Sequence[float], Y,
               cfg: IntegratorConfig):
    """Quotient-flow states of ``X`` at each of ``times`` from a single integration."""
    times = [float(t) for t in times]
    if any(t < 0 for t in times):
        raise VerifyError("snapshot times must be non-negative")
    tmax = max(times) if times else 0.0
    if tmax > cfg.t_max * (1 + 1e-12):
        raise FlowError(f"schedule needs t = {tmax:g} beyond t_max = {cfg.t_max:g}")
    inner = pair.interior
    P = np.array(X, dtype=float)
    alive = inner.contains_points(P)
    marks = {}
    k = 0
    # snapshot times are rounded up to whole integrator steps
    for target in sorted(set(times)):
        n_target = int(math.ceil(target / cfg.step - 1e-9))
        while k < n_target:
            act = np.flatnonzero(alive)
            if not len(act):
                k = n_target
                break
            Q = rk4_step(Y, P[act], cfg.step)
            P[act] = Q
            alive[act[~inner.contains_points(Q)]] = False
            k += 1
        marks[target] = (P.copy(), ~alive)
    return [marks[t] for t in times]


# ---------------------------------------------------------------------------
# Deformation lemmas
# ---------------------------------------------------------------------------

def _crit_in_band(crit, lo, hi):
    return [c for c in crit if lo <= c.value <= hi]


def verify_first_deformation(pair: IndexPairData, f: ScalarField, Y: PseudoGradientField,
                             a: float, b: float, cfg: IntegratorConfig,
                             critical: Sequence[CriticalPoint] = (),
                             n_samples: int = DEFAULT_SAMPLES, seed: int = DEFAULT_SEED,
                             t_scale: float = 1.0) -> DeformationReport:
    """``phi_#^T`` maps ``(N/L)^a`` into ``(N/L)^b`` for ``T = (b - a)/delta``.

    ``t_scale`` multiplies ``T`` (values below 1 probe sharpness).
    """
    if a > b:
        raise PreconditionError("need a <= b")
    levels = {"a": a, "b": b}
    if a == b:
        return DeformationReport("first", levels, float("inf"), 0.0, None, 0, 0, [], seed,
                                 note="a = b: trivial")
    inside = [c for c in critical if pair.V.contains_points(np.asarray(c.location)[None, :])[0]]
    if _crit_in_band(inside, a, b):
        raise PreconditionError(f"critical value in [{a}, {b}]")
    delta = min_Yf(pair.V, Y, band=(a, b))
    if delta <= 0:
        raise PreconditionError("Y.f vanishes on V within the band")
    T = (b - a) / delta * t_scale
    X = sample_region(pair.interior, n_samples, seed, lambda P: f.values(P) >= a)
    [(P, absorbed)] = _snapshots(pair, X, [T], Y, cfg)
    ok = absorbed.copy()
    if (~absorbed).any():
        ok[~absorbed] = f.values(P[~absorbed]) >= b - 1e-12
    fails = X[~ok]
    return DeformationReport("first", levels, delta, T, None, len(X), len(fails), _wit(fails),
                             seed, PASS if not len(fails) else FAIL)


def verify_second_deformation(pair: IndexPairData, f: ScalarField, Y: PseudoGradientField,
                              c: float, eps0: float, T: float,
                              neighborhoods: Sequence[Box], cfg: IntegratorConfig,
                              critical: Sequence[CriticalPoint] = (),
                              n_samples: int = DEFAULT_SAMPLES, seed: int = DEFAULT_SEED,
                              level_tol: float = 1e-9) -> DeformationReport:
    """With ``eps = min(T delta / 2, eps0)``: each sampled ``x`` in ``(N/L)^{c-eps}``
    lies in some ``U_i`` at time 0 or ``T``, or ``phi_#^T(x)`` is in ``(N/L)^{c+eps}``."""
    g = pair.grid
    dom = g.domain
    for U in neighborhoods:
        if U.half_width < g.max_width:
            raise PreconditionError("critical point uncovered: neighborhood smaller than a cell")
    for cp in critical:
        if abs(cp.value - c) > level_tol:
            continue
        if not pair.V.contains_points(np.asarray(cp.location)[None, :])[0]:
            continue
        if not any(U.contains(np.asarray(cp.location)[None, :], dom)[0] for U in neighborhoods):
            raise PreconditionError(f"critical point uncovered at {list(cp.location)}")
    delta = min_Yf(pair.V, Y, exclusions=neighborhoods, band=(c - eps0, c + eps0))
    eps = min(T * delta / 2.0, eps0)
    X = sample_region(pair.interior, n_samples, seed, lambda P: f.values(P) >= c - eps)
    [(P, absorbed)] = _snapshots(pair, X, [T], Y, cfg)
    ok = absorbed.copy()
    for U in neighborhoods:
        ok |= U.contains(X, dom)
        ok |= ~absorbed & U.contains(P, dom)
    rest = ~ok & ~absorbed
    if rest.any():
        ok[rest] = f.values(P[rest]) >= c + eps - 1e-12
    fails = X[~ok]
    return DeformationReport("second", {"c": c, "eps0": eps0}, delta, T, eps, len(X),
                             len(fails), _wit(fails), seed, PASS if not len(fails) else FAIL)


# ---------------------------------------------------------------------------
# Covering times and the bound
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class QuadraticFloor:
    """Lower bound on ``Y.f`` near a nondegenerate critical point from its Hessian.

    In the quadratic model ``|Df|^2 >= 2 mu |f - c|`` where ``mu`` is the smallest
    ``|eigenvalue|`` among eigenvalues of the sign of ``f - c``.  Sampled minima
    miss the slow orbits along stable manifolds in thin bands; this bound does
    not.  It applies to bands meeting ``[f_lo, f_hi]``, the range of f on U.
    """

    value: float
    mu_below: float
    mu_above: float
    f_lo: float
    f_hi: float
    scale: float

    @classmethod
    def at(cls, cp: CriticalPoint, U: Box, Y: PseudoGradientField) -> "QuadraticFloor":
        f = Y.field
        lam = np.linalg.eigvalsh(f.hessian(np.asarray(cp.location)[None, :])[0])
        neg, pos = np.abs(lam[lam < 0]), lam[lam > 0]
        P = np.vstack([U.boundary_points(f.domain), np.asarray(cp.location)[None, :]])
        fv = f.values(P)
        s2 = float(np.max(np.einsum("ij,ij->i", *(2 * [f.gradient(P)]))))
        if Y.mode == "raw":
            scale = 1.0
        else:
            scale = 1.0 / math.sqrt(1.0 + s2)
        return cls(cp.value, float(neg.min()) if len(neg) else math.inf,
                   float(pos.min()) if len(pos) else math.inf,
                   float(fv.min()), float(fv.max()), scale)

    def bound(self, a: float, b: float) -> float:
        if b < self.f_lo or a > self.f_hi:
            return math.inf
        if a <= self.value <= b:
            return 0.0
        if b < self.value:
            return 2.0 * self.mu_below * (self.value - b) * self.scale
        return 2.0 * self.mu_above * (a - self.value) * self.scale


def lift_time(V: CellSet, Y: PseudoGradientField, lo: float, hi: float,
              floors: Sequence[QuadraticFloor] = (), pieces: int = 64) -> float:
    """Time after which the first deformation carries level ``lo`` past ``hi``.

    The lemma is chained over sub-bands, giving ``sum (b_k - a_k) / delta_k``.
    Breakpoints are uniform plus a geometric sequence towards each critical
    value of ``floors``, where ``delta`` shrinks linearly in ``|f - c|``.  A band
    holding no sample point uses the nearest samples on either side.
    """
    if hi <= lo:
        return 0.0
    X = _points(V)
    fv = Y.field.values(X)
    order = np.argsort(fv, kind="stable")
    fs, ys = fv[order], Y.yf(X[order])
    cuts = set(np.linspace(lo, hi, pieces + 1).tolist())
    for fl in floors:
        c = fl.value
        if c >= hi:
            gap = c - hi
            while gap > 0 and c - gap > lo:
                cuts.add(c - gap)
                gap *= 2.0
        elif c <= lo:
            gap = lo - c
            while gap > 0 and c + gap < hi:
                cuts.add(c + gap)
                gap *= 2.0
    edges = np.array(sorted(cuts))
    total = 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        i = int(np.searchsorted(fs, a, side="left"))
        j = int(np.searchsorted(fs, b, side="right"))
        if j > i:
            d = float(ys[i:j].min())
        else:
            near = [ys[k] for k in (i - 1, j) if 0 <= k < len(ys)]
            d = float(min(near)) if near else math.inf
        for fl in floors:
            d = min(d, fl.bound(a, b))
        if d <= 0 or not math.isfinite(d):
            raise PreconditionError(f"no positive lower bound for Y.f on [{a:.6g}, {b:.6g}]")
        total += (b - a) / d
    return total


def inner_box(U: Box, Y: PseudoGradientField, T: float, cfg: IntegratorConfig,
              per_side: int = 33) -> Box:
    """A box ``V_i`` inside ``U`` that no orbit starting outside ``U`` reaches within ``T``.

    Orbits entering ``U`` cross its boundary, so boundary samples are flowed for
    time ``T`` and half their closest approach to the center is kept.
    """
    dom = Y.domain
    c = np.asarray(U.center)
    P = U.boundary_points(dom, per_side)
    n = max(1, int(math.ceil(T / cfg.step - 1e-9)))
    dt = T / n
    closest = np.full(len(P), U.half_width)
    for _ in range(n):
        P = rk4_step(Y, P, dt)
        d = np.max(np.abs(dom.displacement(P, c[None, :])), axis=1)
        closest = np.minimum(closest, d)
    return Box(U.center, 0.5 * float(closest.min()))


def _delta_outside(pair: IndexPairData, Y: PseudoGradientField, boxes: Sequence[Box],
                   band: tuple) -> float:
    """``min Y.f`` over the band in V minus the open boxes, boundary of the boxes included."""
    dom = pair.grid.domain
    vals = []
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            vals.append(min_Yf(pair.V, Y, exclusions=boxes, band=band))
    except VerifyError:
        pass
    for b in boxes:
        P = b.boundary_points(dom)
        P = P[pair.V.contains_points(P)]
        if len(P):
            fv = Y.field.values(P)
            P = P[(fv >= band[0]) & (fv <= band[1])]
        if len(P):
            vals.append(float(np.min(Y.yf(P))))
    if not vals:
        raise VerifyError("no sample points in the band")
    return min(vals)


def covering_times(pair: IndexPairData, f: ScalarField, Y: PseudoGradientField,
                   critical: Sequence[CriticalPoint], neighborhoods: Sequence[Box],
                   cfg: IntegratorConfig, T_level: float = 1.0,
                   n_samples: int = DEFAULT_SAMPLES, seed: int = DEFAULT_SEED) -> CoveringReport:
    """Times ``t_0, t_1, ..., t_n`` with ``N/L`` covered by ``(phi_#^{t_0})^{-1}[L]`` and
    the ``(phi_#^{t_i})^{-1} U_i``, built level by level from the bottom.

    Per critical level ``c`` the second deformation (time ``T_level``, width
    ``eps``) is preceded by a first deformation lifting the previous level to
    ``c - eps``; ``t_i`` is the time right before the second deformation, when
    every remaining point is either in ``U_i`` or about to rise past ``c + eps``.  After
    the top level a last first deformation reaches past ``max f`` on ``N - L``.
    """
    g = pair.grid
    dom = g.domain
    crit = [c for c in critical if pair.V.contains_points(np.asarray(c.location)[None, :])[0]]
    if len(neighborhoods) != len(crit):
        raise VerifyError("need one neighbourhood per critical point in V")
    inner_pts = _points(pair.interior)
    for U in neighborhoods:
        cells = U.cells(g)
        if not cells.issubset(pair.interior):
            raise PreconditionError("neighbourhood leaves N - L")
    for U1, U2 in itertools.combinations(neighborhoods, 2):
        if not U1.cells(g).isdisjoint(U2.cells(g)):
            raise PreconditionError("neighbourhoods overlap")
    values = sorted({round(c.value, 12) for c in crit})
    f_inner = f.values(inner_pts) if len(inner_pts) else np.zeros(1)
    level_lo, f_top = float(np.min(f_inner)), float(np.max(f_inner))
    floors = [QuadraticFloor.at(c, U, Y) for c, U in zip(crit, neighborhoods)]
    times = [0.0] * (len(crit) + 1)
    tau = 0.0
    for j, cv in enumerate(values):
        members = [i for i, c in enumerate(crit) if abs(c.value - cv) <= 1e-9]
        us = [neighborhoods[i] for i in members]
        gap_lo = cv - values[j - 1] if j else math.inf
        gap_hi = values[j + 1] - cv if j + 1 < len(values) else math.inf
        eps0 = 0.5 * min(gap_lo, gap_hi, max(f_top - level_lo, 1e-6))
        tops = [float(np.max(f.values(U.boundary_points(dom)))) for U in us]
        # shrink to boxes that orbits from outside U cannot reach within T_level;
        # at a local maximum every nearby orbit converges, so U itself is kept
        inner = [U if top < cv else inner_box(U, Y, T_level, cfg) for U, top in zip(us, tops)]
        delta = _delta_outside(pair, Y, inner, (cv - eps0, cv + eps0))
        eps = min(T_level * delta / 2.0, eps0)
        for top in tops:
            # near a local maximum superlevel sets must stay inside U
            if top < cv:
                eps = min(eps, 0.5 * (cv - top))
        tau += lift_time(pair.V, Y, level_lo, cv - eps, floors=floors)
        # membership in U_i is read at the start of the second deformation
        for i in members:
            times[i + 1] = tau
        tau += T_level
        level_lo = cv + eps
    if f_top >= level_lo:
        tau += lift_time(pair.V, Y, level_lo, f_top + 1e-9, floors=floors)
    times[0] = tau
    X = sample_region(pair.interior, n_samples, seed)
    snaps = _snapshots(pair, X, times, Y, cfg)
    covered = snaps[0][1].copy()
    for i, U in enumerate(neighborhoods):
        P, absorbed = snaps[i + 1]
        covered |= ~absorbed & U.contains(P, dom)
    miss = X[~covered]
    return CoveringReport([float(t) for t in times], list(neighborhoods), len(X), len(miss),
                          _wit(miss), seed, PASS if not len(miss) else FAIL)


def verify_bound(pair: IndexPairData, f: ScalarField, cfg: IntegratorConfig,
                 ring: Optional[RingStructure] = None,
                 critical: Optional[list[CriticalPoint]] = None,
                 grad_tol: float = 1e-10) -> BoundReport:
    """``#critical points in V >= CL(N/L, [L])``, with the cup ring checked for consistency.

    A ring violating the unit, commutativity or associativity laws cannot give
    a trustworthy ``CL`` and makes the verdict ``fail``.
    """
    if ring is None:
        ring = ring_structure(build_pair(pair.N, pair.L))
    if critical is None:
        critical = find_critical_points(pair.V, f, grad_tol)
    laws = ring_laws(ring)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        CL = relative_cuplength(ring)
    cl_abs = cuplength(ring)
    ok = len(critical) >= CL and laws["ok"]
    note = "" if laws["ok"] else "cup ring violates ring laws"
    if len(critical) < CL:
        note = f"only {len(critical)} critical points for CL = {CL}"
    return BoundReport(list(critical), CL, cl_abs, laws["ok"], laws["problems"],
                       verdict=PASS if ok else FAIL, note=note)


def palais_smale_diagnostic(V: CellSet, f: ScalarField, critical: Sequence[CriticalPoint],
                            radius: float, samples_per_cell=None, max_probes: int = 200,
                            grad_tol: float = 1e-10) -> dict:
    """``min |Df|`` over V outside radius-balls around the listed critical points.

    A sample whose gradient is within ``|D^2 f(x)| * cell diameter`` of zero could
    hide a critical point between samples; Newton is started from the lowest of
    those and the check fails if it lands on a critical point outside every ball.
    """
    X = _points(V, samples_per_cell)
    dom = V.grid.domain
    centers = [np.asarray(c.location) for c in critical]

    def outside(P):
        keep = np.ones(len(P), dtype=bool)
        for c in centers:
            keep &= np.linalg.norm(dom.displacement(P, c[None, :]), axis=1) > radius
        return keep

    X = X[outside(X)]
    if not len(X):
        warnings.warn("no sample points outside the critical balls", stacklevel=2)
        return {"min_grad": None, "probes": 0, "status": PASS, "witness": None,
                "note": "vacuous"}
    gn = np.linalg.norm(f.gradient(X), axis=1)
    i = int(np.argmin(gn))
    H = np.linalg.norm(f.hessian(X), ord=2, axis=(1, 2))
    suspect = np.flatnonzero(gn <= H * V.grid.cell_diameter)
    suspect = suspect[np.argsort(gn[suspect], kind="stable")][:max_probes]
    witness = None
    for j in suspect:
        x, g_end, ok = _newton(f, X[j].copy(), grad_tol)
        if ok and V.contains_points(x[None, :])[0] and outside(x[None, :])[0]:
            witness = x
            break
    status = PASS if gn[i] > 0 and witness is None else FAIL
    wit = witness if witness is not None else X[i]
    return {"min_grad": float(gn[i]), "probes": int(len(suspect)), "status": status,
            "witness": [float(v) for v in wit],
            "note": "unlisted critical point" if witness is not None else ""}
