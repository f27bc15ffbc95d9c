"""Benci pairs, index-pair axioms, regularity checks, exit time and quotient flow.

Every check samples each relevant cell (center plus near-corner points) and
integrates forward.  Boundary-contact predicates carry a one-cell tolerance: a
violation that could be explained by moving a point by one cell is reported
as ``inconclusive`` rather than ``fail``.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .flow import IntegratorConfig, first_exits, flow_points, orbits_in_set, rk4_step
from .grid import CellSet, GridError, closed_difference, combinatorial_boundary, \
    combinatorial_interior

logger = logging.getLogger(__name__)

PASS, FAIL, INCONCLUSIVE, UNCHECKED = "pass", "fail", "inconclusive", "unchecked"
MAX_WITNESSES = 5


class IndexPairError(ValueError):
    pass


@dataclass(frozen=True)
class CheckResult:
    status: str = UNCHECKED
    witnesses: tuple = ()
    checked: int = 0
    violations: int = 0
    note: str = ""

    def as_dict(self) -> dict:
        return {
            "status": self.status,
            "checked": self.checked,
            "violations": self.violations,
            "witnesses": [[float(v) for v in np.atleast_1d(w)] for w in self.witnesses],
            "note": self.note,
        }


def _verdict(checked, fail_pts, soft_pts, note="") -> CheckResult:
    if len(fail_pts):
        return CheckResult(FAIL, tuple(np.asarray(fail_pts)[:MAX_WITNESSES]), checked,
                           len(fail_pts), note)
    if len(soft_pts):
        return CheckResult(INCONCLUSIVE, tuple(np.asarray(soft_pts)[:MAX_WITNESSES]), checked,
                           0, note or "violations within one-cell tolerance")
    return CheckResult(PASS, (), checked, 0, note)


def _vacuous(note: str) -> CheckResult:
    return CheckResult(PASS, (), 0, 0, note)


@dataclass(frozen=True)
class IndexPairData:
    """Candidate pair ``(N, L)`` with ``V = closure(N - L)`` and check flags."""

    N: CellSet
    L: CellSet
    V: CellSet = None
    T: Optional[float] = None
    flags: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.L.issubset(self.N):
            raise IndexPairError("L must be a subset of N")
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            V = closed_difference(self.N, self.L)
        if self.V is None:
            object.__setattr__(self, "V", V)
        elif self.V != V:
            raise IndexPairError("stored V does not match closed_difference(N, L)")
        object.__setattr__(self, "flags", dict(self.flags))

    @property
    def grid(self):
        return self.N.grid

    @property
    def interior(self) -> CellSet:
        """``N \\ L`` as a cell set."""
        return self.N - self.L

    @property
    def degenerate(self) -> bool:
        return self.L == self.N

    def flag(self, name: str) -> CheckResult:
        return self.flags.get(name, CheckResult())

    def with_flags(self, **flags) -> "IndexPairData":
        merged = dict(self.flags)
        merged.update(flags)
        if (merged.get("regular_criterion", CheckResult()).status == PASS
                and merged.get("weakly_regular", CheckResult()).status == UNCHECKED):
            # orbits leaving V at once certainly leave it eventually
            merged["weakly_regular"] = CheckResult(PASS, note="implied by regular criterion")
        return replace(self, flags=merged)


def _samples(S: CellSet, samples_per_cell=None) -> np.ndarray:
    if not S:
        return np.zeros((0, S.grid.dim))
    return S.samples(samples_per_cell).reshape(-1, S.grid.dim)


# ---------------------------------------------------------------------------
# Benci construction
# ---------------------------------------------------------------------------

def compute_GT(A: CellSet, T: float, Y, cfg: IntegratorConfig,
               samples_per_cell: int | None = None) -> CellSet:
    """Inner approximation of ``{x in A : phi^[-T, T](x) in A}``."""
    if not T > 0:
        raise IndexPairError("T must be positive")
    if not A:
        raise IndexPairError("A must be non-empty")
    S = A.samples(samples_per_cell)
    m, s, n = S.shape
    ok = orbits_in_set(Y, S.reshape(-1, n), -T, T, A, cfg).reshape(m, s).all(axis=1)
    return CellSet.from_indices(A.grid, A.indices()[ok])


def compute_Gamma(A: CellSet, G: CellSet, T: float, Y, cfg: IntegratorConfig,
                  samples_per_cell: int | None = None) -> CellSet:
    """Cells of ``G`` with a sample whose forward ``[0, T]`` orbit meets the boundary of ``A``."""
    if not G.issubset(A):
        raise IndexPairError("G must be a subset of A")
    if not G:
        return CellSet.empty(A.grid)
    inner = A - combinatorial_boundary(A)
    S = G.samples(samples_per_cell)
    m, s, n = S.shape
    stays = orbits_in_set(Y, S.reshape(-1, n), 0.0, T, inner, cfg).reshape(m, s)
    hit = ~stays.all(axis=1)
    return CellSet.from_indices(A.grid, G.indices()[hit])


def check_isolating(A: CellSet, G: CellSet) -> CheckResult:
    inner = combinatorial_interior(A)
    bad = G - inner
    if not bad:
        return CheckResult(PASS, (), len(G), 0)
    pts = bad.centers()
    return CheckResult(FAIL, tuple(pts[:MAX_WITNESSES]), len(G), len(bad),
                       "G^T touches the boundary of A")


def benci_pair(A: CellSet, T: float, Y, cfg: IntegratorConfig,
               samples_per_cell: int | None = None) -> IndexPairData:
    G = compute_GT(A, T, Y, cfg, samples_per_cell)
    Gamma = compute_Gamma(A, G, T, Y, cfg, samples_per_cell)
    return IndexPairData(G, Gamma, T=T, flags={"isolating": check_isolating(A, G)})


def check_gamma_3T(A: CellSet, G: CellSet, Gamma: CellSet, T: float, Y,
                   cfg: IntegratorConfig, samples_per_cell: int | None = None) -> CheckResult:
    """Every sampled ``x`` in Gamma must have its ``[0, 3T]`` orbit leave ``G``."""
    if not Gamma.issubset(G):
        raise IndexPairError("Gamma must be a subset of G")
    X = _samples(Gamma, samples_per_cell)
    if not len(X):
        return _vacuous("Gamma is empty")
    stays = orbits_in_set(Y, X, 0.0, 3 * T, G, cfg)
    if not stays.any():
        return CheckResult(PASS, (), len(X), 0)
    bad = X[stays]
    end = flow_points(Y, bad, 3 * T, cfg)
    deep = combinatorial_interior(G).contains_points(end)
    return _verdict(len(X), bad[deep], bad[~deep])


# ---------------------------------------------------------------------------
# Axioms and regularity
# ---------------------------------------------------------------------------

def _degenerate_guard(pair: IndexPairData):
    if pair.degenerate:
        warnings.warn("degenerate pair L = N: checks pass vacuously", stacklevel=3)
        return _vacuous("degenerate pair L = N")
    return None


def check_axiom_i(pair: IndexPairData, horizon: float, Y, cfg: IntegratorConfig,
                  samples_per_cell: int | None = None) -> CheckResult:
    """L positively invariant relative to N, sampled over ``[0, horizon]``."""
    vac = _degenerate_guard(pair)
    if vac:
        return vac
    X = _samples(pair.L, samples_per_cell)
    if not len(X):
        return _vacuous("L is empty")
    n_steps = max(1, int(np.ceil(horizon / cfg.step - 1e-9)))
    dt = horizon / n_steps
    near_L = pair.L.dilate(diagonal=True)

    P = X.copy()
    deep = np.zeros(len(X), dtype=bool)
    shallow = np.zeros(len(X), dtype=bool)
    alive = np.arange(len(X))
    for _ in range(n_steps):
        if not len(alive):
            break
        Q = rk4_step(Y, P[alive], dt)
        P[alive] = Q
        inN = pair.N.contains_points(Q)
        inL = pair.L.contains_points(Q)
        off = inN & ~inL
        if off.any():
            d = ~near_L.contains_points(Q[off])
            deep[alive[off][d]] = True
            shallow[alive[off][~d]] = True
        # stop following once the orbit has left N or has been flagged
        keep = inN & ~deep[alive]
        alive = alive[keep]
    return _verdict(len(X), X[deep], X[shallow & ~deep])


def check_axiom_ii(pair: IndexPairData, horizon: float, Y, cfg: IntegratorConfig,
                   samples_per_cell: int | None = None) -> CheckResult:
    """Orbits leaving N do so through L: the last in-N sample lies in L."""
    vac = _degenerate_guard(pair)
    if vac:
        return vac
    X = _samples(pair.N, samples_per_cell)
    if pair.N.mask.all() and all(pair.grid.periodic):
        return CheckResult(PASS, (), len(X), 0, "N is the whole closed domain")
    times, last = first_exits(Y, X, pair.N, cfg, t_max=horizon, return_points=True)
    exited = ~np.isnan(times)
    if not exited.any():
        return CheckResult(PASS, (), len(X), 0, "no sampled orbit leaves N")
    inL = pair.L.contains_points(last[exited])
    nearL = pair.L.dilate(diagonal=True).contains_points(last[exited]) if pair.L else \
        np.zeros(int(exited.sum()), dtype=bool)
    starts = X[exited]
    return _verdict(len(X), starts[~inL & ~nearL], starts[~inL & nearL])


def check_index_pair(pair: IndexPairData, horizon: float, Y, cfg: IntegratorConfig,
                     samples_per_cell: int | None = None) -> IndexPairData:
    return pair.with_flags(
        axiom_i=check_axiom_i(pair, horizon, Y, cfg, samples_per_cell),
        axiom_ii=check_axiom_ii(pair, horizon, Y, cfg, samples_per_cell),
    )


def check_weak_regularity(pair: IndexPairData, horizon: float, Y, cfg: IntegratorConfig,
                          samples_per_cell: int | None = None) -> CheckResult:
    """Every sampled ``x`` in L reaches the outside of V within ``horizon``."""
    vac = _degenerate_guard(pair)
    if vac:
        return vac
    X = _samples(pair.L, samples_per_cell)
    if not len(X):
        return _vacuous("L is empty")
    t = first_exits(Y, X, pair.V, cfg, t_max=horizon)
    stuck = np.isnan(t)
    return _verdict(len(X), X[stuck], X[:0])


def check_regular_criterion(pair: IndexPairData, Y, cfg: IntegratorConfig,
                            horizon: float | None = None,
                            samples_per_cell: int | None = None) -> CheckResult:
    """Orbits from L leave V without passing back through ``N - L``.

    An orbit that never leaves V, or that re-enters a cell of ``N - L`` away
    from L, is a violation; re-entry into a cell bordering L is inconclusive.
    """
    vac = _degenerate_guard(pair)
    if vac:
        return vac
    X = _samples(pair.L, samples_per_cell)
    if not len(X):
        return _vacuous("L is empty")
    if horizon is None:
        horizon = 3 * pair.T if pair.T else cfg.t_max
    n_steps = max(1, int(np.ceil(horizon / cfg.step - 1e-9)))
    dt = horizon / n_steps
    inner = pair.interior
    near_L = pair.L.dilate(diagonal=True)
    P = X.copy()
    deep = np.zeros(len(X), dtype=bool)
    shallow = np.zeros(len(X), dtype=bool)
    alive = np.flatnonzero(pair.V.contains_points(P))
    for _ in range(n_steps):
        if not len(alive):
            break
        Q = rk4_step(Y, P[alive], dt)
        P[alive] = Q
        back = inner.contains_points(Q)
        if back.any():
            d = ~near_L.contains_points(Q[back])
            deep[alive[back][d]] = True
            shallow[alive[back][~d]] = True
        alive = alive[pair.V.contains_points(Q) & ~deep[alive]]
    stuck = np.zeros(len(X), dtype=bool)
    stuck[alive] = True
    hard = stuck | deep
    return _verdict(len(X), X[hard], X[shallow & ~hard])


# ---------------------------------------------------------------------------
# Exit time and the quotient semiflow
# ---------------------------------------------------------------------------

def exit_times(pair: IndexPairData, X: np.ndarray, Y, cfg: IntegratorConfig) -> np.ndarray:
    """Exit-time map on a batch of points of N (``nan`` = +infinity).

    ``0`` on L-cells.  Otherwise the orbit's entry into the exit set is located
    at the center of the first L-cell it crosses: the time of first exit from
    ``N \\ L`` plus half the time spent crossing that cell.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    inN = pair.N.contains_points(X)
    if not inN.all():
        raise IndexPairError("exit time requested for a point outside N")
    out = np.zeros(len(X))
    free = ~pair.L.contains_points(X)
    if not free.any():
        return out
    t1, p1 = first_exits(Y, X[free], pair.interior, cfg, return_points=True)
    res = t1.copy()
    done = ~np.isnan(t1)
    if done.any():
        # nudge across the face, then time the crossing of that single L-cell
        n_step = flow_points(Y, p1[done], cfg.step / 100.0, cfg) if cfg.step else p1[done]
        idx, ok = pair.grid.locate(n_step)
        entered = ok & pair.L.contains_points(n_step)
        if entered.any():
            sub = np.flatnonzero(done)[entered]
            half = np.empty(len(sub))
            for j, (pt, cell) in enumerate(zip(n_step[entered], idx[entered])):
                one = CellSet.from_indices(pair.grid, cell[None, :])
                t2 = first_exits(Y, pt[None, :], one, cfg)[0]
                half[j] = 0.0 if np.isnan(t2) else 0.5 * t2
            res[sub] = t1[sub] + half
    out[free] = res
    return out


def exit_time_map(x, pair: IndexPairData, Y, cfg: IntegratorConfig):
    t = exit_times(pair, np.atleast_1d(np.asarray(x, dtype=float))[None, :], Y, cfg)[0]
    return None if np.isnan(t) else float(t)


@dataclass(frozen=True)
class QuotientPoint:
    """A point of ``N - L`` or, with ``point=None``, the collapsed class ``[L]``."""

    point: Optional[tuple] = None

    @property
    def is_basepoint(self) -> bool:
        return self.point is None

    @classmethod
    def of(cls, x):
        return cls(tuple(float(v) for v in np.atleast_1d(x)))

    def __repr__(self):
        return "QuotientPoint([L])" if self.is_basepoint else f"QuotientPoint({self.point})"


BASEPOINT = QuotientPoint(None)


def quotient_flow_points(pair: IndexPairData, X: np.ndarray, t: float, Y,
                         cfg: IntegratorConfig):
    """Batch quotient flow: returns ``(points, absorbed)``; absorbed rows are ``[L]``."""
    if t < 0:
        raise IndexPairError("quotient flow needs t >= 0")
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if t == 0:
        return X.copy(), ~pair.interior.contains_points(X)
    stays = orbits_in_set(Y, X, 0.0, t, pair.interior, cfg)
    P = flow_points(Y, X, t, cfg)
    return P, ~stays


def quotient_flow(q: QuotientPoint, t: float, pair: IndexPairData, Y,
                  cfg: IntegratorConfig) -> QuotientPoint:
    if q.is_basepoint:
        return BASEPOINT
    P, absorbed = quotient_flow_points(pair, np.asarray(q.point)[None, :], t, Y, cfg)
    return BASEPOINT if absorbed[0] else QuotientPoint.of(P[0])
