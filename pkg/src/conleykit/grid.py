"""Cubical grids over boxes and flat tori, and sets of top-dimensional cells."""

from __future__ import annotations

import csv
import itertools
import logging
import warnings
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy.spatial import cKDTree

logger = logging.getLogger(__name__)

DEFAULT_CELL_BUDGET = 2 ** 24


class GridError(ValueError):
    """Invalid domain, resolution, or cell-set operation."""


@dataclass(frozen=True)
class Domain:
    """Axis-aligned box ``prod [lo_i, hi_i]``; periodic axes are identified mod length."""

    lo: tuple
    hi: tuple
    periodic: tuple = None

    def __post_init__(self):
        lo = tuple(float(v) for v in self.lo)
        hi = tuple(float(v) for v in self.hi)
        per = self.periodic if self.periodic is not None else (False,) * len(lo)
        per = tuple(bool(p) for p in per)
        if not (len(lo) == len(hi) == len(per)) or not lo:
            raise GridError("domain bounds and periodic flags must have equal, nonzero length")
        for i, (a, b) in enumerate(zip(lo, hi)):
            if not a < b:
                raise GridError(f"axis {i}: need lo < hi, got [{a}, {b}]")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)
        object.__setattr__(self, "periodic", per)

    @property
    def dim(self) -> int:
        return len(self.lo)

    @property
    def lengths(self) -> np.ndarray:
        return np.asarray(self.hi) - np.asarray(self.lo)

    @property
    def diameter(self) -> float:
        return float(np.linalg.norm(self.lengths))

    def canonicalize(self, points: np.ndarray) -> np.ndarray:
        """Reduce periodic coordinates into ``[lo, hi)``; other axes untouched."""
        pts = np.array(points, dtype=float, copy=True)
        for i, per in enumerate(self.periodic):
            if per:
                lo, length = self.lo[i], self.hi[i] - self.lo[i]
                pts[..., i] = lo + np.mod(pts[..., i] - lo, length)
        return pts

    def displacement(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        """Shortest ``b - a`` respecting periodic wraparound."""
        d = np.asarray(b, dtype=float) - np.asarray(a, dtype=float)
        for i, per in enumerate(self.periodic):
            if per:
                length = self.hi[i] - self.lo[i]
                d[..., i] -= length * np.round(d[..., i] / length)
        return d


class CubicalGrid:
    """Uniform partition of a :class:`Domain` into ``prod(r_i)`` boxes."""

    def __init__(self, domain: Domain, resolution: Sequence[int],
                 budget: int = DEFAULT_CELL_BUDGET):
        res = tuple(int(r) for r in np.atleast_1d(resolution))
        if len(res) == 1 and domain.dim > 1:
            res = res * domain.dim
        if len(res) != domain.dim:
            raise GridError(f"resolution has {len(res)} entries for a {domain.dim}-d domain")
        if any(r < 2 for r in res):
            raise GridError("resolution must be >= 2 on every axis")
        total = int(np.prod([float(r) for r in res]))
        if total > budget:
            raise GridError(f"grid of {total} cells exceeds the cell budget {budget}")
        self.domain = domain
        self.resolution = res
        self.h = domain.lengths / np.asarray(res, dtype=float)
        self._lo = np.asarray(domain.lo)

    def __repr__(self):
        return f"CubicalGrid(lo={self.domain.lo}, hi={self.domain.hi}, r={self.resolution})"

    def __eq__(self, other):
        return (isinstance(other, CubicalGrid) and self.domain == other.domain
                and self.resolution == other.resolution)

    def __hash__(self):
        return hash((self.domain, self.resolution))

    @property
    def dim(self) -> int:
        return self.domain.dim

    @property
    def shape(self) -> tuple:
        return self.resolution

    @property
    def size(self) -> int:
        return int(np.prod(self.resolution))

    @property
    def periodic(self) -> tuple:
        return self.domain.periodic

    @property
    def cell_diameter(self) -> float:
        return float(np.linalg.norm(self.h))

    @property
    def max_width(self) -> float:
        return float(self.h.max())

    def centers(self, index: np.ndarray) -> np.ndarray:
        """Centers ``lo + (k + 0.5) h`` for an ``(m, n)`` array of multi-indices."""
        return self._lo + (np.asarray(index, dtype=float) + 0.5) * self.h

    def all_centers(self) -> np.ndarray:
        return self.centers(np.argwhere(np.ones(self.shape, dtype=bool)))

    def locate(self, points: np.ndarray):
        """Multi-indices of the cells containing ``points`` plus a validity mask.

        Points past a non-periodic wall are invalid; a point exactly on ``hi``
        belongs to the last cell.
        """
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        rel = (pts - self._lo) / self.h
        idx = np.floor(rel).astype(np.int64)
        valid = np.all(np.isfinite(pts), axis=1)
        for i, per in enumerate(self.periodic):
            r = self.resolution[i]
            if per:
                idx[:, i] = np.mod(idx[:, i], r)
            else:
                on_hi = (idx[:, i] == r) & (pts[:, i] <= self.domain.hi[i])
                idx[on_hi, i] = r - 1
                valid &= (idx[:, i] >= 0) & (idx[:, i] < r)
        idx[~valid] = 0
        return idx, valid

    def sample_offsets(self, samples_per_cell: int | None = None) -> np.ndarray:
        """Offsets (in units of ``h``) of the per-cell sample points.

        Default is the center plus one point toward each of the ``2**n`` corners,
        placed at 0.45 of the half-diagonal so no sample sits on a shared face.
        """
        corners = np.array(list(itertools.product((-0.45, 0.45), repeat=self.dim)))
        offs = np.vstack([np.zeros((1, self.dim)), corners])
        if samples_per_cell is not None:
            if samples_per_cell < 1:
                raise GridError("samples_per_cell must be >= 1")
            if samples_per_cell > len(offs):
                rng = np.random.default_rng(12345)
                extra = rng.uniform(-0.45, 0.45, size=(samples_per_cell - len(offs), self.dim))
                offs = np.vstack([offs, extra])
            offs = offs[:samples_per_cell]
        return offs

    def cell_samples(self, index: np.ndarray, samples_per_cell: int | None = None) -> np.ndarray:
        """Sample points, shape ``(m, s, n)``, for ``m`` cells."""
        offs = self.sample_offsets(samples_per_cell)
        c = self.centers(index)
        return c[:, None, :] + offs[None, :, :] * self.h

    def shift(self, mask: np.ndarray, axis: int, step: int) -> np.ndarray:
        """``out[k] = mask[k + step e_axis]``; off-grid neighbours read as False."""
        if self.periodic[axis]:
            return np.roll(mask, -step, axis=axis)
        out = np.zeros_like(mask)
        src = [slice(None)] * mask.ndim
        dst = [slice(None)] * mask.ndim
        if step > 0:
            src[axis], dst[axis] = slice(step, None), slice(None, -step)
        else:
            src[axis], dst[axis] = slice(None, step), slice(-step, None)
        out[tuple(dst)] = mask[tuple(src)]
        return out

    def _wall(self) -> np.ndarray:
        wall = np.zeros(self.shape, dtype=bool)
        for i, per in enumerate(self.periodic):
            if not per:
                sl = [slice(None)] * self.dim
                sl[i] = 0
                wall[tuple(sl)] = True
                sl[i] = -1
                wall[tuple(sl)] = True
        return wall


class CellSet:
    """Immutable set of top-dimensional cells of a grid (boolean occupancy)."""

    __slots__ = ("grid", "_mask")

    def __init__(self, grid: CubicalGrid, mask: np.ndarray):
        m = np.array(mask, dtype=bool, copy=True)
        if m.shape != grid.shape:
            raise GridError(f"mask shape {m.shape} does not match grid {grid.shape}")
        m.setflags(write=False)
        self.grid = grid
        self._mask = m

    # constructors -------------------------------------------------------
    @classmethod
    def empty(cls, grid):
        return cls(grid, np.zeros(grid.shape, dtype=bool))

    @classmethod
    def full(cls, grid):
        return cls(grid, np.ones(grid.shape, dtype=bool))

    @classmethod
    def from_indices(cls, grid, indices: Iterable):
        m = np.zeros(grid.shape, dtype=bool)
        idx = np.asarray(list(indices) if not isinstance(indices, np.ndarray) else indices,
                         dtype=np.int64).reshape(-1, grid.dim)
        if len(idx):
            if np.any(idx < 0) or np.any(idx >= np.asarray(grid.shape)):
                raise GridError("cell index out of range")
            m[tuple(idx.T)] = True
        return cls(grid, m)

    @classmethod
    def from_predicate(cls, grid, pred: Callable[[np.ndarray], np.ndarray]):
        """Cells whose center satisfies ``pred(centers) -> bool array``."""
        idx = np.argwhere(np.ones(grid.shape, dtype=bool))
        keep = np.asarray(pred(grid.centers(idx)), dtype=bool)
        return cls.from_indices(grid, idx[keep])

    @classmethod
    def from_box(cls, grid, lo, hi):
        """Cells whose center lies in the closed box ``[lo, hi]``."""
        lo, hi = np.atleast_1d(lo), np.atleast_1d(hi)
        tol = 1e-12 * grid.domain.lengths
        return cls.from_predicate(
            grid, lambda c: np.all((c >= lo - tol) & (c <= hi + tol), axis=1))

    @classmethod
    def from_points(cls, grid, points):
        idx, ok = grid.locate(points)
        return cls.from_indices(grid, idx[ok])

    # basic protocol -----------------------------------------------------
    @property
    def mask(self) -> np.ndarray:
        return self._mask

    def __len__(self):
        return int(self._mask.sum())

    def __bool__(self):
        return bool(self._mask.any())

    def __contains__(self, index):
        return bool(self._mask[tuple(index)])

    def __eq__(self, other):
        return (isinstance(other, CellSet) and self.grid == other.grid
                and np.array_equal(self._mask, other._mask))

    def __hash__(self):
        return hash((self.grid, self._mask.tobytes()))

    def __repr__(self):
        return f"CellSet({len(self)} of {self.grid.size} cells)"

    def _check(self, other):
        if not isinstance(other, CellSet) or other.grid != self.grid:
            raise GridError("cell sets live on different grids")

    def __or__(self, other):
        self._check(other)
        return CellSet(self.grid, self._mask | other._mask)

    def __and__(self, other):
        self._check(other)
        return CellSet(self.grid, self._mask & other._mask)

    def __sub__(self, other):
        self._check(other)
        return CellSet(self.grid, self._mask & ~other._mask)

    def __invert__(self):
        return CellSet(self.grid, ~self._mask)

    def issubset(self, other) -> bool:
        self._check(other)
        return not np.any(self._mask & ~other._mask)

    def isdisjoint(self, other) -> bool:
        self._check(other)
        return not np.any(self._mask & other._mask)

    def indices(self) -> np.ndarray:
        """Member multi-indices in ascending row-major order."""
        return np.argwhere(self._mask)

    def centers(self) -> np.ndarray:
        return self.grid.centers(self.indices())

    def contains_points(self, points: np.ndarray) -> np.ndarray:
        idx, ok = self.grid.locate(points)
        out = np.zeros(len(idx), dtype=bool)
        out[ok] = self._mask[tuple(idx[ok].T)]
        return out

    def samples(self, samples_per_cell: int | None = None) -> np.ndarray:
        """``(m, s, n)`` sample points of the member cells."""
        return self.grid.cell_samples(self.indices(), samples_per_cell)

    # topology -----------------------------------------------------------
    def dilate(self, diagonal: bool = False) -> "CellSet":
        """Cells within one step of the set (face adjacency unless ``diagonal``)."""
        g = self.grid
        out = self._mask.copy()
        if diagonal:
            for step in itertools.product((-1, 0, 1), repeat=g.dim):
                m = self._mask
                for ax, s in enumerate(step):
                    if s:
                        m = g.shift(m, ax, s)
                out |= m
        else:
            for ax in range(g.dim):
                out |= g.shift(self._mask, ax, 1) | g.shift(self._mask, ax, -1)
        return CellSet(g, out)

    def components(self, diagonal: bool = False) -> tuple[np.ndarray, int]:
        """Connected-component labels (0 = not a member, 1..k) and the count k."""
        from scipy.sparse import coo_matrix
        from scipy.sparse.csgraph import connected_components

        g = self.grid
        flat = np.full(g.shape, -1, dtype=np.int64)
        members = self.indices()
        flat[tuple(members.T)] = np.arange(len(members))
        if not len(members):
            return np.zeros(g.shape, dtype=np.int64), 0
        steps = [s for s in itertools.product((-1, 0, 1), repeat=g.dim) if any(s)]
        if not diagonal:
            steps = [s for s in steps if sum(map(abs, s)) == 1]
        rows, cols = [], []
        for step in steps:
            nb = flat
            for ax, s in enumerate(step):
                if s:
                    nb = g.shift(nb, ax, s) if g.periodic[ax] else _shift_fill(nb, ax, s)
            both = (flat >= 0) & (nb >= 0)
            rows.append(flat[both])
            cols.append(nb[both])
        r, c = np.concatenate(rows), np.concatenate(cols)
        adj = coo_matrix((np.ones(len(r)), (r, c)), shape=(len(members), len(members)))
        count, lab = connected_components(adj, directed=False)
        labels = np.zeros(g.shape, dtype=np.int64)
        labels[tuple(members.T)] = lab + 1
        return labels, int(count)

    # CSV ------------------------------------------------------------------
    def to_csv(self, path) -> None:
        """One row per member cell: integer multi-index, then center coordinates."""
        idx = self.indices()
        ctr = self.grid.centers(idx)
        n = self.grid.dim
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow([f"k{i}" for i in range(n)] + [f"c{i}" for i in range(n)])
            for k, c in zip(idx, ctr):
                w.writerow([int(v) for v in k] + [repr(float(v)) for v in c])

    @classmethod
    def from_csv(cls, grid, path) -> "CellSet":
        n = grid.dim
        rows = []
        with open(path, newline="") as fh:
            r = csv.reader(fh)
            header = next(r, None)
            if header is None or len(header) < n:
                raise GridError(f"{path}: missing or short header")
            for line_no, row in enumerate(r, start=2):
                if not row:
                    continue
                try:
                    rows.append([int(v) for v in row[:n]])
                except ValueError as exc:
                    raise GridError(f"{path}:{line_no}: bad cell index") from exc
        return cls.from_indices(grid, np.asarray(rows, dtype=np.int64).reshape(-1, n))


def _shift_fill(arr, axis, step, fill=-1):
    out = np.full_like(arr, fill)
    src = [slice(None)] * arr.ndim
    dst = [slice(None)] * arr.ndim
    if step > 0:
        src[axis], dst[axis] = slice(step, None), slice(None, -step)
    else:
        src[axis], dst[axis] = slice(None, step), slice(-step, None)
    out[tuple(dst)] = arr[tuple(src)]
    return out


def combinatorial_interior(S: CellSet) -> CellSet:
    """Members all of whose ``2n`` face neighbours are members.

    Cells touching a non-periodic wall are never interior.
    """
    g = S.grid
    m = S.mask.copy()
    for ax in range(g.dim):
        m &= g.shift(S.mask, ax, 1) & g.shift(S.mask, ax, -1)
    return CellSet(g, m & ~g._wall())


def combinatorial_boundary(S: CellSet) -> CellSet:
    return S - combinatorial_interior(S)


def closed_difference(N: CellSet, L: CellSet) -> CellSet:
    """Combinatorial closure of ``N - L``: ``N \\ L`` plus the L-cells touching it."""
    if not L.issubset(N):
        raise GridError("closed_difference requires L to be a subset of N")
    core = N - L
    if not core:
        warnings.warn("degenerate pair: L equals N, closure of N - L is empty", stacklevel=2)
        return CellSet.empty(N.grid)
    return core | (L & core.dilate())


class DistanceField:
    """Distance from arbitrary points to the centers of a fixed cell set.

    Periodic axes use the shortest wraparound displacement.
    """

    def __init__(self, S: CellSet):
        if not S:
            raise GridError("distance to an empty cell set is undefined")
        g = S.grid
        self.grid = g
        dom = g.domain
        self._lo = np.asarray(dom.lo)
        length = dom.lengths
        # non-periodic axes get a box far larger than any query can reach
        far = 1e6 * (dom.diameter + 1.0)
        self._box = np.where(dom.periodic, length, 2 * far)
        self._offset = np.where(dom.periodic, 0.0, far)
        self._tree = cKDTree(self._wrap(S.centers()), boxsize=self._box)

    def _wrap(self, pts):
        rel = np.atleast_2d(np.asarray(pts, dtype=float)) - self._lo + self._offset
        rel = np.mod(rel, self._box)
        return rel

    def __call__(self, points: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        d, _ = self._tree.query(self._wrap(pts), k=1)
        return d


def distance_to_set(p, S: CellSet) -> float:
    """Euclidean distance from ``p`` to the nearest cell center of ``S``."""
    return float(DistanceField(S)(np.atleast_1d(np.asarray(p, dtype=float)))[0])
