"""Cubical cohomology over Z/2 with cup products, cuplength and relative cuplength.

Cubes are elementary cubes ``(anchor, J)``: the anchor is a vertex of the grid
and ``J`` a set of active axes (stored as a bitmask); the cube spans
``[a_i, a_i + 1]`` on axes in ``J``.  On periodic axes vertex coordinates wrap.
Cochains are bitsets (Python ints) over an ordered list of cubes.
"""

from __future__ import annotations

import itertools
import logging
import warnings
from dataclasses import dataclass, field

import numpy as np

from .grid import CellSet

logger = logging.getLogger(__name__)

MAX_CELLS = 1_000_000


class CohomologyError(ValueError):
    pass


def _popcount(mask: int) -> int:
    return bin(mask).count("1")


def _low(v: int) -> int:
    return v.bit_length() - 1


def _int_to_bool(v: int, size: int) -> np.ndarray:
    if size == 0:
        return np.zeros(0, dtype=bool)
    raw = v.to_bytes((size + 7) // 8, "little")
    return np.unpackbits(np.frombuffer(raw, dtype=np.uint8), bitorder="little")[:size].astype(bool)


def _bool_to_int(b: np.ndarray) -> int:
    if not len(b):
        return 0
    return int.from_bytes(np.packbits(b, bitorder="little").tobytes(), "little")


class CubicalComplex:
    """All faces of a set of top cells, optionally minus the faces of a subcomplex.

    ``lut[J]`` maps vertex multi-indices to the position of cube ``(a, J)`` within
    its dimension's list (``-1`` when absent).
    """

    def __init__(self, top: CellSet, minus: CellSet | None = None,
                 minus_faces: dict | None = None):
        grid = top.grid
        self.grid = grid
        self.dim = grid.dim
        self.periodic = tuple(grid.periodic)
        self.vshape = tuple(r if p else r + 1 for r, p in zip(grid.shape, self.periodic))
        present = _face_masks(top.mask, self.periodic, self.vshape)
        if minus is not None and minus:
            sub = _face_masks(minus.mask, self.periodic, self.vshape)
            present = {J: present[J] & ~sub[J] for J in present}
        if minus_faces is not None:
            present = {J: present[J] & ~minus_faces[J] for J in present}
        self.masks = {k: [J for J in range(1 << self.dim) if _popcount(J) == k]
                      for k in range(self.dim + 1)}
        self.anchors: dict[int, np.ndarray] = {}
        self.lut: dict[int, np.ndarray] = {}
        self.offset: dict[int, int] = {}
        self.counts = [0] * (self.dim + 1)
        for k in range(self.dim + 1):
            pos = 0
            for J in self.masks[k]:
                a = np.argwhere(present[J])
                lut = np.full(self.vshape, -1, dtype=np.int64)
                lut[tuple(a.T)] = pos + np.arange(len(a))
                self.anchors[J] = a
                self.lut[J] = lut
                self.offset[J] = pos
                pos += len(a)
            self.counts[k] = pos
        if sum(self.counts) > MAX_CELLS:
            raise CohomologyError(f"complex has {sum(self.counts)} cells (limit {MAX_CELLS})")

    def wrap(self, a: np.ndarray) -> np.ndarray:
        """Reduce periodic vertex coordinates; non-periodic ones are left alone."""
        out = a.copy()
        for i, p in enumerate(self.periodic):
            if p:
                out[:, i] %= self.vshape[i]
        return out

    def lookup(self, J: int, a: np.ndarray) -> np.ndarray:
        a = self.wrap(a)
        ok = np.all((a >= 0) & (a < np.asarray(self.vshape)), axis=1)
        out = np.full(len(a), -1, dtype=np.int64)
        if ok.any():
            out[ok] = self.lut[J][tuple(a[ok].T)]
        return out

    def coboundary_columns(self, k: int) -> list[int]:
        """Column ``j`` is the bitset of (k+1)-cubes having k-cube ``j`` as a face."""
        cols = [0] * self.counts[k]
        if k >= self.dim:
            return cols
        n = self.dim
        for J in self.masks[k]:
            a = self.anchors[J]
            if not len(a):
                continue
            base = self.offset[J]
            for i in range(n):
                if J >> i & 1:
                    continue
                K = J | 1 << i
                e = np.zeros(n, dtype=np.int64)
                e[i] = 1
                for shift in (a, a - e):
                    t = self.lookup(K, shift)
                    for row, col in zip(np.flatnonzero(t >= 0), t[t >= 0]):
                        cols[base + row] ^= 1 << int(col)
        return cols

    def euler(self) -> int:
        return sum((-1) ** k * c for k, c in enumerate(self.counts))


def _face_masks(top: np.ndarray, periodic, vshape) -> dict[int, np.ndarray]:
    """``out[J][a]``: cube ``(a, J)`` is a face of some top cell."""
    n = top.ndim
    base = np.zeros(vshape, dtype=bool)
    base[tuple(slice(0, s) for s in top.shape)] = top
    out = {}
    for J in range(1 << n):
        m = base.copy()
        for i in range(n):
            if J >> i & 1:
                continue
            # a vertex coordinate is shared by the cells on both sides of it
            if periodic[i]:
                m = m | np.roll(m, 1, axis=i)
            else:
                prev = np.zeros_like(m)
                sl_dst = [slice(None)] * n
                sl_src = [slice(None)] * n
                sl_dst[i], sl_src[i] = slice(1, None), slice(None, -1)
                prev[tuple(sl_dst)] = m[tuple(sl_src)]
                m = m | prev
        out[J] = m
    return out


class _Echelon:
    """Incremental GF(2) echelon basis keyed by highest set bit, with labels."""

    def __init__(self):
        self.piv: dict[int, tuple[int, int]] = {}

    def reduce(self, v: int, label: int = 0) -> tuple[int, int]:
        piv = self.piv
        while v:
            p = _low(v)
            hit = piv.get(p)
            if hit is None:
                break
            v ^= hit[0]
            label ^= hit[1]
        return v, label

    def add(self, v: int, label: int = 0) -> bool:
        v, label = self.reduce(v, label)
        if not v:
            return False
        self.piv[_low(v)] = (v, label)
        return True


@dataclass
class CohomologyGroups:
    """Bases of ``H^k`` of one cochain complex, with a reduction to coordinates."""

    complex: CubicalComplex
    reps: list[list[int]]
    _ech: list[_Echelon] = field(repr=False, default_factory=list)

    @property
    def betti(self) -> tuple[int, ...]:
        return tuple(len(r) for r in self.reps)

    def coordinates(self, k: int, cocycle: int) -> int:
        """Bitmask over the basis of ``H^k`` representing the class of ``cocycle``."""
        rest, label = self._ech[k].reduce(cocycle)
        if rest:
            raise CohomologyError(f"cochain is not a cocycle in degree {k}")
        return label


def compute_cohomology(cx: CubicalComplex) -> CohomologyGroups:
    """Reduce every coboundary matrix by column operations over GF(2)."""
    n = cx.dim
    kernels: list[list[int]] = []
    images: list[list[int]] = [[]]
    for k in range(n + 1):
        cols = cx.coboundary_columns(k)
        piv: dict[int, tuple[int, int]] = {}
        ker: list[int] = []
        img: list[int] = []
        for j, c in enumerate(cols):
            combo = 1 << j
            while c:
                p = _low(c)
                hit = piv.get(p)
                if hit is None:
                    break
                c ^= hit[0]
                combo ^= hit[1]
            if c:
                piv[_low(c)] = (c, combo)
                img.append(c)
            else:
                ker.append(combo)
        kernels.append(ker)
        images.append(img)
    reps, echs = [], []
    for k in range(n + 1):
        ech = _Echelon()
        for b in images[k]:
            ech.add(b)
        basis = []
        for z in kernels[k]:
            if ech.add(z, 1 << len(basis)):
                basis.append(z)
        reps.append(basis)
        echs.append(ech)
    return CohomologyGroups(cx, reps, echs)


def check_delta_squared(cx: CubicalComplex) -> bool:
    for k in range(cx.dim - 1):
        d0 = cx.coboundary_columns(k)
        d1 = cx.coboundary_columns(k + 1)
        for c in d0:
            acc = 0
            v = c
            while v:
                p = _low(v)
                acc ^= d1[p]
                v ^= 1 << p
            if acc:
                return False
    return True


@dataclass
class RelativePair:
    """``(X, A)`` built from ``(N, L)``; ``basepoint`` marks the ``L = ∅`` convention.

    With a disjoint basepoint adjoined and ``A = {+}``, relative cochains are
    exactly the cochains of X, so ``rel`` is then the plain complex of X.
    """

    X: CellSet
    A: CellSet
    basepoint: bool
    absolute: CubicalComplex
    relative: CubicalComplex

    @property
    def dim(self) -> int:
        return self.absolute.dim


def build_pair(N: CellSet, L: CellSet) -> RelativePair:
    if not L.issubset(N):
        raise CohomologyError("L must be a subset of N")
    absolute = CubicalComplex(N)
    relative = CubicalComplex(N, minus=L) if L else absolute
    return RelativePair(N, L, not bool(L), absolute, relative)


def build_excised_pair(N: CellSet, L: CellSet) -> RelativePair:
    """``(V, V ∩ L)`` with ``V = closure(N - L)``; the intersection is the shared
    faces of the two closed cell sets, so it may be lower dimensional."""
    from .grid import closed_difference

    if not L.issubset(N):
        raise CohomologyError("L must be a subset of N")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        V = closed_difference(N, L)
    absolute = CubicalComplex(V)
    if not L:
        return RelativePair(V, L, True, absolute, absolute)
    vs = absolute.vshape
    fv = _face_masks(V.mask, absolute.periodic, vs)
    fl = _face_masks(L.mask, absolute.periodic, vs)
    shared = {J: fv[J] & fl[J] for J in fv}
    if not any(m.any() for m in shared.values()):
        return RelativePair(V, L, True, absolute, absolute)
    return RelativePair(V, L, False, absolute, CubicalComplex(V, minus_faces=shared))


def euler_consistent(pair: RelativePair, betti: tuple[int, ...]) -> bool:
    """``sum (-1)^k b_k`` against the alternating count of cells of X not in A."""
    lhs = sum((-1) ** k * b for k, b in enumerate(betti))
    return lhs == pair.relative.euler()


def _cup_cochain(c1: CubicalComplex, phi: int, p: int, c2: CubicalComplex, psi: int, q: int,
                 target: CubicalComplex) -> int:
    """Cubical cup over Z/2: sum over splittings ``J = J1 + J2`` of the front
    face on ``J1`` at the anchor times the back face on ``J2`` at ``anchor + e_J1``."""
    k = p + q
    n = target.dim
    if k > n:
        return 0
    a_phi = _int_to_bool(phi, c1.counts[p])
    a_psi = _int_to_bool(psi, c2.counts[q])
    out = np.zeros(target.counts[k], dtype=bool)
    for J in target.masks[k]:
        anc = target.anchors[J]
        if not len(anc):
            continue
        axes = [i for i in range(n) if J >> i & 1]
        acc = np.zeros(len(anc), dtype=bool)
        for front in itertools.combinations(axes, p):
            J1 = sum(1 << i for i in front)
            J2 = J ^ J1
            shift = np.zeros(n, dtype=np.int64)
            shift[list(front)] = 1
            f_idx = c1.lookup(J1, anc)
            b_idx = c2.lookup(J2, anc + shift)
            ok = (f_idx >= 0) & (b_idx >= 0)
            val = np.zeros(len(anc), dtype=bool)
            val[ok] = a_phi[f_idx[ok]] & a_psi[b_idx[ok]]
            acc ^= val
        off = target.offset[J]
        out[off:off + len(anc)] = acc
    return _bool_to_int(out)


@dataclass
class RingStructure:
    """Cohomology bases and cup tables.

    Classes are addressed as ``(degree, i)``.  ``abs_table[(p, i), (q, j)]`` is a
    bitmask over the basis of ``H^{p+q}(X)``; ``rel_table`` multiplies a relative
    class by an absolute one and lands in ``H^{p+q}(X, A)``.
    """

    pair: RelativePair
    absolute: CohomologyGroups
    relative: CohomologyGroups
    abs_table: dict
    rel_table: dict

    @property
    def dim(self) -> int:
        return self.pair.dim

    @property
    def betti_absolute(self) -> tuple[int, ...]:
        return self.absolute.betti

    @property
    def betti_relative(self) -> tuple[int, ...]:
        return self.relative.betti

    def unit(self) -> int:
        """Coordinates of the unit class in ``H^0(X)``."""
        cx = self.absolute.complex
        return self.absolute.coordinates(0, (1 << cx.counts[0]) - 1)

    def cup_abs(self, p: int, u: int, q: int, v: int) -> int:
        """Product of coordinate vectors ``u`` in ``H^p(X)`` and ``v`` in ``H^q(X)``."""
        if p + q > self.dim:
            return 0
        out = 0
        for i in _bits(u):
            for j in _bits(v):
                out ^= self.abs_table[(p, i), (q, j)]
        return out

    def cup_rel(self, p: int, u: int, q: int, v: int) -> int:
        """Product of relative ``u`` in ``H^p(X,A)`` with absolute ``v`` in ``H^q(X)``."""
        if p + q > self.dim:
            return 0
        out = 0
        for i in _bits(u):
            for j in _bits(v):
                out ^= self.rel_table[(p, i), (q, j)]
        return out

    def nonzero_products(self) -> dict:
        return {
            "absolute": [[list(a), list(b), _bits(v)] for (a, b), v in self.abs_table.items() if v],
            "relative": [[list(a), list(b), _bits(v)] for (a, b), v in self.rel_table.items() if v],
        }


def _bits(v: int) -> list[int]:
    out = []
    i = 0
    while v:
        if v & 1:
            out.append(i)
        v >>= 1
        i += 1
    return out


def ring_structure(pair: RelativePair) -> RingStructure:
    ab = compute_cohomology(pair.absolute)
    rel = ab if pair.relative is pair.absolute else compute_cohomology(pair.relative)
    n = pair.dim
    abs_table, rel_table = {}, {}
    for p in range(n + 1):
        for q in range(n + 1 - p):
            for i, a in enumerate(ab.reps[p]):
                for j, b in enumerate(ab.reps[q]):
                    c = _cup_cochain(pair.absolute, a, p, pair.absolute, b, q, pair.absolute)
                    abs_table[(p, i), (q, j)] = ab.coordinates(p + q, c)
            for i, a in enumerate(rel.reps[p]):
                for j, b in enumerate(ab.reps[q]):
                    c = _cup_cochain(pair.relative, a, p, pair.absolute, b, q, pair.relative)
                    rel_table[(p, i), (q, j)] = rel.coordinates(p + q, c)
    return RingStructure(pair, ab, rel, abs_table, rel_table)


def betti_mod2(pair: RelativePair, k: int) -> int:
    if not 0 <= k <= pair.dim:
        raise CohomologyError(f"degree {k} outside 0..{pair.dim}")
    return compute_cohomology(pair.relative).betti[k]


def cup(ring: RingStructure, a: tuple[int, int], b: tuple[int, int], relative: bool = False):
    """Cup of basis classes ``a = (p, i)`` and ``b = (q, j)``; returns ``(degree, coords)``."""
    (p, i), (q, j) = a, b
    if p + q > ring.dim:
        return p + q, 0
    table = ring.rel_table if relative else ring.abs_table
    return p + q, table[(p, i), (q, j)]


def _longest_chain(ring: RingStructure, start: list[tuple[int, int]], relative: bool) -> int:
    """Largest ``m`` with some ``start`` class times ``m`` positive-degree basis
    classes of ``H^*(X)`` nonzero; ``-1`` if every start class is zero."""
    n = ring.dim
    gens = [(q, 1 << j) for q in range(1, n + 1) for j in range(ring.betti_absolute[q])]
    level = {(d, v) for d, v in start if v}
    m = -1
    while level:
        m += 1
        nxt = set()
        for d, v in level:
            for q, g in gens:
                if d + q > n:
                    continue
                w = ring.cup_rel(d, v, q, g) if relative else ring.cup_abs(d, v, q, g)
                if w:
                    nxt.add((d + q, w))
        level = nxt
    return m


def cuplength(ring: RingStructure) -> int:
    """One more than the longest nonzero product of positive-degree classes of ``H^*(X)``."""
    n = ring.dim
    start = [(q, 1 << j) for q in range(1, n + 1) for j in range(ring.betti_absolute[q])]
    if not start:
        return 1
    # a chain of m generators is a start class followed by m - 1 more
    return _longest_chain(ring, start, relative=False) + 2


def relative_cuplength(ring: RingStructure) -> int:
    """``CL(X, A)``: one more than the longest nonzero ``alpha_0 ∪ alpha_1 ∪ ... ∪ alpha_m``."""
    start = [(p, 1 << i) for p in range(ring.dim + 1) for i in range(ring.betti_relative[p])]
    if not start:
        warnings.warn("H^*(X, A) vanishes: no critical-point information", stacklevel=2)
        return 0
    return _longest_chain(ring, start, relative=True) + 1


def ring_laws(ring: RingStructure) -> dict:
    """Unit, Z/2-commutativity and associativity over all basis pairs and triples."""
    n = ring.dim
    ab = [(p, i) for p in range(n + 1) for i in range(ring.betti_absolute[p])]
    rel = [(p, i) for p in range(n + 1) for i in range(ring.betti_relative[p])]
    problems = []
    unit = ring.unit() if ring.betti_absolute[0] else 0
    for p, i in ab:
        if ring.cup_abs(0, unit, p, 1 << i) != 1 << i:
            problems.append(f"unit fails on H^{p}(X) class {i}")
    for p, i in rel:
        if ring.cup_rel(p, 1 << i, 0, unit) != 1 << i:
            problems.append(f"unit fails on H^{p}(X,A) class {i}")
    for (p, i), (q, j) in itertools.combinations_with_replacement(ab, 2):
        if p + q <= n and ring.cup_abs(p, 1 << i, q, 1 << j) != ring.cup_abs(q, 1 << j, p, 1 << i):
            problems.append(f"commutativity fails on ({p},{i}) and ({q},{j})")
    for (p, i), (q, j), (r, k) in itertools.product(ab, repeat=3):
        if p + q + r > n:
            continue
        lhs = ring.cup_abs(p + q, ring.cup_abs(p, 1 << i, q, 1 << j), r, 1 << k)
        rhs = ring.cup_abs(p, 1 << i, q + r, ring.cup_abs(q, 1 << j, r, 1 << k))
        if lhs != rhs:
            problems.append(f"associativity fails on ({p},{i}),({q},{j}),({r},{k})")
    for (p, i), (q, j), (r, k) in itertools.product(rel, ab, ab):
        if p + q + r > n:
            continue
        lhs = ring.cup_rel(p + q, ring.cup_rel(p, 1 << i, q, 1 << j), r, 1 << k)
        rhs = ring.cup_rel(p, 1 << i, q + r, ring.cup_abs(q, 1 << j, r, 1 << k))
        if lhs != rhs:
            problems.append(f"module associativity fails on ({p},{i}),({q},{j}),({r},{k})")
    return {"ok": not problems, "problems": problems}


def shuffle_tables(ring: RingStructure) -> RingStructure:
    """Corrupt the ring by cyclically permuting the values of both cup tables.

    Used as a mutation probe: the permutation is a derangement whenever the
    table holds two different values, so every downstream ring check sees it.
    """
    def rot(table):
        out = {}
        degrees = sorted({a[0] + b[0] for a, b in table})
        for d in degrees:
            # rotate within one target degree so coordinates stay in range
            keys = sorted(k for k in table if k[0][0] + k[1][0] == d)
            vals = [table[k] for k in keys]
            out.update(zip(keys, vals[1:] + vals[:1]))
        return out

    return RingStructure(ring.pair, ring.absolute, ring.relative,
                         rot(ring.abs_table), rot(ring.rel_table))


def ring_report(ring: RingStructure) -> dict:
    laws = ring_laws(ring)
    return {
        "betti_absolute": list(ring.betti_absolute),
        "betti_relative": list(ring.betti_relative),
        "basepoint": ring.pair.basepoint,
        "nonzero_products": ring.nonzero_products(),
        "cuplength": cuplength(ring),
        "relative_cuplength": relative_cuplength(ring),
        "ring_laws": laws["ok"],
        "ring_law_problems": laws["problems"],
    }
