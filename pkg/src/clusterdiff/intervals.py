"""Solution sets of quadratic inequalities and unions of closed intervals.

Every truncation set is an intersection of sets of the form
``{phi : a (phi - origin)^2 + b (phi - origin) + c <= 0}``. Intersections are
computed by taking the union of the complements (open intervals) with one
sort and a running-maximum sweep, then reading off the gaps.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Iterable, Iterator, Sequence

import numpy as np

from .errors import DataError

__all__ = [
    "IntervalUnion",
    "QuadraticInequality",
    "QuadraticSystem",
    "contains",
    "intersect_all",
    "solve_quadratic",
]

MERGE_TOL = 1e-12
CONTAINS_TOL = 1e-10
LEADING_TOL = 1e-12
DISC_TOL = 1e-12


class IntervalUnion:
    """Sorted, disjoint union of closed intervals ``[lo, hi]`` with ``lo < hi``.

    Endpoints may be infinite. Intervals closer than ``MERGE_TOL`` are merged
    and zero-width pieces are dropped, so equal sets have equal
    representations up to floating-point noise.
    """

    __slots__ = ("_bounds",)

    def __init__(self, intervals: Iterable[Sequence[float]] = ()):
        arr = np.asarray(list(intervals), dtype=float).reshape(-1, 2)
        self._bounds = _canonical(arr)

    @classmethod
    def _from_canonical(cls, bounds: np.ndarray) -> "IntervalUnion":
        obj = cls.__new__(cls)
        bounds.setflags(write=False)
        obj._bounds = bounds
        return obj

    @classmethod
    def real_line(cls) -> "IntervalUnion":
        return cls([(-math.inf, math.inf)])

    @classmethod
    def empty(cls) -> "IntervalUnion":
        return cls()

    @property
    def bounds(self) -> np.ndarray:
        """Read-only ``(m, 2)`` array of interval endpoints."""
        return self._bounds

    @property
    def lower(self) -> np.ndarray:
        return self._bounds[:, 0]

    @property
    def upper(self) -> np.ndarray:
        return self._bounds[:, 1]

    def __len__(self) -> int:
        return self._bounds.shape[0]

    def __iter__(self) -> Iterator[tuple[float, float]]:
        for lo, hi in self._bounds:
            yield float(lo), float(hi)

    def __bool__(self) -> bool:
        return len(self) > 0

    def is_real_line(self) -> bool:
        return len(self) == 1 and self._bounds[0, 0] == -math.inf and self._bounds[0, 1] == math.inf

    def __eq__(self, other) -> bool:
        if not isinstance(other, IntervalUnion):
            return NotImplemented
        return self._bounds.shape == other._bounds.shape and bool(
            np.all(self._bounds == other._bounds)
        )

    def isclose(self, other: "IntervalUnion", atol: float = 1e-9, rtol: float = 1e-9) -> bool:
        if self._bounds.shape != other._bounds.shape:
            return False
        a, b = self._bounds, other._bounds
        same_inf = np.isinf(a) == np.isinf(b)
        if not np.all(same_inf) or not np.all(a[np.isinf(a)] == b[np.isinf(b)]):
            return False
        fin = ~np.isinf(a)
        return bool(np.allclose(a[fin], b[fin], atol=atol, rtol=rtol))

    def __repr__(self) -> str:
        inner = ", ".join(f"[{lo:.6g}, {hi:.6g}]" for lo, hi in self)
        return f"IntervalUnion({inner or 'empty'})"

    def __contains__(self, phi: float) -> bool:
        return contains(self, phi)

    def complement(self) -> "IntervalUnion":
        """Closure of the complement (boundary points are shared)."""
        return IntervalUnion(_complement_pieces(self._bounds))

    def to_json(self) -> list[list[float | str]]:
        return [[_encode(lo), _encode(hi)] for lo, hi in self]

    @classmethod
    def from_json(cls, data) -> "IntervalUnion":
        if isinstance(data, str):
            data = json.loads(data)
        return cls([(_decode(lo), _decode(hi)) for lo, hi in data])


def _encode(v: float) -> float | str:
    if v == math.inf:
        return "inf"
    if v == -math.inf:
        return "-inf"
    return float(v)


def _decode(v) -> float:
    if isinstance(v, str):
        if v in ("inf", "+inf"):
            return math.inf
        if v == "-inf":
            return -math.inf
    return float(v)


def _canonical(arr: np.ndarray) -> np.ndarray:
    if np.any(np.isnan(arr)):
        raise DataError("interval endpoints must not be NaN")
    arr = arr[arr[:, 0] < arr[:, 1]]
    if arr.shape[0] == 0:
        out = np.empty((0, 2))
        out.setflags(write=False)
        return out
    arr = arr[np.argsort(arr[:, 0], kind="stable")]
    reach = np.maximum.accumulate(arr[:, 1])
    # a new block starts where the next lower end is beyond everything so far
    starts = np.ones(arr.shape[0], dtype=bool)
    starts[1:] = arr[1:, 0] > reach[:-1] + MERGE_TOL
    first = np.flatnonzero(starts)
    last = np.r_[first[1:] - 1, arr.shape[0] - 1]
    out = np.column_stack([arr[first, 0], reach[last]])
    out.setflags(write=False)
    return out


def _complement_pieces(bounds: np.ndarray) -> np.ndarray:
    """Open intervals making up the complement of a canonical union."""
    if bounds.shape[0] == 0:
        return np.array([[-math.inf, math.inf]])
    lo = np.r_[-math.inf, bounds[:, 1]]
    hi = np.r_[bounds[:, 0], math.inf]
    keep = lo < hi
    return np.column_stack([lo[keep], hi[keep]])


def _gaps(lo: np.ndarray, hi: np.ndarray) -> IntervalUnion:
    """Closed gaps left by a union of open intervals ``(lo, hi)``."""
    if lo.size == 0:
        return IntervalUnion.real_line()
    order = np.argsort(lo, kind="stable")
    lo, hi = lo[order], hi[order]
    reach = np.maximum.accumulate(hi)
    gap_lo = np.r_[-math.inf, reach]
    gap_hi = np.r_[lo, math.inf]
    # (-inf, lo_0] is a gap only when lo_0 is finite; [reach_end, inf) likewise
    pieces = np.column_stack([gap_lo, gap_hi])
    pieces = pieces[pieces[:, 0] < pieces[:, 1]]
    return IntervalUnion._from_canonical(_canonical(pieces))


def contains(s: IntervalUnion, phi: float, tol: float = CONTAINS_TOL) -> bool:
    """Closed-endpoint membership with an absolute tolerance at the endpoints."""
    phi = float(phi)
    if not math.isfinite(phi):
        raise DataError("phi must be finite")
    if len(s) == 0:
        return False
    k = int(np.searchsorted(s.lower, phi, side="right")) - 1
    candidates = (k, k + 1)
    for i in candidates:
        if 0 <= i < len(s) and s.lower[i] - tol <= phi <= s.upper[i] + tol:
            return True
    return False


def intersect_all(sets: Iterable[IntervalUnion]) -> IntervalUnion:
    """Intersection of any number of interval unions in one sorted sweep."""
    pieces = [_complement_pieces(s.bounds) for s in sets]
    if not pieces:
        return IntervalUnion.real_line()
    allp = np.concatenate(pieces, axis=0)
    return _gaps(allp[:, 0], allp[:, 1])


@dataclass(frozen=True)
class QuadraticInequality:
    """``a (phi - origin)^2 + b (phi - origin) + c <= 0``.

    Keeping the expansion point explicit lets callers build coefficients in
    a local coordinate (where they are well conditioned) while the solution
    set is reported in the ``phi`` coordinate.
    """

    a: float
    b: float
    c: float
    origin: float = 0.0

    def __post_init__(self):
        if not all(math.isfinite(v) for v in (self.a, self.b, self.c, self.origin)):
            raise DataError("quadratic coefficients must be finite")

    def __call__(self, phi):
        d = np.asarray(phi, dtype=float) - self.origin
        return self.a * d * d + self.b * d + self.c


@dataclass(frozen=True, eq=False)
class QuadraticSystem:
    """A batch of quadratic inequalities sharing one expansion point."""

    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    origin: float = 0.0

    def __post_init__(self):
        arrs = [np.ascontiguousarray(v, dtype=float).ravel() for v in (self.a, self.b, self.c)]
        if not (arrs[0].shape == arrs[1].shape == arrs[2].shape):
            raise DataError("coefficient arrays must have equal length")
        for v in arrs:
            if not np.all(np.isfinite(v)):
                raise DataError("quadratic coefficients must be finite")
            v.setflags(write=False)
        object.__setattr__(self, "a", arrs[0])
        object.__setattr__(self, "b", arrs[1])
        object.__setattr__(self, "c", arrs[2])

    def __len__(self) -> int:
        return self.a.size

    def __iter__(self) -> Iterator[QuadraticInequality]:
        for a, b, c in zip(self.a, self.b, self.c):
            yield QuadraticInequality(float(a), float(b), float(c), self.origin)

    @classmethod
    def concat(cls, systems: Sequence["QuadraticSystem"], origin: float) -> "QuadraticSystem":
        if not systems:
            return cls(np.empty(0), np.empty(0), np.empty(0), origin)
        if any(s.origin != origin for s in systems):
            raise DataError("systems must share an origin")
        return cls(
            np.concatenate([s.a for s in systems]),
            np.concatenate([s.b for s in systems]),
            np.concatenate([s.c for s in systems]),
            origin,
        )

    def evaluate(self, phi) -> np.ndarray:
        """Constraint values: shape ``(len(self),)`` for scalar ``phi``, else ``(len(phi), len(self))``."""
        phi = np.asarray(phi, dtype=float)
        d = phi[..., None] - self.origin
        return self.a * d * d + self.b * d + self.c

    def solve(self) -> IntervalUnion:
        """Set of ``phi`` satisfying every inequality."""
        lo, hi = _violation_intervals(self.a, self.b, self.c)
        return _gaps(lo + self.origin, hi + self.origin)


def _violation_intervals(a: np.ndarray, b: np.ndarray, c: np.ndarray):
    """Open intervals where ``a d^2 + b d + c > 0``, concatenated over constraints."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    c = np.asarray(c, dtype=float)
    scale = np.maximum(np.maximum(np.abs(b), np.abs(c)), 1.0)
    quad = np.abs(a) > LEADING_TOL * scale
    lin = ~quad & (np.abs(b) > LEADING_TOL * np.maximum(np.abs(c), 1.0))
    const = ~quad & ~lin

    los, his = [], []
    inf = math.inf

    m = const & (c > 0)
    n_bad = int(m.sum())
    if n_bad:
        los.append(np.full(n_bad, -inf))
        his.append(np.full(n_bad, inf))

    if lin.any():
        bl, cl = b[lin], c[lin]
        root = -cl / bl
        pos = bl > 0
        los.append(np.where(pos, root, -inf))
        his.append(np.where(pos, inf, root))

    if quad.any():
        aq, bq, cq = a[quad], b[quad], c[quad]
        disc = bq * bq - 4.0 * aq * cq
        disc_scale = bq * bq + np.abs(4.0 * aq * cq)
        zero_disc = np.abs(disc) <= DISC_TOL * disc_scale
        real = (disc > 0) & ~zero_disc
        sq = np.sqrt(np.where(real, disc, 0.0))
        qq = -0.5 * (bq + np.copysign(sq, bq))
        with np.errstate(divide="ignore", invalid="ignore"):
            r_a = qq / aq
            r_b = np.where(qq != 0, cq / qq, r_a)
        r1 = np.minimum(r_a, r_b)
        r2 = np.maximum(r_a, r_b)

        up = aq > 0
        # convex without two distinct roots: feasible set is at most one point
        m = up & ~real
        if m.any():
            k = int(m.sum())
            los.append(np.full(k, -inf))
            his.append(np.full(k, inf))
        m = up & real
        if m.any():
            los.append(np.concatenate([np.full(int(m.sum()), -inf), r2[m]]))
            his.append(np.concatenate([r1[m], np.full(int(m.sum()), inf)]))
        m = ~up & real
        if m.any():
            los.append(r1[m])
            his.append(r2[m])

    if not los:
        return np.empty(0), np.empty(0)
    return np.concatenate(los), np.concatenate(his)


def solve_quadratic(qi: QuadraticInequality) -> IntervalUnion:
    """Solution set of one quadratic inequality."""
    return QuadraticSystem(np.array([qi.a]), np.array([qi.b]), np.array([qi.c]), qi.origin).solve()
