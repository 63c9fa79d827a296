"""Truncation sets for agglomerative clustering cut at ``K`` clusters.

Along the perturbation line the tested groups move rigidly, so every
cluster formed during the first ``n - K`` merges keeps its internal
linkage distances. The cut is reproduced exactly when each of those merges
still wins, and since the winning heights do not depend on ``phi`` each
cluster pair that can move contributes a single inequality:
``d_pair(phi) >= max height over the steps where the pair was alive``.
That gives O(n^2) inequalities in total.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .clustering import (
    MergeSequence,
    cut_dendrogram,
    lw_coefficients,
    lw_combine,
    pairwise_sq_dists,
)
from .errors import DataError, TruncationError
from .intervals import IntervalUnion, QuadraticSystem, contains
from .model import PerturbationLine

__all__ = [
    "PairQuadratic",
    "check_groups_are_clusters",
    "merge_constraints",
    "pairwise_quadratic",
    "truncation_set_hier",
]


@dataclass(frozen=True)
class PairQuadratic:
    """``||x'_i(phi) - x'_k(phi)||^2 = a delta^2 + b delta + c`` with ``delta = phi - anchor``."""

    i: int
    k: int
    a: float
    b: float
    c: float

    def __call__(self, delta):
        delta = np.asarray(delta, dtype=float)
        return self.a * delta * delta + self.b * delta + self.c


def pairwise_quadratic(x: np.ndarray, line: PerturbationLine, i: int, k: int) -> PairQuadratic:
    if i == k:
        raise DataError("pair indices must differ")
    u, w = line.row_direction, line.col_direction
    d = u[i] - u[k]
    r = x[i] - x[k]
    return PairQuadratic(i, k, d * d * float(w @ w), 2.0 * d * float(r @ w), float(r @ r))


def _pair_coefficients(x: np.ndarray, line: PerturbationLine):
    u, w = line.row_direction, line.col_direction
    du = u[:, None] - u[None, :]
    xw = x @ w
    qa = du * du * float(w @ w)
    qb = 2.0 * du * (xw[:, None] - xw[None, :])
    return qa, qb, pairwise_sq_dists(x)


def check_groups_are_clusters(labels, line: PerturbationLine) -> None:
    lab = labels.labels
    for name, group in (("group_a", line.contrast.group_a), ("group_b", line.contrast.group_b)):
        vals = np.unique(lab[list(group)])
        if vals.size != 1 or np.count_nonzero(lab == vals[0]) != len(group):
            raise DataError(f"{name} is not one of the estimated clusters")


def _single_constraints(x, line, m: MergeSequence, n_steps: int) -> QuadraticSystem:
    qa, qb, D = _pair_coefficients(x, line)
    hmax = float(np.max(m.heights[:n_steps]))
    u = line.row_direction
    iu, ku = np.triu_indices(m.n, k=1)
    moving = u[iu] != u[ku]
    iu, ku = iu[moving], ku[moving]
    return QuadraticSystem(-qa[iu, ku], -qb[iu, ku], hmax - D[iu, ku], line.anchor)


def _linear_constraints(x, line, m: MergeSequence, n_steps: int) -> QuadraticSystem:
    n = m.n
    qa, qb, D = _pair_coefficients(x, line)
    heights = m.heights[:n_steps]
    slots = m.slots()
    alive = np.ones(n, dtype=bool)
    sizes = np.ones(n)
    born = np.full(n, -1)
    out_a, out_b, out_c = [], [], []

    def emit(s, cols, last):
        dep = (qa[s, cols] != 0) | (qb[s, cols] != 0)
        if not dep.any():
            return
        cols = cols[dep]
        start = np.maximum(born[s], born[cols]) + 1
        ok = start <= last
        if not ok.any():
            return
        cols, start = cols[ok], start[ok]
        suffix_max = np.maximum.accumulate(heights[: last + 1][::-1])[::-1]
        out_a.append(-qa[s, cols])
        out_b.append(-qb[s, cols])
        out_c.append(suffix_max[start] - D[s, cols])

    for t in range(n_steps):
        sa, sb = slots[t]
        if qa[sa, sb] != 0 or qb[sa, sb] != 0:
            raise DataError("merge joins the two tested groups before the cut; groups are not clusters")
        others = np.flatnonzero(alive)
        others = others[(others != sa) & (others != sb)]
        emit(sa, others, t)
        emit(sb, others, t)
        coef = lw_coefficients(m.linkage, sizes[sa], sizes[sb], sizes[others])
        for mat in (qa, qb, D):
            new = lw_combine(coef, mat[sa, others], mat[sb, others], mat[sa, sb])
            mat[sa, others] = new
            mat[others, sa] = new
        alive[sb] = False
        sizes[sa] += sizes[sb]
        born[sa] = t

    rest = np.flatnonzero(alive)
    for pos, s in enumerate(rest[:-1]):
        emit(s, rest[pos + 1:], n_steps - 1)

    if not out_a:
        empty = np.empty(0)
        return QuadraticSystem(empty, empty, empty, line.anchor)
    return QuadraticSystem(
        np.concatenate(out_a), np.concatenate(out_b), np.concatenate(out_c), line.anchor
    )


def merge_constraints(
    x: np.ndarray, line: PerturbationLine, m: MergeSequence, K: int
) -> QuadraticSystem:
    """Inequalities (in ``phi``) under which the first ``n - K`` merges are unchanged.

    Each row reads ``required_height - d_pair(phi) <= 0``. Single linkage is
    expanded to observation pairs; the other linkages carry quadratic
    coefficients through the Lance-Williams recurrence. Exact duplicate rows
    are dropped.
    """
    x = np.asarray(x, dtype=float)
    if x.shape[0] != m.n:
        raise DataError("merge sequence does not match the data")
    n_steps = m.n - int(K)
    if n_steps < 0 or K < 1:
        raise DataError(f"K must be in 1..{m.n}")
    if n_steps == 0:
        empty = np.empty(0)
        return QuadraticSystem(empty, empty, empty, line.anchor)
    if m.linkage == "single":
        sys = _single_constraints(x, line, m, n_steps)
    else:
        sys = _linear_constraints(x, line, m, n_steps)
    if len(sys) > 1:
        rows = np.unique(np.column_stack([sys.a, sys.b, sys.c]), axis=0)
        sys = QuadraticSystem(rows[:, 0], rows[:, 1], rows[:, 2], sys.origin)
    return sys


def truncation_set_hier(
    x: np.ndarray, line: PerturbationLine, m: MergeSequence, K: int
) -> IntervalUnion:
    """Values of the statistic for which the ``K``-cluster cut is unchanged."""
    x = np.asarray(x, dtype=float)
    check_groups_are_clusters(cut_dendrogram(m, K), line)
    s = merge_constraints(x, line, m, K).solve()
    if not contains(s, line.anchor):
        raise TruncationError(
            f"observed statistic {line.anchor:.6g} is outside its truncation set {s!r}"
        )
    return s
