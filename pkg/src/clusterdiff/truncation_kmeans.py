"""Truncation sets for Lloyd's k-means, conditioning on every intermediate assignment.

Along the perturbation line each observation and each centroid is affine in
``delta = phi - anchor`` with a slope proportional to the same covariance
direction, so every "observation ``i`` prefers its cluster to cluster ``k``"
comparison is a quadratic inequality in ``delta``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .clustering import KMeansTrace, kmeans_labels, sq_dists, update_centroids
from .errors import DataError, TruncationError
from .intervals import IntervalUnion, QuadraticSystem, contains
from .model import PerturbationLine
from .truncation_hierarchical import check_groups_are_clusters

__all__ = [
    "AffineCentroid",
    "assignment_constraints",
    "centroid_affine",
    "truncation_set_kmeans",
]


@dataclass(frozen=True, eq=False)
class AffineCentroid:
    """Centroid as ``intercept + (phi - anchor) * slope``."""

    intercept: np.ndarray
    slope: np.ndarray

    def at(self, delta: float) -> np.ndarray:
        return self.intercept + delta * self.slope


def _affine_history(x: np.ndarray, trace: KMeansTrace, u: np.ndarray):
    """Per assignment step: centroid intercepts ``(K, q)`` and slope scalars ``(K,)``."""
    init = list(trace.init_rows)
    M = x[init].copy()
    s = u[init].copy()
    out = [(M, s)]
    for t in range(1, trace.assignments.shape[0]):
        labels = trace.assignments[t - 1]
        M, _ = update_centroids(x, labels, M)
        s2, _ = update_centroids(u[:, None], labels, s[:, None])
        s = s2[:, 0]
        out.append((M, s))
    return out


def _check_trace(x: np.ndarray, trace: KMeansTrace) -> None:
    if x.shape[0] != trace.n:
        raise DataError("k-means trace does not match the data")


def centroid_affine(
    x: np.ndarray, trace: KMeansTrace, line: PerturbationLine, t: int, k: int
) -> AffineCentroid:
    """Centroid ``k`` used for assignment step ``t`` (0 = the sampled rows)."""
    x = np.asarray(x, dtype=float)
    _check_trace(x, trace)
    if not 0 <= t < trace.assignments.shape[0]:
        raise DataError(f"iteration {t} outside 0..{trace.n_iter}")
    M, s = _affine_history(x, trace, line.row_direction)[t]
    return AffineCentroid(M[k].copy(), s[k] * line.col_direction)


def assignment_constraints(
    x: np.ndarray, trace: KMeansTrace, line: PerturbationLine
) -> QuadraticSystem:
    """One inequality per (step, observation, competing cluster).

    Row ``||x'_i - m_own||^2 - ||x'_i - m_k||^2 <= 0``; there are exactly
    ``n (K - 1) (n_iter + 1)`` rows, ordered by step, then observation,
    then competitor.
    """
    x = np.asarray(x, dtype=float)
    _check_trace(x, trace)
    n, K = trace.n, trace.K
    u, w = line.row_direction, line.col_direction
    ww = float(w @ w)
    xw = x @ w
    rows = np.arange(n)
    comp = np.array([[k for k in range(K) if k != own] for own in range(K)], dtype=int)
    out_a, out_b, out_c = [], [], []
    for (M, s), labels in zip(_affine_history(x, trace, u), trace.assignments):
        E2 = sq_dists(x, M)
        ew = xw[:, None] - (M @ w)[None, :]
        S = u[:, None] - s[None, :]
        others = comp[labels]  # (n, K-1)
        s_own = S[rows, labels][:, None]
        ew_own = ew[rows, labels][:, None]
        s_k = S[rows[:, None], others]
        ew_k = ew[rows[:, None], others]
        out_a.append((ww * (s_own * s_own - s_k * s_k)).ravel())
        out_b.append((2.0 * (s_own * ew_own - s_k * ew_k)).ravel())
        out_c.append((E2[rows, labels][:, None] - E2[rows[:, None], others]).ravel())
    return QuadraticSystem(
        np.concatenate(out_a), np.concatenate(out_b), np.concatenate(out_c), line.anchor
    )


def truncation_set_kmeans(
    x: np.ndarray, trace: KMeansTrace, line: PerturbationLine
) -> IntervalUnion:
    """Values of the statistic for which every recorded assignment is reproduced."""
    x = np.asarray(x, dtype=float)
    check_groups_are_clusters(kmeans_labels(trace), line)
    s = assignment_constraints(x, trace, line).solve()
    if not contains(s, line.anchor):
        raise TruncationError(
            f"observed statistic {line.anchor:.6g} is outside its truncation set {s!r}"
        )
    return s
