"""Deterministic, trace-recording k-means and agglomerative clustering.

Both algorithms expose exactly the intermediate decisions that the
truncation-set code conditions on, and share their distance and centroid
arithmetic with it so that the observed data always satisfies its own
constraints bit for bit.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DataError
from .model import as_data

__all__ = [
    "LINKAGES",
    "ClusterLabels",
    "KMeansTrace",
    "MergeSequence",
    "Xoshiro256",
    "cut_dendrogram",
    "hierarchical",
    "kmeans_labels",
    "kmeans_lloyd",
    "sample_without_replacement",
    "within_cluster_ss",
]

LINKAGES = ("single", "average", "centroid", "ward")

_MASK = (1 << 64) - 1


def _splitmix64(state: int) -> tuple[int, int]:
    state = (state + 0x9E3779B97F4A7C15) & _MASK
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return state, z ^ (z >> 31)


def _rotl(v: int, k: int) -> int:
    return ((v << k) | (v >> (64 - k))) & _MASK


class Xoshiro256:
    """xoshiro256** seeded through splitmix64.

    Used instead of numpy's generators for the k-means initialisation so the
    sampled rows are fixed by the seed alone, independent of numpy versions.
    """

    def __init__(self, seed: int):
        if seed < 0:
            raise DataError("seed must be non-negative")
        st = int(seed) & _MASK
        s = []
        for _ in range(4):
            st, out = _splitmix64(st)
            s.append(out)
        self._s = s

    def next_u64(self) -> int:
        s = self._s
        result = (_rotl((s[1] * 5) & _MASK, 7) * 9) & _MASK
        t = (s[1] << 17) & _MASK
        s[2] ^= s[0]
        s[3] ^= s[1]
        s[1] ^= s[2]
        s[0] ^= s[3]
        s[2] ^= t
        s[3] = _rotl(s[3], 45)
        return result

    def below(self, bound: int) -> int:
        """Uniform integer in ``[0, bound)`` without modulo bias."""
        if bound <= 0:
            raise DataError("bound must be positive")
        threshold = ((1 << 64) - bound) % bound
        while True:
            r = self.next_u64()
            if r >= threshold:
                return r % bound


def sample_without_replacement(n: int, k: int, seed: int) -> tuple[int, ...]:
    """First ``k`` entries of a partial Fisher-Yates shuffle of ``range(n)``."""
    if not 0 < k <= n:
        raise DataError(f"cannot sample {k} of {n} rows")
    rng = Xoshiro256(seed)
    perm = list(range(n))
    for i in range(k):
        j = i + rng.below(n - i)
        perm[i], perm[j] = perm[j], perm[i]
    return tuple(perm[:k])


def sq_dists(x: np.ndarray, m: np.ndarray) -> np.ndarray:
    """Squared Euclidean distances between rows of ``x`` and rows of ``m``."""
    diff = x[:, None, :] - m[None, :, :]
    return np.einsum("ikq,ikq->ik", diff, diff)


def update_centroids(x: np.ndarray, labels: np.ndarray, prev: np.ndarray) -> tuple[np.ndarray, list[int]]:
    """Cluster means; a cluster with no members keeps its previous centroid."""
    K = prev.shape[0]
    out = prev.copy()
    empty = []
    for k in range(K):
        members = labels == k
        if members.any():
            out[k] = x[members].mean(axis=0)
        else:
            empty.append(k)
    return out, empty


def assign(x: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    # np.argmin returns the first minimum, i.e. the lowest cluster index on ties
    return np.argmin(sq_dists(x, centroids), axis=1)


@dataclass(frozen=True, eq=False)
class KMeansTrace:
    """Complete history of one Lloyd run.

    ``assignments[0]`` is the assignment to the sampled initial rows and
    ``assignments[t]`` the assignment after the ``t``-th centroid update, so
    there are ``n_iter + 1`` rows. When the loop stopped because nothing
    changed, the last two rows are equal. ``empty_events`` lists
    ``(t, k)`` for every cluster ``k`` that had no members in
    ``assignments[t - 1]`` and kept its centroid for step ``t``.
    """

    K: int
    seed: int
    t_max: int
    init_rows: tuple[int, ...]
    assignments: np.ndarray = field(repr=False)
    converged: bool
    empty_events: tuple[tuple[int, int], ...] = ()

    @property
    def n_iter(self) -> int:
        return self.assignments.shape[0] - 1

    @property
    def n(self) -> int:
        return self.assignments.shape[1]


def kmeans_lloyd(x, K: int, t_max: int, seed: int) -> KMeansTrace:
    """Lloyd's algorithm with seeded row initialisation, recording every assignment."""
    x = as_data(x)
    n = x.shape[0]
    K = int(K)
    if not 2 <= K <= n:
        raise DataError(f"K must be in 2..{n}, got {K}")
    if t_max < 1:
        raise DataError("t_max must be at least 1")
    init = sample_without_replacement(n, K, seed)
    centroids = x[list(init)].copy()
    labels = assign(x, centroids)
    history = [labels]
    events: list[tuple[int, int]] = []
    converged = False
    for t in range(1, t_max + 1):
        centroids, empty = update_centroids(x, labels, centroids)
        events.extend((t, k) for k in empty)
        new = assign(x, centroids)
        history.append(new)
        if np.array_equal(new, labels):
            converged = True
            break
        labels = new
    assignments = np.vstack(history)
    assignments.setflags(write=False)
    return KMeansTrace(K, int(seed), int(t_max), init, assignments, converged, tuple(events))


@dataclass(frozen=True, eq=False)
class ClusterLabels:
    """A partition as 0-based labels ``0..K-1``, each used at least once."""

    labels: np.ndarray
    K: int

    def __post_init__(self):
        lab = np.asarray(self.labels, dtype=int).copy()
        if lab.ndim != 1:
            raise DataError("labels must be a vector")
        if set(np.unique(lab).tolist()) != set(range(self.K)):
            raise DataError("labels must use every value in 0..K-1")
        lab.setflags(write=False)
        object.__setattr__(self, "labels", lab)

    def members(self, k: int) -> np.ndarray:
        return np.flatnonzero(self.labels == k)

    def same_partition(self, other: "ClusterLabels") -> bool:
        return self.K == other.K and _canonical_labels(self.labels) == _canonical_labels(other.labels)


def _canonical_labels(labels: np.ndarray) -> tuple[int, ...]:
    seen: dict[int, int] = {}
    return tuple(seen.setdefault(int(v), len(seen)) for v in labels)


def kmeans_labels(trace: KMeansTrace) -> ClusterLabels:
    """Final assignment, relabelled to ``0..K'-1`` if some clusters ended empty."""
    final = trace.assignments[-1]
    used, compact = np.unique(final, return_inverse=True)
    return ClusterLabels(compact, int(used.size))


def within_cluster_ss(x: np.ndarray, labels: np.ndarray) -> float:
    total = 0.0
    for k in np.unique(labels):
        pts = x[labels == k]
        total += float(((pts - pts.mean(axis=0)) ** 2).sum())
    return total


# --- agglomerative clustering -------------------------------------------------


def lw_coefficients(linkage: str, na: float, nb: float, nc):
    """Lance-Williams weights ``(alpha_a, alpha_b, beta)`` for the linear linkages.

    ``d(A u B, C) = alpha_a d(A, C) + alpha_b d(B, C) + beta d(A, B)``.
    """
    nc = np.asarray(nc, dtype=float)
    nab = na + nb
    if linkage == "average":
        return np.full_like(nc, na / nab), np.full_like(nc, nb / nab), np.zeros_like(nc)
    if linkage == "centroid":
        return (
            np.full_like(nc, na / nab),
            np.full_like(nc, nb / nab),
            np.full_like(nc, -na * nb / (nab * nab)),
        )
    if linkage == "ward":
        tot = nab + nc
        return (na + nc) / tot, (nb + nc) / tot, -nc / tot
    raise DataError(f"no linear Lance-Williams form for linkage {linkage!r}")


def lw_combine(coef, d_ac, d_bc, d_ab):
    alpha_a, alpha_b, beta = coef
    return alpha_a * d_ac + alpha_b * d_bc + beta * d_ab


def pairwise_sq_dists(x: np.ndarray) -> np.ndarray:
    return sq_dists(x, x)


@dataclass(frozen=True, eq=False)
class MergeSequence:
    """Ordered merges of an agglomerative run.

    Cluster ids follow the usual convention: observations are ``0..n-1`` and
    the cluster formed at step ``t`` (0-based) gets id ``n + t``. In each
    record ``left < right``, i.e. the older cluster comes first.
    """

    n: int
    linkage: str
    left: np.ndarray
    right: np.ndarray
    heights: np.ndarray
    sizes: np.ndarray

    def __len__(self) -> int:
        return self.left.size

    def records(self) -> list[tuple[int, int, float]]:
        return [(int(a), int(b), float(h)) for a, b, h in zip(self.left, self.right, self.heights)]

    def slots(self) -> np.ndarray:
        """Row index where each merge stores its new cluster (the smaller of the two)."""
        slot_of = np.arange(self.n + len(self))
        out = np.empty((len(self), 2), dtype=int)
        for t, (a, b) in enumerate(zip(self.left, self.right)):
            sa, sb = slot_of[a], slot_of[b]
            out[t] = (min(sa, sb), max(sa, sb))
            slot_of[self.n + t] = min(sa, sb)
        return out


def hierarchical(x, linkage: str) -> MergeSequence:
    """Greedy agglomeration on squared Euclidean distances.

    Ties are resolved toward the lexicographically smallest
    ``(older id, younger id)`` pair.
    """
    if linkage not in LINKAGES:
        raise DataError(f"unknown linkage {linkage!r}; choose from {LINKAGES}")
    x = as_data(x)
    n = x.shape[0]
    D = pairwise_sq_dists(x)
    np.fill_diagonal(D, np.inf)
    ids = np.arange(n)
    sizes = np.ones(n)
    alive = np.ones(n, dtype=bool)
    left = np.empty(n - 1, dtype=int)
    right = np.empty(n - 1, dtype=int)
    heights = np.empty(n - 1)
    merged_sizes = np.empty(n - 1, dtype=int)
    for t in range(n - 1):
        flat = int(np.argmin(D))
        h = D.flat[flat]
        if np.count_nonzero(D == h) > 2:
            rows, cols = np.nonzero(D == h)
            keys = sorted((min(ids[r], ids[c]), max(ids[r], ids[c]), r, c) for r, c in zip(rows, cols))
            _, _, sa, sb = keys[0]
        else:
            sa, sb = divmod(flat, n)
        sa, sb = min(sa, sb), max(sa, sb)
        left[t], right[t] = sorted((ids[sa], ids[sb]))
        heights[t] = h
        na, nb = sizes[sa], sizes[sb]
        alive[sb] = False
        others = np.flatnonzero(alive)
        others = others[others != sa]
        if linkage == "single":
            new = np.minimum(D[sa, others], D[sb, others])
        else:
            coef = lw_coefficients(linkage, na, nb, sizes[others])
            new = lw_combine(coef, D[sa, others], D[sb, others], h)
        D[sb, :] = np.inf
        D[:, sb] = np.inf
        D[sa, others] = new
        D[others, sa] = new
        ids[sa] = n + t
        sizes[sa] = na + nb
        merged_sizes[t] = int(na + nb)
    for arr in (left, right, heights, merged_sizes):
        arr.setflags(write=False)
    return MergeSequence(n, linkage, left, right, heights, merged_sizes)


def cut_dendrogram(m: MergeSequence, K: int) -> ClusterLabels:
    """Undo the last ``K - 1`` merges; labels are ordered by each cluster's smallest member."""
    n = m.n
    K = int(K)
    if not 1 <= K <= n:
        raise DataError(f"K must be in 1..{n}, got {K}")
    parent = list(range(n))

    def find(i: int) -> int:
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    rep = list(range(n))  # representative observation of each cluster id
    for t in range(n - K):
        ra, rb = find(rep[m.left[t]]), find(rep[m.right[t]])
        lo, hi = min(ra, rb), max(ra, rb)
        parent[hi] = lo
        rep.append(lo)
    roots = np.array([find(i) for i in range(n)])
    # roots are each component's smallest member, so sorting them orders labels
    _, labels = np.unique(roots, return_inverse=True)
    return ClusterLabels(labels, K)
