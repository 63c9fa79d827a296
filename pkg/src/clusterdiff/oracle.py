"""Brute-force cross-checks for the analytic machinery.

Nothing here is used on the inference path. Each routine recomputes a
quantity by definition instead:

* truncation sets, by re-clustering perturbed data on a grid of ``phi``
  (hierarchical runs go through :func:`scipy.cluster.hierarchy.linkage`,
  an implementation independent of ours);
* truncated CDFs, by adaptive Gauss-Kronrod quadrature in mpmath;
* selective p-values, by Monte Carlo.
"""
from __future__ import annotations

import csv
import heapq
import math
from dataclasses import dataclass
from pathlib import Path

import mpmath
import numpy as np
from scipy.cluster.hierarchy import linkage as scipy_linkage
from scipy.spatial.distance import pdist

from .clustering import KMeansTrace, kmeans_lloyd
from .errors import NumericalError
from .inference import ClusteringMethod, Fit, fit_clustering, run_test
from .intervals import IntervalUnion, contains, intersect_all
from .model import FeatureCovariance, PerturbationLine, perturb

__all__ = [
    "GridScan",
    "OracleReport",
    "check_instance",
    "compare_scan",
    "default_grid",
    "grid_membership",
    "mc_selective_p",
    "quadrature_trunc_cdf",
    "random_instance",
]


# --- grid re-clustering -------------------------------------------------------


@dataclass(frozen=True, eq=False)
class GridScan:
    phis: np.ndarray
    membership: np.ndarray

    def __post_init__(self):
        if np.any(np.diff(self.phis) <= 0):
            raise ValueError("grid must be strictly increasing")


def default_grid(line: PerturbationLine, n_points: int = 4001, width: float = 6.0) -> np.ndarray:
    """``n_points`` values over ``anchor +- width * sd``; the centre is the anchor itself."""
    half = width * line.null_sd
    grid = np.linspace(line.anchor - half, line.anchor + half, n_points)
    if n_points % 2:
        grid[n_points // 2] = line.anchor
    return grid


def _partition_key(labels) -> tuple[int, ...]:
    seen: dict[int, int] = {}
    return tuple(seen.setdefault(int(v), len(seen)) for v in labels)


def _cut_scipy(Z: np.ndarray, n: int, K: int) -> tuple[int, ...]:
    parent = list(range(n))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    rep = list(range(n))
    for row in Z[: n - K]:
        ra, rb = find(rep[int(row[0])]), find(rep[int(row[1])])
        parent[max(ra, rb)] = min(ra, rb)
        rep.append(min(ra, rb))
    return _partition_key([find(i) for i in range(n)])


def _scipy_partition(X: np.ndarray, linkage: str, K: int) -> tuple[int, ...]:
    if linkage in ("single", "average"):
        Z = scipy_linkage(pdist(X, "sqeuclidean"), method=linkage)
    else:
        # scipy's centroid/ward act on Euclidean geometry; the merge order
        # matches the squared-distance Lance-Williams forms used in clustering.py
        Z = scipy_linkage(X, method=linkage)
    return _cut_scipy(Z, X.shape[0], K)


def _kmeans_matches(X: np.ndarray, ref: KMeansTrace) -> bool:
    trace = kmeans_lloyd(X, ref.K, ref.t_max, ref.seed)
    return trace.assignments.shape == ref.assignments.shape and bool(
        np.array_equal(trace.assignments, ref.assignments)
    )


def grid_membership(
    line: PerturbationLine, reference: Fit, grid: np.ndarray | None = None
) -> GridScan:
    """Re-cluster ``perturb(line, phi)`` for every grid value and compare with ``reference``."""
    phis = default_grid(line) if grid is None else np.asarray(grid, dtype=float)
    method = reference.method
    member = np.zeros(phis.size, dtype=bool)
    if method.is_kmeans:
        for g, phi in enumerate(phis):
            member[g] = _kmeans_matches(perturb(line, phi), reference.record)
    else:
        ref_key = _partition_key(reference.labels.labels)
        for g, phi in enumerate(phis):
            member[g] = _scipy_partition(perturb(line, phi), method.name, method.K) == ref_key
    return GridScan(phis, member)


@dataclass(frozen=True, eq=False)
class OracleReport:
    phis: np.ndarray
    member_analytic: np.ndarray
    member_grid: np.ndarray
    boundary: np.ndarray  # disagreement within one grid step of an analytic endpoint
    analytic: IntervalUnion
    anchor: float

    @property
    def agreement(self) -> float:
        return float(np.mean(self.member_analytic == self.member_grid))

    @property
    def n_disagree(self) -> int:
        return int(np.count_nonzero(self.member_analytic != self.member_grid))

    @property
    def all_disagreements_at_boundary(self) -> bool:
        bad = self.member_analytic != self.member_grid
        return bool(np.all(self.boundary[bad]))

    def passed(self, min_agreement: float = 0.995) -> bool:
        return self.agreement >= min_agreement and self.all_disagreements_at_boundary

    def summary(self) -> dict:
        return {
            "grid_points": int(self.phis.size),
            "agreement": self.agreement,
            "disagreements": self.n_disagree,
            "all_disagreements_at_boundary": self.all_disagreements_at_boundary,
            "anchor_in_set": contains(self.analytic, self.anchor),
            "analytic_set": self.analytic.to_json(),
        }

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["phi", "member_analytic", "member_grid"])
            for phi, a, g in zip(self.phis, self.member_analytic, self.member_grid):
                w.writerow([repr(float(phi)), int(a), int(g)])


def compare_scan(scan: GridScan, analytic: IntervalUnion, anchor: float) -> OracleReport:
    phis = scan.phis
    member_a = np.array([contains(analytic, p, tol=0.0) for p in phis])
    step = float(np.max(np.diff(phis))) if phis.size > 1 else 0.0
    ends = analytic.bounds.ravel()
    ends = ends[np.isfinite(ends)]
    if ends.size:
        dist = np.min(np.abs(phis[:, None] - ends[None, :]), axis=1)
        boundary = dist <= step * (1 + 1e-9)
    else:
        boundary = np.zeros(phis.size, dtype=bool)
    return OracleReport(phis, member_a, scan.membership.copy(), boundary, analytic, anchor)


def check_instance(
    x: np.ndarray,
    sigma: FeatureCovariance,
    method: ClusteringMethod | Fit,
    pair: tuple[int, int],
    feature: int,
    n_grid: int = 4001,
) -> OracleReport:
    """Analytic truncation set for one test versus the grid re-clustering oracle."""
    from .model import make_contrast, perturbation_line

    fit = method if isinstance(method, Fit) else fit_clustering(x, method)
    report = run_test(x, sigma, fit, pair, feature)
    c = make_contrast(report.group_a, report.group_b, x.shape[0])
    line = perturbation_line(x, sigma, c, feature)
    scan = grid_membership(line, fit, default_grid(line, n_grid))
    return compare_scan(scan, report.truncation, line.anchor)


def random_instance(rng: np.random.Generator, method_name: str, n_max: int = 15, q_max: int = 3):
    """A small clustered data set with a random covariance, pair and feature.

    Returns ``(x, sigma, method, pair, feature)``.
    """
    n = int(rng.integers(6, n_max + 1))
    q = int(rng.integers(1, q_max + 1))
    K = int(rng.integers(2, min(3, n - 1) + 1))
    centers = rng.normal(scale=3.0, size=(K, q))
    member = rng.integers(0, K, size=n)
    x = centers[member] + rng.normal(size=(n, q))
    A = rng.normal(size=(q, q))
    sigma = FeatureCovariance(A @ A.T / q + 0.5 * np.eye(q))
    if method_name == "kmeans":
        method = ClusteringMethod("kmeans", K, seed=int(rng.integers(0, 2**32)), t_max=int(rng.integers(1, 7)))
    else:
        method = ClusteringMethod(method_name, K)
    fit = fit_clustering(x, method)
    a, b = rng.choice(fit.labels.K, size=2, replace=False)
    feature = int(rng.integers(0, q))
    return x, sigma, fit, (int(a), int(b)), feature


# --- quadrature ----------------------------------------------------------------

_XGK = (
    "0.991455371120812639206854697526329",
    "0.949107912342758524526189684047851",
    "0.864864423359769072789712788640926",
    "0.741531185599394439863864773280788",
    "0.586087235467691130294144845693013",
    "0.405845151377397166906606412076961",
    "0.207784955007898467600689403773245",
    "0",
)
_WGK = (
    "0.022935322010529224963732008058970",
    "0.063092092629978553290700663189204",
    "0.104790010322250183839876322541518",
    "0.140653259715525918745189590510238",
    "0.169004726639267902826583426598550",
    "0.190350578064785409913256402421014",
    "0.204432940075298892414161999234649",
    "0.209482141084727828012999174891714",
)
_WG = (
    "0.129484966168869693270611432679082",
    "0.279705391489276667901467771423780",
    "0.381830050505118944950369775488975",
    "0.417959183673469387755102040816327",
)


def _gk15(f, a, b):
    xgk = [mpmath.mpf(v) for v in _XGK]
    wgk = [mpmath.mpf(v) for v in _WGK]
    wg = [mpmath.mpf(v) for v in _WG]
    c = (a + b) / 2
    h = (b - a) / 2
    fc = f(c)
    kron = wgk[7] * fc
    gauss = wg[3] * fc
    for i in range(7):
        dx = h * xgk[i]
        s = f(c - dx) + f(c + dx)
        kron += wgk[i] * s
        if i % 2 == 1:
            gauss += wg[i // 2] * s
    return kron * h, abs((kron - gauss) * h)


def _integrate(f, a, b, rtol, max_intervals=4000):
    val, err = _gk15(f, a, b)
    heap = [(-err, a, b, val, err)]
    total, total_err = val, err
    while total_err > rtol * abs(total):
        if len(heap) >= max_intervals:
            raise NumericalError("adaptive quadrature did not converge")
        _, lo, hi, v, e = heapq.heappop(heap)
        mid = (lo + hi) / 2
        v1, e1 = _gk15(f, lo, mid)
        v2, e2 = _gk15(f, mid, hi)
        total += v1 + v2 - v
        total_err += e1 + e2 - e
        heapq.heappush(heap, (-e1, lo, mid, v1, e1))
        heapq.heappush(heap, (-e2, mid, hi, v2, e2))
    # re-sum to shed accumulated update error
    return mpmath.fsum(item[3] for item in heap)


def _gaussian_mass_mp(lo: float, hi: float, rtol):
    """Standard-normal mass of ``[lo, hi]`` by quadrature; infinite ends are cut 60 sd out."""
    if lo == -math.inf:
        lo = min(hi, 0.0) - 60.0
    if hi == math.inf:
        hi = max(lo, 0.0) + 60.0
    if not lo < hi:
        return mpmath.mpf(0)
    norm = 1 / mpmath.sqrt(2 * mpmath.pi)
    # scale by the density at the nearest-to-zero point so tail pieces keep relative accuracy
    anchor = 0.0 if lo <= 0.0 <= hi else min(abs(lo), abs(hi))
    shift = mpmath.mpf(anchor) ** 2 / 2
    f = lambda z: mpmath.exp(shift - z * z / 2)  # noqa: E731
    return _integrate(f, mpmath.mpf(lo), mpmath.mpf(hi), rtol) * norm * mpmath.exp(-shift)


def quadrature_trunc_cdf(t: float, mean: float, sd: float, s: IntervalUnion, rtol: float = 1e-13) -> float:
    """``P(Y <= t)`` for ``N(mean, sd^2)`` truncated to ``s``, by quadrature at 40 digits."""
    with mpmath.workdps(40):
        zt = (t - mean) / sd
        num = mpmath.mpf(0)
        den = mpmath.mpf(0)
        for lo, hi in s:
            zl, zh = (lo - mean) / sd, (hi - mean) / sd
            den += _gaussian_mass_mp(zl, zh, rtol)
            if zl < zt:
                num += _gaussian_mass_mp(zl, min(zh, zt), rtol)
        if den == 0:
            raise NumericalError("support has zero mass")
        return float(num / den)


# --- Monte Carlo ----------------------------------------------------------------


def _members(bounds: np.ndarray, z: np.ndarray) -> np.ndarray:
    k = np.searchsorted(bounds[:, 0], z, side="right") - 1
    ok = k >= 0
    kk = np.where(ok, k, 0)
    return ok & (z <= bounds[kk, 1])


def _log_normal_pdf(z):
    return -0.5 * z * z - 0.5 * math.log(2 * math.pi)


def mc_selective_p(
    statistic: float, sd: float, s: IntervalUnion, draws: int = 10**6, seed: int = 0
) -> tuple[float, float]:
    """Monte Carlo estimate of the selective p-value and its standard error.

    Plain rejection sampling from ``N(0, sd^2)`` is used first. When fewer
    than one draw in a thousand lands in ``s``, or the accepted draws contain
    fewer than 100 tail hits (or misses), the binomial error is unreliable
    and the estimate switches to stratified importance sampling: ``s`` is cut
    at ``+-|statistic|`` and each piece gets an exponential proposal from its
    end nearest zero, or a uniform one if it straddles zero.
    """
    if draws < 10**4:
        raise ValueError("need at least 10^4 draws")
    rng = np.random.Generator(np.random.Philox(seed))
    bounds = s.bounds / sd
    if bounds.size == 0:
        raise NumericalError("no draws can be accepted from an empty set")
    t = abs(statistic) / sd
    pilot = rng.standard_normal(10**4)
    accept = float(np.mean(_members(bounds, pilot)))
    if accept >= 1e-3:
        hits = 0
        got = 0
        batch = int(min(4 * 10**6, max(10**5, 1.2 * draws / accept)))
        while got < draws:
            z = rng.standard_normal(batch)
            z = z[_members(bounds, z)][: draws - got]
            hits += int(np.count_nonzero(np.abs(z) >= t))
            got += z.size
        if min(hits, got - hits) >= 100:
            p = hits / got
            return p, math.sqrt(p * (1 - p) / got)
    return _importance_p(t, s.bounds / sd, draws, rng)


def _importance_p(t: float, bounds: np.ndarray, draws: int, rng) -> tuple[float, float]:
    s = IntervalUnion(bounds.tolist())
    tail = intersect_all([s, IntervalUnion([[-math.inf, -t], [t, math.inf]])])
    body = intersect_all([s, IntervalUnion([[-t, t]])]) if t > 0 else IntervalUnion.empty()
    pieces = [(lo, hi, True) for lo, hi in tail] + [(lo, hi, False) for lo, hi in body]
    per = max(draws // len(pieces), 1000)
    logw, is_tail = [], []
    for lo, hi, in_tail in pieces:
        flip = hi <= 0
        if flip:
            lo, hi = -hi, -lo
        u = rng.random(per)
        if lo >= 0:
            lam = max(lo, 1.0)
            span = -math.expm1(-lam * (hi - lo)) if math.isfinite(hi) else 1.0
            z = lo - np.log1p(-u * span) / lam
            logq = math.log(lam) - lam * (z - lo) - math.log(span)
        else:
            a, b = max(lo, -12.0), min(hi, 12.0)
            z = a + (b - a) * u
            logq = np.full(per, -math.log(b - a))
        logw.append(_log_normal_pdf(z) - logq)
        is_tail.append(in_tail)
    shift = max(float(w.max()) for w in logw)
    w = [np.exp(v - shift) for v in logw]
    mass = np.array([v.mean() for v in w])
    var = np.array([v.var(ddof=1) / v.size for v in w])
    total = mass.sum()
    if not total > 0:
        raise NumericalError("importance weights vanished")
    is_tail = np.array(is_tail)
    p = mass[is_tail].sum() / total
    # delta method for a ratio of independent stratum sums
    se = math.sqrt(float(np.sum(var * (is_tail - p) ** 2))) / total
    return float(p), se
