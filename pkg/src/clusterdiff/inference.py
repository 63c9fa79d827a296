"""Truncated-Gaussian p-values and the end-to-end test for one feature and cluster pair."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.special import erf, erfcx, logsumexp

from .clustering import (
    LINKAGES,
    ClusterLabels,
    KMeansTrace,
    MergeSequence,
    cut_dendrogram,
    hierarchical,
    kmeans_labels,
    kmeans_lloyd,
)
from .errors import DataError, DegenerateSupportError
from .intervals import IntervalUnion, contains
from .model import FeatureCovariance, as_data, make_contrast, perturbation_line
from .truncation_hierarchical import truncation_set_hier
from .truncation_kmeans import truncation_set_kmeans

__all__ = [
    "ClusteringMethod",
    "Fit",
    "TestReport",
    "TruncatedGaussian",
    "bh_adjust",
    "estimate_covariance",
    "fit_clustering",
    "log_interval_mass",
    "naive_p",
    "run_test",
    "selective_p",
    "trunc_cdf",
]

P_FLOOR = 1e-300
_SQRT2 = math.sqrt(2.0)
_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)
_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(12)
_NARROW = 1e-2


def _log_sf(z: np.ndarray) -> np.ndarray:
    """log P(Z > z) for z >= 0, via the scaled complementary error function."""
    with np.errstate(over="ignore"):
        return np.log(0.5 * erfcx(z / _SQRT2)) - 0.5 * z * z


def _log_mass_right(lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    """log P(lo < Z < hi) for 0 <= lo < hi <= inf."""
    with np.errstate(divide="ignore"):
        ratio = np.log(erfcx(hi / _SQRT2) / erfcx(lo / _SQRT2))
    spread = np.where(np.isinf(hi), -np.inf, -0.5 * (hi - lo) * (hi + lo))
    # log Q(hi) - log Q(lo); both parts are <= 0 so there is no cancellation
    delta = ratio + spread
    return _log_sf(lo) + np.log(-np.expm1(delta))


def _log_mass_narrow(lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    half = 0.5 * (hi - lo)
    mid = 0.5 * (hi + lo)
    nodes = mid[:, None] + half[:, None] * _GL_NODES[None, :]
    logpdf = -0.5 * nodes * nodes - _LOG_SQRT_2PI
    return np.log(half) + logsumexp(logpdf, b=_GL_WEIGHTS[None, :], axis=1)


def log_interval_mass(lo, hi) -> np.ndarray:
    """Log standard-normal mass of each interval ``[lo, hi]`` (vectorised).

    Stays finite far into the tails: ``[40, 41]`` returns about ``-804.61``
    rather than ``-inf``.
    """
    lo = np.atleast_1d(np.asarray(lo, dtype=float))
    hi = np.atleast_1d(np.asarray(hi, dtype=float))
    out = np.full(lo.shape, -np.inf)
    valid = lo < hi
    # reflect left-tail intervals into the right tail
    left = valid & (hi <= 0)
    l2 = np.where(left, -hi, lo)
    h2 = np.where(left, -lo, hi)
    width = h2 - l2
    finite = np.isfinite(width)
    with np.errstate(invalid="ignore"):
        centre = np.abs(0.5 * np.where(finite, l2 + h2, 0.0))
    narrow = valid & finite & (width * (1.0 + centre) < _NARROW)
    tail = valid & ~narrow & (l2 >= 0)
    mid = valid & ~narrow & (l2 < 0)
    if narrow.any():
        out[narrow] = _log_mass_narrow(l2[narrow], h2[narrow])
    if tail.any():
        out[tail] = _log_mass_right(l2[tail], h2[tail])
    if mid.any():
        out[mid] = np.log(0.5 * erf(h2[mid] / _SQRT2) + 0.5 * erf(-l2[mid] / _SQRT2))
    return out


def _standardize(s: IntervalUnion, mean: float, sd: float):
    b = (s.bounds - mean) / sd
    return b[:, 0], b[:, 1]


def _log_total(lo, hi) -> float:
    total = float(logsumexp(log_interval_mass(lo, hi))) if lo.size else -math.inf
    if not math.isfinite(total):
        raise DegenerateSupportError("truncation support has no representable Gaussian mass")
    return total


@dataclass(frozen=True, eq=False)
class TruncatedGaussian:
    """``N(mean, sd^2)`` restricted to a union of intervals."""

    mean: float
    sd: float
    support: IntervalUnion
    log_mass: float = field(init=False)

    def __post_init__(self):
        if not (self.sd > 0 and math.isfinite(self.sd)):
            raise DataError("sd must be positive and finite")
        lo, hi = _standardize(self.support, self.mean, self.sd)
        object.__setattr__(self, "log_mass", _log_total(lo, hi))

    def cdf(self, t: float) -> float:
        return trunc_cdf(t, self)


def trunc_cdf(t: float, g: TruncatedGaussian) -> float:
    """P(Y <= t) for Y distributed as ``g``, evaluated in log space."""
    lo, hi = _standardize(g.support, g.mean, g.sd)
    zt = (float(t) - g.mean) / g.sd
    hi_c = np.minimum(hi, zt)
    keep = lo < hi_c
    if not keep.any():
        return 0.0
    below = float(logsumexp(log_interval_mass(lo[keep], hi_c[keep])))
    return float(min(1.0, math.exp(below - g.log_mass)))


def naive_p(statistic: float, sd: float) -> float:
    """Two-sided Z-test p-value ``2 (1 - Phi(|statistic| / sd))``."""
    if not sd > 0:
        raise DataError("sd must be positive")
    z = abs(float(statistic)) / sd / _SQRT2
    return float(min(1.0, max(P_FLOOR, math.exp(math.log(erfcx(z)) - z * z))))


def selective_p(statistic: float, sd: float, s: IntervalUnion) -> float:
    """P(|Y| >= |statistic|) for ``Y ~ N(0, sd^2)`` truncated to ``s``.

    The two tails are summed directly rather than as ``1 - F(|t|) + F(-|t|)``
    so that small p-values keep full relative precision.
    """
    if not sd > 0:
        raise DataError("sd must be positive")
    if not contains(s, statistic):
        raise DataError(f"statistic {statistic!r} is outside the truncation set")
    lo, hi = _standardize(s, 0.0, sd)
    total = _log_total(lo, hi)
    z = abs(float(statistic)) / sd
    up_lo = np.maximum(lo, z)
    dn_hi = np.minimum(hi, -z)
    parts = np.concatenate([log_interval_mass(up_lo, hi), log_interval_mass(lo, dn_hi)])
    num = float(logsumexp(parts))
    if not math.isfinite(num):
        return P_FLOOR
    return float(min(1.0, max(P_FLOOR, math.exp(num - total))))


def bh_adjust(pvals: Sequence[float]) -> np.ndarray:
    """Benjamini-Hochberg step-up adjusted p-values, in input order."""
    p = np.asarray(pvals, dtype=float)
    if p.ndim != 1:
        raise DataError("p-values must be a flat sequence")
    if np.any((p < 0) | (p > 1)) or np.any(np.isnan(p)):
        raise DataError("p-values must lie in [0, 1]")
    m = p.size
    if m == 0:
        return p.copy()
    order = np.argsort(p, kind="stable")
    scaled = p[order] * m / np.arange(1, m + 1)
    adj = np.minimum.accumulate(scaled[::-1])[::-1]
    out = np.empty(m)
    out[order] = np.minimum(adj, 1.0)
    return out


def estimate_covariance(x, labels: ClusterLabels) -> FeatureCovariance:
    """Pooled within-cluster covariance with divisor ``n - K``.

    Eigenvalues below ``1e-8`` times the mean diagonal are raised to that
    floor so the result is usable as a known covariance.
    """
    x = as_data(x)
    n = x.shape[0]
    lab = labels.labels
    if lab.size != n:
        raise DataError("labels do not match the data")
    if n <= labels.K:
        raise DataError(f"need more observations ({n}) than clusters ({labels.K})")
    means = np.vstack([x[lab == k].mean(axis=0) for k in range(labels.K)])
    r = x - means[lab]
    s = r.T @ r / (n - labels.K)
    s = 0.5 * (s + s.T)
    mean_diag = float(np.mean(np.diag(s)))
    floor = 1e-8 * mean_diag if mean_diag > 0 else 1e-8
    vals, vecs = np.linalg.eigh(s)
    if vals[0] < floor:
        s = (vecs * np.maximum(vals, floor)) @ vecs.T
        s = 0.5 * (s + s.T)
    return FeatureCovariance(s, estimated=True)


@dataclass(frozen=True)
class ClusteringMethod:
    """Which clustering produced the groups: ``kmeans`` or a linkage name."""

    name: str
    K: int
    seed: int = 0
    t_max: int = 50

    def __post_init__(self):
        if self.name != "kmeans" and self.name not in LINKAGES:
            raise DataError(f"unknown method {self.name!r}")
        if self.K < 2:
            raise DataError("K must be at least 2")

    @property
    def is_kmeans(self) -> bool:
        return self.name == "kmeans"

    def describe(self) -> dict:
        d = {"name": self.name, "K": self.K}
        if self.is_kmeans:
            d.update(seed=self.seed, t_max=self.t_max)
        return d


@dataclass(frozen=True, eq=False)
class Fit:
    """A clustering run plus the record needed to condition on it."""

    method: ClusteringMethod
    labels: ClusterLabels
    record: KMeansTrace | MergeSequence


def fit_clustering(x, method: ClusteringMethod) -> Fit:
    x = as_data(x)
    if method.K > x.shape[0]:
        raise DataError(f"K={method.K} exceeds the number of observations")
    if method.is_kmeans:
        trace = kmeans_lloyd(x, method.K, method.t_max, method.seed)
        return Fit(method, kmeans_labels(trace), trace)
    merges = hierarchical(x, method.name)
    return Fit(method, cut_dendrogram(merges, method.K), merges)


@dataclass(frozen=True, eq=False)
class TestReport:
    """Outcome of testing one feature between one pair of estimated clusters."""

    feature: int
    clusters: tuple[int, int]
    group_a: tuple[int, ...]
    group_b: tuple[int, ...]
    statistic: float
    sd: float
    truncation: IntervalUnion
    p_selective: float
    p_naive: float
    method: ClusteringMethod
    sigma_estimated: bool = False

    def to_json(self) -> dict:
        """JSON-ready dict; all indices are reported 1-based."""
        return {
            "feature": self.feature + 1,
            "pair": [self.clusters[0] + 1, self.clusters[1] + 1],
            "group_a": [i + 1 for i in self.group_a],
            "group_b": [i + 1 for i in self.group_b],
            "statistic": self.statistic,
            "sd": self.sd,
            "truncation": self.truncation.to_json(),
            "p_selective": self.p_selective,
            "p_naive": self.p_naive,
            "method": self.method.describe(),
            "sigma_estimated": self.sigma_estimated,
        }


TestReport.__test__ = False


def truncation_set(x, line, fit: Fit) -> IntervalUnion:
    if isinstance(fit.record, KMeansTrace):
        return truncation_set_kmeans(x, fit.record, line)
    return truncation_set_hier(x, line, fit.record, fit.method.K)


def run_test(
    x,
    sigma: FeatureCovariance,
    method: ClusteringMethod | Fit,
    pair: tuple[int, int],
    feature: int,
) -> TestReport:
    """Selective and naive p-values for feature ``feature`` between clusters ``pair``.

    ``method`` may be a ready :class:`Fit` so that several features or pairs
    share one clustering run. Cluster labels and the feature are 0-based.
    """
    x = as_data(x)
    fit = method if isinstance(method, Fit) else fit_clustering(x, method)
    a, b = (int(v) for v in pair)
    if a == b or not (0 <= a < fit.labels.K and 0 <= b < fit.labels.K):
        raise DataError(f"pair must be two distinct clusters in 0..{fit.labels.K - 1}")
    c = make_contrast(fit.labels.members(a), fit.labels.members(b), x.shape[0])
    line = perturbation_line(x, sigma, c, feature)
    s = truncation_set(x, line, fit)
    sd = line.null_sd
    return TestReport(
        feature=line.feature,
        clusters=(a, b),
        group_a=c.group_a,
        group_b=c.group_b,
        statistic=line.anchor,
        sd=sd,
        truncation=s,
        p_selective=selective_p(line.anchor, sd, s),
        p_naive=naive_p(line.anchor, sd),
        method=fit.method,
        sigma_estimated=sigma.estimated,
    )
