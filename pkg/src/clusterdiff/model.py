"""Gaussian matrix model: contrasts, perturbation lines and the conditioning residual.

All indices in this module are 0-based. The command line and the JSON/CSV
interfaces translate from the 1-based numbering users see.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .errors import DataError

__all__ = [
    "Contrast",
    "FeatureCovariance",
    "PerturbationLine",
    "as_data",
    "make_contrast",
    "perturb",
    "perturbation_line",
    "residual_component",
    "test_statistic",
]


def as_data(x) -> np.ndarray:
    """Validate an ``n x q`` data matrix and return it as a float64 array."""
    arr = np.asarray(x, dtype=float)
    if arr.ndim != 2:
        raise DataError(f"data must be a 2-D matrix, got shape {arr.shape}")
    n, q = arr.shape
    if n < 2 or q < 1:
        raise DataError(f"need at least 2 observations and 1 feature, got {n}x{q}")
    if not np.all(np.isfinite(arr)):
        raise DataError("data contains non-finite entries")
    return arr


@dataclass(frozen=True, eq=False)
class FeatureCovariance:
    """Positive-definite ``q x q`` covariance shared by every row.

    ``estimated`` records whether the matrix was plugged in from data rather
    than supplied as known.
    """

    sigma: np.ndarray
    estimated: bool = False

    def __post_init__(self):
        s = np.array(self.sigma, dtype=float, copy=True)
        if s.ndim == 0:
            s = s.reshape(1, 1)
        if s.ndim != 2 or s.shape[0] != s.shape[1]:
            raise DataError(f"covariance must be square, got shape {s.shape}")
        if not np.all(np.isfinite(s)):
            raise DataError("covariance contains non-finite entries")
        scale = max(np.max(np.abs(s)), np.finfo(float).tiny)
        if np.max(np.abs(s - s.T)) > 1e-10 * scale:
            raise DataError("covariance is not symmetric")
        s = 0.5 * (s + s.T)
        if np.any(np.diag(s) <= 0):
            raise DataError("covariance has a non-positive diagonal entry")
        q = s.shape[0]
        floor = 1e-12 * np.trace(s) / q
        if np.linalg.eigvalsh(s)[0] <= floor:
            raise DataError("covariance is not positive definite")
        s.setflags(write=False)
        object.__setattr__(self, "sigma", s)

    @property
    def q(self) -> int:
        return self.sigma.shape[0]

    def direction(self, j: int) -> np.ndarray:
        """Column ``j`` scaled so that its ``j``-th entry is exactly one."""
        w = self.sigma[:, j] / self.sigma[j, j]
        w[j] = 1.0
        return w


@dataclass(frozen=True, eq=False)
class Contrast:
    """Mean-difference contrast between two disjoint groups of rows."""

    group_a: tuple[int, ...]
    group_b: tuple[int, ...]
    n: int
    nu: np.ndarray = field(repr=False)
    nu_sq_norm: float

    @property
    def support(self) -> np.ndarray:
        return np.array(self.group_a + self.group_b, dtype=int)


def _index_set(group: Iterable[int], n: int, name: str) -> tuple[int, ...]:
    idx = sorted({int(i) for i in group})
    if not idx:
        raise DataError(f"{name} is empty")
    if idx[0] < 0 or idx[-1] >= n:
        raise DataError(f"{name} has an index outside 0..{n - 1}")
    return tuple(idx)


def make_contrast(group_a: Iterable[int], group_b: Iterable[int], n: int) -> Contrast:
    """Build the contrast vector with ``1/|A|`` on ``group_a`` and ``-1/|B|`` on ``group_b``."""
    a = _index_set(group_a, n, "group_a")
    b = _index_set(group_b, n, "group_b")
    if set(a) & set(b):
        raise DataError("groups overlap")
    nu = np.zeros(n)
    nu[list(a)] = 1.0 / len(a)
    nu[list(b)] = -1.0 / len(b)
    nu.setflags(write=False)
    return Contrast(a, b, n, nu, 1.0 / len(a) + 1.0 / len(b))


def _check_feature(j: int, q: int) -> int:
    j = int(j)
    if not 0 <= j < q:
        raise DataError(f"feature index {j} outside 0..{q - 1}")
    return j


def test_statistic(x: np.ndarray, c: Contrast, j: int) -> float:
    """Difference between the group means of feature ``j``."""
    x = np.asarray(x, dtype=float)
    j = _check_feature(j, x.shape[1])
    if x.shape[0] != c.n:
        raise DataError("contrast length does not match the number of rows")
    return float(x[list(c.group_a), j].mean() - x[list(c.group_b), j].mean())


# pytest would otherwise try to collect the public name above
test_statistic.__test__ = False


@dataclass(frozen=True, eq=False)
class PerturbationLine:
    """The affine family ``x + (phi - anchor) * u w^T`` through the observed data.

    ``u`` is the contrast divided by its squared norm and ``w`` is the
    ``feature``-th covariance column divided by its diagonal entry. Moving
    ``phi`` shifts the two tested groups rigidly and leaves every other row
    alone.
    """

    feature: int
    base: np.ndarray = field(repr=False)
    contrast: Contrast = field(repr=False)
    row_direction: np.ndarray = field(repr=False)
    col_direction: np.ndarray = field(repr=False)
    anchor: float
    variance_jj: float

    @property
    def null_sd(self) -> float:
        """Null standard deviation of the statistic, ``||nu|| sqrt(Sigma_jj)``."""
        return float(np.sqrt(self.contrast.nu_sq_norm * self.variance_jj))


def perturbation_line(
    x: np.ndarray, sigma: FeatureCovariance, c: Contrast, j: int
) -> PerturbationLine:
    x = as_data(x)
    j = _check_feature(j, x.shape[1])
    if sigma.q != x.shape[1]:
        raise DataError(f"covariance is {sigma.q}x{sigma.q} but data has {x.shape[1]} features")
    u = c.nu / c.nu_sq_norm
    u.setflags(write=False)
    w = sigma.direction(j)
    w.setflags(write=False)
    base = x.copy()
    base.setflags(write=False)
    return PerturbationLine(
        feature=j,
        base=base,
        contrast=c,
        row_direction=u,
        col_direction=w,
        anchor=test_statistic(base, c, j),
        variance_jj=float(sigma.sigma[j, j]),
    )


def perturb(line: PerturbationLine, phi: float) -> np.ndarray:
    """Data on the line at statistic value ``phi``; rows outside the tested groups are untouched."""
    phi = float(phi)
    if not np.isfinite(phi):
        raise DataError("phi must be finite")
    out = line.base.copy()
    rows = line.contrast.support
    out[rows] += (phi - line.anchor) * np.outer(line.row_direction[rows], line.col_direction)
    return out


def residual_component(x: np.ndarray, line: PerturbationLine) -> np.ndarray:
    """Part of ``x`` that is independent of the statistic (held fixed when conditioning)."""
    x = np.asarray(x, dtype=float)
    stat = test_statistic(x, line.contrast, line.feature)
    return x - stat * np.outer(line.row_direction, line.col_direction)
