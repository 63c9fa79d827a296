"""Type-I calibration and power simulations.

Every replicate draws from its own Philox stream keyed on ``(seed, replicate)``,
so output does not depend on how replicates are spread over workers. The noise
matrix is drawn before anything that depends on ``delta``; power runs that
share a seed therefore see the same noise at every effect size.
"""
from __future__ import annotations

import dataclasses
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError
from .inference import ClusteringMethod, fit_clustering, run_test
from .model import FeatureCovariance

__all__ = [
    "DESIGNS",
    "PowerRow",
    "PowerSummary",
    "SimConfig",
    "Type1Row",
    "equicorrelation",
    "gen_null",
    "gen_power",
    "run_power",
    "run_type1",
    "summarize_power",
    "worker_count",
]

DESIGNS = ("null_two_cluster", "three_cluster_power")
WORKERS_ENV = "CLUSTERDIFF_WORKERS"


@dataclass(frozen=True)
class SimConfig:
    design: str = "null_two_cluster"
    n: int = 100
    q: int = 10
    rho: float = 0.0
    delta: float = 0.0
    K: int = 3
    method: str = "kmeans"
    replicates: int = 800
    alpha: float = 0.05
    seed: int = 0
    t_max: int = 50

    def __post_init__(self):
        if self.design not in DESIGNS:
            raise DataError(f"design must be one of {DESIGNS}")
        if self.q < 3 and self.design == "null_two_cluster":
            raise DataError("the null design needs q >= 3")
        if self.q < 1 or self.n < max(self.K + 1, 3):
            raise DataError("need q >= 1 and n > K")
        lower = -1.0 / (self.q - 1) if self.q > 1 else -math.inf
        if not lower < self.rho < 1.0:
            raise DataError(f"rho must lie in ({lower:g}, 1)")
        if self.replicates < 1:
            raise DataError("replicates must be at least 1")
        if not 0.0 < self.alpha < 1.0:
            raise DataError("alpha must lie in (0, 1)")
        if self.seed < 0:
            raise DataError("seed must be nonnegative")
        # validates the name and K
        ClusteringMethod(self.method, self.K, t_max=self.t_max)

    @classmethod
    def from_dict(cls, d: dict) -> "SimConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise DataError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def equicorrelation(q: int, rho: float) -> np.ndarray:
    return (1.0 - rho) * np.eye(q) + rho * np.ones((q, q))


def _rng(cfg: SimConfig, replicate: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([cfg.seed, replicate])))


def _noise(cfg: SimConfig, rng: np.random.Generator) -> np.ndarray:
    L = np.linalg.cholesky(equicorrelation(cfg.q, cfg.rho))
    return rng.standard_normal((cfg.n, cfg.q)) @ L.T


def gen_null(cfg: SimConfig, replicate: int, rng: np.random.Generator | None = None) -> np.ndarray:
    """Two true clusters split at ``n/2``; they differ only in the first and last features."""
    if cfg.design != "null_two_cluster":
        raise DataError("gen_null needs the null_two_cluster design")
    rng = _rng(cfg, replicate) if rng is None else rng
    x = _noise(cfg, rng)
    half = cfg.n // 2
    x[:half, 0] += 1.0
    x[half:, -1] += 1.0
    return x


def _thirds(n: int) -> np.ndarray:
    cuts = [0, round(n / 3), round(2 * n / 3), n]
    return np.repeat(np.arange(3), np.diff(cuts))


def gen_power(
    cfg: SimConfig, replicate: int, rng: np.random.Generator | None = None
) -> tuple[np.ndarray, np.ndarray]:
    """Three index blocks with means ``-delta``, ``0`` and ``delta`` on the last ``ceil(q/2)`` features.

    When ``n`` is not divisible by three the block edges are rounded.
    Returns the data and the 0-based true block labels.
    """
    if cfg.design != "three_cluster_power":
        raise DataError("gen_power needs the three_cluster_power design")
    rng = _rng(cfg, replicate) if rng is None else rng
    x = _noise(cfg, rng)
    truth = _thirds(cfg.n)
    signal = slice(cfg.q // 2, cfg.q)
    x[truth == 0, signal] -= cfg.delta
    x[truth == 2, signal] += cfg.delta
    return x, truth


def _method(cfg: SimConfig, rng: np.random.Generator) -> ClusteringMethod:
    seed = int(rng.integers(0, 2**63)) if cfg.method == "kmeans" else 0
    return ClusteringMethod(cfg.method, cfg.K, seed=seed, t_max=cfg.t_max)


def _pair(rng: np.random.Generator, K: int) -> tuple[int, int]:
    a, b = rng.choice(K, size=2, replace=False)
    return int(a), int(b)


@dataclass(frozen=True)
class Type1Row:
    replicate: int
    feature: int  # 1-based
    cluster_a: int  # 1-based
    cluster_b: int
    statistic: float
    p_selective: float
    p_naive: float


def _type1_one(args) -> Type1Row:
    cfg, replicate = args
    rng = _rng(cfg, replicate)
    x = gen_null(cfg, replicate, rng)
    sigma = FeatureCovariance(equicorrelation(cfg.q, cfg.rho))
    fit = fit_clustering(x, _method(cfg, rng))
    pair = _pair(rng, fit.labels.K)
    # a feature between 2 and q-1 in 1-based terms
    j = int(rng.integers(1, cfg.q - 1))
    r = run_test(x, sigma, fit, pair, j)
    return Type1Row(replicate, j + 1, pair[0] + 1, pair[1] + 1, r.statistic, r.p_selective, r.p_naive)


@dataclass(frozen=True)
class PowerRow:
    replicate: int
    feature: int  # 1-based
    cluster_a: int
    cluster_b: int
    effect: float  # |mean difference of feature j| under the true means
    p_selective: float
    reject: bool
    clusters_correct: bool


def _is_true_cluster(members: tuple[int, ...], truth: np.ndarray) -> bool:
    block = truth[members[0]]
    return bool(np.array_equal(np.flatnonzero(truth == block), np.asarray(members)))


def _power_one(args) -> PowerRow:
    cfg, replicate = args
    rng = _rng(cfg, replicate)
    x, truth = gen_power(cfg, replicate, rng)
    sigma = FeatureCovariance(equicorrelation(cfg.q, cfg.rho))
    fit = fit_clustering(x, _method(cfg, rng))
    pair = _pair(rng, fit.labels.K)
    # a feature that carries signal when the design has any
    j = int(rng.integers(cfg.q // 2, cfg.q))
    r = run_test(x, sigma, fit, pair, j)
    block_mean = np.array([-cfg.delta, 0.0, cfg.delta])
    effect = abs(block_mean[truth[list(r.group_a)]].mean() - block_mean[truth[list(r.group_b)]].mean())
    correct = _is_true_cluster(r.group_a, truth) and _is_true_cluster(r.group_b, truth)
    return PowerRow(
        replicate, j + 1, pair[0] + 1, pair[1] + 1, float(effect), r.p_selective,
        r.p_selective <= cfg.alpha, correct,
    )


def worker_count() -> int:
    raw = os.environ.get(WORKERS_ENV)
    if raw:
        try:
            return max(1, int(raw))
        except ValueError:
            raise DataError(f"{WORKERS_ENV} must be an integer") from None
    return len(os.sched_getaffinity(0)) if hasattr(os, "sched_getaffinity") else os.cpu_count() or 1


def _map(fn, cfg: SimConfig, workers: int | None):
    jobs = [(cfg, r) for r in range(cfg.replicates)]
    workers = worker_count() if workers is None else workers
    if workers <= 1 or cfg.replicates < 2:
        return [fn(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        # map preserves submission order
        return list(pool.map(fn, jobs, chunksize=max(1, len(jobs) // (4 * workers))))


def run_type1(cfg: SimConfig, workers: int | None = None) -> list[Type1Row]:
    if cfg.design != "null_two_cluster":
        raise DataError("run_type1 needs the null_two_cluster design")
    return _map(_type1_one, cfg, workers)


@dataclass(frozen=True)
class PowerSummary:
    rejections: int  # among replicates whose pair are true clusters
    correct: int
    replicates: int
    conditional_power: float = field(init=False)
    detection_probability: float = field(init=False)

    def __post_init__(self):
        if not 0 <= self.rejections <= self.correct <= self.replicates:
            raise ValueError("counts must satisfy rejections <= correct <= replicates")
        cp = self.rejections / self.correct if self.correct else 0.0
        object.__setattr__(self, "conditional_power", cp)
        object.__setattr__(self, "detection_probability", self.correct / self.replicates)


def summarize_power(rows: list[PowerRow]) -> PowerSummary:
    correct = sum(r.clusters_correct for r in rows)
    hits = sum(r.clusters_correct and r.reject for r in rows)
    return PowerSummary(hits, correct, len(rows))


def run_power(cfg: SimConfig, workers: int | None = None) -> tuple[PowerSummary, list[PowerRow]]:
    if cfg.design != "three_cluster_power":
        raise DataError("run_power needs the three_cluster_power design")
    rows = _map(_power_one, cfg, workers)
    return summarize_power(rows), rows

