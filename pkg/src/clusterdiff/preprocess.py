"""Library-size normalisation, log transform and high-variance feature selection for counts."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError

__all__ = ["SCALE", "Preprocessed", "preprocess_counts", "top_variance_columns"]

SCALE = 10_000.0


@dataclass(frozen=True, eq=False)
class Preprocessed:
    x: np.ndarray
    rows: np.ndarray  # kept input rows, 0-based
    columns: np.ndarray  # kept input columns, highest variance first
    scale: float = SCALE


def top_variance_columns(x: np.ndarray, top_k: int) -> np.ndarray:
    """Indices of the ``top_k`` columns by sample variance, descending, ties to the lower index."""
    var = np.var(x, axis=0, ddof=1) if x.shape[0] > 1 else np.zeros(x.shape[1])
    order = np.argsort(-var, kind="stable")
    return order[:top_k]


def preprocess_counts(raw, min_total: float = 1, top_k: int = 500) -> Preprocessed:
    raw = np.asarray(raw, dtype=float)
    if raw.ndim != 2 or raw.size == 0:
        raise DataError("counts must be a nonempty 2-D matrix")
    if not np.all(np.isfinite(raw)) or np.any(raw < 0):
        raise DataError("counts must be finite and nonnegative")
    if top_k < 1:
        raise DataError("top_k must be at least 1")
    totals = raw.sum(axis=1)
    keep = (totals >= min_total) & (totals > 0)
    if not keep.any():
        raise DataError("every row was filtered out")
    rows = np.flatnonzero(keep)
    scaled = raw[rows] / totals[rows, None] * SCALE
    logged = np.log2(scaled + 1.0)
    cols = top_variance_columns(logged, min(top_k, raw.shape[1]))
    return Preprocessed(logged[:, cols], rows, cols)
