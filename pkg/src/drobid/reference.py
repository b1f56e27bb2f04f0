"""Forecast-conditioned reference distributions.

Given a generation forecast, select the fraction of training hours with the
closest forecasts and weight them by proximity, yielding a weighted empirical
distribution over realized (g, s, r-, r+) tuples.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DataError

DEFAULT_ALPHA = 1.0 / 3.0
DEFAULT_BETA = 2.0


@dataclass(frozen=True)
class NeighborSelection:
    indices: np.ndarray   # selected training indices, ascending
    distances: np.ndarray  # |f - f_i| per selected index
    d_max: float


@dataclass(frozen=True)
class EmpiricalDistribution:
    """Weighted samples over (g, s, r-, r+); weights sum to one."""

    samples: np.ndarray         # (M, 4)
    weights: np.ndarray         # (M,)
    source_indices: np.ndarray  # (M,) training-set indices

    def __post_init__(self):
        if len(self.samples) == 0:
            raise DataError("empirical distribution needs at least one sample")
        if len(self.samples) != len(self.weights) or len(self.weights) != len(self.source_indices):
            raise DataError("samples, weights, and source_indices must have equal length")
        if np.any(self.weights < 0) or abs(float(self.weights.sum()) - 1.0) > 1e-12:
            raise DataError("weights must be nonnegative and sum to 1")

    @property
    def n_samples(self) -> int:
        return len(self.weights)

    def truncated(self, max_samples: int) -> "EmpiricalDistribution":
        """Keep the max_samples highest-weight atoms (ties by lower source index), renormalized."""
        if max_samples <= 0:
            raise ConfigError(f"max_samples must be positive, got {max_samples}")
        if self.n_samples <= max_samples:
            return self
        keep = _smallest_k(-self.weights, max_samples)
        w = self.weights[keep]
        return EmpiricalDistribution(self.samples[keep], w / w.sum(), self.source_indices[keep])


def _smallest_k(values: np.ndarray, k: int) -> np.ndarray:
    """Indices of the k smallest values; ties at the cutoff resolved by lower index."""
    n = len(values)
    if k >= n:
        return np.arange(n)
    cutoff = np.partition(values, k - 1)[k - 1]
    below = np.flatnonzero(values < cutoff)
    at = np.flatnonzero(values == cutoff)
    take = k - len(below)
    return np.sort(np.concatenate((below, at[:take])))


def select_neighbors(train_forecasts, f: float, alpha: float = DEFAULT_ALPHA) -> NeighborSelection:
    """Pick the ceil(alpha*N) training hours whose forecasts are closest to f."""
    forecasts = np.asarray(train_forecasts, dtype=float)
    n = len(forecasts)
    if n == 0:
        raise DataError("cannot select neighbors from an empty training set")
    if not 0 < alpha <= 1:
        raise ConfigError(f"alpha must be in (0, 1], got {alpha}")
    k = math.ceil(alpha * n)
    distances = np.abs(forecasts - f)
    idx = _smallest_k(distances, k)
    selected = distances[idx]
    return NeighborSelection(indices=idx, distances=selected, d_max=float(selected.max()))


def compute_weights(distances, d_max: float, beta: float = DEFAULT_BETA):
    """Proximity weights (1 - d/d_max)**beta, normalized.

    Zero-weight boundary samples (d == d_max) are dropped before normalization;
    if d_max is 0 or every sample would be dropped, weights are uniform.

    Returns (weights, kept) where kept indexes into the input distances.
    """
    distances = np.asarray(distances, dtype=float)
    if beta <= 0:
        raise ConfigError(f"beta must be positive, got {beta}")
    if d_max < 0:
        raise DataError(f"d_max must be nonnegative, got {d_max}")
    if np.any(distances < 0) or np.any(distances > d_max):
        raise DataError("distances must lie in [0, d_max]")
    n = len(distances)
    if n == 0:
        raise DataError("no distances given")
    if d_max == 0.0 or np.all(distances == d_max):
        return np.full(n, 1.0 / n), np.arange(n)
    raw = (1.0 - distances / d_max) ** beta
    kept = np.flatnonzero(raw > 0.0)
    w = raw[kept]
    return w / w.sum(), kept


def build_reference(
    train_x,
    train_forecasts,
    f: float,
    alpha: float = DEFAULT_ALPHA,
    beta: float = DEFAULT_BETA,
) -> EmpiricalDistribution:
    """Reference distribution for forecast f from training realizations.

    train_x is an (N, 4) array of realized (g, s, r-, r+); train_forecasts the
    matching per-hour forecast means.
    """
    train_x = np.asarray(train_x, dtype=float)
    train_forecasts = np.asarray(train_forecasts, dtype=float)
    if train_x.ndim != 2 or train_x.shape[1] != 4:
        raise DataError(f"train_x must be (N, 4), got {train_x.shape}")
    if len(train_x) != len(train_forecasts):
        raise DataError("train_x and train_forecasts must have equal length")
    sel = select_neighbors(train_forecasts, f, alpha)
    weights, kept = compute_weights(sel.distances, sel.d_max, beta)
    src = sel.indices[kept]
    return EmpiricalDistribution(samples=train_x[src], weights=weights, source_indices=src)
