"""Two-price imbalance settlement and profit-path statistics.

An hour's profit is n*s + (g-n)_+ * r- - (n-g)_+ * r+: the nomination earns
the spot price, surplus is sold at the down-regulation price, shortfall is
bought back at the up-regulation price.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError


def settle_profit(n: float, x) -> float:
    """Profit of nominating n against one realized hour (record or 4-vector)."""
    if hasattr(x, "g"):
        g, s, r_minus, r_plus = x.g, x.s, x.r_minus, x.r_plus
    else:
        g, s, r_minus, r_plus = (float(v) for v in x)
    return n * s + max(g - n, 0.0) * r_minus - max(n - g, 0.0) * r_plus


def settle_profit_array(n, x) -> np.ndarray:
    """Vectorized settlement: n is scalar or (N,), x is (N, 4)."""
    x = np.asarray(x, dtype=float)
    n = np.asarray(n, dtype=float)
    g, s, r_minus, r_plus = x[:, 0], x[:, 1], x[:, 2], x[:, 3]
    return n * s + np.maximum(g - n, 0.0) * r_minus - np.maximum(n - g, 0.0) * r_plus


@dataclass(frozen=True)
class ProfitSeries:
    timestamps: np.ndarray | None
    hourly: np.ndarray
    cumulative: np.ndarray

    def __len__(self) -> int:
        return len(self.hourly)


def cumulative_profit(nominations, records_or_x, timestamps=None) -> ProfitSeries:
    """Per-hour settlement plus running sum.

    records_or_x may be a list of MarketRecord or an (N, 4) array (with
    optional timestamps). Lengths must agree.
    """
    nominations = np.asarray(nominations, dtype=float)
    if hasattr(records_or_x, "ndim"):
        x = np.asarray(records_or_x, dtype=float)
        times = None if timestamps is None else np.asarray(timestamps)
    else:
        records = list(records_or_x)
        x = np.array([[r.g, r.s, r.r_minus, r.r_plus] for r in records], dtype=float)
        times = np.array([r.timestamp for r in records])
    if len(nominations) != len(x) or (times is not None and len(times) != len(x)):
        raise DataError(
            f"misaligned inputs: {len(nominations)} nominations vs {len(x)} realized hours"
        )
    if len(x) == 0:
        empty = np.array([], dtype=float)
        return ProfitSeries(times, empty, empty.copy())
    hourly = settle_profit_array(nominations, x)
    return ProfitSeries(times, hourly, np.cumsum(hourly))


@dataclass(frozen=True)
class Drop:
    start: int      # last running-maximum index before the decline
    trough: int
    end: int        # first recovery index, or the series end if unrecovered
    magnitude: float
    recovered: bool


@dataclass(frozen=True)
class DropStats:
    drops: tuple[Drop, ...]
    mean_drop: float
    std_drop: float  # population standard deviation

    @property
    def n_drops(self) -> int:
        return len(self.drops)


def drop_statistics(series) -> DropStats:
    """Declines of the cumulative profit from a running maximum to first recovery.

    A drop opens at the last running-maximum index before a strict decrease and
    closes at the first later point reaching that level again (weak recovery);
    an unrecovered drop closes at the series end. Magnitude is peak minus trough.
    """
    p = series.cumulative if isinstance(series, ProfitSeries) else np.asarray(series, dtype=float)
    if len(p) == 0:
        raise DataError("cannot compute drop statistics of an empty series")
    drops: list[Drop] = []
    anchor = 0
    open_start = None
    trough_idx = 0
    for t in range(1, len(p)):
        if open_start is None:
            if p[t] < p[anchor]:
                open_start = anchor
                trough_idx = t
            else:
                anchor = t
        else:
            if p[t] < p[trough_idx]:
                trough_idx = t
            if p[t] >= p[open_start]:
                drops.append(
                    Drop(open_start, trough_idx, t, float(p[open_start] - p[trough_idx]), True)
                )
                open_start = None
                anchor = t
    if open_start is not None:
        last = len(p) - 1
        drops.append(
            Drop(open_start, trough_idx, last, float(p[open_start] - p[trough_idx]), False)
        )
    if drops:
        mags = np.array([d.magnitude for d in drops])
        mean = float(mags.mean())
        std = float(mags.std())  # population (n) denominator
    else:
        mean = std = 0.0
    return DropStats(tuple(drops), mean, std)


def seasonal_comparison(strategy: dict, baseline: dict) -> dict:
    """Percent profit deltas per season: 100 * (strategy - baseline) / |baseline|.

    The absolute-value denominator keeps positive deltas meaning "strategy
    earned more" even when the baseline lost money. A zero baseline yields None.
    """
    if set(strategy) != set(baseline):
        missing = set(strategy) ^ set(baseline)
        raise DataError(f"mismatched season keys: {sorted(missing)}")
    out = {}
    for season, base in baseline.items():
        if base == 0:
            out[season] = None
        else:
            out[season] = 100.0 * (strategy[season] - base) / abs(base)
    return out
