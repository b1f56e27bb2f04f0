"""Tail calibration of up-regulation prices.

Exceedance frequencies over a threshold ladder determine how fast spike
probability decays with magnitude; fitting the log-log decay selects the
transport exponent, and q * Pr{r+ >= q} suggests transport budgets that
sustain the observed tail.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DataError

DEFAULT_THRESHOLDS = (200.0, 500.0, 1000.0, 3000.0)


@dataclass(frozen=True)
class TailRow:
    q: float
    count: int
    freq: float      # count / n_obs
    epsilon_q: float  # q * freq


@dataclass(frozen=True)
class TailReport:
    rows: tuple[TailRow, ...]
    n_obs: int
    p_hat: float | None  # None when fewer than 2 thresholds have exceedances

    def to_csv(self) -> str:
        lines = ["q_eur_mwh,count,freq_pct,epsilon_q"]
        for row in self.rows:
            lines.append(f"{row.q:g},{row.count},{100.0 * row.freq!r},{row.epsilon_q!r}")
        lines.append(f"# p_hat = {'NA' if self.p_hat is None else repr(self.p_hat)}")
        return "\n".join(lines) + "\n"


def tail_exceedance(prices, thresholds=DEFAULT_THRESHOLDS) -> TailReport:
    """Exceedance counts, frequencies, and implied budgets epsilon_q = q * freq."""
    prices = np.asarray(prices, dtype=float)
    if prices.size == 0:
        raise DataError("cannot compute exceedances of an empty price series")
    thresholds = [float(q) for q in thresholds]
    if not thresholds or any(q <= 0 for q in thresholds):
        raise ConfigError("thresholds must be positive")
    if any(b <= a for a, b in zip(thresholds, thresholds[1:])):
        raise ConfigError("thresholds must be strictly increasing")
    n = prices.size
    rows = []
    for q in thresholds:
        count = int(np.count_nonzero(prices >= q))
        freq = count / n
        rows.append(TailRow(q=q, count=count, freq=freq, epsilon_q=q * freq))
    p_hat = _fit_exponent(rows)
    return TailReport(rows=tuple(rows), n_obs=n, p_hat=p_hat)


def _fit_exponent(rows) -> float | None:
    usable = [(r.q, r.freq) for r in rows if r.count > 0]
    if len(usable) < 2:
        return None
    log_q = np.log([q for q, _ in usable])
    log_f = np.log([f for _, f in usable])
    slope = np.polyfit(log_q, log_f, 1)[0]
    return float(-slope)


def estimate_tail_exponent(prices, thresholds=DEFAULT_THRESHOLDS) -> float:
    """Least-squares slope of log-frequency against log-threshold, negated.

    Requires at least two thresholds with nonzero exceedance counts.
    """
    report = tail_exceedance(prices, thresholds)
    if report.p_hat is None:
        raise DataError("need at least 2 thresholds with nonzero exceedance counts to fit p")
    return report.p_hat


def suggest_radii(report: TailReport, clamp: tuple[float, float] = (0.1, 5.0)) -> list[float]:
    """Low/medium/high budget suggestions from the nonzero epsilon_q values.

    Each epsilon_q is first rounded to one decimal; the suggestions are the
    min, median, and max of the rounded values, clamped to the given range.
    Advisory only: the solver takes its radii explicitly.
    """
    eps = [round(r.epsilon_q, 1) for r in report.rows if r.count > 0]
    if not eps:
        raise DataError("all thresholds have zero exceedances; tail is empty")
    lo, hi = clamp
    if not lo <= hi:
        raise ConfigError("clamp range must satisfy lo <= hi")
    picks = (min(eps), float(np.median(eps)), max(eps))
    return [min(max(v, lo), hi) for v in picks]
