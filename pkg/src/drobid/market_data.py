"""Hourly market datasets: CSV ingestion, validation, season folds, synthetic generation.

All timestamps are normalized to UTC at ingestion. Datasets are hourly and
gapless; missing hours are an error, never imputed.
"""
from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass, fields
from datetime import datetime, timezone

import numpy as np
from scipy.signal import lfilter

from .errors import ConfigError, DataError

logger = logging.getLogger(__name__)

MARKET_COLUMNS = ("time", "generation_mwh", "spot_eur_mwh", "down_reg_eur_mwh", "up_reg_eur_mwh")
PRICE_THRESHOLDS = (200.0, 500.0, 1000.0, 3000.0)

HOUR = np.timedelta64(3600, "s")
_MIN_SPAN_HOURS = 89 * 24  # ~3 calendar months (shortest: Dec-Feb non-leap = 90 days)
_MIN_FOLD_HOURS = 28 * 24  # boundary partial seasons shorter than this merge into a neighbor


@dataclass(frozen=True)
class MarketRecord:
    """One delivery hour's realized generation and prices."""

    timestamp: datetime
    g: float
    s: float
    r_minus: float
    r_plus: float


@dataclass(frozen=True)
class ForecastRecord:
    """Ensemble generation forecast for one delivery hour."""

    timestamp: datetime
    ensemble: tuple[float, ...]
    f_mean: float


def _to_utc(ts: datetime) -> datetime:
    if ts.tzinfo is None:
        return ts.replace(tzinfo=timezone.utc)
    return ts.astimezone(timezone.utc)


def _parse_time(text: str, path: str, line_no: int) -> datetime:
    try:
        ts = datetime.fromisoformat(text.strip().replace("Z", "+00:00"))
    except ValueError:
        raise DataError(f"{path}:{line_no}: unparseable time {text!r}") from None
    return _to_utc(ts)


def _parse_float(text: str, path: str, line_no: int, column: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise DataError(f"{path}:{line_no}: column {column!r} is not a number: {text!r}") from None
    if not math.isfinite(value):
        raise DataError(f"{path}:{line_no}: column {column!r} is not finite: {text!r}")
    return value


def ingest_market_csv(path: str) -> list[MarketRecord]:
    """Parse a market CSV into hourly records, sorted by UTC timestamp.

    The header must be exactly ``time,generation_mwh,spot_eur_mwh,
    down_reg_eur_mwh,up_reg_eur_mwh``. Duplicate timestamps and gaps are
    rejected; generation must be nonnegative and all fields finite.
    """
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read market CSV {path!r}: {exc}") from None
    with fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file, expected header {','.join(MARKET_COLUMNS)}") from None
        if tuple(h.strip() for h in header) != MARKET_COLUMNS:
            raise DataError(
                f"{path}: bad header {','.join(header)!r}, expected {','.join(MARKET_COLUMNS)!r}"
            )
        records = []
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(MARKET_COLUMNS):
                raise DataError(f"{path}:{line_no}: expected {len(MARKET_COLUMNS)} fields, got {len(row)}")
            ts = _parse_time(row[0], path, line_no)
            g = _parse_float(row[1], path, line_no, "generation_mwh")
            s = _parse_float(row[2], path, line_no, "spot_eur_mwh")
            r_minus = _parse_float(row[3], path, line_no, "down_reg_eur_mwh")
            r_plus = _parse_float(row[4], path, line_no, "up_reg_eur_mwh")
            if g < 0:
                raise DataError(f"{path}:{line_no}: negative generation {g}")
            records.append(MarketRecord(ts, g, s, r_minus, r_plus))
    records.sort(key=lambda r: r.timestamp)
    for prev, cur in zip(records, records[1:]):
        if cur.timestamp == prev.timestamp:
            raise DataError(f"{path}: duplicate timestamp {prev.timestamp.isoformat()}")
        if (cur.timestamp - prev.timestamp).total_seconds() != 3600.0:
            raise DataError(
                f"{path}: non-hourly spacing between {prev.timestamp.isoformat()} and "
                f"{cur.timestamp.isoformat()} (gaps are not imputed)"
            )
    return records


def forecast_columns(ensemble_size: int) -> tuple[str, ...]:
    return ("time",) + tuple(f"ens_{i:03d}" for i in range(1, ensemble_size + 1))


def ingest_forecast_csv(path: str, ensemble_size: int) -> list[ForecastRecord]:
    """Parse an ensemble forecast CSV (columns ``time,ens_001..ens_NNN``)."""
    if ensemble_size <= 0:
        raise ConfigError(f"ensemble_size must be positive, got {ensemble_size}")
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read forecast CSV {path!r}: {exc}") from None
    expected = forecast_columns(ensemble_size)
    with fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            logger.warning("%s: empty forecast file, returning no forecasts", path)
            return []
        if tuple(h.strip() for h in header) != expected:
            raise DataError(
                f"{path}: bad forecast header for ensemble_size={ensemble_size} "
                f"(expected {len(expected)} columns, got {len(header)})"
            )
        records = []
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(expected):
                raise DataError(f"{path}:{line_no}: expected {len(expected)} fields, got {len(row)}")
            ts = _parse_time(row[0], path, line_no)
            members = []
            for col, cell in zip(expected[1:], row[1:]):
                v = _parse_float(cell, path, line_no, col)
                if v < 0:
                    raise DataError(f"{path}:{line_no}: negative forecast in {col!r}: {v}")
                members.append(v)
            records.append(ForecastRecord(ts, tuple(members), float(np.mean(members))))
    if not records:
        logger.warning("%s: forecast file has a header but no rows", path)
        return records
    records.sort(key=lambda r: r.timestamp)
    for prev, cur in zip(records, records[1:]):
        if cur.timestamp == prev.timestamp:
            raise DataError(f"{path}: duplicate timestamp {prev.timestamp.isoformat()}")
        if (cur.timestamp - prev.timestamp).total_seconds() != 3600.0:
            raise DataError(
                f"{path}: non-hourly spacing between {prev.timestamp.isoformat()} and "
                f"{cur.timestamp.isoformat()}"
            )
    return records


def _fmt(value: float) -> str:
    return repr(float(value))


def emit_market_csv(records, path: str) -> None:
    """Write records in the declared market CSV schema (round-trips bit-exactly)."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(",".join(MARKET_COLUMNS) + "\n")
        for r in records:
            ts = _to_utc(r.timestamp).isoformat()
            fh.write(f"{ts},{_fmt(r.g)},{_fmt(r.s)},{_fmt(r.r_minus)},{_fmt(r.r_plus)}\n")


def emit_forecast_csv(records, ensemble_size: int, path: str) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(",".join(forecast_columns(ensemble_size)) + "\n")
        for r in records:
            if len(r.ensemble) != ensemble_size:
                raise DataError(
                    f"forecast for {r.timestamp.isoformat()} has {len(r.ensemble)} members, "
                    f"expected {ensemble_size}"
                )
            ts = _to_utc(r.timestamp).isoformat()
            fh.write(ts + "," + ",".join(_fmt(v) for v in r.ensemble) + "\n")


def _times_to_np(timestamps) -> np.ndarray:
    return np.array(
        [np.datetime64(int(_to_utc(t).timestamp()), "s") for t in timestamps], dtype="datetime64[s]"
    )


class Dataset:
    """Aligned hourly market records and ensemble forecasts, stored columnwise.

    Immutable after construction; safe to share across workers.
    """

    def __init__(self, times: np.ndarray, x: np.ndarray, ensembles: np.ndarray):
        times = np.asarray(times, dtype="datetime64[s]")
        x = np.asarray(x, dtype=float)
        ensembles = np.asarray(ensembles, dtype=float)
        if len(times) == 0:
            raise DataError("dataset is empty")
        if x.shape != (len(times), 4):
            raise DataError(f"market array has shape {x.shape}, expected ({len(times)}, 4)")
        if ensembles.ndim != 2 or ensembles.shape[0] != len(times):
            raise DataError("forecast ensembles misaligned with market records")
        if len(times) > 1:
            deltas = np.diff(times)
            if np.any(deltas != HOUR):
                i = int(np.argmax(deltas != HOUR))
                raise DataError(
                    f"non-hourly spacing between {times[i]} and {times[i + 1]}"
                )
        self.times = times
        self.x = x
        self.ensembles = ensembles
        self.f_mean = ensembles.mean(axis=1)
        for arr in (self.times, self.x, self.ensembles, self.f_mean):
            arr.flags.writeable = False

    @property
    def n_hours(self) -> int:
        return len(self.times)

    @property
    def ensemble_size(self) -> int:
        return self.ensembles.shape[1]

    @classmethod
    def from_records(cls, records: list[MarketRecord], forecasts: list[ForecastRecord]) -> "Dataset":
        """Align records and forecasts on their common (contiguous) time window."""
        if not records or not forecasts:
            raise DataError("cannot build a dataset from empty records or forecasts")
        sizes = {len(f.ensemble) for f in forecasts}
        if len(sizes) != 1:
            raise DataError(f"inconsistent ensemble sizes in forecasts: {sorted(sizes)}")
        rec_times = {r.timestamp for r in records}
        fc_times = {f.timestamp for f in forecasts}
        common = rec_times & fc_times
        if not common:
            raise DataError("market records and forecasts share no timestamps")
        records = [r for r in records if r.timestamp in common]
        forecasts = [f for f in forecasts if f.timestamp in common]
        times = _times_to_np(r.timestamp for r in records)
        x = np.array([[r.g, r.s, r.r_minus, r.r_plus] for r in records], dtype=float)
        ensembles = np.array([f.ensemble for f in forecasts], dtype=float)
        return cls(times, x, ensembles)

    def market_records(self) -> list[MarketRecord]:
        out = []
        for i in range(self.n_hours):
            ts = datetime.fromtimestamp(int(self.times[i].astype(int)), tz=timezone.utc)
            out.append(MarketRecord(ts, *map(float, self.x[i])))
        return out

    def forecast_records(self) -> list[ForecastRecord]:
        out = []
        for i in range(self.n_hours):
            ts = datetime.fromtimestamp(int(self.times[i].astype(int)), tz=timezone.utc)
            ens = tuple(float(v) for v in self.ensembles[i])
            out.append(ForecastRecord(ts, ens, float(self.f_mean[i])))
        return out


@dataclass(frozen=True)
class ValidationReport:
    """Counts of price-ordering violations and tail exceedances. Pure report."""

    n_hours: int
    ordering_violations: int
    negative_down_reg: int
    up_reg_above: dict[float, int]

    def to_json(self) -> str:
        payload = {
            "n_hours": self.n_hours,
            "ordering_violations": self.ordering_violations,
            "negative_down_reg": self.negative_down_reg,
            "up_reg_above": {f"{q:g}": c for q, c in sorted(self.up_reg_above.items())},
        }
        return json.dumps(payload, sort_keys=True, indent=2) + "\n"


def validate(data, thresholds=PRICE_THRESHOLDS) -> ValidationReport:
    """Report hours violating r- <= s <= r+, negative r-, and r+ above thresholds.

    Ordering violations are counted, not rejected: the usual price relationship
    holds in calm markets but cannot be assumed of arbitrary inputs.
    """
    if isinstance(data, Dataset):
        x = data.x
    else:
        records = list(data)
        if not records:
            raise DataError("cannot validate an empty dataset")
        x = np.array([[r.g, r.s, r.r_minus, r.r_plus] for r in records], dtype=float)
    s, r_minus, r_plus = x[:, 1], x[:, 2], x[:, 3]
    violations = int(np.count_nonzero((r_minus > s) | (s > r_plus)))
    negative = int(np.count_nonzero(r_minus < 0))
    above = {float(q): int(np.count_nonzero(r_plus > q)) for q in thresholds}
    return ValidationReport(len(x), violations, negative, above)


# season handling: Spring=Mar-May, Summer=Jun-Aug, Autumn=Sep-Nov, Winter=Dec-Feb,
# with Winter anchored to the year of its December
_SEASON_OF_MONTH = {3: 0, 4: 0, 5: 0, 6: 1, 7: 1, 8: 1, 9: 2, 10: 2, 11: 2, 12: 3, 1: 3, 2: 3}
_SEASON_NAMES = ("Spring", "Summer", "Autumn", "Winter")


@dataclass(frozen=True)
class SeasonFold:
    """One leave-one-season-out split: a test window and its complement."""

    label: str
    test_start: np.datetime64
    test_end: np.datetime64  # exclusive
    train_indices: np.ndarray
    test_indices: np.ndarray


def _season_key(times: np.ndarray) -> np.ndarray:
    months = times.astype("datetime64[M]")
    month_no = months.astype(int) % 12 + 1
    year = months.astype("datetime64[Y]").astype(int) + 1970
    season = np.array([_SEASON_OF_MONTH[m] for m in month_no])
    anchor = np.where((season == 3) & (month_no != 12), year - 1, year)
    return anchor * 4 + season


def _season_label(key: int) -> str:
    anchor, season = divmod(int(key), 4)
    name = _SEASON_NAMES[season]
    if name == "Winter":
        return f"Winter {anchor}-{(anchor + 1) % 100:02d}"
    return f"{name} {anchor}"


def split_seasons(data) -> list[SeasonFold]:
    """Partition the dataset into seasonal test windows with complementary train sets.

    Boundary partial seasons of at least 28 days become their own fold;
    shorter remnants merge into the adjacent fold.
    """
    times = data.times if isinstance(data, Dataset) else np.asarray(data, dtype="datetime64[s]")
    n = len(times)
    if n == 0:
        raise DataError("cannot split an empty dataset")
    span_hours = (times[-1] - times[0]) / HOUR + 1
    if span_hours < _MIN_SPAN_HOURS:
        raise DataError(
            f"dataset spans {int(span_hours)} hours, need at least {_MIN_SPAN_HOURS} (~3 months)"
        )
    keys = _season_key(times)
    boundaries = np.flatnonzero(np.diff(keys)) + 1
    starts = np.concatenate(([0], boundaries))
    ends = np.concatenate((boundaries, [n]))
    groups = [(int(keys[s]), s, e) for s, e in zip(starts, ends)]
    if len(groups) > 1 and groups[0][2] - groups[0][1] < _MIN_FOLD_HOURS:
        head, nxt = groups[0], groups[1]
        groups = [(nxt[0], head[1], nxt[2])] + groups[2:]
    if len(groups) > 1 and groups[-1][2] - groups[-1][1] < _MIN_FOLD_HOURS:
        prev, tail = groups[-2], groups[-1]
        groups = groups[:-2] + [(prev[0], prev[1], tail[2])]
    folds = []
    all_idx = np.arange(n)
    for key, s, e in groups:
        test_idx = all_idx[s:e]
        train_idx = np.concatenate((all_idx[:s], all_idx[e:]))
        folds.append(
            SeasonFold(
                label=_season_label(key),
                test_start=times[s],
                test_end=times[e - 1] + HOUR,
                train_indices=train_idx,
                test_indices=test_idx,
            )
        )
    return folds


@dataclass(frozen=True)
class SyntheticConfig:
    """Knobs for the synthetic market generator.

    Up-regulation spikes are Bernoulli events whose prices follow a Pareto law
    with exponent ``p_true`` starting at ``spike_threshold``, capped at
    ``price_cap`` (sampled by inverse CDF, then clipped at the cap so that
    exceedance frequencies keep the exact power-law decay below the cap).
    """

    horizon_hours: int = 17_520
    start: str = "2017-01-01T00:00:00+00:00"
    capacity_mw: float = 100.0
    base_spot: float = 40.0
    down_spread: float = 8.0
    up_spread: float = 12.0
    spike_frequency: float = 0.02
    down_spike_frequency: float = 0.005
    spike_threshold: float = 200.0
    p_true: float = 1.0
    price_cap: float = 4000.0
    forecast_noise: float = 6.0
    ensemble_size: int = 52

    def check(self) -> None:
        if self.horizon_hours <= 0:
            raise ConfigError(f"horizon_hours must be positive, got {self.horizon_hours}")
        if self.p_true <= 0:
            raise ConfigError(f"p_true must be positive, got {self.p_true}")
        if not 0 <= self.spike_frequency <= 1:
            raise ConfigError(f"spike_frequency must be in [0, 1], got {self.spike_frequency}")
        if not 0 <= self.down_spike_frequency <= 1:
            raise ConfigError(
                f"down_spike_frequency must be in [0, 1], got {self.down_spike_frequency}"
            )
        if self.capacity_mw <= 0 or self.base_spot <= 0:
            raise ConfigError("capacity_mw and base_spot must be positive")
        if self.down_spread < 0 or self.up_spread < 0:
            raise ConfigError("price spreads must be nonnegative")
        if self.ensemble_size <= 0:
            raise ConfigError(f"ensemble_size must be positive, got {self.ensemble_size}")
        if self.price_cap < self.spike_threshold:
            raise ConfigError("price_cap must be at least spike_threshold")
        # normal-hour prices must stay strictly below the spike onset so that
        # spike statistics are uncontaminated
        if 1.75 * self.base_spot + self.up_spread >= self.base_spot + self.spike_threshold:
            raise ConfigError(
                "spike_threshold too low: normal up-regulation prices could reach it"
            )

    @classmethod
    def from_dict(cls, payload: dict) -> "SyntheticConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(payload) - known
        if unknown:
            raise ConfigError(f"unknown synthetic config fields: {sorted(unknown)}")
        cfg = cls(**payload)
        cfg.check()
        return cfg


def _ar1(innovations: np.ndarray, rho: float) -> np.ndarray:
    # y[t] = rho * y[t-1] + innovations[t], zero initial state
    return lfilter([1.0], [1.0, -rho], innovations)


def generate_synthetic(config: SyntheticConfig, seed: int) -> Dataset:
    """Deterministic synthetic dataset: same (config, seed) gives identical output.

    Guarantees r- <= s <= r+ in every hour; spikes only raise r+ (or lower r-).
    """
    config.check()
    rng = np.random.default_rng(seed)
    h = config.horizon_hours
    t = np.arange(h)

    phase_day, phase_week = rng.uniform(0, 2 * np.pi, size=2)
    g_innov = rng.normal(0.0, 0.03 * config.capacity_mw, size=h)
    g = config.capacity_mw * (
        0.45
        + 0.25 * np.sin(2 * np.pi * t / 24 + phase_day)
        + 0.15 * np.sin(2 * np.pi * t / (24 * 7) + phase_week)
    ) + _ar1(g_innov, 0.9)
    g = np.clip(g, 0.0, config.capacity_mw)

    s_innov = rng.uniform(-0.05 * config.base_spot, 0.05 * config.base_spot, size=h)
    s = config.base_spot * (1 + 0.25 * np.sin(2 * np.pi * (t % 24 - 18) / 24)) + _ar1(s_innov, 0.9)

    r_minus = s - config.down_spread * rng.uniform(0.05, 1.0, size=h)
    r_plus = s + config.up_spread * rng.uniform(0.05, 1.0, size=h)

    spike_mask = rng.random(h) < config.spike_frequency
    spike_u = rng.random(h)
    spikes = config.spike_threshold * spike_u ** (-1.0 / config.p_true)
    r_plus = np.where(spike_mask, np.maximum(r_plus, spikes), r_plus)
    r_plus = np.minimum(r_plus, config.price_cap)

    down_mask = rng.random(h) < config.down_spike_frequency
    down_u = rng.random(h)
    down_spikes = config.spike_threshold * down_u ** (-1.0 / config.p_true)
    r_minus = np.where(down_mask, s - down_spikes, r_minus)
    r_minus = np.maximum(r_minus, -config.price_cap)

    ensembles = g[:, None] + config.forecast_noise * rng.standard_normal((h, config.ensemble_size))
    ensembles = np.clip(ensembles, 0.0, None)

    start = np.datetime64(int(_to_utc(datetime.fromisoformat(config.start)).timestamp()), "s")
    times = start + np.arange(h) * HOUR
    x = np.column_stack([g, s, r_minus, r_plus])
    return Dataset(times, x, ensembles)
