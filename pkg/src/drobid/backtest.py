"""Leave-one-season-out backtesting of nomination strategies.

Each season is tested once against supports and references built from the
remaining data only. Per test hour the forecast-conditioned reference is
rebuilt and one robust nomination is solved per budget, alongside the
mean-forecast baseline. Hours are independent, so the loop parallelizes over
fixed chunks; results are reduced in dataset order, which makes report bundles
byte-identical for any worker count.
"""
from __future__ import annotations

import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, fields

import numpy as np

from .calibration import DEFAULT_THRESHOLDS, TailReport, tail_exceedance
from .dro_core import (
    mean_forecast_nomination,
    nomination_bounds_from_support,
    solve_nomination_grid,
)
from .errors import ConfigError, DataError, SolverError
from .geometry import DEFAULT_MARGIN, build_support_x, build_support_xi
from .market_data import Dataset, SeasonFold, split_seasons
from .reference import DEFAULT_ALPHA, DEFAULT_BETA, build_reference
from .settlement import cumulative_profit, drop_statistics, seasonal_comparison

CHUNK_HOURS = 96  # fixed chunk size keeps results independent of the worker count

BASELINE = "mean_forecast"


def strategy_name(epsilon: float) -> str:
    return f"dro_eps_{epsilon:g}"


@dataclass(frozen=True)
class BacktestConfig:
    alpha: float = DEFAULT_ALPHA
    beta: float = DEFAULT_BETA
    epsilons: tuple[float, ...] = (0.5, 1.0, 1.5)
    margin: float = DEFAULT_MARGIN
    max_samples: int | None = None
    jobs: int | None = None  # None -> all available processors
    bounds: tuple[float, float] | None = None  # None -> [0, g-box upper] per fold
    tol: float = 1e-8
    thresholds: tuple[float, ...] = DEFAULT_THRESHOLDS
    seed: int | None = None  # echoed in reports of synthetic runs

    def check(self) -> None:
        if not 0 < self.alpha <= 1:
            raise ConfigError(f"alpha must be in (0, 1], got {self.alpha}")
        if self.beta <= 0:
            raise ConfigError(f"beta must be positive, got {self.beta}")
        if not self.epsilons:
            raise ConfigError("epsilons must be non-empty")
        if any(e < 0 for e in self.epsilons):
            raise ConfigError(f"epsilons must be nonnegative, got {self.epsilons}")
        if list(self.epsilons) != sorted(self.epsilons):
            raise ConfigError("epsilons must be sorted ascending")
        if self.margin < 0:
            raise ConfigError(f"margin must be nonnegative, got {self.margin}")
        if self.max_samples is not None and self.max_samples <= 0:
            raise ConfigError(f"max_samples must be positive, got {self.max_samples}")
        if self.jobs is not None and self.jobs < 1:
            raise ConfigError(f"jobs must be at least 1, got {self.jobs}")
        if self.bounds is not None and not self.bounds[0] <= self.bounds[1]:
            raise ConfigError(f"nomination bounds must satisfy lo <= hi, got {self.bounds}")

    @property
    def strategies(self) -> list[str]:
        return [BASELINE] + [strategy_name(e) for e in self.epsilons]

    def to_dict(self) -> dict:
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            out[f.name] = list(v) if isinstance(v, tuple) else v
        return out

    @classmethod
    def from_dict(cls, payload: dict) -> "BacktestConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(payload) - known
        if unknown:
            raise ConfigError(f"unknown backtest config fields: {sorted(unknown)}")
        norm = dict(payload)
        if "epsilons" in norm:
            norm["epsilons"] = tuple(sorted(float(e) for e in norm["epsilons"]))
        if "thresholds" in norm:
            norm["thresholds"] = tuple(float(q) for q in norm["thresholds"])
        if "bounds" in norm and norm["bounds"] is not None:
            norm["bounds"] = tuple(float(b) for b in norm["bounds"])
        cfg = cls(**norm)
        cfg.check()
        return cfg


@dataclass(frozen=True)
class FoldSummary:
    label: str
    test_start: str
    test_end: str
    n_test_hours: int
    n_train_hours: int
    n_skipped: int


@dataclass
class BacktestReport:
    """Everything a backtest produced, in dataset hour order."""

    config: dict
    strategies: list[str]
    times: np.ndarray
    fold_labels: list[str]
    fold_of_hour: np.ndarray          # (H,) index into fold_labels
    nominations: np.ndarray           # (H, S), NaN on skipped hours
    profits: np.ndarray               # (H, S), NaN on skipped hours
    worst_case: np.ndarray            # (H, E) per-budget worst-case values
    skipped: np.ndarray               # (H,) bool
    folds: list[FoldSummary]
    seasonal_profit: dict             # strategy -> {fold label -> profit}
    seasonal_delta: dict              # dro strategy -> {fold label -> pct or None}
    drop_stats: dict                  # strategy -> DropStats
    tail: TailReport
    monotonicity_violations: int

    @property
    def n_skipped(self) -> int:
        return int(self.skipped.sum())


# worker state for process pools; populated by the initializer after fork/spawn
_STATE: dict = {}


def _init_worker(dataset: Dataset, config: BacktestConfig, fold_payload: list) -> None:
    _STATE["dataset"] = dataset
    _STATE["config"] = config
    _STATE["folds"] = fold_payload


def _fold_payload(dataset: Dataset, folds: list[SeasonFold], config: BacktestConfig) -> list:
    payload = []
    for fold in folds:
        if len(fold.train_indices) == 0:
            raise DataError(f"fold {fold.label!r} has an empty training set")
        train_x = dataset.x[fold.train_indices]
        box = build_support_x(train_x, config.margin)
        support = build_support_xi(train_x, config.margin)
        bounds = config.bounds if config.bounds is not None else nomination_bounds_from_support(box)
        payload.append(
            {
                "train_x": train_x,
                "train_f": dataset.f_mean[fold.train_indices],
                "support": support,
                "bounds": bounds,
                "test_indices": fold.test_indices,
            }
        )
    return payload


def _run_chunk(task: tuple[int, int, int]) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Solve hours [start, end) of one fold's test window. Returns per-hour results."""
    fold_idx, start, end = task
    dataset: Dataset = _STATE["dataset"]
    config: BacktestConfig = _STATE["config"]
    fold = _STATE["folds"][fold_idx]
    hours = fold["test_indices"][start:end]
    n_eps = len(config.epsilons)
    nominations = np.full((len(hours), 1 + n_eps), np.nan)
    worst_case = np.full((len(hours), n_eps), np.nan)
    skipped = np.zeros(len(hours), dtype=bool)
    for row, h in enumerate(hours):
        try:
            baseline = mean_forecast_nomination(dataset.ensembles[h], fold["bounds"])
            ref = build_reference(
                fold["train_x"], fold["train_f"], float(dataset.f_mean[h]),
                config.alpha, config.beta,
            )
            sols = solve_nomination_grid(
                ref, fold["support"], config.epsilons, fold["bounds"],
                tol=config.tol, max_samples=config.max_samples,
            )
        except SolverError:
            skipped[row] = True
            continue
        nominations[row, 0] = baseline
        nominations[row, 1:] = [s.n_star for s in sols]
        worst_case[row, :] = [s.worst_case_profit for s in sols]
    return np.asarray(hours), nominations, worst_case, skipped


def run_backtest(dataset: Dataset, config: BacktestConfig) -> BacktestReport:
    """Run the full leave-one-season-out evaluation.

    Deterministic for identical (dataset, config), regardless of the number of
    worker processes.
    """
    config.check()
    folds = split_seasons(dataset)
    if len(folds) < 2:
        raise DataError(f"backtest needs at least 2 season folds, got {len(folds)}")
    payload = _fold_payload(dataset, folds, config)

    tasks = []
    for fold_idx, fold in enumerate(folds):
        n_test = len(fold.test_indices)
        for start in range(0, n_test, CHUNK_HOURS):
            tasks.append((fold_idx, start, min(start + CHUNK_HOURS, n_test)))

    jobs = config.jobs if config.jobs is not None else (os.cpu_count() or 1)
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(
            max_workers=jobs, initializer=_init_worker, initargs=(dataset, config, payload)
        ) as pool:
            results = list(pool.map(_run_chunk, tasks))
    else:
        _init_worker(dataset, config, payload)
        results = [_run_chunk(t) for t in tasks]

    h_total = dataset.n_hours
    n_eps = len(config.epsilons)
    strategies = config.strategies
    nominations = np.full((h_total, len(strategies)), np.nan)
    worst_case = np.full((h_total, n_eps), np.nan)
    skipped = np.zeros(h_total, dtype=bool)
    fold_of_hour = np.empty(h_total, dtype=int)
    for fold_idx, fold in enumerate(folds):
        fold_of_hour[fold.test_indices] = fold_idx
    for hours, nom, wc, skip in results:
        nominations[hours] = nom
        worst_case[hours] = wc
        skipped[hours] = skip

    keep = ~skipped
    if not keep.any():
        raise SolverError("every test hour failed to solve; no report to build")
    profits = np.full_like(nominations, np.nan)
    drop_stats = {}
    for s, name in enumerate(strategies):
        series = cumulative_profit(nominations[keep, s], dataset.x[keep], dataset.times[keep])
        profits[keep, s] = series.hourly
        drop_stats[name] = drop_statistics(series)

    seasonal_profit = {
        name: {
            fold.label: float(np.nansum(profits[fold.test_indices, s]))
            for fold in folds
        }
        for s, name in enumerate(strategies)
    }
    baseline_map = seasonal_profit[BASELINE]
    seasonal_delta = {
        name: seasonal_comparison(seasonal_profit[name], baseline_map)
        for name in strategies[1:]
    }

    if n_eps > 1:
        diffs = np.diff(worst_case[keep], axis=1)
        violations = int(np.count_nonzero(diffs > 1e-8))
    else:
        violations = 0

    fold_summaries = [
        FoldSummary(
            label=fold.label,
            test_start=f"{fold.test_start}+00:00",
            test_end=f"{fold.test_end}+00:00",
            n_test_hours=len(fold.test_indices),
            n_train_hours=len(fold.train_indices),
            n_skipped=int(skipped[fold.test_indices].sum()),
        )
        for fold in folds
    ]
    tail = tail_exceedance(dataset.x[:, 3], config.thresholds)
    return BacktestReport(
        config=config.to_dict(),
        strategies=strategies,
        times=dataset.times,
        fold_labels=[f.label for f in folds],
        fold_of_hour=fold_of_hour,
        nominations=nominations,
        profits=profits,
        worst_case=worst_case,
        skipped=skipped,
        folds=fold_summaries,
        seasonal_profit=seasonal_profit,
        seasonal_delta=seasonal_delta,
        drop_stats=drop_stats,
        tail=tail,
        monotonicity_violations=violations,
    )


@dataclass(frozen=True)
class DayNominations:
    """24 hourly nominations per strategy; failed hours are flagged, not fatal."""

    times: np.ndarray
    strategies: list[str]
    nominations: np.ndarray  # (24, S), NaN where failed
    worst_case: np.ndarray   # (24, E)
    failed: np.ndarray       # (24,) bool


def nominate_day(train_x, train_f, day_forecasts, config: BacktestConfig) -> DayNominations:
    """Independent hourly nominations for one delivery day (24 forecast records)."""
    config.check()
    day_forecasts = list(day_forecasts)
    if len(day_forecasts) != 24:
        raise DataError(f"need exactly 24 forecast records, got {len(day_forecasts)}")
    train_x = np.asarray(train_x, dtype=float)
    train_f = np.asarray(train_f, dtype=float)
    if len(train_x) == 0:
        raise DataError("empty training set")
    box = build_support_x(train_x, config.margin)
    support = build_support_xi(train_x, config.margin)
    bounds = config.bounds if config.bounds is not None else nomination_bounds_from_support(box)
    strategies = config.strategies
    n_eps = len(config.epsilons)
    nominations = np.full((24, len(strategies)), np.nan)
    worst_case = np.full((24, n_eps), np.nan)
    failed = np.zeros(24, dtype=bool)
    for row, fc in enumerate(day_forecasts):
        try:
            nominations[row, 0] = mean_forecast_nomination(fc.ensemble, bounds)
            ref = build_reference(train_x, train_f, fc.f_mean, config.alpha, config.beta)
            sols = solve_nomination_grid(
                ref, support, config.epsilons, bounds,
                tol=config.tol, max_samples=config.max_samples,
            )
            nominations[row, 1:] = [s.n_star for s in sols]
            worst_case[row, :] = [s.worst_case_profit for s in sols]
        except SolverError:
            failed[row] = True
            nominations[row, :] = np.nan
    times = np.array([np.datetime64(int(fc.timestamp.timestamp()), "s") for fc in day_forecasts])
    return DayNominations(times, strategies, nominations, worst_case, failed)


# --- report emission -------------------------------------------------------

BUNDLE_FILES = ("report.json", "table2.csv", "table1.csv", "drops.csv", "nominations.csv")


def _time_str(t: np.datetime64) -> str:
    return f"{t}+00:00"


def _fmt(v: float) -> str:
    return repr(float(v))


def _delta_str(delta: float | None) -> str:
    return "NA" if delta is None else f"{delta:+.2f}%"


def emit_report(report: BacktestReport, out_dir: str) -> list[str]:
    """Write the report bundle; re-emitting an identical report is byte-identical.

    Returns the list of written file paths.
    """
    os.makedirs(out_dir, exist_ok=True)
    written = []

    payload = {
        "config": report.config,
        "strategies": report.strategies,
        "folds": [vars(f) for f in report.folds],
        "seasonal_profit_eur": report.seasonal_profit,
        "seasonal_delta_pct": report.seasonal_delta,
        "drop_stats": {
            name: {"n_drops": st.n_drops, "mean_drop_eur": st.mean_drop, "std_drop_eur": st.std_drop}
            for name, st in report.drop_stats.items()
        },
        "tail": {
            "n_obs": report.tail.n_obs,
            "p_hat": report.tail.p_hat,
            "rows": [vars(r) for r in report.tail.rows],
        },
        "n_skipped_hours": report.n_skipped,
        "worst_case_monotonicity_violations": report.monotonicity_violations,
    }
    path = os.path.join(out_dir, "report.json")
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, sort_keys=True, indent=2)
        fh.write("\n")
    written.append(path)

    path = os.path.join(out_dir, "table2.csv")
    dro_names = report.strategies[1:]
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("season," + ",".join(dro_names) + "\n")
        for label in report.fold_labels:
            cells = [_delta_str(report.seasonal_delta[name][label]) for name in dro_names]
            fh.write(label + "," + ",".join(cells) + "\n")
    written.append(path)

    path = os.path.join(out_dir, "table1.csv")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(report.tail.to_csv())
    written.append(path)

    path = os.path.join(out_dir, "drops.csv")
    keep_idx = np.flatnonzero(~report.skipped)
    kept_times = report.times[keep_idx]
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("strategy,start_time,trough_time,end_time,magnitude_eur,recovered\n")
        for name in report.strategies:
            for d in report.drop_stats[name].drops:
                fh.write(
                    f"{name},{_time_str(kept_times[d.start])},{_time_str(kept_times[d.trough])},"
                    f"{_time_str(kept_times[d.end])},{_fmt(d.magnitude)},{int(d.recovered)}\n"
                )
    written.append(path)

    path = os.path.join(out_dir, "nominations.csv")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("time,strategy,nomination_mwh,profit_eur\n")
        for h in keep_idx:
            for s, name in enumerate(report.strategies):
                fh.write(
                    f"{_time_str(report.times[h])},{name},"
                    f"{_fmt(report.nominations[h, s])},{_fmt(report.profits[h, s])}\n"
                )
    written.append(path)

    path = os.path.join(out_dir, "summary.txt")
    lines = [
        "Backtest summary",
        f"hours: {len(report.times)} total, {report.n_skipped} skipped",
        f"strategies: {', '.join(report.strategies)}",
        "",
        "Seasonal profit (EUR):",
    ]
    for label in report.fold_labels:
        cells = [f"{name}={report.seasonal_profit[name][label]:.2f}" for name in report.strategies]
        lines.append(f"  {label}: " + "  ".join(cells))
    lines.append("")
    lines.append("Seasonal delta vs baseline:")
    for label in report.fold_labels:
        cells = [f"{name}={_delta_str(report.seasonal_delta[name][label])}" for name in dro_names]
        lines.append(f"  {label}: " + "  ".join(cells))
    lines.append("")
    lines.append("Drop statistics (EUR):")
    for name in report.strategies:
        st = report.drop_stats[name]
        lines.append(f"  {name}: n={st.n_drops} mean={st.mean_drop:.2f} std={st.std_drop:.2f}")
    lines.append("")
    lines.append(f"tail p_hat: {report.tail.p_hat}")
    lines.append(f"worst-case monotonicity violations: {report.monotonicity_violations}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
    written.append(path)
    return written
