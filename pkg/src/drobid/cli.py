"""Command-line front end.

Thin wiring over the library: every number a subcommand prints or writes is
reproducible through library calls alone. Exit codes: 0 success, 1 usage or
configuration error, 2 data error, 3 solver error.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import dataclass, replace
from datetime import datetime, timedelta, timezone

import numpy as np

from .backtest import BacktestConfig, emit_report, nominate_day, run_backtest
from .calibration import DEFAULT_THRESHOLDS, suggest_radii, tail_exceedance
from .errors import ConfigError, DataError, SolverError
from .market_data import (
    Dataset,
    SyntheticConfig,
    emit_forecast_csv,
    emit_market_csv,
    generate_synthetic,
    ingest_forecast_csv,
    ingest_market_csv,
    validate,
)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_SOLVER = 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse would exit(2); we map usage errors to 1
        raise UsageError(message)


@dataclass
class RunConfig:
    market: str | None = None
    forecast: str | None = None
    out: str | None = None
    ensemble_size: int = 52
    backtest: BacktestConfig = None
    synth: SyntheticConfig = None

    def __post_init__(self):
        if self.backtest is None:
            self.backtest = BacktestConfig()
        if self.synth is None:
            self.synth = SyntheticConfig()


_BACKTEST_KEYS = (
    "alpha", "beta", "epsilons", "margin", "max_samples", "jobs", "bounds",
    "tol", "thresholds", "seed",
)


def load_config(path: str | None) -> RunConfig:
    """Load the JSON run configuration, filling documented defaults."""
    if path is None:
        return RunConfig()
    try:
        with open(path, encoding="utf-8") as fh:
            payload = json.load(fh)
    except OSError as exc:
        raise DataError(f"cannot read config {path!r}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise DataError(f"config {path!r} is not valid JSON: {exc}") from None
    if not isinstance(payload, dict):
        raise ConfigError("config root must be a JSON object")
    known = {"market", "forecast", "out", "ensemble_size", "synth", *_BACKTEST_KEYS}
    unknown = set(payload) - known
    if unknown:
        raise ConfigError(f"unknown config fields: {sorted(unknown)}")
    bt = BacktestConfig.from_dict({k: payload[k] for k in _BACKTEST_KEYS if k in payload})
    synth = SyntheticConfig.from_dict(payload.get("synth", {}))
    ensemble_size = payload.get("ensemble_size", 52)
    if not isinstance(ensemble_size, int) or ensemble_size <= 0:
        raise ConfigError(f"ensemble_size must be a positive integer, got {ensemble_size!r}")
    return RunConfig(
        market=payload.get("market"),
        forecast=payload.get("forecast"),
        out=payload.get("out"),
        ensemble_size=ensemble_size,
        backtest=bt,
        synth=synth,
    )


def _override_backtest(cfg: BacktestConfig, args) -> BacktestConfig:
    payload = cfg.to_dict()
    if getattr(args, "alpha", None) is not None:
        payload["alpha"] = args.alpha
    if getattr(args, "beta", None) is not None:
        payload["beta"] = args.beta
    if getattr(args, "epsilon", None) is not None:
        payload["epsilons"] = [args.epsilon]
    if getattr(args, "epsilons", None) is not None:
        payload["epsilons"] = [float(v) for v in args.epsilons.split(",")]
    if getattr(args, "margin", None) is not None:
        payload["margin"] = args.margin
    if getattr(args, "max_samples", None) is not None:
        payload["max_samples"] = args.max_samples
    if getattr(args, "jobs", None) is not None:
        payload["jobs"] = args.jobs
    if getattr(args, "seed", None) is not None:
        payload["seed"] = args.seed
    if getattr(args, "thresholds", None) is not None:
        payload["thresholds"] = _parse_thresholds(args.thresholds)
    return BacktestConfig.from_dict(payload)


def _parse_thresholds(text: str) -> tuple[float, ...]:
    try:
        values = tuple(float(v) for v in text.split(","))
    except ValueError:
        raise UsageError(f"cannot parse thresholds {text!r}") from None
    return values


def _require(path: str | None, flag: str) -> str:
    if not path:
        raise UsageError(f"missing required input: {flag}")
    if not os.path.exists(path):
        raise DataError(f"file not found: {path}")
    return path


def _load_market(args, cfg: RunConfig):
    return ingest_market_csv(_require(args.market or cfg.market, "--market"))


def _load_dataset(args, cfg: RunConfig) -> Dataset:
    records = _load_market(args, cfg)
    forecast_path = _require(args.forecast or cfg.forecast, "--forecast")
    ensemble_size = args.ensemble_size or cfg.ensemble_size
    forecasts = ingest_forecast_csv(forecast_path, ensemble_size)
    return Dataset.from_records(records, forecasts)


def _out_path(args, cfg: RunConfig, default: str) -> str:
    return args.out or cfg.out or default


def _cmd_ingest(args, cfg: RunConfig) -> int:
    records = _load_market(args, cfg)
    summary = {
        "market_rows": len(records),
        "start": records[0].timestamp.isoformat(),
        "end": records[-1].timestamp.isoformat(),
    }
    forecasts = None
    if args.forecast or cfg.forecast:
        forecasts = ingest_forecast_csv(
            _require(args.forecast or cfg.forecast, "--forecast"),
            args.ensemble_size or cfg.ensemble_size,
        )
        summary["forecast_rows"] = len(forecasts)
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        emit_market_csv(records, os.path.join(args.out, "market.csv"))
        summary["written"] = ["market.csv"]
        if forecasts:
            emit_forecast_csv(
                forecasts, args.ensemble_size or cfg.ensemble_size,
                os.path.join(args.out, "forecast.csv"),
            )
            summary["written"].append("forecast.csv")
    print(json.dumps(summary, sort_keys=True, indent=2))
    return EXIT_OK


def _cmd_validate(args, cfg: RunConfig) -> int:
    records = _load_market(args, cfg)
    report = validate(records)
    text = report.to_json()
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def _cmd_calibrate(args, cfg: RunConfig) -> int:
    records = _load_market(args, cfg)
    thresholds = _parse_thresholds(args.thresholds) if args.thresholds else DEFAULT_THRESHOLDS
    prices = np.array([r.r_plus for r in records])
    report = tail_exceedance(prices, thresholds)
    out = _out_path(args, cfg, "table1.csv")
    with open(out, "w", encoding="utf-8") as fh:
        fh.write(report.to_csv())
    summary = {"out": out, "n_obs": report.n_obs, "p_hat": report.p_hat}
    try:
        summary["suggested_radii"] = suggest_radii(report)
    except DataError:
        summary["suggested_radii"] = None
    print(json.dumps(summary, sort_keys=True, indent=2))
    return EXIT_OK


def _cmd_nominate(args, cfg: RunConfig) -> int:
    bt = _override_backtest(cfg.backtest, args)
    records = _load_market(args, cfg)
    forecast_path = _require(args.forecast or cfg.forecast, "--forecast")
    forecasts = ingest_forecast_csv(forecast_path, args.ensemble_size or cfg.ensemble_size)
    try:
        bid_day = datetime.strptime(args.date, "%Y-%m-%d").replace(tzinfo=timezone.utc)
    except ValueError:
        raise UsageError(f"--date must be YYYY-MM-DD, got {args.date!r}") from None
    delivery_start = bid_day + timedelta(days=1)
    delivery_hours = [delivery_start + timedelta(hours=i) for i in range(24)]
    by_time = {f.timestamp: f for f in forecasts}
    missing = [t for t in delivery_hours if t not in by_time]
    if missing:
        raise DataError(
            f"forecast file lacks {len(missing)} delivery hours for {delivery_start.date()} "
            f"(first missing: {missing[0].isoformat()})"
        )
    day_forecasts = [by_time[t] for t in delivery_hours]
    train_records = [r for r in records if r.timestamp < delivery_start]
    train_forecasts = [f for f in forecasts if f.timestamp < delivery_start]
    if not train_records or not train_forecasts:
        raise DataError("no training hours before the delivery day")
    train = Dataset.from_records(train_records, train_forecasts)
    day = nominate_day(train.x, train.f_mean, day_forecasts, bt)
    out = _out_path(args, cfg, "nominations.csv")
    with open(out, "w", encoding="utf-8") as fh:
        fh.write("time," + ",".join(day.strategies) + "\n")
        for i in range(24):
            cells = [repr(float(v)) if np.isfinite(v) else "failed" for v in day.nominations[i]]
            fh.write(day_forecasts[i].timestamp.isoformat() + "," + ",".join(cells) + "\n")
    print(json.dumps({"out": out, "failed_hours": int(day.failed.sum())}, sort_keys=True))
    return EXIT_OK if not day.failed.all() else EXIT_SOLVER


def _cmd_backtest(args, cfg: RunConfig) -> int:
    bt = _override_backtest(cfg.backtest, args)
    dataset = _load_dataset(args, cfg)
    report = run_backtest(dataset, bt)
    out_dir = _out_path(args, cfg, "backtest_out")
    try:
        written = emit_report(report, out_dir)
    except OSError as exc:
        raise DataError(f"cannot write report bundle to {out_dir!r}: {exc}") from None
    print(json.dumps(
        {
            "out": out_dir,
            "files": [os.path.basename(p) for p in written],
            "n_hours": int(len(report.times)),
            "n_skipped": report.n_skipped,
        },
        sort_keys=True, indent=2,
    ))
    return EXIT_OK


def _cmd_synth(args, cfg: RunConfig) -> int:
    synth_cfg = cfg.synth
    if args.horizon is not None:
        synth_cfg = replace(synth_cfg, horizon_hours=args.horizon)
        synth_cfg.check()
    dataset = generate_synthetic(synth_cfg, args.seed)
    out = args.out or cfg.out or "synth_out"
    os.makedirs(out, exist_ok=True)
    market_path = os.path.join(out, "market.csv")
    forecast_path = os.path.join(out, "forecast.csv")
    emit_market_csv(dataset.market_records(), market_path)
    emit_forecast_csv(dataset.forecast_records(), synth_cfg.ensemble_size, forecast_path)
    print(json.dumps(
        {"market": market_path, "forecast": forecast_path, "hours": dataset.n_hours,
         "seed": args.seed},
        sort_keys=True, indent=2,
    ))
    return EXIT_OK


def _cmd_serve(args, cfg: RunConfig) -> int:
    import uvicorn

    from .service import create_app

    uvicorn.run(create_app(), host=args.host, port=args.port)
    return EXIT_OK


def build_parser() -> _Parser:
    parser = _Parser(prog="drobid", description=__doc__)
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")

    def common(p, forecast=False):
        p.add_argument("--config", help="JSON run configuration")
        p.add_argument("--market", help="market CSV path")
        if forecast:
            p.add_argument("--forecast", help="ensemble forecast CSV path")
            p.add_argument("--ensemble-size", dest="ensemble_size", type=int,
                           help="number of ensemble columns (default 52)")
        p.add_argument("--out", help="output path")

    p = sub.add_parser("ingest", help="parse and normalize input CSVs")
    common(p, forecast=True)

    p = sub.add_parser("validate", help="report price-ordering violations and tail counts")
    common(p)

    p = sub.add_parser("calibrate", help="tail exceedance table and exponent fit")
    common(p)
    p.add_argument("--thresholds", help="comma-separated thresholds in EUR/MWh")

    p = sub.add_parser("nominate", help="solve next-day nominations for a bidding date")
    common(p, forecast=True)
    p.add_argument("--date", required=True, help="bidding day D (YYYY-MM-DD); delivers D+1")
    p.add_argument("--epsilon", type=float, help="single transport budget")
    p.add_argument("--epsilons", help="comma-separated transport budgets")
    p.add_argument("--alpha", type=float, help="neighbor fraction in (0, 1]")
    p.add_argument("--beta", type=float, help="weight decay exponent")
    p.add_argument("--margin", type=float, help="support safety margin")
    p.add_argument("--max-samples", dest="max_samples", type=int,
                   help="cap on reference atoms per hour")

    p = sub.add_parser("backtest", help="leave-one-season-out evaluation")
    common(p, forecast=True)
    p.add_argument("--epsilon", type=float, help="single transport budget")
    p.add_argument("--epsilons", help="comma-separated transport budgets")
    p.add_argument("--alpha", type=float, help="neighbor fraction in (0, 1]")
    p.add_argument("--beta", type=float, help="weight decay exponent")
    p.add_argument("--margin", type=float, help="support safety margin")
    p.add_argument("--max-samples", dest="max_samples", type=int,
                   help="cap on reference atoms per hour")
    p.add_argument("--jobs", type=int, help="worker processes (default: all cores)")
    p.add_argument("--thresholds", help="comma-separated tail thresholds")

    p = sub.add_parser("synth", help="generate a deterministic synthetic dataset")
    p.add_argument("--config", help="JSON run configuration (synth section)")
    p.add_argument("--seed", type=int, required=True, help="explicit 64-bit RNG seed")
    p.add_argument("--horizon", type=int, help="horizon in hours")
    p.add_argument("--out", help="output directory")

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--config", help="JSON run configuration")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    return parser


_COMMANDS = {
    "ingest": _cmd_ingest,
    "validate": _cmd_validate,
    "calibrate": _cmd_calibrate,
    "nominate": _cmd_nominate,
    "backtest": _cmd_backtest,
    "synth": _cmd_synth,
    "serve": _cmd_serve,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help prints and exits
        return int(exc.code or 0)
    if not args.command:
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    try:
        cfg = load_config(getattr(args, "config", None))
        return _COMMANDS[args.command](args, cfg)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except SolverError as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
