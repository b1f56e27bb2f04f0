"""FastAPI service wrapping the nomination library.

Endpoints convert pydantic payloads to arrays, call the core package, and
convert results back; no numerics live here.
"""
from __future__ import annotations

import numpy as np
from fastapi import FastAPI
from fastapi.responses import JSONResponse

from .. import __version__
from ..backtest import BacktestConfig, run_backtest
from ..calibration import suggest_radii, tail_exceedance
from ..dro_core import (
    mean_forecast_nomination,
    nomination_bounds_from_support,
    solve_nomination_grid,
)
from ..errors import ConfigError, DataError, SolverError
from ..geometry import build_support_x, build_support_xi
from ..market_data import Dataset, MarketRecord, SyntheticConfig, generate_synthetic, validate
from ..reference import build_reference
from . import schemas


def _hours_to_x(hours) -> np.ndarray:
    return np.array(
        [[h.generation_mwh, h.spot_eur_mwh, h.down_reg_eur_mwh, h.up_reg_eur_mwh] for h in hours]
    )


def _tail_response(report, radii_ok=True) -> schemas.CalibrateResponse:
    radii = None
    if radii_ok:
        try:
            radii = suggest_radii(report)
        except DataError:
            radii = None
    return schemas.CalibrateResponse(
        rows=[schemas.TailRowOut(**vars(r)) for r in report.rows],
        n_obs=report.n_obs,
        p_hat=report.p_hat,
        suggested_radii=radii,
    )


def create_app() -> FastAPI:
    app = FastAPI(title="drobid", version=__version__)

    @app.exception_handler(DataError)
    @app.exception_handler(ConfigError)
    def _bad_request(request, exc):
        return JSONResponse(status_code=400, content={"detail": str(exc)})

    @app.exception_handler(SolverError)
    def _solver_failure(request, exc):
        return JSONResponse(status_code=500, content={"detail": str(exc)})

    @app.get("/health", response_model=schemas.HealthResponse)
    def health():
        return schemas.HealthResponse(status="ok", version=__version__)

    @app.post("/validate", response_model=schemas.ValidateResponse)
    def validate_hours(request: schemas.ValidateRequest):
        records = [MarketRecord(h.time, h.generation_mwh, h.spot_eur_mwh,
                                h.down_reg_eur_mwh, h.up_reg_eur_mwh)
                   for h in request.hours]
        report = validate(records)
        return schemas.ValidateResponse(
            n_hours=report.n_hours,
            ordering_violations=report.ordering_violations,
            negative_down_reg=report.negative_down_reg,
            up_reg_above={f"{q:g}": c for q, c in report.up_reg_above.items()},
        )

    @app.post("/calibrate", response_model=schemas.CalibrateResponse)
    def calibrate(request: schemas.CalibrateRequest):
        if request.up_reg_prices is not None:
            prices = np.asarray(request.up_reg_prices, dtype=float)
        else:
            prices = _hours_to_x(request.hours)[:, 3]
        report = tail_exceedance(prices, tuple(request.thresholds))
        return _tail_response(report)

    @app.post("/nominate", response_model=schemas.NominateResponse)
    def nominate(request: schemas.NominateRequest):
        train_x = np.array(
            [
                [t.generation_mwh, t.spot_eur_mwh, t.down_reg_eur_mwh, t.up_reg_eur_mwh]
                for t in request.train
            ]
        )
        train_f = np.array([t.forecast_mwh for t in request.train])
        ensemble = np.asarray(request.ensemble, dtype=float)
        support = build_support_xi(train_x, request.margin)
        bounds = request.bounds
        if bounds is None:
            bounds = nomination_bounds_from_support(build_support_x(train_x, request.margin))
        ref = build_reference(train_x, train_f, float(ensemble.mean()),
                              request.alpha, request.beta)
        sols = solve_nomination_grid(
            ref, support, sorted(request.epsilons), bounds, max_samples=request.max_samples
        )
        return schemas.NominateResponse(
            mean_forecast_mwh=mean_forecast_nomination(ensemble, bounds),
            bounds=bounds,
            solutions=[
                schemas.NominationOut(
                    epsilon=s.epsilon,
                    nomination_mwh=s.n_star,
                    worst_case_profit_eur=s.worst_case_profit,
                    lam=s.lam,
                    lp_status=s.lp_status,
                )
                for s in sols
            ],
        )

    @app.post("/synth", response_model=schemas.SynthResponse)
    def synth(request: schemas.SynthRequest):
        config = SyntheticConfig(**request.config.model_dump())
        dataset = generate_synthetic(config, request.seed)
        hours = [
            schemas.MarketHour(
                time=r.timestamp,
                generation_mwh=r.g,
                spot_eur_mwh=r.s,
                down_reg_eur_mwh=r.r_minus,
                up_reg_eur_mwh=r.r_plus,
            )
            for r in dataset.market_records()
        ]
        return schemas.SynthResponse(
            hours=hours,
            forecast_means=[float(v) for v in dataset.f_mean],
            ensembles=dataset.ensembles.tolist() if request.include_ensembles else None,
        )

    @app.post("/backtest", response_model=schemas.BacktestResponse)
    def backtest(request: schemas.BacktestRequest):
        times = np.array(
            [np.datetime64(int(h.time.timestamp()), "s") for h in request.market],
            dtype="datetime64[s]",
        )
        dataset = Dataset(times, _hours_to_x(request.market), np.asarray(request.ensembles))
        config = BacktestConfig.from_dict(
            {**request.config.model_dump(), "epsilons": sorted(request.config.epsilons)}
        )
        report = run_backtest(dataset, config)
        return schemas.BacktestResponse(
            strategies=report.strategies,
            folds=[schemas.FoldOut(**vars(f)) for f in report.folds],
            seasonal_profit_eur=report.seasonal_profit,
            seasonal_delta_pct=report.seasonal_delta,
            drop_stats={
                name: schemas.DropStatsOut(
                    n_drops=st.n_drops, mean_drop_eur=st.mean_drop, std_drop_eur=st.std_drop
                )
                for name, st in report.drop_stats.items()
            },
            tail=_tail_response(report.tail),
            n_skipped_hours=report.n_skipped,
            worst_case_monotonicity_violations=report.monotonicity_violations,
        )

    return app
