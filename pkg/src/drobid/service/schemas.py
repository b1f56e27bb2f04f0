"""Pydantic request/response models for the HTTP service."""
from __future__ import annotations

from datetime import datetime

from pydantic import BaseModel, Field, model_validator


class MarketHour(BaseModel):
    time: datetime
    generation_mwh: float = Field(ge=0, allow_inf_nan=False)
    spot_eur_mwh: float = Field(allow_inf_nan=False)
    down_reg_eur_mwh: float = Field(allow_inf_nan=False)
    up_reg_eur_mwh: float = Field(allow_inf_nan=False)


class ValidateRequest(BaseModel):
    hours: list[MarketHour] = Field(min_length=1)


class ValidateResponse(BaseModel):
    n_hours: int
    ordering_violations: int
    negative_down_reg: int
    up_reg_above: dict[str, int]


class CalibrateRequest(BaseModel):
    up_reg_prices: list[float] | None = None
    hours: list[MarketHour] | None = None
    thresholds: list[float] = [200.0, 500.0, 1000.0, 3000.0]

    @model_validator(mode="after")
    def _one_source(self):
        if (self.up_reg_prices is None) == (self.hours is None):
            raise ValueError("provide exactly one of up_reg_prices or hours")
        return self


class TailRowOut(BaseModel):
    q: float
    count: int
    freq: float
    epsilon_q: float


class CalibrateResponse(BaseModel):
    rows: list[TailRowOut]
    n_obs: int
    p_hat: float | None
    suggested_radii: list[float] | None


class TrainHour(BaseModel):
    generation_mwh: float = Field(ge=0, allow_inf_nan=False)
    spot_eur_mwh: float = Field(allow_inf_nan=False)
    down_reg_eur_mwh: float = Field(allow_inf_nan=False)
    up_reg_eur_mwh: float = Field(allow_inf_nan=False)
    forecast_mwh: float = Field(ge=0, allow_inf_nan=False)


class NominateRequest(BaseModel):
    train: list[TrainHour] = Field(min_length=1)
    ensemble: list[float] = Field(min_length=1)
    epsilons: list[float] = [0.5, 1.0, 1.5]
    alpha: float = Field(default=1 / 3, gt=0, le=1)
    beta: float = Field(default=2.0, gt=0)
    margin: float = Field(default=0.2, ge=0)
    max_samples: int | None = Field(default=None, gt=0)
    bounds: tuple[float, float] | None = None


class NominationOut(BaseModel):
    epsilon: float
    nomination_mwh: float
    worst_case_profit_eur: float
    lam: float
    lp_status: str


class NominateResponse(BaseModel):
    mean_forecast_mwh: float
    bounds: tuple[float, float]
    solutions: list[NominationOut]


class SynthConfigIn(BaseModel):
    horizon_hours: int = Field(default=2000, gt=0)
    capacity_mw: float = Field(default=100.0, gt=0)
    base_spot: float = Field(default=40.0, gt=0)
    spike_frequency: float = Field(default=0.02, ge=0, le=1)
    spike_threshold: float = Field(default=200.0, gt=0)
    p_true: float = Field(default=1.0, gt=0)
    price_cap: float = Field(default=4000.0, gt=0)
    forecast_noise: float = Field(default=6.0, ge=0)
    ensemble_size: int = Field(default=52, gt=0)
    start: str = "2017-01-01T00:00:00+00:00"


class SynthRequest(BaseModel):
    seed: int
    config: SynthConfigIn = SynthConfigIn()
    include_ensembles: bool = False


class SynthResponse(BaseModel):
    hours: list[MarketHour]
    forecast_means: list[float]
    ensembles: list[list[float]] | None


class BacktestConfigIn(BaseModel):
    alpha: float = Field(default=1 / 3, gt=0, le=1)
    beta: float = Field(default=2.0, gt=0)
    epsilons: list[float] = [0.5, 1.0, 1.5]
    margin: float = Field(default=0.2, ge=0)
    max_samples: int | None = Field(default=None, gt=0)
    jobs: int | None = Field(default=None, ge=1)


class BacktestRequest(BaseModel):
    market: list[MarketHour] = Field(min_length=1)
    ensembles: list[list[float]] = Field(min_length=1)
    config: BacktestConfigIn = BacktestConfigIn()

    @model_validator(mode="after")
    def _aligned(self):
        if len(self.market) != len(self.ensembles):
            raise ValueError("market and ensembles must have the same length")
        return self


class FoldOut(BaseModel):
    label: str
    test_start: str
    test_end: str
    n_test_hours: int
    n_train_hours: int
    n_skipped: int


class DropStatsOut(BaseModel):
    n_drops: int
    mean_drop_eur: float
    std_drop_eur: float


class BacktestResponse(BaseModel):
    strategies: list[str]
    folds: list[FoldOut]
    seasonal_profit_eur: dict[str, dict[str, float]]
    seasonal_delta_pct: dict[str, dict[str, float | None]]
    drop_stats: dict[str, DropStatsOut]
    tail: CalibrateResponse
    n_skipped_hours: int
    worst_case_monotonicity_violations: int


class HealthResponse(BaseModel):
    status: str
    version: str
