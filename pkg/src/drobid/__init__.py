"""drobid: distributionally robust day-ahead energy nominations.

Core pipeline: ingest or synthesize hourly market data, calibrate the spike
tail, build forecast-conditioned reference distributions, solve the robust
nomination LP per hour, and evaluate strategies in seasonal backtests.
"""

from .backtest import BacktestConfig, BacktestReport, emit_report, nominate_day, run_backtest
from .calibration import TailReport, estimate_tail_exponent, suggest_radii, tail_exceedance
from .dro_core import (
    NominationProblem,
    NominationSolution,
    assemble_lp,
    mean_forecast_nomination,
    saa_nomination,
    solve_lp,
    solve_nomination,
    worst_case_oracle,
)
from .errors import ConfigError, DataError, SolverError
from .geometry import (
    Box4,
    PolyhedralSupport,
    TransportCost,
    build_support_x,
    build_support_xi,
    lift,
    max_mass_at_deviation,
    transport_cost,
)
from .market_data import (
    Dataset,
    ForecastRecord,
    MarketRecord,
    SeasonFold,
    SyntheticConfig,
    generate_synthetic,
    ingest_forecast_csv,
    ingest_market_csv,
    split_seasons,
    validate,
)
from .reference import EmpiricalDistribution, build_reference, compute_weights, select_neighbors
from .settlement import (
    cumulative_profit,
    drop_statistics,
    seasonal_comparison,
    settle_profit,
)

__version__ = "0.1.0"
