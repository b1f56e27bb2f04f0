import numpy as np
import pytest

from drobid.market_data import HOUR, Dataset


def make_constant_dataset(n_hours: int, g=50.0, s=30.0, r_minus=20.0, r_plus=40.0,
                          ensemble_size=4, start="2017-01-01T00:00:00"):
    """Every hour identical; forecasts equal realized generation exactly."""
    times = np.datetime64(start, "s") + np.arange(n_hours) * HOUR
    x = np.tile([g, s, r_minus, r_plus], (n_hours, 1))
    ensembles = np.full((n_hours, ensemble_size), g)
    return Dataset(times, x, ensembles)


@pytest.fixture
def rng():
    return np.random.default_rng(20_240_817)
