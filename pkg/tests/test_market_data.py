import numpy as np
import pytest

from drobid.errors import ConfigError, DataError
from drobid.market_data import (
    HOUR,
    Dataset,
    SyntheticConfig,
    emit_forecast_csv,
    emit_market_csv,
    generate_synthetic,
    ingest_forecast_csv,
    ingest_market_csv,
    split_seasons,
    validate,
)

HEADER = "time,generation_mwh,spot_eur_mwh,down_reg_eur_mwh,up_reg_eur_mwh"


def write_market(tmp_path, rows, name="market.csv"):
    path = tmp_path / name
    path.write_text(HEADER + "\n" + "".join(r + "\n" for r in rows))
    return str(path)


class TestIngestMarket:
    def test_three_rows_sorted(self, tmp_path):
        path = write_market(
            tmp_path,
            [
                "2020-01-01T02:00:00+00:00,5,30,20,50",
                "2020-01-01T00:00:00+00:00,4,31,21,51",
                "2020-01-01T01:00:00+00:00,3,32,22,52",
            ],
        )
        records = ingest_market_csv(path)
        assert len(records) == 3
        assert [r.g for r in records] == [4, 3, 5]
        assert records[0].timestamp.hour == 0 and records[2].timestamp.hour == 2

    def test_duplicate_hour_names_timestamp(self, tmp_path):
        path = write_market(
            tmp_path,
            ["2020-01-01T00:00:00+00:00,5,30,20,50", "2020-01-01T00:00:00+00:00,6,30,20,50"],
        )
        with pytest.raises(DataError, match="duplicate timestamp 2020-01-01T00:00:00"):
            ingest_market_csv(path)

    def test_nan_spot_names_line_and_column(self, tmp_path):
        path = write_market(
            tmp_path,
            ["2020-01-01T00:00:00+00:00,5,30,20,50", "2020-01-01T01:00:00+00:00,5,NaN,20,50"],
        )
        with pytest.raises(DataError, match=r"3: column 'spot_eur_mwh'"):
            ingest_market_csv(path)

    def test_gap_is_error(self, tmp_path):
        path = write_market(
            tmp_path,
            ["2020-01-01T00:00:00+00:00,5,30,20,50", "2020-01-01T02:00:00+00:00,5,30,20,50"],
        )
        with pytest.raises(DataError, match="non-hourly spacing"):
            ingest_market_csv(path)

    def test_offset_normalized_to_utc(self, tmp_path):
        path = write_market(
            tmp_path,
            ["2020-01-01T02:00:00+02:00,5,30,20,50", "2020-01-01T01:00:00+00:00,6,30,20,50"],
        )
        records = ingest_market_csv(path)
        assert [r.timestamp.hour for r in records] == [0, 1]

    def test_bad_header(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("time,gen,spot,down,up\n")
        with pytest.raises(DataError, match="bad header"):
            ingest_market_csv(str(path))

    def test_negative_generation(self, tmp_path):
        path = write_market(tmp_path, ["2020-01-01T00:00:00+00:00,-1,30,20,50"])
        with pytest.raises(DataError, match="negative generation"):
            ingest_market_csv(path)

    def test_missing_file(self):
        with pytest.raises(DataError, match="cannot read market CSV"):
            ingest_market_csv("/nonexistent/market.csv")


class TestIngestForecast:
    def test_mean_computed(self, tmp_path):
        path = tmp_path / "fc.csv"
        path.write_text(
            "time,ens_001,ens_002,ens_003\n2020-01-01T00:00:00+00:00,8,10,12\n"
        )
        records = ingest_forecast_csv(str(path), 3)
        assert records[0].f_mean == 10.0
        assert records[0].ensemble == (8.0, 10.0, 12.0)

    def test_wrong_column_count(self, tmp_path):
        cols = ",".join(f"ens_{i:03d}" for i in range(1, 52))
        path = tmp_path / "fc.csv"
        path.write_text(f"time,{cols}\n")
        with pytest.raises(DataError, match="bad forecast header"):
            ingest_forecast_csv(str(path), 52)

    def test_empty_file_warns(self, tmp_path, caplog):
        path = tmp_path / "fc.csv"
        path.write_text("")
        with caplog.at_level("WARNING"):
            records = ingest_forecast_csv(str(path), 3)
        assert records == []
        assert "empty forecast file" in caplog.text

    def test_negative_member_rejected(self, tmp_path):
        path = tmp_path / "fc.csv"
        path.write_text("time,ens_001,ens_002\n2020-01-01T00:00:00+00:00,5,-1\n")
        with pytest.raises(DataError, match="negative forecast"):
            ingest_forecast_csv(str(path), 2)


class TestValidate:
    def test_ordered_record_clean(self):
        ds = _small_dataset([(5, 30, 20, 50)])
        report = validate(ds)
        assert report.ordering_violations == 0
        assert report.negative_down_reg == 0

    def test_upreg_below_spot_counts(self):
        ds = _small_dataset([(5, 30, 20, 25)])
        assert validate(ds).ordering_violations == 1

    def test_threshold_counts(self):
        ds = _small_dataset([(1, 30, 20, 100), (1, 30, 20, 250), (1, 30, 20, 600)])
        report = validate(ds)
        assert [report.up_reg_above[q] for q in (200.0, 500.0, 1000.0, 3000.0)] == [2, 1, 0, 0]

    def test_negative_downreg_counted(self):
        ds = _small_dataset([(1, 30, -5, 100), (1, 30, 4, 100)])
        assert validate(ds).negative_down_reg == 1

    def test_idempotent(self):
        ds = _small_dataset([(1, 30, 20, 100), (2, 31, 21, 101)])
        assert validate(ds) == validate(ds)

    def test_json_shape(self):
        import json

        payload = json.loads(validate(_small_dataset([(1, 30, 20, 100)])).to_json())
        assert set(payload) == {"n_hours", "ordering_violations", "negative_down_reg", "up_reg_above"}


def _small_dataset(rows):
    times = np.datetime64("2020-01-01T00:00:00", "s") + np.arange(len(rows)) * HOUR
    x = np.array(rows, dtype=float)
    ens = x[:, :1].copy()
    return Dataset(times, x, ens)


def _hour_range(start, end_exclusive):
    t0 = np.datetime64(start, "s")
    t1 = np.datetime64(end_exclusive, "s")
    n = int((t1 - t0) / HOUR)
    return t0 + np.arange(n) * HOUR


class TestSplitSeasons:
    def test_four_years_17_folds(self):
        times = _hour_range("2017-01-01T00:00:00", "2021-02-01T00:00:00")
        folds = split_seasons(times)
        assert len(folds) == 17
        assert folds[0].label == "Winter 2016-17"
        assert folds[1].label == "Spring 2017"
        assert folds[-1].label == "Winter 2020-21"

    def test_partition_and_disjoint(self):
        times = _hour_range("2017-01-01T00:00:00", "2021-02-01T00:00:00")
        folds = split_seasons(times)
        all_test = np.concatenate([f.test_indices for f in folds])
        assert len(all_test) == len(times)
        assert len(np.unique(all_test)) == len(times)
        for f in folds:
            assert np.intersect1d(f.test_indices, f.train_indices).size == 0
            assert len(f.test_indices) + len(f.train_indices) == len(times)

    def test_single_season_one_fold_empty_train(self):
        times = _hour_range("2019-03-01T00:00:00", "2019-06-01T00:00:00")
        folds = split_seasons(times)
        assert len(folds) == 1
        assert folds[0].label == "Spring 2019"
        assert len(folds[0].train_indices) == 0

    def test_summer_autumn_two_folds(self):
        times = _hour_range("2019-06-01T00:00:00", "2019-12-01T00:00:00")
        folds = split_seasons(times)
        assert [f.label for f in folds] == ["Summer 2019", "Autumn 2019"]

    def test_short_remnant_merges(self):
        # 9 days of February merge into the spring fold
        times = _hour_range("2017-02-20T00:00:00", "2017-06-01T00:00:00")
        folds = split_seasons(times)
        assert [f.label for f in folds] == ["Spring 2017"]
        assert len(folds[0].test_indices) == len(times)

    def test_month_of_february_is_own_fold(self):
        times = _hour_range("2017-02-01T00:00:00", "2017-06-01T00:00:00")
        folds = split_seasons(times)
        assert [f.label for f in folds] == ["Winter 2016-17", "Spring 2017"]

    def test_too_short_errors(self):
        times = _hour_range("2019-03-01T00:00:00", "2019-04-15T00:00:00")
        with pytest.raises(DataError, match="3 months"):
            split_seasons(times)


class TestSynthetic:
    def test_deterministic(self):
        cfg = SyntheticConfig(horizon_hours=500)
        a = generate_synthetic(cfg, 42)
        b = generate_synthetic(cfg, 42)
        assert (a.x == b.x).all() and (a.ensembles == b.ensembles).all()
        assert (a.times == b.times).all()

    def test_seed_changes_data(self):
        cfg = SyntheticConfig(horizon_hours=500)
        a = generate_synthetic(cfg, 1)
        b = generate_synthetic(cfg, 2)
        assert not (a.x == b.x).all()

    def test_no_spikes_when_frequency_zero(self):
        cfg = SyntheticConfig(horizon_hours=4000, spike_frequency=0.0)
        ds = generate_synthetic(cfg, 3)
        assert ds.x[:, 3].max() < cfg.base_spot + cfg.spike_threshold

    @pytest.mark.parametrize("seed", [0, 1, 2, 3])
    def test_record_invariants(self, seed):
        ds = generate_synthetic(SyntheticConfig(horizon_hours=2000), seed)
        g, s, r_minus, r_plus = ds.x.T
        assert (g >= 0).all()
        assert np.isfinite(ds.x).all()
        assert (r_minus <= s).all() and (s <= r_plus).all()
        assert (r_plus <= 4000.0).all()
        assert (ds.ensembles >= 0).all()
        assert np.allclose(ds.f_mean, ds.ensembles.mean(axis=1), rtol=1e-12)
        assert (np.diff(ds.times) == HOUR).all()

    def test_pareto_memoryless_factor_two(self):
        # given r+ >= q, exceeding 2q is a fair coin for p_true=1 (clipped Pareto),
        # so the 2q count is binomial around half the q count
        ds = generate_synthetic(SyntheticConfig(horizon_hours=35_000), 7)
        r_plus = ds.x[:, 3]
        c_q = int((r_plus >= 400).sum())
        c_2q = int((r_plus >= 800).sum())
        assert abs(c_2q - c_q / 2) <= 5 * np.sqrt(c_q * 0.25) + 1

    def test_invalid_configs(self):
        with pytest.raises(ConfigError):
            SyntheticConfig(horizon_hours=0).check()
        with pytest.raises(ConfigError):
            SyntheticConfig(p_true=0.0).check()
        with pytest.raises(ConfigError):
            SyntheticConfig(spike_frequency=1.5).check()
        with pytest.raises(ConfigError):
            SyntheticConfig.from_dict({"no_such_knob": 1})


class TestRoundTrip:
    def test_market_and_forecast_round_trip_bit_exact(self, tmp_path):
        ds = generate_synthetic(SyntheticConfig(horizon_hours=72, ensemble_size=5), 11)
        m1 = tmp_path / "m1.csv"
        f1 = tmp_path / "f1.csv"
        emit_market_csv(ds.market_records(), str(m1))
        emit_forecast_csv(ds.forecast_records(), 5, str(f1))
        records = ingest_market_csv(str(m1))
        forecasts = ingest_forecast_csv(str(f1), 5)
        m2 = tmp_path / "m2.csv"
        f2 = tmp_path / "f2.csv"
        emit_market_csv(records, str(m2))
        emit_forecast_csv(forecasts, 5, str(f2))
        assert m1.read_bytes() == m2.read_bytes()
        assert f1.read_bytes() == f2.read_bytes()
        ds2 = Dataset.from_records(records, forecasts)
        assert (ds2.x == ds.x).all() and (ds2.ensembles == ds.ensembles).all()


class TestDataset:
    def test_alignment_trims_to_common_window(self):
        ds = generate_synthetic(SyntheticConfig(horizon_hours=48, ensemble_size=3), 5)
        records = ds.market_records()
        forecasts = ds.forecast_records()[24:]  # forecasts only cover the second day
        joined = Dataset.from_records(records, forecasts)
        assert joined.n_hours == 24
        assert joined.times[0] == ds.times[24]

    def test_disjoint_windows_error(self):
        ds = generate_synthetic(SyntheticConfig(horizon_hours=48, ensemble_size=3), 5)
        with pytest.raises(DataError, match="no timestamps"):
            Dataset.from_records(ds.market_records()[:10], ds.forecast_records()[20:])

    def test_empty_errors(self):
        with pytest.raises(DataError):
            Dataset.from_records([], [])

    def test_arrays_read_only(self):
        ds = generate_synthetic(SyntheticConfig(horizon_hours=48, ensemble_size=3), 5)
        with pytest.raises(ValueError):
            ds.x[0, 0] = 1.0
