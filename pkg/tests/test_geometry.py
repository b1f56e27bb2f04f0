import json

import numpy as np
import pytest

from drobid.errors import ConfigError, DataError
from drobid.geometry import (
    Box4,
    PolyhedralSupport,
    TransportCost,
    build_support_x,
    build_support_xi,
    lift,
    max_mass_at_deviation,
    transport_cost,
)


class TestSupportX:
    def test_generation_with_zero_minimum(self):
        train = np.array([[0, 30, 20, 50], [10, 35, 25, 55]], dtype=float)
        box = build_support_x(train)
        assert box.lower[0] == 0.0
        assert box.upper[0] == 12.0

    def test_negative_downreg_lower(self):
        train = np.array([[1, 30, -1000, 50], [2, 35, 80, 55]], dtype=float)
        box = build_support_x(train)
        assert box.lower[2] == pytest.approx(-1200.0)
        assert box.upper[2] == pytest.approx(96.0)

    def test_spot_margin(self):
        train = np.array([[1, 5, 0, 50], [2, 100, 0, 55]], dtype=float)
        box = build_support_x(train)
        assert box.lower[1] == pytest.approx(4.0)
        assert box.upper[1] == pytest.approx(120.0)

    def test_contains_training_points(self, rng):
        train = rng.uniform(-50, 150, (200, 4))
        train[:, 0] = np.abs(train[:, 0])
        box = build_support_x(train)
        assert box.contains(train)

    def test_empty_errors(self):
        with pytest.raises(DataError):
            build_support_x(np.empty((0, 4)))

    def test_bad_box(self):
        with pytest.raises(DataError):
            Box4(np.array([1.0, 0, 0, 0]), np.array([0.0, 1, 1, 1]))


class TestLift:
    def test_products(self):
        assert list(lift([2.0, 30.0, 20.0, 50.0])) == [2, 30, 20, 50, 40, 100]

    def test_zero_generation(self):
        assert list(lift([0.0, 30.0, 20.0, 50.0])[4:]) == [0.0, 0.0]

    def test_sign_preserved(self):
        assert lift([1.0, 30.0, -5.0, 50.0])[4] == -5.0

    def test_array_form_matches_scalar(self, rng):
        x = rng.uniform(-10, 10, (50, 4))
        stacked = lift(x)
        for i in range(50):
            assert (stacked[i] == lift(x[i])).all()

    def test_injective_on_positive_generation(self, rng):
        x = rng.uniform(0.1, 10, (100, 4))
        lifted = lift(x)
        assert (lifted[:, 4] == x[:, 0] * x[:, 2]).all()
        assert (lifted[:, 5] == x[:, 0] * x[:, 3]).all()


class TestSupportXi:
    def test_shape_and_sign_pattern(self, rng):
        train = rng.uniform(0, 100, (50, 4))
        sup = build_support_xi(train)
        assert sup.C.shape == (12, 6) and sup.d.shape == (12,)
        for k in range(6):
            col = sup.C[:, k]
            assert np.count_nonzero(col == 1.0) == 1
            assert np.count_nonzero(col == -1.0) == 1
            assert np.count_nonzero(col) == 2

    def test_single_sample_product_bounds(self):
        sup = build_support_xi(np.array([[2.0, 30.0, 20.0, 50.0]]))
        assert sup.lower[5] == pytest.approx(80.0)
        assert sup.upper[5] == pytest.approx(120.0)

    def test_contains_all_lifted_training_points(self, rng):
        train = rng.uniform(-20, 120, (300, 4))
        train[:, 0] = np.abs(train[:, 0])
        sup = build_support_xi(train)
        assert sup.contains(lift(train))

    def test_contains_x_box_lifts(self, rng):
        # lifting any training point of the 4-dim box construction stays inside
        train = rng.uniform(0, 80, (100, 4))
        sup = build_support_xi(train)
        box = build_support_x(train)
        assert box.contains(train)
        assert sup.contains(lift(train))

    def test_row_order_uppers_then_lowers(self):
        sup = PolyhedralSupport.from_bounds(np.zeros(6), np.arange(1.0, 7.0))
        assert (sup.d[:6] == np.arange(1.0, 7.0)).all()
        assert (sup.d[6:] == 0.0).all()
        assert (sup.C[:6] == np.eye(6)).all()
        assert (sup.C[6:] == -np.eye(6)).all()

    def test_empty_box_rejected(self):
        with pytest.raises(DataError):
            PolyhedralSupport.from_bounds(np.ones(6), np.zeros(6))

    def test_vertices(self):
        sup = PolyhedralSupport.from_bounds(np.zeros(6), np.ones(6))
        v = sup.vertices()
        assert v.shape == (64, 6)
        assert (v[0] == 0).all() and (v[-1] == 1).all()
        assert len(np.unique(v, axis=0)) == 64

    def test_json_round_trip(self):
        sup = PolyhedralSupport.from_bounds(np.zeros(6), np.arange(1.0, 7.0))
        payload = json.loads(sup.to_json())
        again = PolyhedralSupport(np.array(payload["C"]), np.array(payload["d"]))
        assert (again.d == sup.d).all() and (again.C == sup.C).all()


class TestTransportCost:
    def test_identity(self):
        xi = np.arange(6.0)
        assert transport_cost(xi, xi) == 0.0

    def test_unit_coordinate(self):
        a = np.zeros(6)
        b = np.zeros(6)
        b[3] = 1.0
        assert transport_cost(a, b) == 1.0

    def test_additive(self):
        assert transport_cost(np.zeros(6), np.ones(6)) == 6.0

    def test_symmetry_and_nonnegativity(self, rng):
        a, b = rng.normal(size=(2, 6))
        assert transport_cost(a, b) == transport_cost(b, a) >= 0

    def test_triangle_inequality_many(self, rng):
        a, b, c = rng.normal(scale=100, size=(3, 10_000, 6))
        lhs = np.abs(a - c).sum(axis=1)
        rhs = np.abs(a - b).sum(axis=1) + np.abs(b - c).sum(axis=1)
        assert (lhs <= rhs * (1 + 1e-12) + 1e-9).all()

    def test_solver_supported_gate(self):
        TransportCost().require_solver_supported()
        with pytest.raises(ConfigError):
            TransportCost(p=2.0).require_solver_supported()
        with pytest.raises(ConfigError):
            TransportCost(norm="l2").require_solver_supported()


class TestMassBound:
    def test_paper_scale_example(self):
        assert max_mass_at_deviation(1.0, 3000.0, 1.0) == pytest.approx(1 / 3000)

    def test_zero_budget(self):
        assert max_mass_at_deviation(0.0, 17.0, 1.0) == 0.0

    def test_probability_cap(self):
        assert max_mass_at_deviation(10.0, 2.0, 1.0) == 1.0

    def test_monotone_in_q_and_epsilon(self):
        qs = np.linspace(0.5, 50, 40)
        eps = np.linspace(0.0, 5, 20)
        for e in eps:
            vals = [max_mass_at_deviation(float(e), float(q), 1.0) for q in qs]
            assert (np.diff(vals) <= 1e-15).all()
        for q in qs:
            vals = [max_mass_at_deviation(float(e), float(q), 1.0) for e in eps]
            assert (np.diff(vals) >= -1e-15).all()

    def test_invalid_inputs(self):
        with pytest.raises(DataError):
            max_mass_at_deviation(1.0, 0.0, 1.0)
        with pytest.raises(ConfigError):
            max_mass_at_deviation(-1.0, 1.0, 1.0)
        with pytest.raises(ConfigError):
            max_mass_at_deviation(1.0, 1.0, 0.5)
