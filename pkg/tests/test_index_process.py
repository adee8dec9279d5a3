import numpy as np
import pytest

from utils.errors import InputDataError
from utils.index_process import (IndexFunction, IndexSeries, assign_regimes, compute_index, index_bounds,
                                 moving_index, regime_occupancy)
from utils.market_data import DiscreteReturnSeries, DiscretizationMap


def series(states, map):
    return DiscreteReturnSeries(states=states, map=map)


class TestComputeIndex:
    def test_square_moving_average(self, five_state_map):
        V = compute_index(series([0, 1, -1, 2, 0], five_state_map), 2)
        assert V.values.tolist() == pytest.approx([0.5, 1.0, 2.5, 2.0])
        assert V.offset == 1

    def test_constant_series(self, five_state_map):
        V = compute_index(series([1] * 20, five_state_map), 5)
        assert np.all(V.values == 1.0)
        assert len(V) == 16

    def test_sign_flip_leaves_square_index_unchanged(self, five_state_map):
        rng = np.random.default_rng(0)
        states = rng.integers(-2, 3, size=200)
        up = compute_index(series(states, five_state_map), 7)
        down = compute_index(series(-states, five_state_map), 7)
        assert np.array_equal(up.values, down.values)

    def test_memory_longer_than_series(self, five_state_map):
        with pytest.raises(InputDataError):
            compute_index(series([0, 1], five_state_map), 3)

    def test_unit_scale(self):
        map = DiscretizationMap(delta=0.5, z_min=1, z_max=1)
        V = compute_index(series([1, -1, 0], map), 1)
        assert V.unit_scale == 0.25
        assert V.physical_values().tolist() == pytest.approx([0.25, 0.25, 0.0])

    def test_values_stay_inside_bounds(self, five_state_map):
        rng = np.random.default_rng(1)
        V = compute_index(series(rng.integers(-2, 3, size=500), five_state_map), 4)
        bounds = index_bounds(five_state_map)
        assert all(bounds.contains(v) for v in V.values)


class TestIndexFunction:
    def test_bounds_square_and_identity(self, five_state_map):
        assert (index_bounds(five_state_map).lower, index_bounds(five_state_map).upper) == (0.0, 4.0)
        identity = index_bounds(five_state_map, IndexFunction(tag='identity'))
        assert (identity.lower, identity.upper) == (-2.0, 2.0)

    def test_alias(self, five_state_map):
        assert IndexFunction(tag='abs').values(five_state_map).tolist() == [2, 1, 0, 1, 2]

    def test_table(self, five_state_map):
        f = IndexFunction(tag='table', table=(5, 1, 0, 1, 5))
        assert f.values(five_state_map).tolist() == [5, 1, 0, 1, 5]
        assert f.unit_scale(five_state_map) == 1.0

    def test_table_length_mismatch(self, five_state_map):
        with pytest.raises(InputDataError):
            IndexFunction(tag='table', table=(1, 2)).values(five_state_map)

    def test_table_required(self):
        with pytest.raises(ValueError):
            IndexFunction(tag='table')


class TestRegimes:
    def test_right_closed_intervals(self):
        assert assign_regimes(np.array([0.7, 0.71, 1.0, 1.2]), (0.7, 1.0)).tolist() == [0, 1, 1, 2]

    def test_occupancy(self):
        V = IndexSeries(memory=1, values=[0.1, 0.2, 0.9, 1.5], f=IndexFunction())
        assert regime_occupancy(V, (0.5,)) == pytest.approx([0.5, 0.5])

    def test_moving_index_on_raw_arrays(self):
        f_values = np.array([4.0, 1.0, 0.0])
        assert moving_index(f_values, np.array([0, 1, 2, 2]), 2).tolist() == [2.5, 0.5, 0.0]
