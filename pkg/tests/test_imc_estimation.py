import math

import numpy as np
import pytest

from conftest import FIVE_REGIMES, FIVE_THRESHOLDS, random_stochastic
from utils.errors import InputDataError, StatisticalError
from utils.imc_estimation import (CountTensor, Partition, RegimeModel, build_model, check_stochastic,
                                  count_transitions, estimate_matrices, log_likelihood, trajectory_log_likelihood)
from utils.imc_simulation import simulate_markov
from utils.index_process import compute_index
from utils.market_data import DiscreteReturnSeries, DiscretizationMap

BINARY = DiscretizationMap(delta=1.0, z_min=0, z_max=1)


@pytest.fixture
def small_series():
    J = DiscreteReturnSeries(states=[0, 1, 0, 1, 1], map=BINARY)
    return J, compute_index(J, 1)


class TestCounting:
    def test_transitions_follow_source_index(self, small_series):
        J, V = small_series
        counts = count_transitions(J, V, Partition(thresholds=(0.5,)))
        assert counts.counts.tolist() == [[[0, 2], [0, 0]], [[0, 0], [1, 1]]]
        assert counts.total == 4
        assert counts.exposure.tolist() == [[2, 0], [0, 2]]

    def test_unobserved_rows_are_uniform(self, small_series):
        J, V = small_series
        estimate = estimate_matrices(count_transitions(J, V, Partition(thresholds=(0.5,))))
        assert estimate.matrices[0].tolist() == [[0.0, 1.0], [0.5, 0.5]]
        assert estimate.unobserved.tolist() == [[False, True], [True, False]]

    def test_log_likelihood(self, small_series):
        J, V = small_series
        counts = count_transitions(J, V, Partition(thresholds=(0.5,)))
        assert log_likelihood(counts) == pytest.approx(2 * math.log(0.5))

    def test_merge_adjacent_gives_pooled_counts(self, small_series):
        J, V = small_series
        split = count_transitions(J, V, Partition(thresholds=(0.5,)))
        pooled = count_transitions(J, V, Partition())
        assert np.array_equal(split.merge_adjacent(0).counts, pooled.counts)

    def test_misaligned_index(self, small_series):
        J, _ = small_series
        other = compute_index(DiscreteReturnSeries(states=[0, 1, 1], map=BINARY), 1)
        with pytest.raises(InputDataError, match="misaligned"):
            count_transitions(J, other, Partition())

    def test_negative_counts_rejected(self):
        with pytest.raises(ValueError):
            CountTensor(counts=[[[1, -1], [0, 0]]])


class TestPartition:
    def test_thresholds_must_increase(self):
        with pytest.raises(ValueError):
            Partition(thresholds=(1.0, 1.0))

    def test_intervals(self):
        assert Partition(thresholds=(1.0,)).intervals(0.0, 4.0) == [(0.0, 1.0), (1.0, 4.0)]


class TestModel:
    def test_split_never_lowers_likelihood(self, three_state_map):
        rng = np.random.default_rng(5)
        J = simulate_markov(random_stochastic(rng, 3), 5000, seed=5, map=three_state_map)
        V = compute_index(J, 4)
        _, pooled = build_model(J, V, Partition())
        _, split = build_model(J, V, Partition(thresholds=(0.5,)))
        assert log_likelihood(split) >= log_likelihood(pooled) - 1e-9

    def test_path_likelihood_matches_counts(self, three_state_map):
        rng = np.random.default_rng(6)
        J = simulate_markov(random_stochastic(rng, 3), 3000, seed=6, map=three_state_map)
        V = compute_index(J, 3)
        model, counts = build_model(J, V, Partition(thresholds=(0.4, 0.7)))
        assert trajectory_log_likelihood(J, V, model) == pytest.approx(log_likelihood(counts), rel=1e-9)
        assert model.k == 2
        assert np.allclose(model.transition_array().sum(axis=2), 1.0)

    def test_printed_matrices_need_renormalizing(self, five_state_map):
        model = RegimeModel.from_arrays(five_state_map, 30, FIVE_REGIMES, FIVE_THRESHOLDS, renormalize=True)
        assert np.allclose(model.transition_array().sum(axis=2), 1.0)
        assert model.regime_of(0.70) == 0
        assert model.regime_of(0.71) == 1
        assert model.regime_of(3.0) == 4

    def test_matrix_count_must_match_thresholds(self, three_state_map):
        with pytest.raises(ValueError):
            RegimeModel.from_arrays(three_state_map, 2, [np.eye(3)], (0.5,))

    def test_non_stochastic(self):
        with pytest.raises(StatisticalError, match="non-stochastic"):
            check_stochastic([[0.5, 0.6], [0.5, 0.5]])
