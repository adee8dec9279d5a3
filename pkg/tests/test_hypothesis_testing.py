import numpy as np
import pytest
from scipy.stats import chi2

from conftest import random_stochastic
from utils.changepoint_search import CandidateGrid, ChangePointSearch, candidate_grid, search_single
from utils.errors import InputDataError, StatisticalError
from utils.hypothesis_testing import (NullDistribution, bootstrap_null, chi_square_quantile, chi_square_reference,
                                      critical_value, evaluate, null_matrix, p_value, run_test)
from utils.index_process import compute_index

GRID = CandidateGrid(points=(0.34, 0.67))


def null_of(samples):
    return NullDistribution(samples=samples, null_matrix=((0.5, 0.5), (0.5, 0.5)), length=10, grid=(0.5,),
                            k=1, seed=0, memory=1)


@pytest.fixture
def P_null():
    return random_stochastic(np.random.default_rng(8), 3)


class TestCriticalValues:
    def test_nearest_rank(self):
        dist = null_of(np.arange(1, 101))
        assert critical_value(dist, 0.05) == 95
        assert critical_value(dist, 0.01) == 99
        assert critical_value(dist, 0.5) == 50

    def test_alpha_range(self):
        with pytest.raises(InputDataError):
            critical_value(null_of([1.0]), 1.0)

    def test_p_value(self):
        dist = null_of([1.0, 2.0, 3.0])
        assert p_value(dist, 2.0) == 0.75
        assert p_value(dist, 10.0) == 0.25
        assert p_value(dist, 0.0) == 1.0

    def test_negative_samples_rejected(self):
        with pytest.raises(ValueError):
            null_of([1.0, -1.0])

    def test_evaluate(self):
        result = evaluate(null_of(np.arange(1, 101)), 96.0, 3)
        assert result.reject == {0.05: True, 0.01: False}
        assert result.chi_square_df == 6
        assert result.chi_square_critical[0.05] == pytest.approx(chi2.ppf(0.95, 6))
        assert result.p_value == pytest.approx(6 / 101)


class TestChiSquare:
    @pytest.mark.parametrize("size, df", [(5, 20), (2, 2), (3, 6)])
    def test_reference(self, size, df):
        assert chi_square_reference(size) == df

    def test_quantile(self):
        assert chi_square_quantile(3, 0.05) == pytest.approx(12.5916, abs=1e-3)


class TestBootstrap:
    def run(self, P_null, three_state_map, **kwargs):
        options = dict(memory=3, map=three_state_map, threads=1, batch_size=2)
        options.update(kwargs)
        return bootstrap_null(P_null, 400, 6, GRID, 1, 42, **options)

    def test_reproducible(self, P_null, three_state_map):
        first = self.run(P_null, three_state_map)
        second = self.run(P_null, three_state_map)
        assert np.array_equal(first.samples, second.samples)
        assert first.B == 6
        assert np.all(first.samples >= 0)

    def test_independent_of_threads_and_batching(self, P_null, three_state_map):
        serial = self.run(P_null, three_state_map)
        parallel = self.run(P_null, three_state_map, threads=3, batch_size=1)
        assert np.array_equal(serial.samples, parallel.samples)

    def test_search_dominates_fixed_thresholds(self, P_null, three_state_map):
        searched = self.run(P_null, three_state_map)
        fixed = self.run(P_null, three_state_map, fixed_thresholds=(0.34,))
        assert fixed.mode == 'fixed'
        assert np.all(searched.samples >= fixed.samples - 1e-9)

    def test_nearly_absorbing_null(self, three_state_map):
        P = np.full((3, 3), 0.01) + np.eye(3) * 0.97
        dist = bootstrap_null(P, 400, 4, GRID, 1, 1, memory=3, map=three_state_map, threads=1)
        assert np.all(np.isfinite(dist.samples))

    def test_non_stochastic_null(self, three_state_map):
        with pytest.raises(StatisticalError):
            bootstrap_null(np.full((3, 3), 0.5), 400, 4, GRID, 1, 1, memory=3, map=three_state_map)

    def test_k_larger_than_grid(self, P_null, three_state_map):
        with pytest.raises(InputDataError):
            bootstrap_null(P_null, 400, 4, GRID, 3, 1, memory=3, map=three_state_map)


class TestRunTest:
    def test_planted_split_is_rejected(self, planted_series):
        V = compute_index(planted_series, 10)
        grid = candidate_grid(V, 10)
        fit = search_single(planted_series, V, grid)
        result, dist = run_test(fit, planted_series, V, grid, 19, seed=3, threads=1)
        assert dist.B == 19
        assert result.p_value == pytest.approx(1 / 20)
        assert result.reject[0.05]
        assert result.chi_square_df == 20

    def test_null_matrix_is_stochastic(self, planted_series):
        V = compute_index(planted_series, 10)
        assert np.allclose(null_matrix(planted_series, V).sum(axis=1), 1.0)

    def test_needs_a_threshold(self, planted_series):
        V = compute_index(planted_series, 10)
        grid = candidate_grid(V, 10)
        fit = ChangePointSearch(planted_series, V, grid).fit(0)
        with pytest.raises(InputDataError):
            run_test(fit, planted_series, V, grid, 5, seed=1)
