import numpy as np
import pytest

from conftest import FIVE_REGIMES, LOWER, MAD_TABLE, RSMD_TABLE, UPPER, random_stochastic
from utils.diagnostics import (acf_comparison, acf_squared, distance_table, mad, regime_labels,
                               regime_structure_report, rsmd)
from utils.errors import InputDataError, StatisticalError
from utils.imc_estimation import RegimeModel
from utils.imc_simulation import simulate_markov
from utils.market_data import ReturnSeries


class TestMatrixDistances:
    def test_identical_matrices(self):
        assert rsmd(UPPER, UPPER) == 0.0
        assert mad(UPPER, UPPER) == 0.0

    def test_single_threshold_pair(self):
        assert rsmd(UPPER, LOWER) == pytest.approx(49.3, abs=1.5)
        assert mad(UPPER, LOWER) == pytest.approx(44.2, abs=1.5)

    def test_five_regime_tables(self):
        assert distance_table(FIVE_REGIMES, 'rsmd') == pytest.approx(np.array(RSMD_TABLE), abs=1.5)
        assert distance_table(FIVE_REGIMES, 'mad') == pytest.approx(np.array(MAD_TABLE), abs=1.5)

    def test_normalisation_uses_second_argument(self):
        P, Q = np.array(UPPER), np.array(LOWER)
        assert mad(P, Q) * Q.sum() == pytest.approx(mad(Q, P) * P.sum())

    def test_shape_mismatch(self):
        with pytest.raises(InputDataError, match="shape mismatch"):
            rsmd(np.eye(2), np.eye(3))

    def test_unknown_metric(self):
        with pytest.raises(InputDataError):
            distance_table(FIVE_REGIMES, 'kl')


class TestLabels:
    @pytest.mark.parametrize("count, labels", [
        (1, ['all']),
        (2, ['low', 'high']),
        (5, ['very low', 'low', 'medium', 'high', 'very high']),
        (4, ['regime 1', 'regime 2', 'regime 3', 'regime 4']),
    ])
    def test_labels(self, count, labels):
        assert regime_labels(count) == labels


class TestACF:
    def test_lag_zero_is_one(self):
        rng = np.random.default_rng(0)
        result = acf_squared(rng.standard_normal(1000), 10)
        assert result.at(0) == pytest.approx(1.0)
        assert result.lags.tolist() == list(range(11))

    def test_white_noise_stays_in_band(self):
        T = 100_000
        result = acf_squared(np.random.default_rng(1).standard_normal(T), 50)
        lags = np.abs(result.values[1:])
        # 3/sqrt(T) holds per lag with probability 0.997, so one of 50 lags may land outside it.
        assert np.sum(lags >= 3 / np.sqrt(T)) <= 1
        assert np.all(lags < 4 / np.sqrt(T))

    def test_sign_flip(self):
        values = np.random.default_rng(2).standard_normal(500)
        assert acf_squared(values, 20).values == pytest.approx(acf_squared(-values, 20).values)

    def test_matches_direct_sum(self):
        values = np.random.default_rng(3).standard_normal(300)
        squared = values ** 2 - (values ** 2).mean()
        direct = [np.dot(squared[:-tau or None], squared[tau:]) for tau in range(6)]
        assert acf_squared(values, 5).values == pytest.approx(np.array(direct) / direct[0])

    def test_discrete_series_uses_state_values(self, five_state_map):
        J = simulate_markov(random_stochastic(np.random.default_rng(4), 5), 400, seed=4, map=five_state_map)
        assert acf_squared(J, 5).values == pytest.approx(acf_squared(J.values, 5).values)

    def test_degenerate_variance(self):
        with pytest.raises(StatisticalError, match="degenerate variance"):
            acf_squared(ReturnSeries(values=[0.01, -0.01] * 50), 5)

    def test_insufficient_length(self):
        with pytest.raises(InputDataError, match="insufficient length"):
            acf_squared(np.arange(10.0), 10)

    def test_comparison_keys(self, one_threshold_model, planted_series):
        comparison = acf_comparison(planted_series, [one_threshold_model], 5000, seed=1, max_lag=20, band=(2, 20))
        assert set(comparison.band_means()) == {'data', 'k=1'}

    def test_band_outside_lags(self, one_threshold_model, planted_series):
        with pytest.raises(InputDataError):
            acf_comparison(planted_series, [one_threshold_model], 5000, seed=1, max_lag=20, band=(10, 100))


class TestRegimeStructure:
    def test_five_regime_model_satisfies_every_family(self, five_regime_model):
        report = regime_structure_report(five_regime_model)
        assert report.applicable
        assert report.all_hold
        assert report.pass_rate == 1.0
        assert [len(f.checks) for f in report.families] == [20, 40, 20, 5]

    def test_identical_regimes_fail(self, five_state_map):
        uniform = np.full((5, 5), 0.2)
        model = RegimeModel.from_arrays(five_state_map, 3, [uniform, uniform], (1.0,))
        report = regime_structure_report(model)
        assert report.applicable
        assert not report.all_hold
        assert report.pass_rate == 0.0

    def test_needs_five_states(self, three_state_map):
        model = RegimeModel.from_arrays(three_state_map, 2, [np.full((3, 3), 1 / 3)] * 2, (0.5,))
        report = regime_structure_report(model)
        assert not report.applicable
        assert report.pass_rate is None
