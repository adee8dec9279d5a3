import numpy as np
import pytest

from conftest import random_stochastic
from utils.errors import InputDataError, StatisticalError
from utils.first_passage import (TargetInterval, WindowState, first_passage, first_passage_exact, first_passage_mc,
                                 reachable_set, target_for_regime, unreachable_set, window_from_labels)
from utils.imc_estimation import RegimeModel
from utils.market_data import DiscretizationMap


def random_model(rng, size, memory, k=1):
    map = DiscretizationMap(delta=1.0, z_min=size // 2, z_max=size - 1 - size // 2)
    thresholds = np.sort(rng.uniform(0.05, 0.95, size=k))
    return RegimeModel.from_arrays(map, memory, [random_stochastic(rng, size) for _ in range(k + 1)], thresholds)


def enumerate_paths(model, window, target, horizon):
    """First-entrance probabilities by walking every path of at most `horizon` steps."""
    f = model.f_values()
    P = model.transition_array()
    g = np.zeros(horizon)

    def walk(states, probability, n):
        regime = model.regime_of(f[list(states)].mean())
        for j in range(model.map.size):
            p = probability * P[regime, states[-1], j]
            if p == 0:
                continue
            shifted = states[1:] + (j,)
            if target.contains(f[list(shifted)].mean()):
                g[n - 1] += p
            elif n < horizon:
                walk(shifted, p, n + 1)

    walk(tuple(int(i) for i in window.indices), 1.0, 1)
    return g


@pytest.fixture
def single_regime(five_state_map):
    return RegimeModel.from_arrays(five_state_map, 1, [random_stochastic(np.random.default_rng(2), 5)])


class TestTargets:
    def test_regime_intervals(self, five_regime_model):
        first = target_for_regime(five_regime_model, 1)
        assert (first.lower, first.upper) == (None, 0.70)
        middle = target_for_regime(five_regime_model, 3)
        assert middle.contains(1.40) and not middle.contains(1.00)
        last = target_for_regime(five_regime_model, 5)
        assert (last.lower, last.upper) == (2.10, None)

    def test_regime_out_of_range(self, five_regime_model):
        with pytest.raises(InputDataError):
            target_for_regime(five_regime_model, 6)

    def test_reachable_set(self, single_regime, five_state_map):
        window = window_from_labels([0], five_state_map)
        target = TargetInterval(lower=1.0, lower_closed=True)
        assert reachable_set(window, single_regime, target) == frozenset({-2, -1, 1, 2})
        assert unreachable_set(window, single_regime, target) == frozenset({0})

    def test_full_and_empty_targets(self, single_regime, five_state_map):
        window = window_from_labels([0], five_state_map)
        assert unreachable_set(window, single_regime, TargetInterval()) == frozenset()
        assert reachable_set(window, single_regime, TargetInterval(upper=-1.0)) == frozenset()

    def test_window_out_of_range(self, five_state_map):
        with pytest.raises(InputDataError):
            window_from_labels([3], five_state_map)


class TestExact:
    def test_first_step_is_reachable_mass(self, single_regime, five_state_map):
        window = window_from_labels([0], five_state_map)
        dist = first_passage_exact(single_regime, window, TargetInterval(lower=1.0, lower_closed=True), 5)
        row = single_regime.transition_array()[0, 2]
        assert dist.g[0] == pytest.approx(row[[0, 1, 3, 4]].sum())

    def test_full_range_target(self, single_regime, five_state_map):
        dist = first_passage_exact(single_regime, window_from_labels([1], five_state_map), TargetInterval(), 4)
        assert dist.g == pytest.approx([1.0, 0.0, 0.0, 0.0])
        assert dist.tail == pytest.approx(0.0, abs=1e-12)

    def test_unreachable_target(self, single_regime, five_state_map):
        dist = first_passage_exact(single_regime, window_from_labels([1], five_state_map), TargetInterval(upper=-1.0), 4)
        assert not dist.g.any()
        assert dist.tail == 1.0

    @pytest.mark.parametrize("seed", range(20))
    def test_matches_path_enumeration(self, seed):
        rng = np.random.default_rng(100 + seed)
        size, memory = int(rng.integers(2, 4)), int(rng.integers(1, 4))
        model = random_model(rng, size, memory, k=int(rng.integers(1, 3)))
        window = WindowState(states=tuple(int(s) for s in rng.choice(model.map.states, size=memory)), map=model.map)
        target = target_for_regime(model, int(rng.integers(1, model.k + 2)))
        horizon = 6
        exact = first_passage_exact(model, window, target, horizon)
        assert exact.g == pytest.approx(enumerate_paths(model, window, target, horizon), abs=1e-12)

    def test_longer_horizon_extends_shorter(self):
        rng = np.random.default_rng(9)
        model = random_model(rng, 3, 2)
        window = WindowState(states=(0, 0), map=model.map)
        target = target_for_regime(model, 2)
        short = first_passage_exact(model, window, target, 5)
        long = first_passage_exact(model, window, target, 10)
        assert long.g[:5] == pytest.approx(short.g)
        assert long.cumulative()[-1] >= short.cumulative()[-1]
        assert long.tail + long.g.sum() == pytest.approx(1.0)

    def test_state_space_guard(self, five_state_map):
        model = RegimeModel.from_arrays(five_state_map, 9, [np.full((5, 5), 0.2)])
        window = window_from_labels([0] * 9, five_state_map)
        with pytest.raises(StatisticalError, match="Monte Carlo"):
            first_passage_exact(model, window, TargetInterval(lower=2.0), 10)

    def test_window_must_match_memory(self, single_regime, five_state_map):
        with pytest.raises(InputDataError):
            first_passage_exact(single_regime, window_from_labels([0, 0], five_state_map), TargetInterval(), 3)


class TestMonteCarlo:
    def test_agrees_with_exact(self):
        rng = np.random.default_rng(4)
        model = random_model(rng, 3, 2)
        window = WindowState(states=(0, 0), map=model.map)
        target = target_for_regime(model, 2)
        exact = first_passage_exact(model, window, target, 6)
        mc = first_passage_mc(model, window, target, 6, replicates=20_000, seed=4, threads=1)
        se = np.sqrt(exact.g * (1 - exact.g) / 20_000)
        assert np.all(np.abs(mc.g - exact.g) <= 4 * se + 1e-9)
        assert mc.method == 'monte-carlo'
        assert mc.stderr is not None

    def test_reproducible_across_threads(self):
        rng = np.random.default_rng(5)
        model = random_model(rng, 3, 3)
        window = WindowState(states=(0, 1, -1), map=model.map)
        target = target_for_regime(model, 2)
        one = first_passage_mc(model, window, target, 8, replicates=300, seed=9, threads=1, batch_size=64)
        many = first_passage_mc(model, window, target, 8, replicates=300, seed=9, threads=4, batch_size=64)
        assert np.array_equal(one.g, many.g)

    def test_dispatch_needs_seed(self, single_regime, five_state_map):
        with pytest.raises(InputDataError):
            first_passage(single_regime, window_from_labels([0], five_state_map), TargetInterval(), 3, replicates=10)

    def test_dispatch_exact(self, single_regime, five_state_map):
        dist = first_passage(single_regime, window_from_labels([0], five_state_map), TargetInterval(), 3)
        assert dist.method == 'exact'
        assert dist.to_frame().columns.tolist() == ['n', 'g', 'stderr']
