import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

from utils.imc_estimation import RegimeModel, normalize_rows  # noqa: E402
from utils.imc_simulation import SimulationConfig, simulate_imc  # noqa: E402
from utils.index_process import IndexFunction  # noqa: E402
from utils.market_data import DiscretizationMap  # noqa: E402

# Matrices for one threshold (above / below), printed to three decimals.
UPPER = [[.173, .151, .207, .218, .251],
         [.129, .196, .267, .255, .153],
         [.137, .209, .300, .221, .133],
         [.150, .246, .275, .204, .125],
         [.237, .215, .218, .159, .171]]
LOWER = [[.067, .162, .312, .338, .121],
         [.031, .183, .391, .347, .048],
         [.033, .236, .466, .234, .031],
         [.049, .339, .397, .185, .030],
         [.110, .338, .316, .170, .066]]

# Five volatility regimes, lowest first.
FIVE_REGIMES = [
    [[.046, .143, .351, .378, .082], [.014, .141, .445, .374, .026], [.016, .219, .532, .217, .016],
     [.027, .365, .448, .146, .014], [.084, .360, .358, .147, .051]],
    [[.064, .162, .314, .344, .116], [.033, .202, .375, .340, .050], [.039, .249, .429, .248, .035],
     [.053, .333, .382, .199, .033], [.107, .343, .321, .169, .060]],
    [[.091, .171, .279, .304, .154], [.067, .215, .321, .308, .089], [.073, .248, .367, .245, .067],
     [.086, .300, .332, .222, .060], [.135, .312, .283, .182, .088]],
    [[.150, .166, .224, .238, .222], [.127, .199, .269, .256, .149], [.138, .208, .298, .222, .134],
     [.150, .245, .276, .206, .123], [.206, .236, .245, .172, .141]],
    [[.239, .121, .153, .155, .332], [.232, .151, .182, .169, .266], [.241, .142, .207, .168, .242],
     [.249, .168, .182, .161, .240], [.320, .150, .155, .130, .245]],
]
FIVE_THRESHOLDS = (0.70, 1.00, 1.40, 2.10)

RSMD_TABLE = [[0, 20.1, 35.8, 59.4, 100.5],
              [20.1, 0, 16.8, 43.0, 86.1],
              [35.8, 16.8, 0, 27.1, 70.9],
              [59.4, 43.0, 27.1, 0, 44.1],
              [100.5, 86.1, 70.9, 44.1, 0]]
MAD_TABLE = [[0, 17.2, 32.2, 53.4, 90.1],
             [17.2, 0, 15.2, 38.6, 80.6],
             [32.2, 15.2, 0, 25.2, 67.7],
             [53.4, 38.6, 25.2, 0, 42.6],
             [90.1, 80.6, 67.7, 42.6, 0]]

# Planted-threshold rows. Mean f per step is 0.64, 1.4 and 2.3, so the index crosses 1.0 and 1.8 often.
CALM_ROW = [0.03, 0.20, 0.54, 0.20, 0.03]
MIDDLE_ROW = [0.12, 0.22, 0.32, 0.22, 0.12]
WILD_ROW = [0.25, 0.15, 0.20, 0.15, 0.25]


def planted_model(map: DiscretizationMap, memory: int, rows, thresholds) -> RegimeModel:
    return RegimeModel.from_arrays(map=map, memory=memory, matrices=[[row] * map.size for row in rows],
                                   thresholds=thresholds)


def random_stochastic(rng: np.random.Generator, size: int) -> np.ndarray:
    return normalize_rows(rng.uniform(0.05, 1.0, size=(size, size)))


@pytest.fixture
def five_state_map():
    return DiscretizationMap(delta=1.0, z_min=2, z_max=2)


@pytest.fixture
def three_state_map():
    return DiscretizationMap(delta=1.0, z_min=1, z_max=1)


@pytest.fixture
def five_regime_model(five_state_map):
    return RegimeModel.from_arrays(map=five_state_map, memory=30, matrices=FIVE_REGIMES,
                                   thresholds=FIVE_THRESHOLDS, f=IndexFunction(), renormalize=True)


@pytest.fixture
def one_threshold_model(five_state_map):
    return planted_model(five_state_map, 10, [CALM_ROW, MIDDLE_ROW], (1.0,))


@pytest.fixture
def planted_series(one_threshold_model):
    """30000 steps from a two-regime model split at V = 1.0 (memory 10)."""
    return simulate_imc(one_threshold_model, SimulationConfig(length=30_000, seed=11))
