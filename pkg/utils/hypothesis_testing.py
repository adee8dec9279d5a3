# utils/hypothesis_testing.py
import logging
import math
from typing import Literal, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator
from scipy.stats import chi2

from utils.changepoint_search import BinnedCounts, CandidateGrid, ChangePointFit, distance_statistic, search_binned
from utils.errors import InputDataError
from utils.imc_estimation import Partition, check_stochastic, count_transitions, estimate_matrices, loglik_array
from utils.imc_simulation import empirical_distribution, markov_replicates
from utils.index_process import IndexFunction, IndexSeries, moving_index
from utils.market_data import DiscreteReturnSeries, DiscretizationMap, SeriesModel, frozen_array
from utils.workers import run_batched

log = logging.getLogger(__name__)

DEFAULT_ALPHAS = (0.05, 0.01)
BATCH_SIZE = 64


class NullDistribution(SeriesModel):
    samples: np.ndarray = Field(..., description="Bootstrap statistics D_B, in replicate order.")
    null_matrix: tuple[tuple[float, ...], ...]
    length: int
    grid: tuple[float, ...]
    k: int
    seed: int
    memory: int
    mode: Literal['search', 'fixed'] = 'search'
    strategy: str = 'dp'

    @field_validator('samples', mode='before')
    def validate_samples(cls, value):
        array = frozen_array(value, np.float64)
        if len(array) == 0:
            raise ValueError("a null distribution needs at least one sample")
        if not np.all(np.isfinite(array)) or np.any(array < 0):
            raise ValueError("bootstrap statistics must be finite and non-negative")
        return array

    @property
    def B(self) -> int:
        return len(self.samples)


class TestResult(BaseModel):
    model_config = ConfigDict(frozen=True)
    __test__ = False

    D_hat: float
    B: int
    mode: Literal['search', 'fixed'] = 'search'
    critical_values: dict[float, float]
    p_value: float
    reject: dict[float, bool]
    chi_square_df: int
    chi_square_critical: dict[float, float]


def _replicate_statistic(path: np.ndarray, f_values: np.ndarray, memory: int, points: Sequence[float],
                         states: int, k: int, mode: str, strategy: str) -> float:
    index = moving_index(f_values, path, memory)
    source, target = path[memory - 1:-1], path[memory:]
    binned = BinnedCounts.from_arrays(source, target, index[:-1], points, states)
    null = float(loglik_array(binned.interval_counts(0, binned.n_cells)))
    if mode == 'fixed':
        fit = float(loglik_array(binned.cells).sum())
    else:
        _, fit = search_binned(binned, k, strategy)
    return distance_statistic(fit, null)


def bootstrap_null(P_null: np.ndarray, T: int, B: int, grid: CandidateGrid, k: int, seed: int, *,
                   memory: int, map: DiscretizationMap, f: IndexFunction | None = None,
                   initial_distribution=None, strategy: str = 'dp',
                   fixed_thresholds: Sequence[float] | None = None,
                   threads: int | None = None, batch_size: int = BATCH_SIZE) -> NullDistribution:
    """
    Simulates B plain Markov trajectories of length T from P_null and records D for each.

    By default every replicate rebuilds the index and re-runs the change-point search on the same grid
    with the same k. With `fixed_thresholds`, D is evaluated at those thresholds without searching.
    """
    P_null = check_stochastic(P_null)
    if P_null.shape[0] != map.size:
        raise InputDataError(f"null matrix has {P_null.shape[0]} states but the map has {map.size}")
    if B < 1:
        raise InputDataError(f"bootstrap size must be at least 1, got {B}")
    if T < memory + 2:
        raise InputDataError(f"replicate length {T} must be at least memory + 2 = {memory + 2}")
    f = f or IndexFunction()
    f_values = f.values(map)
    if fixed_thresholds is not None:
        mode, points, k = 'fixed', tuple(Partition(thresholds=tuple(fixed_thresholds)).thresholds), len(fixed_thresholds)
    else:
        mode, points = 'search', grid.points
        if k < 1 or k > grid.n:
            raise InputDataError(f"cannot search {k} threshold(s) on a grid of {grid.n}")

    def run_batch(replicate_ids: list[int]) -> list[float]:
        paths = markov_replicates(P_null, T, seed, replicate_ids, initial_distribution)
        statistics = [_replicate_statistic(path.astype(np.int64), f_values, memory, points, map.size, k, mode, strategy)
                      for path in paths]
        log.info(f"Bootstrap replicates {replicate_ids[0]}..{replicate_ids[-1]} done.")
        return statistics

    log.info(f"Bootstrapping {B} replicate(s) of length {T} (mode={mode}, k={k}, seed={seed}).")
    samples = run_batched(run_batch, B, batch_size, threads)
    return NullDistribution(
        samples=samples, null_matrix=tuple(tuple(row) for row in P_null.tolist()), length=T, grid=tuple(points),
        k=k, seed=seed, memory=memory, mode=mode, strategy=strategy if mode == 'search' else 'fixed',
    )


def critical_value(dist: NullDistribution, alpha: float) -> float:
    """Nearest-rank (1 - alpha) quantile of the bootstrap statistics."""
    if not 0 < alpha < 1:
        raise InputDataError(f"alpha must lie in (0, 1), got {alpha}")
    ordered = np.sort(dist.samples)
    rank = max(1, math.ceil((1.0 - alpha) * dist.B - 1e-9))
    return float(ordered[rank - 1])


def p_value(dist: NullDistribution, D_hat: float) -> float:
    """(1 + #{D_B >= D_hat}) / (B + 1)."""
    exceed = int(np.sum(dist.samples >= D_hat))
    return (1 + exceed) / (dist.B + 1)


def chi_square_reference(E_size: int) -> int:
    """Degrees of freedom of the asymptotic distribution of D for a known change point."""
    if E_size < 2:
        raise InputDataError(f"E needs at least two states, got {E_size}")
    return E_size * (E_size - 1)


def chi_square_quantile(E_size: int, alpha: float) -> float:
    return float(chi2.ppf(1.0 - alpha, chi_square_reference(E_size)))


def evaluate(dist: NullDistribution, D_hat: float, E_size: int, alphas: Sequence[float] = DEFAULT_ALPHAS) -> TestResult:
    critical = {alpha: critical_value(dist, alpha) for alpha in alphas}
    return TestResult(
        D_hat=D_hat, B=dist.B, mode=dist.mode, critical_values=critical, p_value=p_value(dist, D_hat),
        reject={alpha: D_hat >= d for alpha, d in critical.items()},
        chi_square_df=chi_square_reference(E_size),
        chi_square_critical={alpha: chi_square_quantile(E_size, alpha) for alpha in alphas},
    )


def null_matrix(J: DiscreteReturnSeries, V: IndexSeries) -> np.ndarray:
    """Single-matrix fit over every transition with a defined index."""
    return estimate_matrices(count_transitions(J, V, Partition())).matrices[0]


def run_test(fit: ChangePointFit, J: DiscreteReturnSeries, V: IndexSeries, grid: CandidateGrid, B: int, seed: int,
             alphas: Sequence[float] = DEFAULT_ALPHAS, fixed_psi: bool = False,
             threads: int | None = None) -> tuple[TestResult, NullDistribution]:
    """Tests H0 (no change point) against the fitted k-threshold model."""
    if fit.k < 1:
        raise InputDataError("the test needs a fit with at least one threshold")
    dist = bootstrap_null(
        null_matrix(J, V), len(J), B, grid, fit.k, seed, memory=V.memory, map=J.map, f=V.f,
        initial_distribution=empirical_distribution(J), strategy=fit.strategy if fit.strategy in ('dp', 'exhaustive') else 'dp',
        fixed_thresholds=fit.thresholds if fixed_psi else None, threads=threads,
    )
    result = evaluate(dist, fit.distance, J.map.size, alphas)
    log.info(f"D={result.D_hat:.3f}, p={result.p_value:.4f}, critical values {result.critical_values}.")
    return result, dist
