# utils/changepoint_search.py
import logging
import math
from itertools import combinations
from typing import Literal, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator

from utils.errors import InputDataError, StatisticalError
from utils.imc_estimation import (CountTensor, Partition, RegimeModel, aligned_transitions, build_model,
                                  count_array, log_likelihood, loglik_array)
from utils.index_process import IndexSeries, regime_occupancy
from utils.market_data import DiscreteReturnSeries

log = logging.getLogger(__name__)

'''
Change points are index values, not times. A grid of n candidate values cuts the index range into
n+1 cells; a partition with k thresholds is a choice of k grid positions. Counts are binned by cell
once, and any partition's counts come from prefix sums over the cells.
'''

DEFAULT_MIN_EXPOSURE = 100


class CandidateGrid(BaseModel):
    model_config = ConfigDict(frozen=True)

    points: tuple[float, ...]
    mode: Literal['quantile', 'uniform'] = 'quantile'
    dropped: tuple[float, ...] = Field((), description="Candidates removed by the exposure rule.")

    @field_validator('points')
    def validate_points(cls, value):
        if any(b <= a for a, b in zip(value, value[1:])):
            raise ValueError("candidate points must be strictly increasing")
        return value

    @property
    def n(self) -> int:
        return len(self.points)


def candidate_grid(V: IndexSeries, n: int, mode: str = 'quantile', min_exposure: int = DEFAULT_MIN_EXPOSURE) -> CandidateGrid:
    """
    Places n candidate thresholds over the observed index range, at empirical quantiles (default) or
    evenly spaced. Candidates leaving fewer than `min_exposure` transitions on either side are dropped.
    """
    if n < 1:
        raise InputDataError(f"grid size must be at least 1, got {n}")
    if len(V) == 0:
        raise InputDataError("cannot build a candidate grid from an empty index series")
    distinct = np.unique(V.values)
    if len(distinct) < 2:
        raise InputDataError("no distinct candidates: the index series is constant")
    if n > len(distinct):
        raise InputDataError(f"grid size {n} exceeds the {len(distinct)} distinct index values")

    levels = np.arange(1, n + 1) / (n + 1)
    low, high = float(distinct[0]), float(distinct[-1])
    if mode == 'quantile':
        raw = np.quantile(V.values, levels, method='inverted_cdf')
    elif mode == 'uniform':
        raw = low + (high - low) * levels
    else:
        raise InputDataError(f"unknown grid mode '{mode}'")
    raw = np.unique(raw[raw < high])
    if len(raw) < n:
        log.info(f"{n - len(raw)} coincident candidate(s) merged.")

    sources = np.sort(V.values[:-1])
    below = np.searchsorted(sources, raw, side='right')
    above = len(sources) - below
    keep = (below >= min_exposure) & (above >= min_exposure)
    dropped = raw[~keep]
    if len(dropped):
        log.warning(f"Dropped {len(dropped)} candidate(s) with fewer than {min_exposure} transitions on one side.")
    log.info(f"Candidate grid: {int(keep.sum())} point(s), mode={mode}.")
    return CandidateGrid(points=tuple(float(p) for p in raw[keep]), mode=mode, dropped=tuple(float(p) for p in dropped))


class BinnedCounts:
    """Transition counts per grid cell with prefix sums for O(|E|^2) interval extraction."""

    def __init__(self, cells: np.ndarray):
        self.cells = cells
        self.prefix = np.concatenate([np.zeros_like(cells[:1]), np.cumsum(cells, axis=0)])
        self._table = None

    @classmethod
    def from_arrays(cls, source: np.ndarray, target: np.ndarray, index: np.ndarray,
                    points: Sequence[float], states: int) -> 'BinnedCounts':
        cell = np.searchsorted(np.asarray(points, dtype=np.float64), index, side='left')
        return cls(count_array(source, target, cell, len(points) + 1, states))

    @classmethod
    def from_series(cls, J: DiscreteReturnSeries, V: IndexSeries, grid: CandidateGrid) -> 'BinnedCounts':
        source, target, index = aligned_transitions(J, V)
        return cls.from_arrays(source, target, index, grid.points, J.map.size)

    @property
    def n_cells(self) -> int:
        return len(self.cells)

    def interval_counts(self, start: int, stop: int) -> np.ndarray:
        """Counts pooled over cells start .. stop-1."""
        return self.prefix[stop] - self.prefix[start]

    def partition_counts(self, positions: Sequence[int]) -> CountTensor:
        """Counts for thresholds at the given grid positions (0-based)."""
        edges = edges_for(positions, self.n_cells)
        return CountTensor(counts=np.stack([self.interval_counts(a, b) for a, b in zip(edges, edges[1:])]))

    def total(self) -> CountTensor:
        return CountTensor(counts=self.interval_counts(0, self.n_cells)[None])

    @property
    def table(self) -> np.ndarray:
        """table[a, b] = log-likelihood of the pooled cells a .. b-1 (−inf where a >= b)."""
        if self._table is None:
            size = self.n_cells + 1
            table = np.full((size, size), -np.inf)
            for a in range(size - 1):
                table[a, a + 1:] = loglik_array(self.prefix[a + 1:] - self.prefix[a])
            self._table = table
        return self._table


def edges_for(positions: Sequence[int], n_cells: int) -> tuple[int, ...]:
    return (0, *(p + 1 for p in positions), n_cells)


def partition_loglik(table: np.ndarray, edges: Sequence[int]) -> float:
    """Sums segment likelihoods left to right."""
    total = 0.0
    for a, b in zip(edges, edges[1:]):
        total += table[a, b]
    return total


def _tolerance(best: float) -> float:
    return 1e-9 * max(1.0, abs(best))


def _search_exhaustive(table: np.ndarray, n: int, k: int) -> tuple[tuple[int, ...], float]:
    n_cells = n + 1
    candidates = list(combinations(range(n), k))
    values = [partition_loglik(table, edges_for(c, n_cells)) for c in candidates]
    best = max(values)
    floor = best - _tolerance(best)
    for positions, value in zip(candidates, values):
        if value >= floor:
            return positions, value
    raise StatisticalError("exhaustive search found no partition")


def _search_dp(table: np.ndarray, n: int, k: int) -> tuple[tuple[int, ...], float]:
    """
    Segmented dynamic programming over cells. suffix[j, a] is the best likelihood of cells a..n split
    by j thresholds; positions are then read off front to back taking the smallest admissible one.
    """
    n_cells = n + 1
    suffix = np.full((k + 1, n_cells + 1), -np.inf)
    suffix[0, :n_cells] = table[:n_cells, n_cells]
    for j in range(1, k + 1):
        for a in range(n_cells):
            options = table[a, a + 1:n_cells] + suffix[j - 1, a + 1:n_cells]
            if len(options):
                suffix[j, a] = options.max()
    best = suffix[k, 0]
    if not np.isfinite(best):
        raise StatisticalError(f"no partition with {k} thresholds on a grid of {n}")
    floor = best - _tolerance(best)

    positions, start, accumulated = [], 0, 0.0
    for j in range(k, 0, -1):
        for b in range(start + 1, n_cells):
            if accumulated + table[start, b] + suffix[j - 1, b] >= floor:
                positions.append(b - 1)
                accumulated += table[start, b]
                start = b
                break
    return tuple(positions), best


def search_binned(binned: BinnedCounts, k: int, strategy: str = 'dp') -> tuple[tuple[int, ...], float]:
    """Best threshold positions and their log-likelihood for k thresholds."""
    n = binned.n_cells - 1
    if k == 0:
        return (), float(binned.table[0, binned.n_cells])
    if k > n:
        raise StatisticalError(f"cannot place {k} thresholds on a grid of {n}")
    if strategy == 'exhaustive':
        positions, _ = _search_exhaustive(binned.table, n, k)
    elif strategy == 'dp':
        positions, _ = _search_dp(binned.table, n, k)
    else:
        raise InputDataError(f"unknown search strategy '{strategy}'")
    return positions, partition_loglik(binned.table, edges_for(positions, binned.n_cells))


class ChangePointFit(BaseModel):
    model_config = ConfigDict(frozen=True)

    k: int
    thresholds: tuple[float, ...]
    model: RegimeModel
    log_likelihood: float
    null_log_likelihood: float
    distance: float = Field(..., ge=0)
    aic: float
    bic: float
    grid_size: int
    occupancy: tuple[float, ...] = ()
    strategy: str = 'dp'


def distance_statistic(fit_loglik: float, null_loglik: float) -> float:
    """D = 2 (L_fit - L_null), clamped at zero."""
    return max(0.0, 2.0 * (fit_loglik - null_loglik))


def information_criteria(loglik: float, k: int, E_size: int, n_grid: int) -> tuple[float, float]:
    """AIC and BIC for k thresholds; BIC uses the natural log of the candidate-grid size."""
    if E_size < 2:
        raise InputDataError("information criteria need at least two states")
    parameters = E_size * (E_size - 1) * (k + 1)
    aic = 2.0 * parameters - 2.0 * loglik
    bic = 2.0 * math.log(n_grid) * parameters - 2.0 * loglik
    return aic, bic


class ChangePointSearch:
    """Holds the binned counts of one series so fits for several k share the work."""

    def __init__(self, J: DiscreteReturnSeries, V: IndexSeries, grid: CandidateGrid):
        self.J = J
        self.V = V
        self.grid = grid
        self.binned = BinnedCounts.from_series(J, V, grid)
        self.null_loglik = log_likelihood(self.binned.total())

    def fit(self, k: int, strategy: str = 'dp') -> ChangePointFit:
        if k > 0 and self.grid.n == 0:
            raise StatisticalError("all candidates were dropped by the exposure rule; nothing to search")
        positions, _ = search_binned(self.binned, k, strategy)
        return self.fit_at(tuple(self.grid.points[p] for p in positions), strategy)

    def fit_at(self, thresholds: Sequence[float], strategy: str = 'fixed') -> ChangePointFit:
        partition = Partition(thresholds=tuple(thresholds))
        model, counts = build_model(self.J, self.V, partition)
        loglik = log_likelihood(counts)
        aic, bic = information_criteria(loglik, partition.k, self.J.map.size, max(1, self.grid.n))
        fit = ChangePointFit(
            k=partition.k, thresholds=partition.thresholds, model=model, log_likelihood=loglik,
            null_log_likelihood=self.null_loglik, distance=distance_statistic(loglik, self.null_loglik),
            aic=aic, bic=bic, grid_size=self.grid.n,
            occupancy=tuple(regime_occupancy(self.V, partition.thresholds)), strategy=strategy,
        )
        log.info(f"k={fit.k}: thresholds={[round(t, 4) for t in fit.thresholds]} logL={loglik:.3f} D={fit.distance:.3f}")
        return fit


def search_single(J: DiscreteReturnSeries, V: IndexSeries, grid: CandidateGrid) -> ChangePointFit:
    """Best single threshold over the grid (ties go to the smaller value)."""
    if grid.n == 0:
        raise StatisticalError("all candidates were dropped by the exposure rule; nothing to search")
    return ChangePointSearch(J, V, grid).fit(1, strategy='exhaustive')


def search_multi(J: DiscreteReturnSeries, V: IndexSeries, grid: CandidateGrid, k: int,
                 strategy: str = 'dp') -> ChangePointFit:
    """Best k thresholds, by enumeration of all combinations or by segmented dynamic programming."""
    if k > 0 and k >= grid.n:
        raise InputDataError(f"k={k} must be smaller than the grid size {grid.n}")
    return ChangePointSearch(J, V, grid).fit(k, strategy)


class SelectionStep(BaseModel):
    model_config = ConfigDict(frozen=True)

    k: int
    log_likelihood: float
    distance: float
    aic: float
    bic: float
    pct_distance: float | None = None
    pct_aic: float | None = None
    pct_bic: float | None = None
    thresholds: tuple[float, ...] = ()


class ModelSelection(BaseModel):
    model_config = ConfigDict(frozen=True)

    criterion: Literal['aic', 'bic']
    improvement_floor: float
    best: ChangePointFit
    fits: tuple[ChangePointFit, ...]
    trace: tuple[SelectionStep, ...]
    stopped_at: int


def _relative_change(current: float, previous: float) -> float | None:
    if previous == 0:
        return None
    return (current - previous) / abs(previous)


def select_k(J: DiscreteReturnSeries, V: IndexSeries, grid: CandidateGrid, k_max: int, criterion: str = 'bic',
             improvement_floor: float = 0.001, strategy: str = 'dp') -> ModelSelection:
    """
    Fits k = 0, 1, ... and stops at the first k whose relative criterion improvement is below the floor
    (or at k_max). Returns the criterion minimiser among the fitted k and the full trace.
    """
    criterion = criterion.lower()
    if criterion not in ('aic', 'bic'):
        raise InputDataError(f"unknown criterion '{criterion}'")
    if k_max < 1:
        raise InputDataError(f"k_max must be at least 1, got {k_max}")
    if grid.n == 0:
        raise StatisticalError("all candidates were dropped by the exposure rule; nothing to search")

    search = ChangePointSearch(J, V, grid)
    limit = min(k_max, grid.n)
    fits, trace = [search.fit(0, strategy)], []
    trace.append(SelectionStep(k=0, log_likelihood=fits[0].log_likelihood, distance=0.0, aic=fits[0].aic, bic=fits[0].bic))
    stopped_at = 0
    for k in range(1, limit + 1):
        fit = search.fit(k, strategy)
        previous = fits[-1]
        fits.append(fit)
        trace.append(SelectionStep(
            k=k, log_likelihood=fit.log_likelihood, distance=fit.distance, aic=fit.aic, bic=fit.bic,
            pct_distance=_relative_change(fit.distance, previous.distance),
            pct_aic=_relative_change(fit.aic, previous.aic), pct_bic=_relative_change(fit.bic, previous.bic),
            thresholds=fit.thresholds,
        ))
        stopped_at = k
        change = _relative_change(getattr(fit, criterion), getattr(previous, criterion))
        improvement = -change if change is not None else 0.0
        if improvement < improvement_floor:
            log.info(f"Stopping at k={k}: {criterion.upper()} improvement {improvement:.4%} below {improvement_floor:.4%}.")
            break

    scores = [getattr(f, criterion) for f in fits]
    best = fits[int(np.argmin(scores))]
    log.info(f"Selected k={best.k} by {criterion.upper()}.")
    return ModelSelection(criterion=criterion, improvement_floor=improvement_floor, best=best,
                          fits=tuple(fits), trace=tuple(trace), stopped_at=stopped_at)
