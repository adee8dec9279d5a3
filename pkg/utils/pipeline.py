# utils/pipeline.py
import logging
from pathlib import Path

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict

from utils.artifacts import read_json
from utils.changepoint_search import (CandidateGrid, ChangePointFit, ChangePointSearch, ModelSelection, candidate_grid,
                                      search_multi, select_k)
from utils.diagnostics import regime_labels
from utils.errors import InputDataError
from utils.index_process import IndexFunction, IndexSeries, assign_regimes, compute_index
from utils.market_data import (DiscreteReturnSeries, DiscretizationMap, build_map, discretize, load_ticks, log_returns,
                               read_discrete_csv, resample)
from utils.run_config import RunConfig

log = logging.getLogger(__name__)

'''
Steps shared by several commands: turning the configured input into a discrete series, and fitting it.
'''


class IngestSummary(BaseModel):
    model_config = ConfigDict(frozen=True)

    ticks: int = 0
    malformed_rows: int = 0
    reordered_rows: int = 0
    prices: int = 0
    returns: int = 0
    excluded_returns: int = 0
    sigma: float | None = None
    map: DiscretizationMap
    state_counts: dict[int, int]


def ingest(config: RunConfig) -> tuple[DiscreteReturnSeries, IngestSummary]:
    """Ticks -> prices -> log-returns -> discrete states, per the configured period and grid."""
    path = config.require_file('data')
    ticks = load_ticks(path)
    prices = resample(ticks, config.period_ms)
    returns = log_returns(prices, config.sessions)
    map = build_map(returns, config.z_min, config.z_max, config.delta)
    J = discretize(returns, map)
    summary = IngestSummary(
        ticks=len(ticks), malformed_rows=ticks.malformed_rows, reordered_rows=ticks.reordered_rows,
        prices=len(prices), returns=len(returns), excluded_returns=returns.excluded,
        sigma=float(np.std(returns.values, ddof=1)) if len(returns) > 1 else None, map=map,
        state_counts=_state_counts(J),
    )
    log.info(f"Ingested {len(ticks)} ticks into {len(J)} discrete returns over {map.size} states.")
    return J, summary


def _state_counts(J: DiscreteReturnSeries) -> dict[int, int]:
    counts = np.bincount(J.indices, minlength=J.map.size)
    return {int(s): int(c) for s, c in zip(J.map.states, counts)}


def read_map(path: str | Path) -> DiscretizationMap:
    payload = read_json(path)
    if isinstance(payload, dict) and 'result' in payload:
        payload = payload['result']
    if isinstance(payload, dict) and 'map' in payload:
        payload = payload['map']
    try:
        return DiscretizationMap.model_validate(payload)
    except ValueError as e:
        raise InputDataError(f"{path} does not hold a valid map: {e}") from e


def load_series(config: RunConfig) -> DiscreteReturnSeries:
    """The discrete series from --series (with its map) or, failing that, ingested from --data."""
    if config.series is not None:
        series = config.require_file('series')
        map_path = Path(config.map_file) if config.map_file else series.with_name('map.json')
        if not map_path.is_file():
            raise FileNotFoundError(f"map file not found: {map_path}")
        return read_discrete_csv(series, read_map(map_path))
    if config.data is not None:
        return ingest(config)[0]
    raise InputDataError("no input given: pass --series (with its map) or --data")


def index_function(config: RunConfig) -> IndexFunction:
    return IndexFunction(tag=config.index_function, table=config.index_table)


def build_index(config: RunConfig, J: DiscreteReturnSeries) -> IndexSeries:
    return compute_index(J, config.memory, index_function(config))


class FitOutcome(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    fit: ChangePointFit
    grid: CandidateGrid
    selection: ModelSelection | None = None


def fit_series(config: RunConfig, J: DiscreteReturnSeries, V: IndexSeries) -> FitOutcome:
    """Fits config.k thresholds, or selects k by the configured criterion when k is not set."""
    grid = candidate_grid(V, config.grid_n, config.grid_mode, config.min_exposure)
    if config.k is None:
        selection = select_k(J, V, grid, config.k_max, config.criterion, config.improvement_floor, config.strategy)
        return FitOutcome(fit=selection.best, grid=grid, selection=selection)
    if config.k == 0:
        return FitOutcome(fit=ChangePointSearch(J, V, grid).fit(0, config.strategy), grid=grid)
    return FitOutcome(fit=search_multi(J, V, grid, config.k, config.strategy), grid=grid)


def testable_fit(config: RunConfig, J: DiscreteReturnSeries, V: IndexSeries,
                 outcome: FitOutcome | None = None) -> FitOutcome:
    """The fit the bootstrap test runs on. A fit without thresholds is replaced by the best single threshold."""
    if outcome is None:
        if config.k is not None:
            config = config.model_copy(update={'k': max(1, config.k)})
        outcome = fit_series(config, J, V)
    if outcome.fit.k == 0:
        log.info("Criterion selected k=0; testing the best single threshold instead.")
        outcome = fit_series(config.model_copy(update={'k': 1}), J, V)
    return outcome


def fit_summary(outcome: FitOutcome, V: IndexSeries) -> dict:
    """Fit results for the model artifact; thresholds are given in state units and in return units."""
    fit = outcome.fit
    summary = {
        'k': fit.k,
        'thresholds': fit.thresholds,
        'physical_thresholds': [t * V.unit_scale for t in fit.thresholds],
        'unit_scale': V.unit_scale,
        'labels': regime_labels(fit.k + 1),
        'occupancy': fit.occupancy,
        'log_likelihood': fit.log_likelihood,
        'null_log_likelihood': fit.null_log_likelihood,
        'distance': fit.distance,
        'aic': fit.aic,
        'bic': fit.bic,
        'strategy': fit.strategy,
        'grid': {'n': outcome.grid.n, 'mode': outcome.grid.mode, 'points': outcome.grid.points,
                 'dropped': outcome.grid.dropped},
    }
    if outcome.selection is not None:
        summary['selection'] = {
            'criterion': outcome.selection.criterion,
            'improvement_floor': outcome.selection.improvement_floor,
            'stopped_at': outcome.selection.stopped_at,
            'trace': outcome.selection.trace,
        }
    return summary


def index_frame(V: IndexSeries, thresholds) -> pd.DataFrame:
    """Index series with the 1-based regime of every value (n is the time index)."""
    return pd.DataFrame({
        'n': np.arange(V.offset, V.offset + len(V)),
        'V': V.values,
        'regime': assign_regimes(V.values, thresholds) + 1,
    })


def selection_frame(selection: ModelSelection) -> pd.DataFrame:
    return pd.DataFrame([step.model_dump(exclude={'thresholds'}) for step in selection.trace])
