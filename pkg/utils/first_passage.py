# utils/first_passage.py
import logging
from typing import Literal, Sequence

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from utils.errors import InputDataError, StatisticalError
from utils.imc_estimation import RegimeModel
from utils.imc_simulation import replicate_rng, walk_index_batch
from utils.index_process import assign_regimes
from utils.market_data import DiscreteReturnSeries, DiscretizationMap, SeriesModel, frozen_array
from utils.workers import run_batched

log = logging.getLogger(__name__)

'''
First entrance time of the index into a target interval, counted in steps after the present window.

The exact method is a dynamic program over all |E|^m windows. A window is encoded in base |E| with the
oldest state as the most significant digit, so appending state j to window w gives
(w mod |E|^(m-1)) * |E| + j.
'''

MAX_WINDOWS = 1_000_000
MC_BATCH_SIZE = 2048


class TargetInterval(BaseModel):
    """Interval of index values; None means unbounded. Open below and closed above unless lower_closed."""
    model_config = ConfigDict(frozen=True)

    lower: float | None = None
    upper: float | None = None
    lower_closed: bool = False
    label: str = ''

    @model_validator(mode='after')
    def check_order(self):
        if self.lower is not None and self.upper is not None and self.lower > self.upper:
            raise ValueError("target lower bound exceeds upper bound")
        return self

    def mask(self, values: np.ndarray) -> np.ndarray:
        values = np.asarray(values, dtype=np.float64)
        inside = np.ones(values.shape, dtype=bool)
        if self.lower is not None:
            inside &= (values >= self.lower) if self.lower_closed else (values > self.lower)
        if self.upper is not None:
            inside &= values <= self.upper
        return inside

    def contains(self, value: float) -> bool:
        return bool(self.mask(np.asarray([value]))[0])


def target_for_regime(model: RegimeModel, regime: int) -> TargetInterval:
    """Interval of regime `regime` (1-based): (-inf, psi_1], (psi_{a-1}, psi_a], ..., (psi_k, +inf)."""
    if not 1 <= regime <= model.k + 1:
        raise InputDataError(f"target regime must lie in 1..{model.k + 1}, got {regime}")
    edges = [None, *model.thresholds, None]
    return TargetInterval(lower=edges[regime - 1], upper=edges[regime], label=f"regime {regime}")


class WindowState(BaseModel):
    """The last m states (labels), oldest first."""
    model_config = ConfigDict(frozen=True)

    states: tuple[int, ...]
    map: DiscretizationMap

    @model_validator(mode='after')
    def check_states(self):
        if not self.states:
            raise ValueError("a window needs at least one state")
        if any(s < -self.map.z_min or s > self.map.z_max for s in self.states):
            raise ValueError(f"window states must lie in [-{self.map.z_min}, {self.map.z_max}]")
        return self

    @classmethod
    def from_series(cls, J: DiscreteReturnSeries, memory: int) -> 'WindowState':
        if len(J) < memory:
            raise InputDataError(f"series of length {len(J)} is shorter than the memory {memory}")
        return cls(states=tuple(int(s) for s in J.states[-memory:]), map=J.map)

    @property
    def indices(self) -> np.ndarray:
        return np.asarray(self.states, dtype=np.int64) + self.map.z_min

    @property
    def m(self) -> int:
        return len(self.states)

    def index_value(self, f_values: np.ndarray) -> float:
        return float(f_values[self.indices].mean())


def _check_window(window: WindowState, model: RegimeModel):
    if window.map != model.map:
        raise InputDataError("window and model use different state sets")
    if window.m != model.memory:
        raise InputDataError(f"window has {window.m} states but the model memory is {model.memory}")


def _next_index_values(window: WindowState, model: RegimeModel) -> np.ndarray:
    """Index value after appending each state of E to the window."""
    f = model.f_values()
    kept = f[window.indices[1:]].sum()
    return (kept + f) / model.memory


def reachable_set(window: WindowState, model: RegimeModel, target: TargetInterval) -> frozenset[int]:
    """States whose arrival next step puts the index inside the target."""
    _check_window(window, model)
    inside = target.mask(_next_index_values(window, model))
    return frozenset(int(s) for s in model.map.states[inside])


def unreachable_set(window: WindowState, model: RegimeModel, target: TargetInterval) -> frozenset[int]:
    return frozenset(int(s) for s in model.map.states) - reachable_set(window, model, target)


class FirstPassageDistribution(SeriesModel):
    target: TargetInterval
    horizon: int = Field(..., ge=1)
    g: np.ndarray = Field(..., description="g[n-1] = P(first entrance at step n), n = 1..horizon.")
    stderr: np.ndarray | None = None
    method: Literal['exact', 'monte-carlo']
    replicates: int | None = None

    @field_validator('g', 'stderr', mode='before')
    def validate_arrays(cls, value):
        return None if value is None else frozen_array(value, np.float64)

    @model_validator(mode='after')
    def check_mass(self):
        if len(self.g) != self.horizon:
            raise ValueError("g must hold one probability per step of the horizon")
        if np.any(self.g < 0) or self.g.sum() > 1 + 1e-12:
            raise ValueError("g must be a sub-probability vector")
        return self

    @property
    def tail(self) -> float:
        """Mass of no entrance within the horizon."""
        return max(0.0, 1.0 - float(self.g.sum()))

    def cumulative(self) -> np.ndarray:
        return np.cumsum(self.g)

    def to_frame(self) -> pd.DataFrame:
        stderr = self.stderr if self.stderr is not None else np.zeros(self.horizon)
        return pd.DataFrame({'n': np.arange(1, self.horizon + 1), 'g': self.g, 'stderr': stderr})


def first_passage_exact(model: RegimeModel, window: WindowState, target: TargetInterval, horizon: int) -> FirstPassageDistribution:
    """
    h_1(w) = sum over reachable j of P_{i,j}(V(w)); h_n(w) = sum over unreachable j of P_{i,j}(V(w)) h_{n-1}(w+j),
    where i is the newest state of w and w+j the shifted window. g(n) = h_n(current window).
    """
    _check_window(window, model)
    if horizon < 1:
        raise InputDataError(f"horizon must be positive, got {horizon}")
    size, m = model.map.size, model.memory
    if size ** m > MAX_WINDOWS:
        raise StatisticalError(f"{size}^{m} window states exceed the limit of {MAX_WINDOWS}; use the Monte Carlo method")

    count = size ** m
    codes = np.arange(count)
    digits = np.stack(np.unravel_index(codes, (size,) * m), axis=1)
    f = model.f_values()
    values = f[digits].mean(axis=1)
    regimes = assign_regimes(values, model.thresholds)
    prob = model.transition_array()[regimes, digits[:, -1]]
    nxt = (codes % (size ** (m - 1)))[:, None] * size + np.arange(size)[None, :]
    enters = target.mask(values)[nxt]
    stay = prob * ~enters

    start = int(np.ravel_multi_index(tuple(window.indices), (size,) * m))
    g = np.empty(horizon)
    h = (prob * enters).sum(axis=1)
    g[0] = h[start]
    for n in range(1, horizon):
        h = (stay * h[nxt]).sum(axis=1)
        g[n] = h[start]
    log.info(f"Exact first passage over {count} window(s), horizon {horizon}: mass {g.sum():.6f}.")
    return FirstPassageDistribution(target=target, horizon=horizon, g=np.clip(g, 0.0, None), method='exact')


def first_passage_mc(model: RegimeModel, window: WindowState, target: TargetInterval, horizon: int,
                     replicates: int, seed: int, threads: int | None = None,
                     batch_size: int = MC_BATCH_SIZE) -> FirstPassageDistribution:
    """Frequency estimate of g from `replicates` simulated paths, with binomial standard errors."""
    _check_window(window, model)
    if horizon < 1:
        raise InputDataError(f"horizon must be positive, got {horizon}")
    if replicates < 1:
        raise InputDataError(f"replicates must be at least 1, got {replicates}")

    def run_batch(replicate_ids: list[int]) -> list[int]:
        rngs = [replicate_rng(seed, rid) for rid in replicate_ids]
        windows = np.tile(window.indices, (len(rngs), 1))
        hit = np.zeros(len(rngs), dtype=np.int64)
        for n, (_, values) in enumerate(walk_index_batch(model, windows, rngs, horizon), start=1):
            hit[(hit == 0) & target.mask(values)] = n
            if hit.all():
                break
        return hit.tolist()

    hits = np.asarray(run_batched(run_batch, replicates, batch_size, threads))
    g = np.bincount(hits, minlength=horizon + 1)[1:horizon + 1] / replicates
    stderr = np.sqrt(g * (1 - g) / replicates)
    log.info(f"Monte Carlo first passage: {replicates} path(s), {int((hits > 0).sum())} entered within {horizon} step(s).")
    return FirstPassageDistribution(target=target, horizon=horizon, g=g, stderr=stderr, method='monte-carlo',
                                    replicates=replicates)


def first_passage(model: RegimeModel, window: WindowState, target: TargetInterval, horizon: int,
                  replicates: int | None = None, seed: int | None = None,
                  threads: int | None = None) -> FirstPassageDistribution:
    """Exact when `replicates` is not given, Monte Carlo otherwise."""
    if replicates is None:
        return first_passage_exact(model, window, target, horizon)
    if seed is None:
        raise InputDataError("the Monte Carlo method needs a seed")
    return first_passage_mc(model, window, target, horizon, replicates, seed, threads)


def window_from_labels(states: Sequence[int], map: DiscretizationMap) -> WindowState:
    try:
        return WindowState(states=tuple(int(s) for s in states), map=map)
    except ValueError as e:
        raise InputDataError(str(e)) from e
