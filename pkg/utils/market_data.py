# utils/market_data.py
import logging
import math
from pathlib import Path
from typing import IO, Sequence

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from utils.errors import InputDataError

log = logging.getLogger(__name__)

'''
Raw ticks -> fixed-frequency prices -> log-returns -> discrete returns on the grid E.

States are stored as signed integers i; the return value of state i is i * delta.
'''


def frozen_array(values, dtype) -> np.ndarray:
    """Copies `values` into a read-only numpy array."""
    array = np.array(values, dtype=dtype)
    array.setflags(write=False)
    return array


class SeriesModel(BaseModel):
    """Base for immutable models that hold numpy arrays."""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)


class TickSeries(SeriesModel):
    timestamps: np.ndarray = Field(..., description="Epoch milliseconds, non-decreasing.")
    prices: np.ndarray = Field(..., description="Positive prices.")
    malformed_rows: int = 0
    reordered_rows: int = 0

    @field_validator('timestamps', mode='before')
    def validate_timestamps(cls, value):
        array = frozen_array(value, np.int64)
        if np.any(np.diff(array) < 0):
            raise ValueError("Tick timestamps must be non-decreasing.")
        return array

    @field_validator('prices', mode='before')
    def validate_prices(cls, value):
        array = frozen_array(value, np.float64)
        if np.any(~(array > 0)):
            raise ValueError("non-positive price in tick series")
        return array

    @model_validator(mode='after')
    def check_lengths(self):
        if len(self.timestamps) != len(self.prices):
            raise ValueError("timestamps and prices differ in length")
        return self

    def __len__(self):
        return len(self.prices)


class PriceSeries(SeriesModel):
    start_time: int
    period: int = Field(..., gt=0, description="Sampling period in milliseconds.")
    prices: np.ndarray

    @field_validator('prices', mode='before')
    def validate_prices(cls, value):
        array = frozen_array(value, np.float64)
        if np.any(~(array > 0)):
            raise ValueError("non-positive price in price series")
        return array

    @property
    def times(self) -> np.ndarray:
        return self.start_time + self.period * np.arange(len(self.prices), dtype=np.int64)

    def __len__(self):
        return len(self.prices)


class ReturnSeries(SeriesModel):
    values: np.ndarray
    excluded: int = Field(0, description="Returns dropped because they span a session gap.")

    @field_validator('values', mode='before')
    def validate_values(cls, value):
        array = frozen_array(value, np.float64)
        if not np.all(np.isfinite(array)):
            raise ValueError("returns must be finite")
        return array

    def __len__(self):
        return len(self.values)


class DiscretizationMap(BaseModel):
    model_config = ConfigDict(frozen=True)

    delta: float = Field(..., gt=0, description="Grid amplitude.")
    z_min: int = Field(..., ge=0)
    z_max: int = Field(..., ge=0)

    @model_validator(mode='after')
    def check_size(self):
        if self.z_min + self.z_max < 1:
            raise ValueError("the state set needs at least two states")
        return self

    @property
    def size(self) -> int:
        return self.z_min + self.z_max + 1

    @property
    def states(self) -> np.ndarray:
        """State labels i = -z_min .. z_max."""
        return np.arange(-self.z_min, self.z_max + 1)

    @property
    def values(self) -> np.ndarray:
        return self.states * self.delta


class DiscreteReturnSeries(SeriesModel):
    states: np.ndarray
    map: DiscretizationMap

    @field_validator('states', mode='before')
    def validate_states(cls, value):
        return frozen_array(value, np.int64)

    @model_validator(mode='after')
    def check_range(self):
        if len(self.states) and (self.states.min() < -self.map.z_min or self.states.max() > self.map.z_max):
            raise ValueError(f"states must lie in [-{self.map.z_min}, {self.map.z_max}]")
        return self

    @property
    def indices(self) -> np.ndarray:
        """0-based positions in E, used for counting."""
        return self.states + self.map.z_min

    @property
    def values(self) -> np.ndarray:
        return self.states * self.map.delta

    def __len__(self):
        return len(self.states)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({'n': np.arange(len(self.states)), 'state': self.states})

    @classmethod
    def from_indices(cls, indices, map: DiscretizationMap) -> 'DiscreteReturnSeries':
        return cls(states=np.asarray(indices, dtype=np.int64) - map.z_min, map=map)


def _parse_timestamps(column: pd.Series) -> pd.Series:
    """Epoch-ms if the column is numeric, ISO-8601 otherwise."""
    numeric = pd.to_numeric(column, errors='coerce')
    if numeric.notna().sum() >= column.notna().sum() * 0.5 and numeric.notna().any():
        return numeric
    parsed = pd.to_datetime(column, utc=True, errors='coerce', format='ISO8601')
    epoch_ms = (parsed - pd.Timestamp(0, tz='UTC')) // pd.Timedelta(milliseconds=1)
    return epoch_ms.astype('float64')


def load_ticks(source: str | Path | IO) -> TickSeries:
    """
    Reads a CSV of ticks with columns `timestamp,price`.

    Malformed rows are dropped and counted; rows out of order are sorted and counted.
    """
    try:
        frame = pd.read_csv(source)
    except pd.errors.EmptyDataError as e:
        raise InputDataError(f"empty file: {source}") from e
    except (pd.errors.ParserError, UnicodeDecodeError) as e:
        raise InputDataError(f"unparseable file {source}: {e}") from e

    frame.columns = [str(c).strip().lower() for c in frame.columns]
    missing = {'timestamp', 'price'} - set(frame.columns)
    if missing:
        raise InputDataError(f"unparseable file {source}: missing column(s) {sorted(missing)}")
    if frame.empty:
        raise InputDataError(f"empty file: {source}")

    timestamps = _parse_timestamps(frame['timestamp'])
    prices = pd.to_numeric(frame['price'], errors='coerce')
    valid = timestamps.notna() & prices.notna()
    malformed = int((~valid).sum())
    if malformed:
        log.warning(f"Dropped {malformed} malformed row(s) from {source}.")
    timestamps = timestamps[valid].astype(np.int64).to_numpy()
    prices = prices[valid].to_numpy(dtype=np.float64)

    if len(prices) == 0:
        raise InputDataError(f"empty file: no valid ticks in {source}")
    if np.any(prices <= 0):
        bad = int(np.argmax(prices <= 0))
        raise InputDataError(f"non-positive price {prices[bad]} at timestamp {timestamps[bad]}")

    reordered = int(np.sum(np.diff(timestamps) < 0))
    if reordered:
        log.warning(f"{reordered} tick(s) out of order in {source}; sorting by timestamp.")
        order = np.argsort(timestamps, kind='mergesort')
        timestamps, prices = timestamps[order], prices[order]

    log.info(f"Loaded {len(prices)} ticks from {source}.")
    return TickSeries(timestamps=timestamps, prices=prices, malformed_rows=malformed, reordered_rows=reordered)


def resample(ticks: TickSeries, period: int) -> PriceSeries:
    """
    One price per period boundary t0 + k*period, taken from the last tick at or before the boundary.
    Empty periods repeat the last observed price.
    """
    if period <= 0:
        raise InputDataError(f"resampling period must be positive, got {period}")
    if len(ticks) == 0:
        raise InputDataError("cannot resample an empty tick series")

    t0 = int(ticks.timestamps[0])
    span = int(ticks.timestamps[-1]) - t0
    count = max(1, math.ceil(span / period))
    boundaries = t0 + period * np.arange(1, count + 1, dtype=np.int64)
    last_tick = np.searchsorted(ticks.timestamps, boundaries, side='right') - 1
    return PriceSeries(start_time=int(boundaries[0]), period=period, prices=ticks.prices[last_tick])


def log_returns(prices: PriceSeries, sessions: Sequence[tuple[int, int]] | None = None) -> ReturnSeries:
    """
    R_n = ln(S_{n+1} / S_n).

    With `sessions` (a list of (open_ms, close_ms) windows), returns whose endpoints fall in different
    sessions, or outside every session, are excluded.
    """
    if len(prices) < 2:
        raise InputDataError(f"need at least 2 prices to compute returns, got {len(prices)}")
    p = prices.prices
    values = np.log(p[1:] / p[:-1])
    if not sessions:
        return ReturnSeries(values=values)

    times = prices.times
    session_id = np.full(len(times), -1)
    for number, (opens, closes) in enumerate(sorted(sessions)):
        session_id[(times >= opens) & (times <= closes)] = number
    keep = (session_id[1:] == session_id[:-1]) & (session_id[1:] >= 0)
    excluded = int((~keep).sum())
    if excluded:
        log.info(f"Excluded {excluded} return(s) spanning session gaps.")
    return ReturnSeries(values=values[keep], excluded=excluded)


def discretize(returns: ReturnSeries, map: DiscretizationMap) -> DiscreteReturnSeries:
    """State i when R is in ((i - 1/2) delta, (i + 1/2) delta]; the outer states absorb the tails."""
    raw = np.ceil(returns.values / map.delta - 0.5)
    states = np.clip(raw, -map.z_min, map.z_max).astype(np.int64)
    return DiscreteReturnSeries(states=states, map=map)


def build_map(returns: ReturnSeries, z_min: int = 2, z_max: int = 2, delta: float | None = None) -> DiscretizationMap:
    """
    Picks the grid amplitude. An explicit `delta` is used as given; otherwise the extreme states
    are placed at two sample standard deviations: delta = 4 * sigma / (z_min + z_max).
    """
    if delta is not None:
        return DiscretizationMap(delta=delta, z_min=z_min, z_max=z_max)
    if len(returns) == 0:
        raise InputDataError("cannot build a discretization map from an empty return series")
    sigma = float(np.std(returns.values, ddof=1)) if len(returns) > 1 else 0.0
    if not sigma > 0:
        raise InputDataError("zero variance: returns are constant, cannot choose a grid amplitude")
    if z_min != z_max:
        log.warning(f"Asymmetric grid (z_min={z_min}, z_max={z_max}); the default amplitude rule assumes symmetry.")
    delta = 4.0 * sigma / (z_min + z_max)
    log.info(f"Grid amplitude set to {delta:.6g} from sigma={sigma:.6g}.")
    return DiscretizationMap(delta=delta, z_min=z_min, z_max=z_max)


def read_discrete_csv(source: str | Path | IO, map: DiscretizationMap) -> DiscreteReturnSeries:
    """Reads a `n,state` CSV written by the ingest command."""
    try:
        frame = pd.read_csv(source, comment='#')
    except (pd.errors.EmptyDataError, pd.errors.ParserError) as e:
        raise InputDataError(f"unparseable series file {source}: {e}") from e
    if 'state' not in frame.columns:
        raise InputDataError(f"unparseable series file {source}: missing 'state' column")
    try:
        return DiscreteReturnSeries(states=frame['state'].to_numpy(), map=map)
    except ValueError as e:
        raise InputDataError(f"invalid states in {source}: {e}") from e
