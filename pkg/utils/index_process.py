# utils/index_process.py
import logging
from typing import Literal, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from utils.errors import InputDataError
from utils.market_data import DiscreteReturnSeries, DiscretizationMap, SeriesModel, frozen_array

log = logging.getLogger(__name__)

# Index values are evaluated on state labels (f(i) with J = i * delta), so V is reported in
# units of delta**p. The scale factor converts back to return units.
NORMALIZATION = "state-units"

_UNIT_POWER = {'square': 2, 'absolute': 1, 'identity': 1, 'table': 0}
_ALIASES = {'abs': 'absolute', 'sq': 'square', 'user-table': 'table'}


class IndexFunction(BaseModel):
    model_config = ConfigDict(frozen=True)

    tag: Literal['square', 'absolute', 'identity', 'table'] = 'square'
    table: tuple[float, ...] | None = Field(None, description="f value per state of E, lowest state first.")

    @field_validator('tag', mode='before')
    def resolve_alias(cls, value):
        return _ALIASES.get(value, value)

    @model_validator(mode='after')
    def check_table(self):
        if self.tag == 'table' and not self.table:
            raise ValueError("a user-table index function needs one value per state")
        if self.tag != 'table' and self.table is not None:
            raise ValueError(f"'{self.tag}' does not take a table")
        return self

    def values(self, map: DiscretizationMap) -> np.ndarray:
        """f evaluated on every state of E, lowest first."""
        states = map.states.astype(np.float64)
        if self.tag == 'square':
            return states ** 2
        if self.tag == 'absolute':
            return np.abs(states)
        if self.tag == 'identity':
            return states
        if len(self.table) != map.size:
            raise InputDataError(f"index table has {len(self.table)} values but E has {map.size} states")
        return np.asarray(self.table, dtype=np.float64)

    def unit_scale(self, map: DiscretizationMap) -> float:
        return map.delta ** _UNIT_POWER[self.tag]


class IndexBounds(BaseModel):
    model_config = ConfigDict(frozen=True)

    lower: float
    upper: float

    @model_validator(mode='after')
    def check_order(self):
        if self.lower > self.upper:
            raise ValueError("lower bound exceeds upper bound")
        return self

    def contains(self, value: float) -> bool:
        return self.lower <= value <= self.upper


class IndexSeries(SeriesModel):
    memory: int = Field(..., ge=1)
    values: np.ndarray = Field(..., description="V_n for n = memory-1 .. T-1.")
    f: IndexFunction
    unit_scale: float = 1.0

    @field_validator('values', mode='before')
    def validate_values(cls, value):
        return frozen_array(value, np.float64)

    @property
    def offset(self) -> int:
        """Time index of values[0]."""
        return self.memory - 1

    def physical_values(self) -> np.ndarray:
        return self.values * self.unit_scale

    def __len__(self):
        return len(self.values)


def moving_index(f_values: np.ndarray, indices: np.ndarray, memory: int) -> np.ndarray:
    """Window averages of f over state indices; works on raw arrays for the simulation paths."""
    window = np.ones(memory)
    return np.convolve(f_values[indices], window, mode='valid') / memory


def compute_index(J: DiscreteReturnSeries, m: int, f: IndexFunction | None = None) -> IndexSeries:
    """V_n = (1/m) * sum_{k<m} f(J_{n-k}), defined for n >= m-1."""
    f = f or IndexFunction()
    if m <= 0:
        raise InputDataError(f"memory must be positive, got {m}")
    if len(J) < m:
        raise InputDataError(f"series of length {len(J)} is shorter than the memory {m}")
    values = moving_index(f.values(J.map), J.indices, m)
    return IndexSeries(memory=m, values=values, f=f, unit_scale=f.unit_scale(J.map))


def index_bounds(map: DiscretizationMap, f: IndexFunction | None = None) -> IndexBounds:
    """The index always lies between min f and max f over E."""
    f_values = (f or IndexFunction()).values(map)
    return IndexBounds(lower=float(f_values.min()), upper=float(f_values.max()))


def assign_regimes(values: np.ndarray, thresholds: Sequence[float]) -> np.ndarray:
    """0-based interval of each value: [lower, psi_1], (psi_1, psi_2], ..., (psi_k, upper]."""
    return np.searchsorted(np.asarray(thresholds, dtype=np.float64), values, side='left')


def regime_occupancy(V: IndexSeries, thresholds: Sequence[float]) -> list[float]:
    """Fraction of index observations falling in each regime."""
    regimes = assign_regimes(V.values, thresholds)
    counts = np.bincount(regimes, minlength=len(thresholds) + 1)
    return (counts / max(1, len(V))).tolist()
