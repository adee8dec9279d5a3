# utils/imc_estimation.py
import logging
from typing import Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator
from scipy.special import xlogy

from utils.errors import InputDataError, StatisticalError
from utils.index_process import NORMALIZATION, IndexFunction, IndexSeries, assign_regimes
from utils.market_data import DiscreteReturnSeries, DiscretizationMap, SeriesModel, frozen_array

log = logging.getLogger(__name__)

ROW_TOLERANCE = 1e-9


class Partition(BaseModel):
    """Thresholds psi_1 < ... < psi_k splitting the index range into k+1 right-closed intervals."""
    model_config = ConfigDict(frozen=True)

    thresholds: tuple[float, ...] = ()

    @field_validator('thresholds')
    def validate_thresholds(cls, value):
        if any(b <= a for a, b in zip(value, value[1:])):
            raise ValueError("thresholds must be strictly increasing")
        return value

    @property
    def k(self) -> int:
        return len(self.thresholds)

    @property
    def size(self) -> int:
        return len(self.thresholds) + 1

    def intervals(self, lower: float, upper: float) -> list[tuple[float, float]]:
        edges = [lower, *self.thresholds, upper]
        return list(zip(edges[:-1], edges[1:]))


class CountTensor(SeriesModel):
    counts: np.ndarray = Field(..., description="N[r, i, j]: transitions i -> j with the source index in interval r.")

    @field_validator('counts', mode='before')
    def validate_counts(cls, value):
        array = frozen_array(value, np.int64)
        if array.ndim != 3 or array.shape[1] != array.shape[2]:
            raise ValueError("counts must have shape (regimes, states, states)")
        if np.any(array < 0):
            raise ValueError("counts must be non-negative")
        return array

    @property
    def exposure(self) -> np.ndarray:
        """N[r, i]: row sums."""
        return self.counts.sum(axis=2)

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def merge_adjacent(self, r: int) -> 'CountTensor':
        """Pools interval r with interval r+1 (drops the threshold between them)."""
        merged = np.concatenate([self.counts[:r], self.counts[r:r + 2].sum(axis=0, keepdims=True), self.counts[r + 2:]])
        return CountTensor(counts=merged)


class TransitionMatrixSet(SeriesModel):
    matrices: np.ndarray
    unobserved: np.ndarray = Field(..., description="True where a row had no exposure and was set to uniform.")

    @field_validator('matrices', mode='before')
    def validate_matrices(cls, value):
        return frozen_array(value, np.float64)

    @field_validator('unobserved', mode='before')
    def validate_unobserved(cls, value):
        return frozen_array(value, bool)

    def __len__(self):
        return len(self.matrices)


def check_stochastic(matrix: np.ndarray, tolerance: float = ROW_TOLERANCE) -> np.ndarray:
    """Returns the matrix as an array, raising if any row is not a probability vector."""
    array = np.asarray(matrix, dtype=np.float64)
    if array.ndim != 2 or array.shape[0] != array.shape[1]:
        raise StatisticalError(f"transition matrix must be square, got shape {array.shape}")
    if np.any(array < 0) or np.any(np.abs(array.sum(axis=1) - 1.0) > tolerance):
        raise StatisticalError("non-stochastic transition matrix: rows must be non-negative and sum to 1")
    return array


def normalize_rows(matrix: np.ndarray) -> np.ndarray:
    """Rescales rows to sum to one (used for matrices printed with rounded entries)."""
    array = np.asarray(matrix, dtype=np.float64)
    return array / array.sum(axis=-1, keepdims=True)


class RegimeModel(BaseModel):
    """An indexed Markov chain: one transition matrix per interval of the index."""
    model_config = ConfigDict(frozen=True)

    map: DiscretizationMap
    memory: int = Field(..., ge=1)
    f: IndexFunction = IndexFunction()
    thresholds: tuple[float, ...] = ()
    matrices: tuple[tuple[tuple[float, ...], ...], ...]
    exposure: tuple[tuple[int, ...], ...] | None = None
    unobserved: tuple[tuple[bool, ...], ...] | None = None
    normalization: str = NORMALIZATION

    @model_validator(mode='after')
    def check_shapes(self):
        Partition(thresholds=self.thresholds)
        if len(self.matrices) != len(self.thresholds) + 1:
            raise ValueError(f"{len(self.thresholds)} thresholds need {len(self.thresholds) + 1} matrices, got {len(self.matrices)}")
        for matrix in self.matrices:
            array = np.asarray(matrix, dtype=np.float64)
            if array.shape != (self.map.size, self.map.size):
                raise ValueError(f"matrix shape {array.shape} does not match |E| = {self.map.size}")
            check_stochastic(array)
        return self

    @classmethod
    def from_arrays(cls, map: DiscretizationMap, memory: int, matrices, thresholds: Sequence[float] = (),
                    f: IndexFunction | None = None, renormalize: bool = False, **extra) -> 'RegimeModel':
        array = np.asarray(matrices, dtype=np.float64)
        if renormalize:
            drift = float(np.abs(array.sum(axis=2) - 1.0).max())
            if drift > ROW_TOLERANCE:
                log.warning(f"Renormalizing matrix rows (largest row-sum error {drift:.3g}).")
            array = normalize_rows(array)
        return cls(map=map, memory=memory, f=f or IndexFunction(), thresholds=tuple(float(t) for t in thresholds),
                   matrices=tuple(tuple(tuple(row) for row in m) for m in array.tolist()), **extra)

    @property
    def k(self) -> int:
        return len(self.thresholds)

    def transition_array(self) -> np.ndarray:
        """Matrices as a (k+1, |E|, |E|) array."""
        return np.asarray(self.matrices, dtype=np.float64)

    def f_values(self) -> np.ndarray:
        return self.f.values(self.map)

    def regime_of(self, value: float) -> int:
        return int(assign_regimes(np.asarray([value]), self.thresholds)[0])


def count_array(source: np.ndarray, target: np.ndarray, cell: np.ndarray, cells: int, states: int) -> np.ndarray:
    """Tallies (cell, i, j) triples into a (cells, states, states) integer array."""
    flat = (cell * states + source) * states + target
    return np.bincount(flat, minlength=cells * states * states).reshape(cells, states, states)


def aligned_transitions(J: DiscreteReturnSeries, V: IndexSeries) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Source state, target state and source-time index value of every transition with a defined index."""
    if len(V) != len(J) - V.memory + 1:
        raise InputDataError(f"misaligned series: index of length {len(V)} does not match returns of length {len(J)} with memory {V.memory}")
    indices = J.indices
    start = V.offset
    return indices[start:-1], indices[start + 1:], V.values[:-1]


def count_transitions(J: DiscreteReturnSeries, V: IndexSeries, partition: Partition) -> CountTensor:
    """Counts J_{n-1}=i -> J_n=j, attributed to the interval holding V_{n-1}."""
    source, target, index = aligned_transitions(J, V)
    cell = assign_regimes(index, partition.thresholds)
    return CountTensor(counts=count_array(source, target, cell, partition.size, J.map.size))


def estimate_matrices(counts: CountTensor) -> TransitionMatrixSet:
    """Maximum likelihood P[r, i, j] = N[r, i, j] / N[r, i]; rows without exposure become uniform."""
    exposure = counts.exposure
    unobserved = exposure == 0
    states = counts.counts.shape[1]
    with np.errstate(invalid='ignore', divide='ignore'):
        matrices = counts.counts / exposure[..., None]
    matrices[unobserved] = 1.0 / states
    if unobserved.any():
        log.debug(f"{int(unobserved.sum())} unobserved row(s) set to uniform.")
    return TransitionMatrixSet(matrices=matrices, unobserved=unobserved)


def loglik_array(counts: np.ndarray) -> np.ndarray:
    """sum_ij N log(N / N_i) over the last two axes, with 0 log 0 := 0."""
    exposure = counts.sum(axis=-1, keepdims=True)
    with np.errstate(invalid='ignore', divide='ignore'):
        ratio = np.where(counts > 0, counts / np.where(exposure > 0, exposure, 1), 1.0)
    return xlogy(counts, ratio).sum(axis=(-2, -1))


def log_likelihood(counts: CountTensor) -> float:
    """L = sum_r sum_ij N[r,i,j] log(N[r,i,j] / N[r,i])."""
    return float(loglik_array(counts.counts).sum())


def build_model(J: DiscreteReturnSeries, V: IndexSeries, partition: Partition) -> tuple[RegimeModel, CountTensor]:
    counts = count_transitions(J, V, partition)
    estimate = estimate_matrices(counts)
    model = RegimeModel.from_arrays(
        map=J.map, memory=V.memory, matrices=estimate.matrices, thresholds=partition.thresholds, f=V.f,
        exposure=tuple(tuple(int(n) for n in row) for row in counts.exposure.tolist()),
        unobserved=tuple(tuple(bool(u) for u in row) for row in estimate.unobserved.tolist()),
    )
    return model, counts


def trajectory_log_likelihood(J: DiscreteReturnSeries, V: IndexSeries, model: RegimeModel) -> float:
    """sum_n log P_{J_{n-1}, J_n}(V_{n-1}) along the observed path."""
    source, target, index = aligned_transitions(J, V)
    regimes = assign_regimes(index, model.thresholds)
    probabilities = model.transition_array()[regimes, source, target]
    return float(np.log(probabilities).sum())
