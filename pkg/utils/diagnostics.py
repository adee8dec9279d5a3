# utils/diagnostics.py
import logging
import math
from typing import Literal, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator

from utils.errors import InputDataError, StatisticalError
from utils.imc_estimation import RegimeModel
from utils.imc_simulation import SimulationConfig, simulate_imc
from utils.market_data import DiscreteReturnSeries, ReturnSeries, SeriesModel, frozen_array

log = logging.getLogger(__name__)

REGIME_LABELS = {
    1: ('all',),
    2: ('low', 'high'),
    3: ('low', 'medium', 'high'),
    5: ('very low', 'low', 'medium', 'high', 'very high'),
}


def regime_labels(count: int) -> list[str]:
    """Volatility labels for `count` regimes, lowest index first."""
    return list(REGIME_LABELS.get(count, tuple(f"regime {r}" for r in range(1, count + 1))))


def _pair(P, Q) -> tuple[np.ndarray, np.ndarray]:
    P, Q = np.asarray(P, dtype=np.float64), np.asarray(Q, dtype=np.float64)
    if P.shape != Q.shape:
        raise InputDataError(f"shape mismatch: {P.shape} vs {Q.shape}")
    return P, Q


def rsmd(P, Q) -> float:
    """Percentage root mean square deviation of P from Q, over all n entries: sqrt(sum d^2 / n) * n * 100 / sum Q."""
    P, Q = _pair(P, Q)
    n = P.size
    return float(math.sqrt(np.sum((P - Q) ** 2) / n) * n * 100.0 / Q.sum())


def mad(P, Q) -> float:
    """Percentage mean absolute deviation: sum |P - Q| * 100 / sum Q."""
    P, Q = _pair(P, Q)
    return float(np.abs(P - Q).sum() * 100.0 / Q.sum())


METRICS = {'rsmd': rsmd, 'mad': mad}


def distance_table(matrices: Sequence, metric: str = 'rsmd') -> np.ndarray:
    """table[a, b] = metric(matrices[a], matrices[b]) for every pair of regime matrices."""
    if metric not in METRICS:
        raise InputDataError(f"unknown metric '{metric}'")
    distance = METRICS[metric]
    count = len(matrices)
    table = np.zeros((count, count))
    for a in range(count):
        for b in range(count):
            if a != b:
                table[a, b] = distance(matrices[a], matrices[b])
    return table


class ACFResult(SeriesModel):
    lags: np.ndarray = Field(..., description="0..max_lag")
    values: np.ndarray = Field(..., description="Autocorrelation of squared returns; values[0] = 1.")
    estimator: str = 'biased'

    @field_validator('lags', mode='before')
    def validate_lags(cls, value):
        return frozen_array(value, np.int64)

    @field_validator('values', mode='before')
    def validate_values(cls, value):
        array = frozen_array(value, np.float64)
        if not np.all(np.isfinite(array)):
            raise ValueError("autocorrelations must be finite")
        return array

    def at(self, lag: int) -> float:
        return float(self.values[lag])

    def band_mean(self, first: int, last: int) -> float:
        """Mean autocorrelation over lags first..last inclusive."""
        return float(self.values[first:last + 1].mean())


def acf_squared(returns: ReturnSeries | DiscreteReturnSeries | np.ndarray, max_lag: int) -> ACFResult:
    """
    Cov(R^2(t + tau), R^2(t)) / Var(R^2(t)) for tau = 0..max_lag, with the biased 1/T estimator.
    Discrete series use the state values i * delta.
    """
    values = np.asarray(getattr(returns, 'values', returns), dtype=np.float64)
    if max_lag < 1:
        raise InputDataError(f"max_lag must be at least 1, got {max_lag}")
    if len(values) <= max_lag:
        raise InputDataError(f"insufficient length: series of {len(values)} for max_lag {max_lag}")
    squared = values ** 2
    if np.ptp(squared) == 0:
        raise StatisticalError("degenerate variance: squared returns are constant")
    centered = squared - squared.mean()
    size = 1 << (2 * len(centered) - 1).bit_length()
    spectrum = np.fft.rfft(centered, size)
    autocovariance = np.fft.irfft(spectrum * np.conj(spectrum), size)[:max_lag + 1] / len(centered)
    return ACFResult(lags=np.arange(max_lag + 1), values=autocovariance / autocovariance[0])


class ACFComparison(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    band: tuple[int, int]
    data: ACFResult
    simulated: dict[int, ACFResult] = Field(..., description="ACF of a trajectory simulated from the k-threshold model.")

    def band_means(self) -> dict[str, float]:
        means = {'data': self.data.band_mean(*self.band)}
        means.update({f"k={k}": acf.band_mean(*self.band) for k, acf in sorted(self.simulated.items())})
        return means


def acf_comparison(J: DiscreteReturnSeries, models: Sequence[RegimeModel], length: int, seed: int,
                   max_lag: int = 100, band: tuple[int, int] = (10, 100)) -> ACFComparison:
    """Squared-return ACF of the data next to that of trajectories simulated from each fitted model."""
    if not 1 <= band[0] <= band[1] <= max_lag:
        raise InputDataError(f"lag band {band} must lie within 1..{max_lag}")
    simulated = {}
    for model in models:
        trajectory = simulate_imc(model, SimulationConfig(length=length, seed=seed, initial_window='sample-from-data'), data=J)
        simulated[model.k] = acf_squared(trajectory, max_lag)
        log.info(f"k={model.k}: mean ACF over lags {band[0]}-{band[1]} is {simulated[model.k].band_mean(*band):.4f}")
    return ACFComparison(band=band, data=acf_squared(J, max_lag), simulated=simulated)


class InequalityCheck(BaseModel):
    model_config = ConfigDict(frozen=True)

    row: int = Field(..., description="1-based source state.")
    regime: int = Field(..., description="1-based regime h.")
    lhs: float
    rhs: float
    relation: Literal['>', '<']
    holds: bool


class InequalityFamily(BaseModel):
    model_config = ConfigDict(frozen=True)

    name: str
    description: str
    checks: tuple[InequalityCheck, ...]

    @property
    def holds(self) -> bool:
        return all(c.holds for c in self.checks)


class RegimeStructureReport(BaseModel):
    model_config = ConfigDict(frozen=True)

    applicable: bool
    reason: str = ''
    families: tuple[InequalityFamily, ...] = ()

    @property
    def pass_rate(self) -> float | None:
        checks = [c for family in self.families for c in family.checks]
        if not checks:
            return None
        return sum(c.holds for c in checks) / len(checks)

    @property
    def all_hold(self) -> bool:
        return self.applicable and all(family.holds for family in self.families)


def _check(row: int, regime: int, lhs: float, rhs: float, relation: str) -> InequalityCheck:
    holds = lhs > rhs if relation == '>' else lhs < rhs
    return InequalityCheck(row=row + 1, regime=regime + 1, lhs=lhs, rhs=rhs, relation=relation, holds=bool(holds))


def regime_structure_report(model: RegimeModel) -> RegimeStructureReport:
    """
    Checks the ordering properties of a five-state model across its regimes (state 3 is the null return):
    the null-return column falls with volatility, the extreme columns rise, rows far from the centre
    revert, and the null-return row drifts down in calm regimes and up in volatile ones.
    """
    if model.map.size != 5:
        return RegimeStructureReport(applicable=False, reason=f"needs 5 states, model has {model.map.size}")
    P = model.transition_array()
    regimes = len(P)
    if regimes < 2:
        return RegimeStructureReport(applicable=False, reason="needs at least two regimes")
    rows = range(5)
    steps = range(regimes - 1)

    center = [_check(i, h, P[h, i, 2], P[h + 1, i, 2], '>') for i in rows for h in steps]
    extremes = [_check(i, h, P[h, i, j], P[h + 1, i, j], '<') for j in (4, 0) for i in rows for h in steps]
    reversion = [
        _check(i, h, P[h, i, 0] + P[h, i, 1], P[h, i, 3] + P[h, i, 4], '<' if i < 2 else '>')
        for i in (0, 1, 3, 4) for h in range(regimes)
    ]
    calm = math.ceil(regimes / 2)
    drift = [
        _check(2, h, P[h, 2, 0] + P[h, 2, 1], P[h, 2, 3] + P[h, 2, 4], '>' if h < calm else '<')
        for h in range(regimes)
    ]
    families = (
        InequalityFamily(name='center-decay', description="p_i3(h) > p_i3(h+1)", checks=tuple(center)),
        InequalityFamily(name='extremes-rise', description="p_i5(h) < p_i5(h+1) and p_i1(h) < p_i1(h+1)", checks=tuple(extremes)),
        InequalityFamily(name='mean-reversion', description="p_i1+p_i2 < p_i4+p_i5 for i in 1,2; > for i in 4,5", checks=tuple(reversion)),
        InequalityFamily(name='center-drift', description=f"p_31+p_32 > p_34+p_35 for h <= {calm}; < above", checks=tuple(drift)),
    )
    return RegimeStructureReport(applicable=True, families=families)
