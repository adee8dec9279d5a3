# utils/imc_simulation.py
import logging
from bisect import bisect_left, bisect_right
from typing import Iterator, Literal, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from utils.errors import InputDataError
from utils.imc_estimation import RegimeModel, check_stochastic
from utils.market_data import DiscreteReturnSeries, DiscretizationMap

log = logging.getLogger(__name__)

BLOCK = 1 << 16


class SimulationConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    length: int = Field(..., gt=1, description="Total trajectory length T, initial window included.")
    seed: int = Field(..., ge=0)
    initial_window: tuple[int, ...] | Literal['sample-from-data'] | None = Field(
        None, description="The first m states (state labels), or sampled from observed data. Defaults to all zeros.")


def replicate_rng(seed: int, replicate_id: int = 0) -> np.random.Generator:
    """Independent stream for replicate `replicate_id` of a run seeded with `seed`."""
    return np.random.default_rng([seed, replicate_id])


def cumulative_rows(matrices: np.ndarray) -> np.ndarray:
    """Row-wise cumulative sums with the last column pinned to 1 so sampling is total."""
    cum = np.cumsum(np.asarray(matrices, dtype=np.float64), axis=-1)
    cum[..., -1] = 1.0
    return cum


def _walk(cum: np.ndarray, f_values: np.ndarray, thresholds: Sequence[float], window: Sequence[int],
          uniforms: np.ndarray) -> list[int]:
    """
    Advances one indexed chain. The index is kept as a running sum over a ring of the last m states;
    the matrix is picked by the index at the source time and the next state by inverse-CDF sampling.
    """
    rows = cum.tolist()
    f = f_values.tolist()
    cuts = list(thresholds)
    last = cum.shape[-1] - 1
    ring = list(window)
    m = len(ring)
    total = sum(f[s] for s in ring)
    state, pos = ring[-1], 0
    path = []
    for u in uniforms.tolist():
        regime = bisect_left(cuts, total / m)
        nxt = min(bisect_right(rows[regime][state], u), last)
        total += f[nxt] - f[ring[pos]]
        ring[pos] = nxt
        pos = (pos + 1) % m
        state = nxt
        path.append(nxt)
    return path


def walk_index_batch(model: RegimeModel, windows: np.ndarray, rngs: Sequence[np.random.Generator],
                     steps: int) -> Iterator[tuple[np.ndarray, np.ndarray]]:
    """
    Advances a batch of indexed chains in lock step, yielding (states, index) after every step.
    `windows` holds one row of m state indices per chain; chain b draws from rngs[b].
    """
    cum = cumulative_rows(model.transition_array())
    f = model.f_values()
    thresholds = np.asarray(model.thresholds, dtype=np.float64)
    last = model.map.size - 1
    ring = np.array(windows, dtype=np.int64)
    m = ring.shape[1]
    total = f[ring].sum(axis=1)
    state = ring[:, -1].copy()
    pos, done = 0, 0
    while done < steps:
        width = min(BLOCK, steps - done)
        uniforms = np.stack([rng.random(width) for rng in rngs], axis=1)
        for u in uniforms:
            regime = np.searchsorted(thresholds, total / m, side='left')
            state = (cum[regime, state] <= u[:, None]).sum(axis=1)
            np.minimum(state, last, out=state)
            total += f[state] - f[ring[:, pos]]
            ring[:, pos] = state
            pos = (pos + 1) % m
            yield state, total / m
        done += width


def _to_indices(states: Sequence[int], map: DiscretizationMap) -> list[int]:
    indices = [int(s) + map.z_min for s in states]
    if any(i < 0 or i >= map.size for i in indices):
        raise InputDataError(f"window states must lie in [-{map.z_min}, {map.z_max}]")
    return indices


def _initial_window(model: RegimeModel, cfg: SimulationConfig, data: DiscreteReturnSeries | None,
                    rng: np.random.Generator) -> list[int]:
    m = model.memory
    choice = cfg.initial_window
    if choice is None:
        choice = 'sample-from-data' if data is not None else (0,) * m
    if choice == 'sample-from-data':
        if data is None or len(data) < m:
            raise InputDataError("sampling the initial window needs observed data at least as long as the memory")
        start = int(rng.integers(0, len(data) - m + 1))
        return data.indices[start:start + m].tolist()
    if len(choice) < m:
        raise InputDataError(f"initial window has {len(choice)} states but the memory is {m}")
    return _to_indices(choice[-m:], model.map)


def simulate_imc(model: RegimeModel, cfg: SimulationConfig, data: DiscreteReturnSeries | None = None) -> DiscreteReturnSeries:
    """
    Simulates the indexed chain: at each step the index of the trailing m states selects the matrix,
    and the next state is drawn from the row of the current state.
    """
    if cfg.length <= model.memory:
        raise InputDataError(f"trajectory length {cfg.length} must exceed the memory {model.memory}")
    rng = replicate_rng(cfg.seed)
    window = _initial_window(model, cfg, data, rng)
    uniforms = rng.random(cfg.length - model.memory)
    path = _walk(cumulative_rows(model.transition_array()), model.f_values(), model.thresholds, window, uniforms)
    log.info(f"Simulated {cfg.length} steps from a {model.k + 1}-regime model (seed={cfg.seed}).")
    return DiscreteReturnSeries.from_indices(window + path, model.map)


def _initial_probabilities(size: int, initial_distribution) -> np.ndarray:
    if initial_distribution is None:
        return np.full(size, 1.0 / size)
    p = np.asarray(initial_distribution, dtype=np.float64)
    if p.shape != (size,) or np.any(p < 0) or not np.isclose(p.sum(), 1.0):
        raise InputDataError("initial distribution must be a probability vector over E")
    return p / p.sum()


def empirical_distribution(J: DiscreteReturnSeries) -> np.ndarray:
    """State frequencies of an observed series, used to start null trajectories."""
    return np.bincount(J.indices, minlength=J.map.size) / len(J)


def simulate_markov(P: np.ndarray, length: int, seed: int, map: DiscretizationMap | None = None,
                    initial_distribution=None, start_state: int | None = None) -> DiscreteReturnSeries:
    """
    Plain Markov chain from P. The start is `start_state` (a state label) if given, else drawn from
    `initial_distribution` (uniform by default). Without a map, states are labelled 0..|E|-1.
    """
    P = check_stochastic(P)
    size = len(P)
    if map is None:
        map = DiscretizationMap(delta=1.0, z_min=0, z_max=size - 1)
    if map.size != size:
        raise InputDataError(f"matrix has {size} states but the map has {map.size}")
    if length < 1:
        raise InputDataError(f"length must be positive, got {length}")
    rng = replicate_rng(seed)
    if start_state is not None:
        start = _to_indices([start_state], map)[0]
    else:
        start = int(rng.choice(size, p=_initial_probabilities(size, initial_distribution)))
    uniforms = rng.random(length - 1)
    path = _walk(cumulative_rows(P[None]), np.zeros(size), (), [start], uniforms)
    return DiscreteReturnSeries.from_indices([start] + path, map)


def markov_replicates(P: np.ndarray, length: int, seed: int, replicate_ids: Sequence[int],
                      initial_distribution=None) -> np.ndarray:
    """
    Simulates one plain Markov chain per replicate id, in lock step, returning a
    (replicates, length) array of state indices. Replicate r uses the stream (seed, r).
    """
    P = check_stochastic(P)
    size = len(P)
    cum = cumulative_rows(P)
    init = _initial_probabilities(size, initial_distribution)
    rngs = [replicate_rng(seed, rid) for rid in replicate_ids]
    paths = np.empty((length, len(rngs)), dtype=np.int16)
    state = np.array([rng.choice(size, p=init) for rng in rngs], dtype=np.int64)
    paths[0] = state
    t = 1
    while t < length:
        width = min(BLOCK, length - t)
        uniforms = np.stack([rng.random(width) for rng in rngs], axis=1)
        for u in uniforms:
            state = (cum[state] <= u[:, None]).sum(axis=1)
            np.minimum(state, size - 1, out=state)
            paths[t] = state
            t += 1
    return paths.T
