# cogs/simulate_cog.py
import logging

import numpy as np
import pandas as pd

from utils.artifacts import ArtifactWriter, read_model
from utils.commands import INPUT_OPTIONS, RUN_OPTIONS, Cog, command, option, switch
from utils.diagnostics import regime_labels
from utils.errors import InputDataError
from utils.first_passage import WindowState, first_passage, target_for_regime, window_from_labels
from utils.imc_simulation import SimulationConfig, simulate_imc
from utils.index_process import compute_index
from utils.pipeline import load_series
from utils.run_config import RunConfig

log = logging.getLogger(__name__)

MODEL_OPTION = option('--model', help="model JSON written by fit")
WINDOW_OPTION = option('--window', nargs='+', help="initial window as m state labels, or 'from-data'")


def _regime_arg(value: str) -> int | str:
    return value if value == 'all' else int(value)


def _has_input(config: RunConfig) -> bool:
    return config.series is not None or config.data is not None


# Trajectory simulation and first-passage distributions of the index.
class SimulateCog(Cog):
    def __init__(self, app):
        super().__init__(app)
        log.info("-> Simulate cog is initialized.")

    @command('simulate', "Simulate a trajectory from a fitted model.",
             MODEL_OPTION, WINDOW_OPTION, *INPUT_OPTIONS, *RUN_OPTIONS,
             option('--length', '-T', type=int, help="trajectory length, initial window included"))
    def simulate(self, config: RunConfig, args) -> dict:
        """Writes trajectory.csv (n, state, return, V)."""
        seed = config.require_seed('simulate')
        model = read_model(config.require_file('model'))
        data = load_series(config) if _has_input(config) else None
        if config.window == 'from-data':
            initial = 'sample-from-data' if data is not None else None
        else:
            initial = config.window
        length = config.length or (len(data) if data is not None else None)
        if length is None:
            raise InputDataError("simulate needs --length (or input data to copy the length from)")
        trajectory = simulate_imc(model, SimulationConfig(length=length, seed=seed, initial_window=initial), data)
        V = compute_index(trajectory, model.memory, model.f)
        frame = trajectory.to_frame()
        frame['return'] = trajectory.values
        frame['V'] = np.concatenate([np.full(V.offset, np.nan), V.values])
        with ArtifactWriter(config, 'simulate') as writer:
            writer.write_csv('trajectory.csv', frame)
        return {'length': len(trajectory)}

    @command('fpt', "First-passage time distribution of the index into a regime.",
             MODEL_OPTION, WINDOW_OPTION, *INPUT_OPTIONS, *RUN_OPTIONS,
             option('--target-regime', dest='target_regime', type=_regime_arg,
                    help="1-based target regime, or 'all' for one column set per regime"),
             option('--horizon', '-N', type=int, help="number of steps"),
             option('--mc', dest='mc_replicates', type=int, help="Monte Carlo with R replicates"),
             switch('--exact', help="exact dynamic program (default)"))
    def fpt(self, config: RunConfig, args) -> dict:
        """Writes fpt.csv (n, g, stderr, cumulative; suffixed per regime with --target-regime all) and fpt.json."""
        model = read_model(config.require_file('model'))
        if args.exact and config.mc_replicates is not None:
            raise InputDataError("--exact and --mc are mutually exclusive")
        if config.window == 'from-data':
            window = WindowState.from_series(load_series(config), model.memory)
        else:
            window = window_from_labels(config.window, model.map)
        seed = config.require_seed('fpt --mc') if config.mc_replicates is not None else config.seed
        if config.target_regime == 'all':
            return self._fpt_all(config, model, window, seed)
        target = target_for_regime(model, config.target_regime)
        dist = first_passage(model, window, target, config.horizon, config.mc_replicates, seed, config.threads)
        frame = dist.to_frame()
        frame['cumulative'] = dist.cumulative()
        with ArtifactWriter(config, 'fpt') as writer:
            writer.write_csv('fpt.csv', frame)
            writer.write_json('fpt.json', {
                'method': dist.method, 'target': target, 'horizon': dist.horizon, 'tail': dist.tail,
                'replicates': dist.replicates, 'window': window.states,
                'window_index': window.index_value(model.f_values()),
            })
        return {'method': dist.method, 'mass': float(dist.g.sum()), 'tail': dist.tail}

    @staticmethod
    def _fpt_all(config: RunConfig, model, window: WindowState, seed) -> dict:
        """One g, stderr and cumulative column per regime, suffixed with the 1-based regime number."""
        frame = pd.DataFrame({'n': np.arange(1, config.horizon + 1)})
        targets = []
        for regime in range(1, model.k + 2):
            target = target_for_regime(model, regime)
            dist = first_passage(model, window, target, config.horizon, config.mc_replicates, seed, config.threads)
            frame[f'g_{regime}'] = dist.g
            frame[f'stderr_{regime}'] = dist.to_frame()['stderr']
            frame[f'cumulative_{regime}'] = dist.cumulative()
            targets.append({'regime': regime, 'label': regime_labels(model.k + 1)[regime - 1], 'target': target,
                            'tail': dist.tail})
        with ArtifactWriter(config, 'fpt') as writer:
            writer.write_csv('fpt.csv', frame)
            writer.write_json('fpt.json', {
                'method': dist.method, 'targets': targets, 'horizon': config.horizon,
                'replicates': dist.replicates, 'window': window.states,
                'window_index': window.index_value(model.f_values()),
            })
        return {'method': dist.method, 'tails': [t['tail'] for t in targets]}


def setup(app):
    app.add_cog(SimulateCog(app))
