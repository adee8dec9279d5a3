# cogs/fit_cog.py
import logging

import numpy as np
import pandas as pd

from utils.artifacts import ArtifactWriter
from utils.commands import INDEX_OPTIONS, INPUT_OPTIONS, RUN_OPTIONS, SEARCH_OPTIONS, TEST_OPTIONS, Cog, command, switch
from utils.hypothesis_testing import run_test
from utils.pipeline import build_index, fit_series, fit_summary, index_frame, load_series, selection_frame, testable_fit
from utils.run_config import RunConfig

log = logging.getLogger(__name__)


# Change-point fitting and the bootstrap test of H0: no change point.
class FitCog(Cog):
    def __init__(self, app):
        super().__init__(app)
        log.info("-> Fit cog is initialized.")

    @command('fit', "Fit an indexed Markov chain, searching thresholds on a candidate grid.",
             *INPUT_OPTIONS, *INDEX_OPTIONS, *SEARCH_OPTIONS, *RUN_OPTIONS,
             switch('--auto', help="select k by the criterion (same as omitting --k)"))
    def fit(self, config: RunConfig, args) -> dict:
        """Writes model.json, index.csv and, when k is selected, selection.csv."""
        if args.auto:
            config = config.model_copy(update={'k': None})
        J = load_series(config)
        V = build_index(config, J)
        outcome = fit_series(config, J, V)
        with ArtifactWriter(config, 'fit') as writer:
            writer.write_json('model.json', {'model': outcome.fit.model, 'fit': fit_summary(outcome, V)})
            writer.write_csv('index.csv', index_frame(V, outcome.fit.thresholds))
            if outcome.selection is not None:
                writer.write_csv('selection.csv', selection_frame(outcome.selection))
        return {'k': outcome.fit.k, 'thresholds': list(outcome.fit.thresholds), 'distance': outcome.fit.distance}

    @command('test', "Bootstrap test of the fitted change points against the single-matrix model.",
             *INPUT_OPTIONS, *INDEX_OPTIONS, *SEARCH_OPTIONS, *TEST_OPTIONS, *RUN_OPTIONS)
    def test(self, config: RunConfig, args) -> dict:
        """Writes test.json and bootstrap.csv (replicate, D)."""
        seed = config.require_seed('test')
        J = load_series(config)
        V = build_index(config, J)
        outcome = testable_fit(config, J, V)
        result, dist = run_test(outcome.fit, J, V, outcome.grid, config.bootstrap, seed, config.alphas,
                                config.fixed_psi, config.threads)
        with ArtifactWriter(config, 'test') as writer:
            writer.write_json('test.json', {
                'test': result, 'k': outcome.fit.k, 'thresholds': outcome.fit.thresholds,
                'null_samples': {'mean': float(np.mean(dist.samples)), 'B': dist.B, 'mode': dist.mode},
            })
            writer.write_csv('bootstrap.csv', pd.DataFrame({'replicate': np.arange(dist.B), 'D': dist.samples}))
        return {'D_hat': result.D_hat, 'p_value': result.p_value,
                'reject': {str(alpha): flag for alpha, flag in result.reject.items()}}


def setup(app):
    app.add_cog(FitCog(app))
