# cogs/diagnostics_cog.py
import logging

import numpy as np
import pandas as pd

from utils.artifacts import ArtifactWriter, read_matrices, read_model
from utils.changepoint_search import ChangePointSearch
from utils.commands import INDEX_OPTIONS, INPUT_OPTIONS, RUN_OPTIONS, SEARCH_OPTIONS, TEST_OPTIONS, Cog, command, option
from utils.diagnostics import (acf_comparison, acf_squared, distance_table, mad, regime_labels, regime_structure_report,
                               rsmd)
from utils.errors import InputDataError
from utils.hypothesis_testing import run_test
from utils.imc_simulation import SimulationConfig, simulate_imc
from utils.pipeline import build_index, fit_series, fit_summary, load_series, selection_frame, testable_fit
from utils.report_helpers import Marks, create_matrix_table, create_section, create_table
from utils.run_config import RunConfig

log = logging.getLogger(__name__)

ACF_OPTIONS = (
    option('--max-lag', dest='max_lag', type=int, help="largest lag"),
)


def _table_frame(table: np.ndarray, labels: list[str]) -> pd.DataFrame:
    frame = pd.DataFrame(table, columns=labels)
    frame.insert(0, 'regime', labels)
    return frame


# Matrix distances, squared-return autocorrelation and the combined report.
class DiagnosticsCog(Cog):
    def __init__(self, app):
        super().__init__(app)
        log.info("-> Diagnostics cog is initialized.")

    @command('acf', "Autocorrelation of squared returns, optionally next to a simulated trajectory.",
             *INPUT_OPTIONS, *ACF_OPTIONS, *RUN_OPTIONS,
             option('--model', help="model JSON; adds the ACF of a trajectory simulated from it"),
             option('--length', '-T', type=int, help="simulated length (default: data length)"))
    def acf(self, config: RunConfig, args) -> dict:
        """Writes acf.csv (lag, data[, simulated])."""
        J = load_series(config)
        result = acf_squared(J, config.max_lag)
        frame = pd.DataFrame({'lag': result.lags, 'data': result.values})
        if config.model is not None:
            seed = config.require_seed('acf --model')
            model = read_model(config.require_file('model'))
            cfg = SimulationConfig(length=config.length or len(J), seed=seed, initial_window='sample-from-data')
            frame['simulated'] = acf_squared(simulate_imc(model, cfg, J), config.max_lag).values
        with ArtifactWriter(config, 'acf') as writer:
            writer.write_csv('acf.csv', frame)
        return {'lags': config.max_lag, 'lag1': result.at(1)}

    @command('matdist', "%RSMD and %MAD between transition matrices.",
             *RUN_OPTIONS,
             option('files', nargs='+', help="one model file (all regime pairs) or two matrix/model files"))
    def matdist(self, config: RunConfig, args) -> dict:
        """Writes matdist.json and, for several matrices, rsmd.csv and mad.csv."""
        if len(args.files) > 2:
            raise InputDataError("matdist takes one or two files")
        first = read_matrices(args.files[0])
        second = read_matrices(args.files[1]) if len(args.files) == 2 else None
        with ArtifactWriter(config, 'matdist') as writer:
            if second is None:
                labels = regime_labels(len(first))
                tables = {metric: distance_table(first, metric) for metric in ('rsmd', 'mad')}
                writer.write_json('matdist.json', {'labels': labels, **tables})
                writer.write_csv('rsmd.csv', _table_frame(tables['rsmd'], labels))
                writer.write_csv('mad.csv', _table_frame(tables['mad'], labels))
                return {'matrices': len(first)}
            if len(first) != len(second):
                raise InputDataError(f"files hold {len(first)} and {len(second)} matrices")
            pairs = [{'regime': r + 1, 'rsmd': rsmd(p, q), 'mad': mad(p, q)} for r, (p, q) in enumerate(zip(first, second))]
            writer.write_json('matdist.json', {'pairs': pairs})
        return {'rsmd': [p['rsmd'] for p in pairs], 'mad': [p['mad'] for p in pairs]}

    @command('report', "Fit, test and diagnose in one run, with a markdown summary.",
             *INPUT_OPTIONS, *INDEX_OPTIONS, *SEARCH_OPTIONS, *TEST_OPTIONS, *ACF_OPTIONS, *RUN_OPTIONS)
    def report(self, config: RunConfig, args) -> dict:
        """Writes report.json, summary.md and acf_comparison.csv."""
        seed = config.require_seed('report')
        J = load_series(config)
        V = build_index(config, J)
        outcome = fit_series(config, J, V)
        fit = outcome.fit
        labels = regime_labels(fit.k + 1)

        tested = testable_fit(config, J, V, outcome)
        test, _ = run_test(tested.fit, J, V, tested.grid, config.bootstrap, seed, config.alphas, config.fixed_psi,
                           config.threads)
        matrices = fit.model.transition_array()
        tables = {metric: distance_table(matrices, metric) for metric in ('rsmd', 'mad')}
        structure = regime_structure_report(fit.model)

        if outcome.selection is not None:
            models = [f.model for f in outcome.selection.fits]
        else:
            models = [ChangePointSearch(J, V, outcome.grid).fit(0).model, fit.model] if fit.k else [fit.model]
        max_lag = min(config.max_lag, len(J) - 1)
        band = (min(config.acf_band[0], max_lag), min(config.acf_band[1], max_lag))
        comparison = acf_comparison(J, models, len(J), seed, max_lag, band)

        payload = {'fit': fit_summary(outcome, V), 'test': test, 'tested_thresholds': tested.fit.thresholds,
                   'rsmd': tables['rsmd'], 'mad': tables['mad'], 'structure': structure,
                   'acf_band_means': comparison.band_means()}
        frame = pd.DataFrame({'lag': comparison.data.lags, 'data': comparison.data.values})
        for k, acf in sorted(comparison.simulated.items()):
            frame[f'k={k}'] = acf.values
        with ArtifactWriter(config, 'report') as writer:
            writer.write_json('report.json', payload)
            writer.write_csv('acf_comparison.csv', frame)
            writer.write_text('summary.md', self._summary(config, J, fit, outcome, test, tested.fit, tables, structure,
                                                          comparison, labels))
        return {'k': fit.k, 'p_value': test.p_value}

    @staticmethod
    def _summary(config, J, fit, outcome, test, tested, tables, structure, comparison, labels) -> str:
        sections = [f"# IMC volatility report\n\nT = {len(J)}, |E| = {J.map.size}, delta = {J.map.delta:.6g}, "
                    f"m = {config.memory}, f = {config.index_function}, seed = {config.seed}\n"]

        rows = [[labels[r], fit.thresholds[r - 1] if r else None, fit.thresholds[r] if r < fit.k else None,
                 fit.occupancy[r]] for r in range(fit.k + 1)]
        sections.append(create_section(
            f"Change points (k = {fit.k})",
            create_table(["regime", "from", "to", "occupancy"], rows) +
            f"\n\nlogL = {fit.log_likelihood:.2f}, null logL = {fit.null_log_likelihood:.2f}, D = {fit.distance:.2f}",
            footer_text="Index values in state units (V / delta^p)."))

        rows = [[str(alpha), test.critical_values[alpha], test.chi_square_critical[alpha],
                 Marks.REJECT if test.reject[alpha] else Marks.ACCEPT] for alpha in test.critical_values]
        replicates = 'evaluated at the fitted thresholds' if test.mode == 'fixed' else 're-run the threshold search'
        forced = f" Tested thresholds {list(tested.thresholds)}: the selected model has none." if tested.k != fit.k else ""
        sections.append(create_section(
            "Bootstrap test",
            create_table(["alpha", "d_alpha", "chi2 quantile", "decision"], rows) +
            f"\n\nD = {test.D_hat:.2f}, p-value = {test.p_value:.4f}, B = {test.B}, chi2 df = {test.chi_square_df}",
            footer_text=f"Replicates {replicates}.{forced}"))

        if outcome.selection is not None:
            trace = selection_frame(outcome.selection)
            rows = trace[['k', 'log_likelihood', 'distance', 'aic', 'bic', 'pct_aic', 'pct_bic']].values.tolist()
            rows = [[int(r[0]), *[None if pd.isna(v) else v for v in r[1:]]] for r in rows]
            sections.append(create_section(
                f"Model selection ({outcome.selection.criterion.upper()})",
                create_table(["k", "logL", "D", "AIC", "BIC", "%dAIC", "%dBIC"], rows)))

        states = [str(s) for s in J.map.states]
        for r, matrix in enumerate(fit.model.transition_array()):
            sections.append(create_section(f"Transition matrix: {labels[r]} volatility", create_matrix_table(matrix, states)))

        if fit.k >= 1:
            for metric in ('rsmd', 'mad'):
                rows = [[labels[a], *tables[metric][a]] for a in range(len(labels))]
                sections.append(create_section(f"%{metric.upper()} between regimes", create_table(["", *labels], rows, digits=3)))

        if structure.applicable:
            rows = [[family.name, family.description, Marks.PASS if family.holds else Marks.FAIL,
                     sum(c.holds for c in family.checks), len(family.checks)] for family in structure.families]
            body = create_table(["family", "inequality", "result", "holds", "checks"], rows)
        else:
            body = f"{Marks.NA}: {structure.reason}"
        sections.append(create_section("Regime structure", body))

        rows = [[name, value] for name, value in comparison.band_means().items()]
        sections.append(create_section(
            "Squared-return autocorrelation", create_table(["series", "mean ACF"], rows),
            footer_text=f"Mean over lags {comparison.band[0]}-{comparison.band[1]}; simulated series have the data length."))
        return "\n".join(sections)


def setup(app):
    app.add_cog(DiagnosticsCog(app))
