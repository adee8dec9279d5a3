# utils/commands.py
import argparse
import logging
from typing import Callable

log = logging.getLogger(__name__)

'''
Commands live in cogs: classes whose methods are marked with @command. The App collects the marked
methods of every cog passed to add_cog and builds one argparse subcommand per method.
Flag destinations match RunConfig field names so parsed flags can override the config file.
'''


def option(*flags: str, **kwargs) -> tuple[tuple[str, ...], dict]:
    """One argparse argument. Defaults to None so unset flags never override the config file."""
    kwargs.setdefault('default', None)
    return flags, kwargs


def switch(*flags: str, help: str = '') -> tuple[tuple[str, ...], dict]:
    """Boolean flag that is None unless given."""
    return flags, {'action': 'store_const', 'const': True, 'default': None, 'help': help}


# Shared option groups
INPUT_OPTIONS = (
    option('--data', help="tick CSV with columns timestamp,price"),
    option('--series', help="discrete series CSV written by ingest"),
    option('--map-file', dest='map_file', help="map JSON written by ingest (default: map.json beside --series)"),
    option('--period-ms', dest='period_ms', type=int, help="resampling period in milliseconds"),
    option('--z-min', dest='z_min', type=int, help="number of negative states"),
    option('--z-max', dest='z_max', type=int, help="number of positive states"),
    option('--delta', type=float, help="grid amplitude (default: chosen from the return spread)"),
)

INDEX_OPTIONS = (
    option('--memory', '-m', type=int, help="index memory m"),
    option('--index-fn', '--index-function', dest='index_function', help="square | abs | identity | table"),
)

SEARCH_OPTIONS = (
    option('--grid-n', dest='grid_n', type=int, help="number of candidate thresholds"),
    option('--grid-mode', dest='grid_mode', choices=['quantile', 'uniform']),
    option('--min-exposure', dest='min_exposure', type=int, help="minimum transitions on each side of a candidate"),
    option('--k', type=int, help="number of thresholds (omit to select by criterion)"),
    option('--k-max', dest='k_max', type=int),
    option('--criterion', choices=['aic', 'bic']),
    option('--improvement-floor', dest='improvement_floor', type=float),
    option('--strategy', choices=['dp', 'exhaustive']),
)

TEST_OPTIONS = (
    option('--bootstrap', '-B', type=int, help="number of bootstrap replicates"),
    option('--alpha', dest='alphas', type=float, action='append', help="significance level (repeatable)"),
    switch('--fixed-psi', help="evaluate replicates at the fitted thresholds instead of re-searching"),
)

RUN_OPTIONS = (
    option('--seed', type=int),
    option('--out-dir', dest='out_dir'),
    option('--threads', type=int),
    option('--log-location', dest='log_location'),
)


def command(name: str, help: str, *options: tuple[tuple[str, ...], dict]) -> Callable:
    """Marks a cog method as the handler of subcommand `name`."""
    def decorator(func: Callable) -> Callable:
        func.command_name = name
        func.command_help = help
        func.command_options = options
        return func
    return decorator


class Cog:
    """Base class for command groups."""

    def __init__(self, app):
        self.app = app

    def get_commands(self) -> list[Callable]:
        return [getattr(self, attr) for attr in dir(self)
                if not attr.startswith('_') and hasattr(getattr(self, attr), 'command_name')]


def add_options(parser: argparse.ArgumentParser, options):
    for flags, kwargs in options:
        parser.add_argument(*flags, **kwargs)
