# imc.py
import argparse
import importlib
import json
import logging
import os
import sys
from logging.handlers import RotatingFileHandler

from dotenv import load_dotenv
from pydantic import ValidationError

from utils import __version__
from utils.commands import add_options
from utils.errors import IMCError
from utils.run_config import DEFAULT_CONFIG_FILE, RunConfig, load_run_config

# --- BOOTSTRAP LOGGING FOR CONFIGURATION ---

logging.basicConfig(
    level=logging.INFO,
    format='%(asctime)s - %(levelname)s - %(name)s - %(message)s'
    # Console only until the config names a log file.
)
log = logging.getLogger(__name__)

COGS_DIR = os.path.join(os.path.dirname(os.path.abspath(__file__)), 'cogs')


def setup_file_logging(log_location: str):
    """Rotating log file of 0.5 MB with three backups; replaces the bootstrap console handler."""
    handler = RotatingFileHandler(
        log_location,
        maxBytes=1*1024*512,
        backupCount=3
    )
    handler.setFormatter(logging.Formatter('%(asctime)s - %(levelname)s - %(name)s - %(message)s'))
    root_logger = logging.getLogger()
    for old in list(root_logger.handlers):
        root_logger.removeHandler(old)
        if isinstance(old, RotatingFileHandler):
            old.close()
    root_logger.addHandler(handler)
    log.info(f"Logging initialized. Log files will be saved to: {log_location}")


def env_defaults() -> dict:
    """RunConfig defaults taken from the environment (.env included)."""
    defaults = {}
    if os.getenv("IMC_THREADS"):
        defaults['threads'] = os.getenv("IMC_THREADS")
    if os.getenv("IMC_LOG_LOCATION"):
        defaults['log_location'] = os.getenv("IMC_LOG_LOCATION")
    return defaults


class App:
    """Command-line front end: every cog in ./cogs contributes subcommands; each run gets one RunConfig."""

    def __init__(self):
        self.parser = argparse.ArgumentParser(
            prog='imc', description="Indexed Markov chain volatility toolkit: fit, test, simulate and diagnose.")
        self.parser.add_argument('--version', action='version', version=f'%(prog)s {__version__}')
        self.parser.add_argument('--config', default=DEFAULT_CONFIG_FILE, help="JSON run configuration")
        self.subparsers = self.parser.add_subparsers(dest='command', required=True)
        self.handlers = {}

    def add_cog(self, cog):
        for handler in cog.get_commands():
            sub = self.subparsers.add_parser(handler.command_name, help=handler.command_help,
                                             description=handler.command_help)
            add_options(sub, handler.command_options)
            self.handlers[handler.command_name] = handler

    def load_cogs(self):
        log.info("--- Loading Cogs ---")
        for filename in sorted(os.listdir(COGS_DIR)):
            if filename.endswith('_cog.py'):
                module = importlib.import_module(f'cogs.{filename[:-3]}')
                module.setup(self)
                log.info(f"Loaded cog: {filename}")
        return self

    def build_config(self, args: argparse.Namespace) -> RunConfig:
        overrides = {key: value for key, value in vars(args).items() if key in RunConfig.model_fields}
        if overrides.get('window') == ['from-data']:
            overrides['window'] = 'from-data'
        return load_run_config(args.config, overrides, env_defaults())

    def run(self, command: str, config: RunConfig, args: argparse.Namespace) -> dict:
        """Runs one command with a resolved configuration and returns its short summary."""
        log.info(f"Running '{command}' (seed={config.seed}, out_dir={config.out_dir}).")
        return self.handlers[command](config, args)

    def main(self, argv=None) -> int:
        args = self.parser.parse_args(argv)
        try:
            config = self.build_config(args)
            setup_file_logging(config.log_location)
            summary = self.run(args.command, config, args)
        except (IMCError, ValidationError, FileNotFoundError) as e:
            code = e.exit_code if isinstance(e, IMCError) else 2
            log.error(f"'{args.command}' failed.", exc_info=True)
            print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
            return code
        print(json.dumps({'command': args.command, **(summary or {})}, sort_keys=True, default=str))
        return 0


def main(argv=None) -> int:
    load_dotenv()
    return App().load_cogs().main(argv)


# --- MAIN EXECUTION ---
if __name__ == "__main__":
    sys.exit(main())
