# utils/run_config.py
import hashlib
import json
import logging
from pathlib import Path
from typing import Annotated, Any, Literal

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from utils.errors import InputDataError

log = logging.getLogger(__name__)

DEFAULT_CONFIG_FILE = 'imc_config.json'

# Fields that change where or how fast a run happens, never what it computes.
_UNHASHED = {'out_dir', 'threads', 'log_location'}


class RunConfig(BaseModel):
    """Every setting of a run. Values come from the config file, then command-line flags override them."""
    model_config = ConfigDict(frozen=True, extra='forbid')

    # inputs
    data: str | None = Field(None, description="Tick CSV (timestamp,price).")
    series: str | None = Field(None, description="Discrete series CSV written by ingest.")
    map_file: str | None = Field(None, description="Discretization map JSON; defaults to map.json beside the series.")
    model: str | None = Field(None, description="Model JSON written by fit.")

    # discretization
    period_ms: int = Field(60_000, gt=0)
    sessions: tuple[tuple[int, int], ...] | None = None
    z_min: int = Field(2, ge=0)
    z_max: int = Field(2, ge=0)
    delta: float | None = Field(None, gt=0)

    # index
    memory: int = Field(30, ge=1)
    index_function: Literal['square', 'absolute', 'identity', 'table', 'abs', 'sq', 'user-table'] = 'square'
    index_table: tuple[float, ...] | None = None

    # search
    grid_n: int = Field(50, ge=1)
    grid_mode: Literal['quantile', 'uniform'] = 'quantile'
    min_exposure: int = Field(100, ge=0)
    k: int | None = Field(None, ge=0, description="Number of thresholds; None selects k by criterion.")
    k_max: int = Field(5, ge=1)
    criterion: Literal['aic', 'bic'] = 'bic'
    improvement_floor: float = Field(0.001, ge=0)
    strategy: Literal['dp', 'exhaustive'] = 'dp'

    # test
    bootstrap: int = Field(1000, ge=1)
    alphas: tuple[float, ...] = (0.05, 0.01)
    fixed_psi: bool = False

    # simulation and first passage
    seed: int | None = Field(None, ge=0)
    length: int | None = Field(None, gt=1)
    target_regime: Annotated[int, Field(ge=1)] | Literal['all'] = Field(1, description="1-based target regime, or every regime.")
    horizon: int = Field(200, ge=1)
    mc_replicates: int | None = Field(None, ge=1)
    window: tuple[int, ...] | Literal['from-data'] = 'from-data'

    # diagnostics
    max_lag: int = Field(1000, ge=1)
    acf_band: tuple[int, int] = (10, 100)

    # plumbing
    out_dir: str = 'out'
    threads: int | None = Field(None, ge=1)
    log_location: str = 'imc.log'

    @field_validator('alphas')
    def validate_alphas(cls, value):
        if not value or any(not 0 < a < 1 for a in value):
            raise ValueError("every alpha must lie in (0, 1)")
        return value

    @model_validator(mode='after')
    def check_states(self):
        if self.z_min + self.z_max < 1:
            raise ValueError("z_min + z_max must be at least 1")
        return self

    def require_seed(self, command: str) -> int:
        if self.seed is None:
            raise InputDataError(f"'{command}' is stochastic and needs --seed")
        return self.seed

    def require_file(self, field: str) -> Path:
        value = getattr(self, field)
        if value is None:
            raise InputDataError(f"no {field} file given (--{field.replace('_', '-')})")
        path = Path(value)
        if not path.is_file():
            raise FileNotFoundError(f"{field} file not found: {path}")
        return path


def config_hash(config: RunConfig) -> str:
    """SHA-256 of the canonical JSON of every result-affecting field."""
    canonical = json.dumps(config.model_dump(mode='json', exclude=_UNHASHED), sort_keys=True, separators=(',', ':'))
    return hashlib.sha256(canonical.encode('utf-8')).hexdigest()


def read_config_file(path: str | Path = DEFAULT_CONFIG_FILE) -> dict[str, Any]:
    """Config file contents, or an empty dict when the file does not exist."""
    try:
        with open(path, 'r') as f:
            values = json.load(f)
    except FileNotFoundError:
        log.info(f"No config file at {path}; using defaults and flags.")
        return {}
    except json.JSONDecodeError as e:
        raise InputDataError(f"could not decode {path}: {e}") from e
    if not isinstance(values, dict):
        raise InputDataError(f"{path} must hold a JSON object")
    return values


def load_run_config(path: str | Path | None = None, overrides: dict[str, Any] | None = None,
                    defaults: dict[str, Any] | None = None) -> RunConfig:
    """
    Merges defaults (e.g. from the environment), the config file and flag overrides, in that order.
    Flags set to None are treated as absent.
    """
    values = dict(defaults or {})
    values.update(read_config_file(path or DEFAULT_CONFIG_FILE))
    values.update({key: value for key, value in (overrides or {}).items() if value is not None})
    try:
        return RunConfig(**values)
    except ValidationError as e:
        raise InputDataError(f"invalid configuration: {e}") from e
