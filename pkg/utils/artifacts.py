# utils/artifacts.py
import json
import logging
import math
from pathlib import Path
from typing import Any

import numpy as np
import pandas as pd
from pydantic import BaseModel

from utils import TOOL_NAME, __version__
from utils.errors import InputDataError
from utils.imc_estimation import RegimeModel
from utils.index_process import NORMALIZATION
from utils.run_config import RunConfig, config_hash

log = logging.getLogger(__name__)

FLOAT_FORMAT = '%.12g'


def to_plain(value: Any) -> Any:
    """Converts models, arrays and numpy scalars into JSON-ready Python values. Non-finite floats become null."""
    if isinstance(value, BaseModel):
        return to_plain(value.model_dump())
    if isinstance(value, dict):
        return {str(key): to_plain(item) for key, item in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_plain(item) for item in value]
    if isinstance(value, np.ndarray):
        return to_plain(value.tolist())
    if isinstance(value, np.generic):
        return to_plain(value.item())
    if isinstance(value, float):
        return value if math.isfinite(value) else None
    return value


class ArtifactWriter:
    """
    Writes a command's JSON, CSV and text outputs under the output directory, each stamped with the tool
    version and config hash. Used as a context manager, files written inside a failing block are removed.
    """

    def __init__(self, config: RunConfig, command: str):
        self.config = config
        self.command = command
        self.out_dir = Path(config.out_dir)
        self.hash = config_hash(config)
        self.written: list[Path] = []

    def __enter__(self) -> 'ArtifactWriter':
        self.out_dir.mkdir(parents=True, exist_ok=True)
        return self

    def __exit__(self, exc_type, exc, tb):
        if exc_type is not None:
            self.discard()
        return False

    def discard(self):
        for path in self.written:
            path.unlink(missing_ok=True)
            log.info(f"Removed partial artifact {path}.")
        self.written.clear()

    @property
    def meta(self) -> dict:
        return {'tool': TOOL_NAME, 'version': __version__, 'command': self.command, 'config_hash': self.hash,
                'seed': self.config.seed, 'normalization': NORMALIZATION}

    @property
    def stamp(self) -> str:
        return f"tool={TOOL_NAME} version={__version__} config_hash={self.hash}"

    def _path(self, name: str) -> Path:
        path = self.out_dir / name
        self.written.append(path)
        return path

    def write_json(self, name: str, result: Any) -> Path:
        path = self._path(name)
        payload = {'meta': self.meta, 'result': to_plain(result)}
        with open(path, 'w') as f:
            json.dump(payload, f, sort_keys=True, indent=2)
            f.write('\n')
        log.info(f"Wrote {path}.")
        return path

    def write_csv(self, name: str, frame: pd.DataFrame) -> Path:
        path = self._path(name)
        with open(path, 'w', newline='') as f:
            f.write(f"# {self.stamp}\n")
            frame.to_csv(f, index=False, float_format=FLOAT_FORMAT, lineterminator='\n')
        log.info(f"Wrote {path}.")
        return path

    def write_text(self, name: str, text: str) -> Path:
        """Markdown and other text; the stamp goes in a leading HTML comment."""
        path = self._path(name)
        path.write_text(f"<!-- {self.stamp} -->\n{text}")
        log.info(f"Wrote {path}.")
        return path


def read_json(path: str | Path) -> Any:
    try:
        with open(path, 'r') as f:
            return json.load(f)
    except json.JSONDecodeError as e:
        raise InputDataError(f"could not decode {path}: {e}") from e


def _result(payload: Any) -> Any:
    if isinstance(payload, dict) and 'result' in payload:
        return payload['result']
    return payload


def read_model(path: str | Path) -> RegimeModel:
    """Loads a RegimeModel from a fit artifact or from a bare model JSON."""
    payload = _result(read_json(path))
    if isinstance(payload, dict) and 'model' in payload:
        payload = payload['model']
    try:
        return RegimeModel.model_validate(payload)
    except ValueError as e:
        raise InputDataError(f"{path} does not hold a valid model: {e}") from e


def read_matrices(path: str | Path) -> list[np.ndarray]:
    """Transition matrices from a model artifact, or from a JSON matrix / list of matrices."""
    payload = _result(read_json(path))
    if isinstance(payload, dict):
        payload = payload.get('model', payload).get('matrices')
    if payload is None:
        raise InputDataError(f"{path} holds no matrices")
    array = np.asarray(payload, dtype=np.float64)
    if array.ndim == 2:
        array = array[None]
    if array.ndim != 3 or array.shape[1] != array.shape[2]:
        raise InputDataError(f"{path}: expected square matrices, got shape {array.shape}")
    return list(array)
