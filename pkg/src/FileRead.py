"""
Utility module for file operations: output-root resolution, folder setup and
lossless JSON / NDJSON reading and writing for laboratory artifacts.
"""

import json
import os
from typing import Any, Dict, Iterable, Iterator, Optional

import numpy as np
from dotenv import load_dotenv

from .LogManager import OUTPUT_ROOT_ENV

DEFAULT_OUTPUT_FOLDER = 'outputs'
SCHEMA_VERSION = 1


def resolve_output_root() -> str:
    """Output root from the environment (``.env`` honoured), else ./outputs."""
    load_dotenv()
    return os.environ.get(OUTPUT_ROOT_ENV, os.path.join(os.getcwd(), DEFAULT_OUTPUT_FOLDER))


def resolve_output_path(path: Optional[str], default_name: str) -> str:
    """Use ``path`` when given, otherwise ``default_name`` under the output root."""
    if path:
        return path
    return os.path.join(resolve_output_root(), default_name)


def setup_output_folder(path: str) -> str:
    if path and not os.path.exists(path):
        os.makedirs(path)
    return path


def ensure_parent(file_path: str) -> None:
    setup_output_folder(os.path.dirname(os.path.abspath(file_path)))


def to_jsonable(value: Any) -> Any:
    """Convert numpy containers/scalars to plain Python for json."""
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, (np.floating,)):
        return float(value)
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, dict):
        return {str(k): to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_jsonable(v) for v in value]
    return value


def dumps(value: Any) -> str:
    # float repr is the shortest round-trip form, so this is lossless
    return json.dumps(to_jsonable(value), allow_nan=False, separators=(',', ':'))


def write_json(file_path: str, payload: Dict[str, Any]) -> str:
    """Write one JSON document; raises OSError naming the path on failure."""
    ensure_parent(file_path)
    try:
        with open(file_path, 'w') as f:
            f.write(json.dumps(to_jsonable(payload), allow_nan=False, indent=1))
            f.write('\n')
    except OSError as e:
        raise OSError(f"Error writing {file_path}: {str(e)}") from e
    return file_path


def read_json(file_path: str) -> Dict[str, Any]:
    try:
        with open(file_path, 'r') as f:
            return json.load(f)
    except OSError as e:
        raise OSError(f"Error reading {file_path}: {str(e)}") from e
    except json.JSONDecodeError as e:
        raise ValueError(f"File {file_path} is not valid JSON: {str(e)}") from e


def write_ndjson(file_path: str, header: Dict[str, Any], records: Iterable[Dict[str, Any]]) -> str:
    """Write a header object followed by one JSON record per line."""
    ensure_parent(file_path)
    try:
        with open(file_path, 'w') as f:
            f.write(dumps(header))
            f.write('\n')
            for record in records:
                f.write(dumps(record))
                f.write('\n')
    except OSError as e:
        raise OSError(f"Error writing {file_path}: {str(e)}") from e
    return file_path


def iter_ndjson(file_path: str) -> Iterator[Dict[str, Any]]:
    try:
        with open(file_path, 'r') as f:
            for line_no, line in enumerate(f, start=1):
                line = line.strip()
                if not line:
                    continue
                try:
                    yield json.loads(line)
                except json.JSONDecodeError as e:
                    raise ValueError(f"{file_path}:{line_no} is not valid JSON: {str(e)}") from e
    except OSError as e:
        raise OSError(f"Error reading {file_path}: {str(e)}") from e


def read_first_line(file_path: str) -> Dict[str, Any]:
    """Parse only the first JSON object of a file (header or whole document)."""
    for obj in iter_ndjson(file_path):
        return obj
    raise ValueError(f"File {file_path} is empty")