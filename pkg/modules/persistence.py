"""
Unified JSON / CSV persistence layer
All artifacts go through here so reruns are byte-identical
"""
import csv
import io
import json
import os
import tempfile
from pathlib import Path
from typing import Any, Iterable, Optional, Sequence

import numpy as np


def _to_builtin(value: Any) -> Any:
    """JSON fallback for numpy scalars and arrays"""
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        return float(value)
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, Path):
        return str(value)
    raise TypeError(f"Object of type {type(value).__name__} is not JSON serializable")


def dumps_json(data: Any, indent: int = 2) -> str:
    """Canonical JSON text (insertion order kept, trailing newline)"""
    return json.dumps(data, indent=indent, default=_to_builtin) + "\n"


def atomic_write_text(text: str, file_path: str, ensure_dir: bool = True) -> None:
    """
    Write text via a temp file in the same directory, then rename

    Args:
        text: File content
        file_path: Destination
        ensure_dir: Create parent directories if they don't exist
    """
    path = Path(file_path)
    if ensure_dir:
        path.parent.mkdir(parents=True, exist_ok=True)

    fd, tmp_name = tempfile.mkstemp(prefix=f".{path.name}.", dir=str(path.parent))
    try:
        with os.fdopen(fd, 'w', newline='') as f:
            f.write(text)
        os.replace(tmp_name, path)
    except BaseException:
        if os.path.exists(tmp_name):
            os.unlink(tmp_name)
        raise


def save_json(data: Any, file_path: str, indent: int = 2, ensure_dir: bool = True) -> None:
    """
    Save data to JSON file

    Args:
        data: Data to save (dict, list, etc.)
        file_path: Path to JSON file
        indent: Indentation level for pretty printing
        ensure_dir: Create parent directories if they don't exist

    Raises:
        IOError: If file cannot be written
    """
    atomic_write_text(dumps_json(data, indent=indent), file_path, ensure_dir=ensure_dir)


def load_json(file_path: str, default: Optional[Any] = None) -> Any:
    """
    Load data from JSON file

    Args:
        file_path: Path to JSON file
        default: Default value if file doesn't exist

    Returns:
        Loaded data or default value
    """
    path = Path(file_path)

    if not path.exists():
        return default

    with open(path, 'r') as f:
        return json.load(f)


def format_cell(value: Any) -> str:
    """Deterministic CSV cell text"""
    if isinstance(value, bool):
        return 'true' if value else 'false'
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, np.integer):
        return str(int(value))
    return str(value)


def write_csv(file_path: str, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> None:
    """
    Write a CSV with a header row

    Args:
        file_path: Destination
        header: Column names
        rows: Row sequences, same length as header
    """
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator='\n')
    writer.writerow(header)
    for row in rows:
        if len(row) != len(header):
            raise ValueError(f"Row has {len(row)} cells, header has {len(header)}")
        writer.writerow([format_cell(v) for v in row])
    atomic_write_text(buffer.getvalue(), file_path)


def read_csv(file_path: str) -> list:
    """Read a CSV into a list of dicts keyed by header"""
    with open(file_path, 'r', newline='') as f:
        return list(csv.DictReader(f))
