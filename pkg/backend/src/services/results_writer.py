# src/services/results_writer.py
import csv
import io
import json
import logging
import os
from typing import Any, Optional

import numpy as np

from backend.src.config.constants import CSV_COLUMNS
from backend.src.services.experiment_service import ResultTable
from backend.src.simulation.errors import InvalidInputError

logger = logging.getLogger("results")

FLOAT_DIGITS = 12


def _plain(value: Any) -> Any:
    """Convert numpy scalars and containers into rounded JSON-ready values."""
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, np.ndarray):
        return _plain(value.tolist())
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        # -0.0 and 0.0 must serialize identically
        return round(float(value), FLOAT_DIGITS) + 0.0
    return value


def _format_cell(value: Any) -> str:
    if isinstance(value, (float, np.floating)):
        return f"{float(value) + 0.0:.{FLOAT_DIGITS}f}"
    return str(value)


def to_csv(table: ResultTable) -> str:
    """CSV text with the fixed column order; one line per completed round."""
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for row in table.rows:
        values = row.values()
        writer.writerow([_format_cell(values[column]) for column in CSV_COLUMNS])
    return buffer.getvalue()


def to_json(table: ResultTable) -> str:
    """JSON document with the config echo, the per-round rows and the extras."""
    rows = []
    for row in table.rows:
        entry = row.values()
        if row.pauli_set is not None:
            entry["pauli_set"] = row.pauli_set
        rows.append(entry)
    document = {
        "config": table.config_echo,
        "rows": rows,
        "extras": table.extras,
    }
    return json.dumps(_plain(document), indent=2, sort_keys=True) + "\n"


def render(table: ResultTable, fmt: str) -> str:
    if fmt == "csv":
        return to_csv(table)
    if fmt == "json":
        return to_json(table)
    raise InvalidInputError(f"unknown output format '{fmt}'")


def write_results(table: ResultTable, fmt: str, path: Optional[str] = None, stream=None) -> str:
    """
    Emit the table to ``path`` (atomically) or to ``stream``.

    Returns:
        str: The rendered text
    """
    text = render(table, fmt)
    if path is None:
        if stream is not None:
            stream.write(text)
        return text
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)

    # Write to a temporary file first, then rename to avoid corruption
    temp_file = f"{path}.tmp"
    with open(temp_file, "w", encoding="utf-8", newline="") as f:
        f.write(text)
    os.replace(temp_file, path)
    logger.info(f"[Results] Wrote {len(table.rows)} rows to {path}")
    return text
