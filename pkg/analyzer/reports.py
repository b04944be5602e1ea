"""
CSV reports

Every report starts with one comment line naming the package version, the run seed and
the model config hash, so a report can be traced back to the artifacts that produced it.
Values are written with fixed formatting so reruns are byte-identical.
"""

import csv
import io
import logging
from pathlib import Path
from typing import Any, Iterable, Optional, Sequence, Union

logger = logging.getLogger(__name__)

CAPA_VERSION = "0.1.0"


def header_line(seed: int, config_hash: str, version: str = CAPA_VERSION) -> str:
    return f"# capa-version={version}, seed={seed}, config-hash={config_hash[:16]}"


def format_cell(value: Any) -> str:
    """None -> empty, floats via repr, enums by value"""
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(getattr(value, "value", value))


def render_csv(
    columns: Sequence[str],
    rows: Iterable[Sequence[Any]],
    seed: int = 0,
    config_hash: str = "",
    summary: Optional[Sequence[str]] = None,
) -> str:
    """
    Report text: header comment, column line, rows, then optional '# ' summary lines
    """
    buffer = io.StringIO()
    buffer.write(header_line(seed, config_hash) + "\n")
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        if len(row) != len(columns):
            raise ValueError(f"row {list(row)} does not match columns {list(columns)}")
        writer.writerow([format_cell(cell) for cell in row])
    for line in summary or ():
        buffer.write(f"# {line}\n")
    return buffer.getvalue()


def write_csv(
    path: Union[str, Path],
    columns: Sequence[str],
    rows: Iterable[Sequence[Any]],
    seed: int = 0,
    config_hash: str = "",
    summary: Optional[Sequence[str]] = None,
) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    text = render_csv(columns, rows, seed, config_hash, summary)
    with open(path, 'w', encoding='utf-8', newline='') as f:
        f.write(text)
    logger.info("[Report] wrote %s", path)
    return path


def read_csv(path: Union[str, Path]) -> list:
    """Rows of a report as dicts, comment lines dropped"""
    with open(path, 'r', encoding='utf-8', newline='') as f:
        lines = [line for line in f if not line.startswith("#")]
    return list(csv.DictReader(lines))
