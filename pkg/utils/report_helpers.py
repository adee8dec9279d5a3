# utils/report_helpers.py
import logging
from typing import Sequence

import numpy as np

log = logging.getLogger(__name__)


# Status markers used across summaries for consistency
class Marks:
    PASS = "pass"
    FAIL = "FAIL"
    REJECT = "reject H0"
    ACCEPT = "do not reject H0"
    NA = "n/a"


def format_number(value, digits: int = 4) -> str:
    if value is None:
        return Marks.NA
    if isinstance(value, (bool, np.bool_)):
        return "yes" if value else "no"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return f"{float(value):.{digits}g}" if abs(float(value)) >= 1e4 else f"{float(value):.{digits}f}"


def create_table(headers: Sequence[str], rows: Sequence[Sequence], digits: int = 4) -> str:
    """
    Renders a markdown table.
    Args:
        headers: Column titles.
        rows: One sequence of cells per row; numbers are formatted with `digits`.
    Returns:
        The table as a string without a trailing newline.
    """
    cells = [[c if isinstance(c, str) else format_number(c, digits) for c in row] for row in rows]
    lines = ["| " + " | ".join(headers) + " |", "|" + "|".join("---" for _ in headers) + "|"]
    lines.extend("| " + " | ".join(row) + " |" for row in cells)
    return "\n".join(lines)


def create_matrix_table(matrix, labels: Sequence[str] | None = None, digits: int = 3) -> str:
    matrix = np.asarray(matrix)
    labels = list(labels) if labels is not None else [str(i) for i in range(1, len(matrix) + 1)]
    rows = [[labels[i], *[f"{v:.{digits}f}" for v in matrix[i]]] for i in range(len(matrix))]
    return create_table(["", *labels], rows)


def create_section(title: str, body: str = "", footer_text: str | None = None) -> str:
    """A titled markdown block, optionally followed by an italic note."""
    parts = [f"## {title}", "", body]
    if footer_text:
        parts.extend(["", f"_{footer_text}_"])
    return "\n".join(parts).rstrip() + "\n"
