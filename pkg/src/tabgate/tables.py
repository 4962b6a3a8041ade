"""Semi-structured table model: ingestion, typing, summaries, slicing, rendering.

Tables are stored as raw text cells with no destructive coercion at ingest.
All values here are immutable after construction and safe to share between
concurrent requests.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from enum import Enum

from .errors import EmptyTable, UnsupportedFormat

__all__ = [
    "SemiStructuredTable",
    "InferredType",
    "ColumnStats",
    "StatisticsTable",
    "ColumnSelection",
    "parse_table",
    "table_from_dict",
    "infer_column_type",
    "build_statistics_table",
    "extract_columns",
    "to_column_dict",
    "render_markdown",
    "render_statistics",
    "estimate_tokens",
]


@dataclass(frozen=True)
class SemiStructuredTable:
    """A schema-less table: a title, unique headers and a rectangular grid of text cells."""

    title: str
    headers: tuple[str, ...]
    rows: tuple[tuple[str, ...], ...]
    warnings: tuple[str, ...] = ()

    @property
    def col_count(self) -> int:
        return len(self.headers)

    @property
    def row_count(self) -> int:
        return len(self.rows)

    def column(self, index: int) -> list[str]:
        return [row[index] for row in self.rows]


class InferredType(str, Enum):
    INTEGER = "integer"
    REAL = "real"
    TEXT = "text"


@dataclass(frozen=True)
class ColumnStats:
    name: str
    inferred_type: InferredType
    first_entry: str
    last_entry: str


@dataclass(frozen=True)
class StatisticsTable:
    """Per-column summary whose rendered size does not grow with row count."""

    title: str
    columns: tuple[ColumnStats, ...]
    row_count: int


@dataclass(frozen=True)
class ColumnSelection:
    """Result of projecting a table onto requested columns."""

    table: SemiStructuredTable
    matched: tuple[str, ...]
    unknown: tuple[str, ...]
    used_fallback: bool = False


def _cell_text(value) -> str:
    if value is None:
        return ""
    if isinstance(value, str):
        return value
    return str(value)


def _dedupe_headers(headers: list[str]) -> tuple[list[str], list[str]]:
    """Make headers unique with a deterministic ``_k`` suffix, k starting at 2."""
    seen: dict[str, int] = {}
    out: list[str] = []
    warnings: list[str] = []
    for name in headers:
        if name not in seen:
            seen[name] = 1
            out.append(name)
            continue
        k = seen[name] + 1
        candidate = f"{name}_{k}"
        while candidate in seen:
            k += 1
            candidate = f"{name}_{k}"
        seen[name] = k
        seen[candidate] = 1
        out.append(candidate)
        warnings.append(f"duplicate header {name!r} renamed to {candidate!r}")
    return out, warnings


def parse_table(source) -> SemiStructuredTable:
    """Build a table from a native table document.

    The native document is a mapping with keys ``title`` (optional),
    ``header`` (list of column names) and ``rows`` (list of cell lists).
    Short rows are padded with empty text, long rows are truncated; both
    are recorded as warnings rather than errors.
    """
    if not isinstance(source, dict):
        raise UnsupportedFormat(f"expected a mapping, got {type(source).__name__}")
    if "header" not in source or "rows" not in source:
        raise UnsupportedFormat("native table document requires 'header' and 'rows' keys")

    raw_header = source["header"]
    if not isinstance(raw_header, (list, tuple)) or not raw_header:
        raise EmptyTable("table has no header row")

    headers, warnings = _dedupe_headers([_cell_text(h) for h in raw_header])
    width = len(headers)

    rows: list[tuple[str, ...]] = []
    for i, raw_row in enumerate(source["rows"]):
        cells = [_cell_text(c) for c in raw_row]
        if len(cells) < width:
            warnings.append(f"row {i} padded from {len(cells)} to {width} cells")
            cells.extend([""] * (width - len(cells)))
        elif len(cells) > width:
            warnings.append(f"row {i} truncated from {len(cells)} to {width} cells")
            cells = cells[:width]
        rows.append(tuple(cells))

    return SemiStructuredTable(
        title=_cell_text(source.get("title", "")),
        headers=tuple(headers),
        rows=tuple(rows),
        warnings=tuple(warnings),
    )


def table_from_dict(columns: dict[str, list[str]], title: str = "") -> SemiStructuredTable:
    """Inverse of :func:`to_column_dict` (modulo header de-duplication)."""
    if not columns:
        raise EmptyTable("column dictionary is empty")
    headers = list(columns)
    length = max((len(v) for v in columns.values()), default=0)
    rows = [
        tuple(_cell_text(columns[h][i]) if i < len(columns[h]) else "" for h in headers)
        for i in range(length)
    ]
    return SemiStructuredTable(title=title, headers=tuple(headers), rows=tuple(rows))


_INT_RE = re.compile(r"^[+-]?\d+$")
_REAL_RE = re.compile(r"^[+-]?(\d+(\.\d*)?|\.\d+)([eE][+-]?\d+)?$")


def _strip_numeric(text: str) -> str:
    # thousands separators are stripped before all numeric parses
    return text.strip().replace(",", "")


def parses_as_integer(text: str) -> bool:
    return bool(_INT_RE.match(_strip_numeric(text)))


def parses_as_real(text: str) -> bool:
    return bool(_REAL_RE.match(_strip_numeric(text)))


def infer_column_type(cells: list[str]) -> InferredType:
    """Classify a column from its cell texts.

    Integer iff every non-empty cell is a base-10 integer literal, real iff
    every non-empty cell is numeric and at least one is non-integer.
    Everything else, including mixed numeric/text columns and empty columns,
    is text: mixed columns must stay raw so a correction stage can decide
    how to normalize them.
    """
    non_empty = [c for c in cells if c.strip()]
    if not non_empty:
        return InferredType.TEXT
    if all(parses_as_integer(c) for c in non_empty):
        return InferredType.INTEGER
    if all(parses_as_real(c) for c in non_empty):
        return InferredType.REAL
    return InferredType.TEXT


def build_statistics_table(table: SemiStructuredTable) -> StatisticsTable:
    """Summarize each column as (name, inferred type, first entry, last entry)."""
    if table.col_count == 0:
        raise EmptyTable("cannot summarize a table with no columns")
    columns = []
    for i, name in enumerate(table.headers):
        cells = table.column(i)
        columns.append(
            ColumnStats(
                name=name,
                inferred_type=infer_column_type(cells),
                first_entry=cells[0] if cells else "",
                last_entry=cells[-1] if cells else "",
            )
        )
    return StatisticsTable(title=table.title, columns=tuple(columns), row_count=table.row_count)


def normalize_column_name(name: str) -> str:
    return re.sub(r"[^a-z0-9]", "", name.lower())


def extract_columns(table: SemiStructuredTable, names: list[str]) -> ColumnSelection:
    """Project the table onto the requested columns, in requested order.

    Matching is exact first, then case/punctuation-insensitive. Unknown
    names are reported, never fatal. Zero matches falls back to the full
    table so a bad plan degrades gracefully.
    """
    by_exact = {h: i for i, h in enumerate(table.headers)}
    by_norm: dict[str, int] = {}
    for i, h in enumerate(table.headers):
        by_norm.setdefault(normalize_column_name(h), i)

    matched_idx: list[int] = []
    matched: list[str] = []
    unknown: list[str] = []
    for name in names:
        idx = by_exact.get(name)
        if idx is None:
            idx = by_norm.get(normalize_column_name(name))
        if idx is None:
            unknown.append(name)
        elif idx not in matched_idx:
            matched_idx.append(idx)
            matched.append(table.headers[idx])

    if not matched_idx:
        warning = "no requested columns matched; falling back to the full table"
        return ColumnSelection(
            table=SemiStructuredTable(
                title=table.title,
                headers=table.headers,
                rows=table.rows,
                warnings=(warning,),
            ),
            matched=table.headers,
            unknown=tuple(unknown),
            used_fallback=True,
        )

    sub = SemiStructuredTable(
        title=table.title,
        headers=tuple(table.headers[i] for i in matched_idx),
        rows=tuple(tuple(row[i] for i in matched_idx) for row in table.rows),
    )
    return ColumnSelection(table=sub, matched=tuple(matched), unknown=tuple(unknown))


def to_column_dict(table: SemiStructuredTable) -> dict[str, list[str]]:
    """Column-major view: header name to ordered list of cell texts."""
    return {h: table.column(i) for i, h in enumerate(table.headers)}


def _escape_cell(text: str) -> str:
    return text.replace("|", "\\|").replace("\n", " ")


def render_markdown(table: SemiStructuredTable) -> str:
    """Render the grid as pipe-delimited markdown with a header row."""
    lines = ["| " + " | ".join(_escape_cell(h) for h in table.headers) + " |"]
    lines.append("| " + " | ".join("---" for _ in table.headers) + " |")
    for row in table.rows:
        lines.append("| " + " | ".join(_escape_cell(c) for c in row) + " |")
    return "\n".join(lines)


def render_statistics(stats: StatisticsTable) -> str:
    """One ``name | type | first | last`` line per column plus a row-count line."""
    lines = ["column | type | first | last"]
    for col in stats.columns:
        lines.append(
            f"{_escape_cell(col.name)} | {col.inferred_type.value}"
            f" | {_escape_cell(col.first_entry)} | {_escape_cell(col.last_entry)}"
        )
    lines.append(f"rows: {stats.row_count}")
    return "\n".join(lines)


def estimate_tokens(text: str) -> int:
    """Deterministic token-count heuristic: ceil(utf-8 bytes / 4).

    Used when the LLM endpoint reports no usage counts; endpoint counts
    take precedence wherever they exist.
    """
    if not text:
        return 0
    return math.ceil(len(text.encode("utf-8")) / 4)
