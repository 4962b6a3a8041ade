"""Parsers that turn raw LLM completions into typed artifacts, plus EM scoring.

Every parser here is total over arbitrary text: completions are adversarial
input and must never crash the pipeline. Emptiness and sentinel errors are
what drive the fallback ladder downstream.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from enum import Enum

from .errors import FormatError, NoCodeFound
from .promptdb import AtomicOperation

__all__ = [
    "Plan",
    "CodeArtifact",
    "Answer",
    "Provenance",
    "parse_plan",
    "extract_code",
    "extract_default_answer",
    "parse_braced_answer",
    "em_match",
    "normalize_answer_text",
]

REASONING_ENTRY = "solution"
NORMALIZER_ENTRY = "normalize"
DEFAULT_ANSWER_MARKER = "DEFAULT_ANSWER:"


class Provenance(str, Enum):
    CODE_EXECUTION = "code_execution"
    CODE_EXECUTION_AFTER_CORRECTION = "code_execution_after_correction"
    DEFAULT_ANSWER = "default_answer"
    DIRECT_COMPLETION = "direct_completion"
    ALIGNED = "aligned"
    # set when every fallback is exhausted; scores as a deterministic miss
    ERROR = "error"


@dataclass(frozen=True)
class Answer:
    value: str
    provenance: Provenance
    raw: str = ""


@dataclass(frozen=True)
class Plan:
    """Parsed task plan: which columns matter, which operations, which steps."""

    relevant_columns: tuple[str, ...]
    operations: tuple[AtomicOperation, ...]
    programming_steps: tuple[str, ...]
    raw: str = ""

    def render(self) -> str:
        lines = [
            "Relevant Columns: " + ", ".join(self.relevant_columns),
            "Operations: " + ", ".join(str(op) for op in self.operations),
            "Programming Steps:",
        ]
        lines += [f"{i}. {step}" for i, step in enumerate(self.programming_steps, start=1)]
        return "\n".join(lines)

    @property
    def is_empty(self) -> bool:
        return not (self.relevant_columns or self.operations or self.programming_steps)


@dataclass(frozen=True)
class CodeArtifact:
    source: str
    entry_name: str
    role: str = "reasoning"  # or "normalization"
    warnings: tuple[str, ...] = ()


_PLAN_LABELS = {
    "relevant_columns": re.compile(r"relevant\s+columns\s*:", re.IGNORECASE),
    "operations": re.compile(r"operations?\s*:", re.IGNORECASE),
    "programming_steps": re.compile(r"programming\s+steps\s*:", re.IGNORECASE),
}

_STEP_ITEM_RE = re.compile(r"^\s*(?:\d+[.)]|[-*])\s*(.+)$")


def _dedupe(items: list[str]) -> tuple[str, ...]:
    seen = set()
    out = []
    for item in items:
        if item and item not in seen:
            seen.add(item)
            out.append(item)
    return tuple(out)


def _plan_sections(completion: str) -> dict[str, str]:
    """Slice the completion into labeled sections, case-insensitively."""
    hits = []
    for name, pattern in _PLAN_LABELS.items():
        match = pattern.search(completion)
        if match:
            hits.append((match.start(), match.end(), name))
    hits.sort()
    sections = {}
    for i, (_, end, name) in enumerate(hits):
        stop = hits[i + 1][0] if i + 1 < len(hits) else len(completion)
        sections[name] = completion[end:stop].strip()
    return sections


def parse_plan(completion: str) -> Plan:
    """Extract relevant columns, operations and programming steps.

    Unrecognized operation tokens are dropped (the raw text stays on the
    plan for audit); missing sections yield empty fields so the pipeline
    can fall back to the full table and the all-pairs demo set.
    """
    sections = _plan_sections(completion)

    columns = []
    cols_text = sections.get("relevant_columns", "").splitlines()
    if cols_text:
        columns = [c.strip() for c in cols_text[0].split(",") if c.strip()]

    operations = []
    ops_text = sections.get("operations", "").splitlines()
    if ops_text:
        for token in re.split(r",|;|\band\b|&", ops_text[0]):
            op = AtomicOperation.parse(token)
            if op is not None and op not in operations:
                operations.append(op)

    steps: list[str] = []
    numbered = False
    for line in sections.get("programming_steps", "").splitlines():
        item = _STEP_ITEM_RE.match(line)
        if item:
            steps.append(item.group(1).strip())
            numbered = True
        elif line.strip():
            if numbered and steps:
                steps[-1] = steps[-1] + " " + line.strip()
            else:
                steps.append(line.strip())

    return Plan(
        relevant_columns=_dedupe(columns),
        operations=tuple(operations),
        programming_steps=_dedupe(steps),
        raw=completion,
    )


_FENCE_BLOCK_RE = re.compile(r"```[a-zA-Z0-9_+-]*[ \t]*\n(.*?)(?:```|\Z)", re.DOTALL)
_DEF_RE = re.compile(r"^\s*def\s+([A-Za-z_]\w*)\s*\(", re.MULTILINE)
_CODE_LINE_RE = re.compile(r"^(import\s|from\s|def\s|@|#)")


def _unfenced_code(completion: str) -> str | None:
    """Heuristic salvage for completions that forgot the code fence."""
    lines = completion.splitlines()
    start = None
    for i, line in enumerate(lines):
        if _CODE_LINE_RE.match(line):
            start = i
            break
    if start is None:
        return None
    kept = []
    for line in lines[start:]:
        if not line.strip() or line[0] in (" ", "\t") or _CODE_LINE_RE.match(line):
            kept.append(line)
        else:
            break
    block = "\n".join(kept).strip()
    return block or None


def extract_code(completion: str, role: str = "reasoning") -> CodeArtifact:
    """Pull the first code block out of a completion.

    The entry point is the demo-established name for the role ("solution"
    for reasoning, "normalize" for normalization) when such a function is
    defined, otherwise the first defined function. Raises NoCodeFound when
    no function definition can be located.
    """
    warnings: list[str] = []
    blocks = _FENCE_BLOCK_RE.findall(completion)
    blocks = [b.strip() for b in blocks if b.strip()]
    if len(blocks) > 1:
        warnings.append(f"{len(blocks)} fenced blocks found; using the first")
    source = None
    for block in blocks:
        if _DEF_RE.search(block):
            if source is None:
                source = block
            # later blocks already covered by the count warning
    if source is None:
        if blocks:
            warnings.append("fenced block has no function definition; trying unfenced text")
        source = _unfenced_code(completion)
        if source is None or not _DEF_RE.search(source):
            raise NoCodeFound("completion contains no function definition")

    defined = _DEF_RE.findall(source)
    expected = NORMALIZER_ENTRY if role == "normalization" else REASONING_ENTRY
    if expected in defined:
        entry = expected
    else:
        entry = defined[0]
        warnings.append(f"expected entry {expected!r} not defined; using {entry!r}")

    return CodeArtifact(source=source, entry_name=entry, role=role, warnings=tuple(warnings))


def extract_default_answer(completion: str) -> Answer | None:
    """Value after the last DEFAULT_ANSWER: marker, braces stripped when present."""
    marker = re.compile(re.escape(DEFAULT_ANSWER_MARKER), re.IGNORECASE)
    last = None
    for match in marker.finditer(completion):
        last = match
    if last is None:
        return None
    remainder = completion[last.end():].splitlines()
    line = remainder[0].strip() if remainder else ""
    if not line:
        return None
    value = line
    try:
        value = parse_braced_answer(line).value
    except FormatError:
        pass  # lenient: unbraced default values are accepted as-is
    return Answer(value=value, provenance=Provenance.DEFAULT_ANSWER, raw=line)


def _balanced_braces(text: str) -> list[str]:
    groups = []
    depth = 0
    start = -1
    for i, ch in enumerate(text):
        if ch == "{":
            if depth == 0:
                start = i
            depth += 1
        elif ch == "}" and depth > 0:
            depth -= 1
            if depth == 0:
                groups.append(text[start + 1 : i])
    return groups


def has_braced_answer(text: str) -> bool:
    return bool(_balanced_braces(text))


def parse_braced_answer(
    completion: str, provenance: Provenance = Provenance.DIRECT_COMPLETION
) -> Answer:
    """Content of the last balanced {...} group, trimmed.

    Completions often restate the demos' braced answers; the live answer
    is conventionally the final one. Raises FormatError when no balanced
    group exists, which signals the alignment step.
    """
    groups = _balanced_braces(completion)
    if not groups:
        raise FormatError("completion contains no balanced braced answer")
    return Answer(value=groups[-1].strip(), provenance=provenance, raw=completion)


_NUMERIC_RE = re.compile(r"^[+-]?(\d+(\.\d*)?|\.\d+)([eE][+-]?\d+)?$")


def normalize_answer_text(text: str) -> str:
    """Shared normal form for EM comparison: trim, unbrace, unquote, casefold."""
    value = text.strip()
    groups = _balanced_braces(value)
    if len(groups) == 1 and value.startswith("{") and value.endswith("}"):
        value = groups[0].strip()
    while len(value) >= 2 and value[0] == value[-1] and value[0] in "\"'":
        value = value[1:-1].strip()
    return value.casefold()


def _as_number(text: str) -> float | None:
    cleaned = text.replace(",", "").strip()
    if cleaned.endswith("%"):
        cleaned = cleaned[:-1]
    if _NUMERIC_RE.match(cleaned):
        return float(cleaned)
    return None


def _items_equal(a: str, b: str) -> bool:
    if a == b:
        return True
    na, nb = _as_number(a), _as_number(b)
    if na is not None and nb is not None:
        return abs(na - nb) <= 1e-6
    return False


def _split_multi(text: str, force: bool) -> list[str]:
    if "|" in text:
        return [normalize_answer_text(p) for p in text.split("|")]
    if force and ", " in text:
        return [normalize_answer_text(p) for p in text.split(", ")]
    return [normalize_answer_text(text)]


def em_match(prediction, gold: str) -> bool:
    """Exact-match after normalization.

    Numbers compare with absolute tolerance 1e-6; golds with several
    "|"-separated answers require set equality of the normalized items
    (a prediction may join them with "|" or ", ").
    """
    pred_text = prediction.value if isinstance(prediction, Answer) else str(prediction)
    pred_items = _split_multi(pred_text, force=False)
    gold_items = _split_multi(gold, force=False)
    if len(gold_items) > 1 and len(pred_items) == 1:
        pred_items = _split_multi(pred_text, force=True)
    elif len(pred_items) > 1 and len(gold_items) == 1:
        gold_items = _split_multi(gold, force=True)

    if len(pred_items) != len(gold_items):
        return False
    if len(pred_items) == 1:
        return _items_equal(pred_items[0], gold_items[0])

    remaining = list(gold_items)
    for item in pred_items:
        for i, candidate in enumerate(remaining):
            if _items_equal(item, candidate):
                del remaining[i]
                break
        else:
            return False
    return not remaining
