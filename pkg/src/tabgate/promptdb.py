"""Task-specific prompts database: instructions and demonstrations on disk.

Layout: ``<root>/<task_id>/<stage>/instruction.md`` plus
``<root>/<task_id>/<stage>/demos/<name>.md``. Demo files carry a ``---``
delimited front-matter block (keys ``kind`` and optional ``operation``)
followed by ``### QUESTION`` / ``### ANSWER`` / ``### CODE`` /
``### DEFAULT_ANSWER`` sections. The markers are a bit-exact contract
shared with the completion parsers.
"""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

from .errors import MalformedRecord, MissingStage, UnknownTaskStage

__all__ = [
    "AtomicOperation",
    "Demonstration",
    "PromptRecord",
    "PromptsDatabase",
    "ValidationReport",
    "load_db",
    "default_db_root",
    "select_demonstrations",
    "validate_db",
    "TABLE_QA_TASK",
    "REQUIRED_TABLE_QA_STAGES",
]

TABLE_QA_TASK = "table_qa"

PIPELINE_STAGES = ("planning", "conducting", "correction", "alignment")
BASELINE_STAGES = ("direct", "cot", "pot_stdlib", "pot_stdlib_para", "pot_pandas")
REQUIRED_TABLE_QA_STAGES = PIPELINE_STAGES + BASELINE_STAGES

DEMO_KINDS = ("planning", "conducting", "correction", "alignment", "baseline")

_STAGE_KIND = {
    "planning": "planning",
    "conducting": "conducting",
    "correction": "correction",
    "alignment": "alignment",
    "direct": "baseline",
    "cot": "baseline",
    "pot_stdlib": "baseline",
    "pot_stdlib_para": "baseline",
    "pot_pandas": "baseline",
}


class AtomicOperation(Enum):
    """The six reasoning primitives used to tag and select demonstrations."""

    SELECT_TABLE = "SelectTable"
    ADDITION_DIFF = "ADDITION/DIFF"
    TIMES_DIVISION = "TIMES/DIVISION"
    AVG = "AVG"
    COUNT = "COUNT"
    MAX_MIN = "MAX/MIN"

    def __str__(self) -> str:
        return self.value

    @classmethod
    def parse(cls, token: str) -> "AtomicOperation | None":
        """Map a free-form operation token to an operation, or None.

        Matching is case-insensitive and tolerates partial spellings
        ("max" alone maps to MAX/MIN): models do not reliably echo the
        menu names back verbatim.
        """
        norm = re.sub(r"[^a-z]", "", token.lower())
        if not norm:
            return None
        for op, aliases in _OPERATION_ALIASES.items():
            if norm in aliases:
                return op
        return None


# Deterministic selection order (operation menu order).
OPERATION_ORDER = tuple(AtomicOperation)

_OPERATION_ALIASES: dict[AtomicOperation, frozenset[str]] = {
    AtomicOperation.SELECT_TABLE: frozenset({"selecttable", "select", "selection", "lookup"}),
    AtomicOperation.ADDITION_DIFF: frozenset(
        {"additiondiff", "addition", "diff", "difference", "subtraction", "sum", "additiondifference"}
    ),
    AtomicOperation.TIMES_DIVISION: frozenset(
        {"timesdivision", "times", "division", "multiplication", "product", "quotient", "divide", "multiply"}
    ),
    AtomicOperation.AVG: frozenset({"avg", "average", "mean"}),
    AtomicOperation.COUNT: frozenset({"count", "counting"}),
    AtomicOperation.MAX_MIN: frozenset(
        {"maxmin", "max", "min", "maximum", "minimum", "argmax", "argmin", "largest", "smallest"}
    ),
}


@dataclass(frozen=True)
class Demonstration:
    """One worked example: a question turn and the expected answer turn."""

    name: str
    question: str
    body: str
    kind: str
    operation_tag: AtomicOperation | None = None
    default_answer: str = ""
    source: str = ""


@dataclass(frozen=True)
class PromptRecord:
    task_id: str
    stage: str
    instruction: str
    demonstrations: tuple[Demonstration, ...]


@dataclass(frozen=True)
class ValidationReport:
    passed: bool
    missing_stages: tuple[str, ...] = ()
    failures: tuple[str, ...] = ()
    warnings: tuple[str, ...] = ()
    planning_counts: dict = field(default_factory=dict)
    conducting_counts: dict = field(default_factory=dict)

    def summary(self) -> str:
        status = "pass" if self.passed else "fail"
        lines = [f"prompts-db validation: {status}"]
        lines += [f"  missing stage: {s}" for s in self.missing_stages]
        lines += [f"  fail: {f}" for f in self.failures]
        lines += [f"  warn: {w}" for w in self.warnings]
        return "\n".join(lines)


@dataclass(frozen=True)
class PromptsDatabase:
    """Read-only mapping (task_id, stage) -> PromptRecord with a content digest."""

    root: str
    records: dict
    digest: str
    report: ValidationReport

    def get(self, task_id: str, stage: str) -> PromptRecord:
        try:
            return self.records[(task_id, stage)]
        except KeyError:
            raise UnknownTaskStage(f"no prompt record for task={task_id!r} stage={stage!r}") from None

    def has(self, task_id: str, stage: str) -> bool:
        return (task_id, stage) in self.records

    def tasks(self) -> list[str]:
        return sorted({task for task, _ in self.records})

    def stages_for(self, task_id: str) -> list[str]:
        return sorted(stage for task, stage in self.records if task == task_id)


_FRONT_RE = re.compile(r"^---\s*$")
_MARKER_RE = re.compile(r"^### ([A-Z_]+)\s*$")
_ALLOWED_SECTIONS = {"QUESTION", "ANSWER", "CODE", "DEFAULT_ANSWER"}
_FENCE_RE = re.compile(r"```")


def _parse_demo_file(path: Path) -> Demonstration:
    text = path.read_text(encoding="utf-8")
    lines = text.splitlines()
    if not lines or not _FRONT_RE.match(lines[0]):
        raise MalformedRecord(f"{path}: missing front-matter delimiter")

    meta: dict[str, str] = {}
    idx = 1
    while idx < len(lines) and not _FRONT_RE.match(lines[idx]):
        line = lines[idx].strip()
        idx += 1
        if not line:
            continue
        if ":" not in line:
            raise MalformedRecord(f"{path}: front-matter line {line!r} is not 'key: value'")
        key, value = line.split(":", 1)
        meta[key.strip()] = value.strip()
    if idx >= len(lines):
        raise MalformedRecord(f"{path}: unterminated front-matter block")
    idx += 1

    kind = meta.get("kind", "")
    if kind not in DEMO_KINDS:
        raise MalformedRecord(f"{path}: unknown demo kind {kind!r}")

    sections: dict[str, list[str]] = {}
    current: str | None = None
    for line in lines[idx:]:
        marker = _MARKER_RE.match(line)
        if marker:
            name = marker.group(1)
            if name not in _ALLOWED_SECTIONS:
                raise MalformedRecord(f"{path}: unknown section marker {name!r}")
            if name in sections:
                raise MalformedRecord(f"{path}: duplicate section {name!r}")
            sections[name] = []
            current = name
        elif current is not None:
            sections[current].append(line)
    content = {name: "\n".join(body).strip() for name, body in sections.items()}

    question = content.get("QUESTION", "")
    if not question:
        raise MalformedRecord(f"{path}: missing or empty QUESTION section")

    if kind == "planning":
        answer = content.get("ANSWER", "")
        lowered = answer.lower()
        for label in ("relevant columns", "operations", "programming steps"):
            if label not in lowered:
                raise MalformedRecord(f"{path}: planning answer lacks a {label!r} field")
        body = answer
        default = ""
    elif kind == "conducting":
        code = content.get("CODE", "")
        default = content.get("DEFAULT_ANSWER", "")
        if not code or not _FENCE_RE.search(code) or "def " not in code:
            raise MalformedRecord(f"{path}: conducting demo needs a fenced code block with a function")
        if not default:
            raise MalformedRecord(f"{path}: conducting demo lacks a default answer")
        body = f"{code}\nDEFAULT_ANSWER: {default}"
    elif kind == "correction":
        code = content.get("CODE", "")
        if not code or "def " not in code:
            raise MalformedRecord(f"{path}: correction demo needs a normalization function")
        body = code
        default = ""
    else:  # alignment, baseline
        body = content.get("ANSWER") or content.get("CODE") or ""
        if not body:
            raise MalformedRecord(f"{path}: demo needs an ANSWER or CODE section")
        default = ""

    operation = None
    if meta.get("operation"):
        operation = AtomicOperation.parse(meta["operation"])
        # an unrecognized tag is reported by validate_db, not fatal here

    return Demonstration(
        name=path.stem,
        question=question,
        body=body,
        kind=kind,
        operation_tag=operation,
        default_answer=default,
        source=str(path),
    )


def _load_record(task_dir: Path, stage_dir: Path, strict: bool, problems: list[str]) -> PromptRecord | None:
    instruction_path = stage_dir / "instruction.md"
    if not instruction_path.is_file():
        problems.append(f"{stage_dir}: missing instruction.md")
        return None
    instruction = instruction_path.read_text(encoding="utf-8").strip()
    if not instruction:
        raise MalformedRecord(f"{instruction_path}: instruction is empty")

    expected_kind = _STAGE_KIND.get(stage_dir.name)
    demos: list[Demonstration] = []
    demo_dir = stage_dir / "demos"
    if demo_dir.is_dir():
        for path in sorted(demo_dir.glob("*.md")):
            try:
                demo = _parse_demo_file(path)
            except MalformedRecord as exc:
                if strict:
                    raise
                problems.append(str(exc))
                continue
            if expected_kind and demo.kind != expected_kind:
                message = f"{path}: kind {demo.kind!r} does not match stage {stage_dir.name!r}"
                if strict:
                    raise MalformedRecord(message)
                problems.append(message)
                continue
            demos.append(demo)

    return PromptRecord(
        task_id=task_dir.name,
        stage=stage_dir.name,
        instruction=instruction,
        demonstrations=tuple(demos),
    )


def _compute_digest(root: Path) -> str:
    digest = hashlib.sha256()
    for path in sorted(p for p in root.rglob("*") if p.is_file()):
        digest.update(str(path.relative_to(root)).encode("utf-8"))
        digest.update(b"\x00")
        digest.update(path.read_bytes())
        digest.update(b"\x00")
    return digest.hexdigest()


def default_db_root() -> Path:
    """Root of the prompts database shipped with the package."""
    return Path(__file__).parent / "prompts"


def load_db(root: str | Path | None = None, strict: bool = True) -> PromptsDatabase:
    """Load the prompts database from a directory tree.

    With ``strict`` (the default) any malformed record raises
    :class:`MalformedRecord`; otherwise problems are collected into the
    attached validation report. A missing required table-QA stage always
    raises :class:`MissingStage`.
    """
    root = Path(root) if root is not None else default_db_root()
    if not root.is_dir():
        raise MissingStage(list(REQUIRED_TABLE_QA_STAGES))

    problems: list[str] = []
    records: dict = {}
    for task_dir in sorted(p for p in root.iterdir() if p.is_dir()):
        for stage_dir in sorted(p for p in task_dir.iterdir() if p.is_dir()):
            record = _load_record(task_dir, stage_dir, strict, problems)
            if record is not None:
                records[(task_dir.name, stage_dir.name)] = record

    missing = [s for s in REQUIRED_TABLE_QA_STAGES if (TABLE_QA_TASK, s) not in records]
    if missing:
        raise MissingStage(missing)

    db = PromptsDatabase(
        root=str(root),
        records=records,
        digest=_compute_digest(root),
        report=ValidationReport(passed=True),
    )
    report = _build_report(db, problems)
    return PromptsDatabase(root=db.root, records=db.records, digest=db.digest, report=report)


def _build_report(db: PromptsDatabase, problems: list[str]) -> ValidationReport:
    failures = list(problems)
    warnings: list[str] = []
    missing = tuple(s for s in REQUIRED_TABLE_QA_STAGES if not db.has(TABLE_QA_TASK, s))
    failures += [f"missing stage: {s}" for s in missing]

    planning_counts: dict[AtomicOperation, int] = {op: 0 for op in OPERATION_ORDER}
    conducting_counts: dict[AtomicOperation, int] = {op: 0 for op in OPERATION_ORDER}

    if db.has(TABLE_QA_TASK, "planning"):
        for demo in db.get(TABLE_QA_TASK, "planning").demonstrations:
            if demo.operation_tag is not None:
                planning_counts[demo.operation_tag] += 1
            else:
                warnings.append(f"{demo.source}: planning demo has no recognized operation tag")
        for op in OPERATION_ORDER:
            n = planning_counts[op]
            if n < 1:
                failures.append(f"planning {op.name}: {n} of 1")
            elif n > 1:
                warnings.append(f"planning {op.name}: {n} demos, expected 1")

    if db.has(TABLE_QA_TASK, "conducting"):
        for demo in db.get(TABLE_QA_TASK, "conducting").demonstrations:
            if demo.operation_tag is not None:
                conducting_counts[demo.operation_tag] += 1
            else:
                warnings.append(f"{demo.source}: conducting demo has no recognized operation tag")
        for op in OPERATION_ORDER:
            n = conducting_counts[op]
            if n < 2:
                failures.append(f"{op.name}: {n} of 2")
            elif n > 2:
                warnings.append(f"conducting {op.name}: {n} demos, expected 2")

    return ValidationReport(
        passed=not failures,
        missing_stages=missing,
        failures=tuple(failures),
        warnings=tuple(warnings),
        planning_counts={op.name: n for op, n in planning_counts.items()},
        conducting_counts={op.name: n for op, n in conducting_counts.items()},
    )


def validate_db(db: PromptsDatabase) -> ValidationReport:
    """Recompute coverage and consistency checks over a loaded database."""
    return _build_report(db, [])


def select_demonstrations(
    db: PromptsDatabase,
    task_id: str,
    stage: str,
    operations: list[AtomicOperation] | None = None,
) -> list[Demonstration]:
    """Pick the demonstrations to embed in a stage prompt.

    Conducting prompts get the pairs for each recognized operation, in
    menu order then file order; an empty or unrecognized operation list
    falls back to all pairs. Planning prompts always get the fixed
    one-per-operation set. Every other stage embeds its full list.
    """
    record = db.get(task_id, stage)
    demos = record.demonstrations

    if stage == "conducting":
        wanted = [op for op in OPERATION_ORDER if operations and op in operations]
        if not wanted:
            wanted = list(OPERATION_ORDER)
        selected: list[Demonstration] = []
        for op in wanted:
            selected.extend(sorted((d for d in demos if d.operation_tag is op), key=lambda d: d.name))
        return selected

    if stage == "planning":
        tagged = []
        for op in OPERATION_ORDER:
            tagged.extend(sorted((d for d in demos if d.operation_tag is op), key=lambda d: d.name))
        untagged = sorted((d for d in demos if d.operation_tag is None), key=lambda d: d.name)
        return tagged + untagged

    return list(demos)
