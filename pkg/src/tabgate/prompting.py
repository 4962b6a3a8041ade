"""Request parsing and stage-prompt assembly.

Prompts are chat message lists: one system instruction, demonstrations as
alternating user/assistant turns, and the live question as the final user
turn. Flattening the turns in order recovers a completion-style prompt.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass

from .errors import MalformedPayload, TabgateError, UnknownTask
from .promptdb import AtomicOperation, PromptsDatabase, select_demonstrations
from .tables import (
    SemiStructuredTable,
    StatisticsTable,
    estimate_tokens,
    parse_table,
    render_markdown,
    render_statistics,
)

__all__ = [
    "TaskRequest",
    "Prompt",
    "parse_request",
    "build_planning_prompt",
    "build_conducting_prompt",
    "build_correction_prompt",
    "build_baseline_prompt",
    "build_alignment_prompt",
    "cap_column_details",
]

BASELINE_METHODS = ("direct", "cot", "pot_stdlib", "pot_stdlib_para", "pot_pandas")

COLUMN_DETAILS_TOKEN_CAP = 4000
TRACEBACK_CHAR_CAP = 1000
ALIGNMENT_RAW_CHAR_CAP = 2000


@dataclass(frozen=True)
class TaskRequest:
    task_id: str
    task_step: str | None = None
    question: str | None = None
    table: SemiStructuredTable | None = None
    data: str | None = None


@dataclass(frozen=True)
class Message:
    role: str
    content: str


@dataclass(frozen=True)
class Prompt:
    stage: str
    messages: tuple[Message, ...]
    token_estimate: int

    def text(self) -> str:
        """Flattened form for completion-style endpoints and token estimates."""
        return "\n\n".join(m.content for m in self.messages)

    def final_user_text(self) -> str:
        for message in reversed(self.messages):
            if message.role == "user":
                return message.content
        return ""

    def as_wire(self) -> list[dict]:
        return [{"role": m.role, "content": m.content} for m in self.messages]

    def digest(self) -> str:
        h = hashlib.sha256()
        for m in self.messages:
            h.update(m.role.encode("utf-8"))
            h.update(b"\x1f")
            h.update(m.content.encode("utf-8"))
            h.update(b"\x00")
        return h.hexdigest()


def parse_request(raw) -> TaskRequest:
    """Parse an incoming task request document.

    Accepts a JSON text or an already-decoded mapping. A missing task name
    is UnknownTask; a table_qa payload without both question and table is
    MalformedPayload.
    """
    if isinstance(raw, (str, bytes)):
        try:
            raw = json.loads(raw)
        except ValueError as exc:
            raise MalformedPayload(f"request is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise MalformedPayload("request must be a JSON object")

    task_id = raw.get("task")
    if not task_id or not isinstance(task_id, str):
        raise UnknownTask("request has no task name")
    step = raw.get("step") or None

    if task_id == "table_qa":
        question = raw.get("question")
        if not question or not isinstance(question, str):
            raise MalformedPayload("table_qa request needs a non-empty question")
        if "table" not in raw:
            raise MalformedPayload("table_qa request needs a table")
        try:
            table = parse_table(raw["table"])
        except TabgateError as exc:
            raise MalformedPayload(f"table_qa request has an invalid table: {exc}") from exc
        return TaskRequest(task_id=task_id, task_step=step, question=question, table=table)

    data = raw.get("data")
    if data is None and "question" in raw:
        data = raw["question"]
    if data is None or not isinstance(data, str):
        raise MalformedPayload(f"task {task_id!r} request needs a data field")
    return TaskRequest(task_id=task_id, task_step=step, data=data)


def _assemble(stage: str, instruction: str, demos, final_user: str) -> Prompt:
    messages = [Message("system", instruction)]
    for demo in demos:
        messages.append(Message("user", demo.question))
        messages.append(Message("assistant", demo.body))
    messages.append(Message("user", final_user))
    flattened = "\n\n".join(m.content for m in messages)
    return Prompt(stage=stage, messages=tuple(messages), token_estimate=estimate_tokens(flattened))


def cap_column_details(details: str, max_tokens: int = COLUMN_DETAILS_TOKEN_CAP) -> str:
    """Bound rendered column contents by head+tail line sampling.

    Demonstrations are never truncated; only the live column details are,
    since tables can be arbitrarily large.
    """
    if estimate_tokens(details) <= max_tokens:
        return details
    lines = details.splitlines()
    # budget split between the head and the tail, header rows kept
    head: list[str] = []
    tail: list[str] = []
    used = 0
    half = max_tokens // 2
    for line in lines:
        cost = estimate_tokens(line + "\n")
        if used + cost > half:
            break
        head.append(line)
        used += cost
    used_tail = 0
    for line in reversed(lines[len(head):]):
        cost = estimate_tokens(line + "\n")
        if used_tail + cost > half:
            break
        tail.append(line)
        used_tail += cost
    tail.reverse()
    omitted = len(lines) - len(head) - len(tail)
    if omitted <= 0:
        return "\n".join(head + tail)
    marker = f"... [{omitted} rows omitted] ..."
    return "\n".join(head + [marker] + tail)


def build_planning_prompt(
    db: PromptsDatabase,
    title: str,
    stats: StatisticsTable,
    question: str,
    task_id: str = "table_qa",
) -> Prompt:
    """Planning prompt: instruction, the fixed demo set, statistics and question.

    The full table body never appears here; the statistics rendering keeps
    the prompt size independent of row count.
    """
    if not question or not question.strip():
        raise MalformedPayload("planning prompt needs a non-empty question")
    record = db.get(task_id, "planning")
    demos = select_demonstrations(db, task_id, "planning")
    final = (
        f"Title: {title}\n"
        f"Statistics Table:\n{render_statistics(stats)}\n"
        f"Question: {question}"
    )
    return _assemble("planning", record.instruction, demos, final)


def build_conducting_prompt(
    db: PromptsDatabase,
    title: str,
    stats: StatisticsTable,
    column_details: str,
    programming_steps,
    operations: list[AtomicOperation] | None,
    question: str,
    task_id: str = "table_qa",
    details_token_cap: int = COLUMN_DETAILS_TOKEN_CAP,
) -> Prompt:
    if not question or not question.strip():
        raise MalformedPayload("conducting prompt needs a non-empty question")
    record = db.get(task_id, "conducting")
    demos = select_demonstrations(db, task_id, "conducting", operations)
    parts = [
        f"Title: {title}",
        f"Statistics Table:\n{render_statistics(stats)}",
        f"Column Details:\n{cap_column_details(column_details, details_token_cap)}",
    ]
    steps = list(programming_steps or [])
    if steps:
        numbered = "\n".join(f"{i}. {s}" for i, s in enumerate(steps, start=1))
        parts.append(f"Programming Steps:\n{numbered}")
    parts.append(f"Question: {question}")
    return _assemble("conducting", record.instruction, demos, "\n".join(parts))


def build_correction_prompt(
    db: PromptsDatabase,
    column_details: str,
    failing_code: str,
    error_report,
    task_id: str = "table_qa",
    traceback_cap: int = TRACEBACK_CHAR_CAP,
    details_token_cap: int = COLUMN_DETAILS_TOKEN_CAP,
) -> Prompt:
    """Correction prompt: the raw column contents, the failing code and the error."""
    record = db.get(task_id, "correction")
    demos = select_demonstrations(db, task_id, "correction")

    error_type = getattr(error_report, "error_type", None) or ""
    error_message = getattr(error_report, "error_message", None) or ""
    traceback_text = getattr(error_report, "traceback", None) or ""
    if isinstance(error_report, dict):
        error_type = error_report.get("error_type", "") or ""
        error_message = error_report.get("error_message", "") or ""
        traceback_text = error_report.get("traceback", "") or ""
    if len(traceback_text) > traceback_cap:
        traceback_text = traceback_text[:traceback_cap] + "\n... [traceback truncated]"

    parts = [
        f"Column Details:\n{cap_column_details(column_details, details_token_cap)}",
        f"Failing Code:\n```python\n{failing_code}\n```",
        f"Error: {error_type}: {error_message}".rstrip(": "),
    ]
    if traceback_text:
        parts.append(f"Traceback:\n{traceback_text}")
    return _assemble("correction", record.instruction, demos, "\n".join(parts))


def build_baseline_prompt(
    db: PromptsDatabase,
    method: str,
    table: SemiStructuredTable,
    question: str,
    task_id: str = "table_qa",
) -> Prompt:
    """Single-stage baseline prompt embedding the full rendered table."""
    if method not in BASELINE_METHODS:
        raise ValueError(f"unknown baseline method {method!r}")
    if not question or not question.strip():
        raise MalformedPayload("baseline prompt needs a non-empty question")
    record = db.get(task_id, method)
    demos = select_demonstrations(db, task_id, method)
    final = (
        f"Title: {table.title}\n"
        f"Table:\n{render_markdown(table)}\n"
        f"Question: {question}"
    )
    return _assemble(method, record.instruction, demos, final)


def build_alignment_prompt(
    db: PromptsDatabase,
    question: str,
    raw_answer: str,
    task_id: str = "table_qa",
    raw_cap: int = ALIGNMENT_RAW_CHAR_CAP,
) -> Prompt:
    """Reformatting prompt: turn a free-form answer into a braced one."""
    from .postprocess import has_braced_answer

    if has_braced_answer(raw_answer):
        raise ValueError("raw answer already contains a braced value; alignment not needed")
    record = db.get(task_id, "alignment")
    demos = select_demonstrations(db, task_id, "alignment")
    trimmed = raw_answer
    if len(trimmed) > raw_cap:
        trimmed = trimmed[:raw_cap] + " ... [answer truncated]"
    final = f"Question: {question}\nAnswer: {trimmed}"
    return _assemble("alignment", record.instruction, demos, final)
