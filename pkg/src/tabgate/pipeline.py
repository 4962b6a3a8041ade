"""Staged table-QA runners: the three-stage method, the single-call baselines,
and routing by table size.

A runner never raises: any backend failure lands in the final result as an
error-valued answer plus a full audit state, so evaluation sweeps and the
gateway can always report what happened.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

from .errors import (
    CompletionTimeout,
    EndpointError,
    FormatError,
    NoCodeFound,
    ScriptMiss,
    TransportError,
)
from .execution import ExecutionOutcome, ExecutionRequest
from .llm import CompletionResult, LlmClient, UsageSummary, usage_totals
from .postprocess import (
    Answer,
    CodeArtifact,
    Plan,
    Provenance,
    extract_code,
    extract_default_answer,
    has_braced_answer,
    parse_braced_answer,
    parse_plan,
)
from .prompting import (
    build_alignment_prompt,
    build_baseline_prompt,
    build_conducting_prompt,
    build_correction_prompt,
    build_planning_prompt,
)
from .promptdb import PromptsDatabase
from .tables import (
    SemiStructuredTable,
    build_statistics_table,
    estimate_tokens,
    extract_columns,
    render_markdown,
    to_column_dict,
)

__all__ = [
    "MethodConfig",
    "StageRecord",
    "PipelineState",
    "FinalResult",
    "run_method",
    "run_tabpot",
    "run_baseline",
    "route_by_table_size",
]

POT_VARIANTS = ("stdlib", "stdlib_para", "pandas")


@dataclass(frozen=True)
class MethodConfig:
    """Which prompting method to run, with the staged method's ablation flags."""

    kind: str  # "direct" | "cot" | "pot" | "tabpot"
    pot_variant: str | None = None
    use_plan: bool = True
    use_correction: bool = True
    use_default: bool = True
    table_token_threshold: int | None = None
    correction_attempts: int = 1
    execution_timeout: float = 30.0

    def __post_init__(self):
        if self.kind not in ("direct", "cot", "pot", "tabpot"):
            raise ValueError(f"unknown method kind {self.kind!r}")
        if self.kind == "pot":
            variant = self.pot_variant or "pandas"
            object.__setattr__(self, "pot_variant", variant)
            if variant not in POT_VARIANTS:
                raise ValueError(f"unknown pot variant {variant!r}")
        if self.table_token_threshold is not None and self.table_token_threshold < 0:
            raise ValueError("table token threshold must be >= 0")

    @classmethod
    def parse(cls, text: str, **kwargs) -> "MethodConfig":
        """Parse CLI spellings: direct, cot, pot, pot:<variant>, tabpot."""
        text = text.strip().lower()
        if text.startswith("pot:"):
            return cls(kind="pot", pot_variant=text.split(":", 1)[1], **kwargs)
        return cls(kind=text, **kwargs)

    @property
    def label(self) -> str:
        if self.kind == "pot":
            return f"pot:{self.pot_variant}"
        return self.kind

    def as_dict(self) -> dict:
        out = {"method": self.label}
        if self.kind == "tabpot":
            out.update(
                use_plan=self.use_plan,
                use_correction=self.use_correction,
                use_default=self.use_default,
            )
        if self.table_token_threshold is not None:
            out["table_token_threshold"] = self.table_token_threshold
        return out


@dataclass(frozen=True)
class StageRecord:
    stage: str
    prompt_digest: str
    completion: str


@dataclass
class PipelineState:
    """Audit record of one request: transcript, artifacts, outcomes, usage."""

    method: MethodConfig
    round_index: int = 0
    transcript: list[StageRecord] = field(default_factory=list)
    plan: Plan | None = None
    reasoning_code: CodeArtifact | None = None
    normalizer_code: CodeArtifact | None = None
    default_answer: Answer | None = None
    outcomes: list[ExecutionOutcome] = field(default_factory=list)
    llm_results: list[CompletionResult] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)
    failure_kind: str | None = None
    final: Answer | None = None

    def record_call(self, stage: str, prompt_digest: str, result: CompletionResult):
        self.llm_results.append(result)
        self.transcript.append(StageRecord(stage, prompt_digest, result.text))
        self.round_index += 1

    def set_final(self, answer: Answer):
        if self.final is not None:
            raise RuntimeError("final answer already set")
        self.final = answer

    @property
    def stages(self) -> list[str]:
        return [record.stage for record in self.transcript]

    def usage(self) -> UsageSummary:
        return usage_totals([self.llm_results])

    def as_dict(self) -> dict:
        return {
            "method": self.method.as_dict(),
            "round_index": self.round_index,
            "transcript": [
                {"stage": r.stage, "prompt_digest": r.prompt_digest, "completion": r.completion}
                for r in self.transcript
            ],
            "plan": None if self.plan is None else {
                "relevant_columns": list(self.plan.relevant_columns),
                "operations": [str(op) for op in self.plan.operations],
                "programming_steps": list(self.plan.programming_steps),
            },
            "default_answer": None if self.default_answer is None else self.default_answer.value,
            "outcomes": [
                {
                    "status": o.status,
                    "value": o.value,
                    "error_type": o.error_type,
                    "error_message": o.error_message,
                }
                for o in self.outcomes
            ],
            "usage": self.usage().as_dict(),
            "warnings": list(self.warnings),
            "failure_kind": self.failure_kind,
            "final": None if self.final is None else {
                "value": self.final.value,
                "provenance": self.final.provenance.value,
            },
        }


@dataclass(frozen=True)
class FinalResult:
    answer: Answer
    state: PipelineState
    timings: dict

    @property
    def overhead_s(self) -> float:
        """Wall time not attributable to LLM calls or code execution."""
        backend = sum(r.latency for r in self.state.llm_results)
        backend += sum(o.wall_time for o in self.state.outcomes)
        return max(0.0, self.timings.get("total", 0.0) - backend)


_ERROR_TEXT = "error"  # scores as a deterministic miss under EM

_BACKEND_FAILURES = (TransportError, CompletionTimeout, EndpointError, ScriptMiss)


class _Run:
    """Shared bookkeeping for one pipeline run."""

    def __init__(self, method: MethodConfig, llm: LlmClient):
        self.state = PipelineState(method=method)
        self.llm = llm
        self.timings: dict = {}
        self._start = time.monotonic()

    def call(self, stage: str, prompt) -> str:
        begin = time.monotonic()
        result = self.llm.complete(prompt)
        self.timings[stage] = self.timings.get(stage, 0.0) + (time.monotonic() - begin)
        self.state.record_call(stage, prompt.digest(), result)
        return result.text

    def finish(self, answer: Answer) -> FinalResult:
        self.state.set_final(answer)
        self.timings["total"] = time.monotonic() - self._start
        return FinalResult(answer=self.answer_or_error(), state=self.state, timings=self.timings)

    def answer_or_error(self) -> Answer:
        assert self.state.final is not None
        return self.state.final

    def fail(self, exc: Exception) -> FinalResult:
        if isinstance(exc, _BACKEND_FAILURES):
            self.state.failure_kind = "llm_backend"
        else:
            self.state.failure_kind = type(exc).__name__
        self.state.warnings.append(f"{type(exc).__name__}: {exc}")
        return self.finish(Answer(value=_ERROR_TEXT, provenance=Provenance.ERROR))


def route_by_table_size(table: SemiStructuredTable, threshold: int) -> str:
    """Route small tables to the plain reasoning baseline, large ones to staging."""
    return "cot" if estimate_tokens(render_markdown(table)) <= threshold else "tabpot"


def run_method(table, question, method: MethodConfig, db, llm, executor) -> FinalResult:
    if method.kind == "tabpot":
        return run_tabpot(table, question, method, db, llm, executor)
    return run_baseline(table, question, method, db, llm, executor)


def run_tabpot(
    table: SemiStructuredTable,
    question: str,
    method: MethodConfig,
    db: PromptsDatabase,
    llm: LlmClient,
    executor,
) -> FinalResult:
    """Three-stage run: plan, conduct, execute, correct on failure, then fall back.

    Fallback ladder when execution cannot produce a value: the default
    answer emitted alongside the code (aligned first when it came without
    braces), and finally the deterministic error answer.
    """
    if method.kind != "tabpot":
        raise ValueError("run_tabpot requires a tabpot method config")
    run = _Run(method, llm)
    state = run.state
    try:
        stats = build_statistics_table(table)

        plan = Plan(relevant_columns=(), operations=(), programming_steps=())
        if method.use_plan:
            planning_prompt = build_planning_prompt(db, table.title, stats, question)
            plan = parse_plan(run.call("planning", planning_prompt))
        state.plan = plan

        selection = extract_columns(table, list(plan.relevant_columns))
        if selection.used_fallback and plan.relevant_columns:
            state.warnings.append("plan columns matched nothing; using the full table")
        if selection.unknown:
            state.warnings.append(f"plan names unknown columns: {', '.join(selection.unknown)}")
        column_details = render_markdown(selection.table)

        conducting_prompt = build_conducting_prompt(
            db, table.title, stats, column_details,
            plan.programming_steps, list(plan.operations), question,
        )
        conducting_text = run.call("conducting", conducting_prompt)
        state.default_answer = extract_default_answer(conducting_text)

        outcome: ExecutionOutcome | None = None
        try:
            state.reasoning_code = extract_code(conducting_text, role="reasoning")
            state.warnings.extend(state.reasoning_code.warnings)
        except NoCodeFound:
            state.warnings.append("conducting completion had no code; skipping execution")

        table_dict = to_column_dict(table)
        if state.reasoning_code is not None:
            outcome = _execute(run, executor, state.reasoning_code, None, table_dict, method)
            if outcome.status == "ok":
                return run.finish(Answer(outcome.value, Provenance.CODE_EXECUTION))

        if outcome is not None and method.use_correction:
            for _ in range(method.correction_attempts):
                correction_prompt = build_correction_prompt(
                    db, column_details, state.reasoning_code.source, outcome,
                )
                correction_text = run.call("correction", correction_prompt)
                try:
                    state.normalizer_code = extract_code(correction_text, role="normalization")
                    state.warnings.extend(state.normalizer_code.warnings)
                except NoCodeFound:
                    state.warnings.append("correction completion had no code")
                    break
                outcome = _execute(
                    run, executor, state.reasoning_code, state.normalizer_code, table_dict, method,
                )
                if outcome.status == "ok":
                    return run.finish(
                        Answer(outcome.value, Provenance.CODE_EXECUTION_AFTER_CORRECTION)
                    )

        return _fall_back(run, db, question)
    except Exception as exc:  # total: every failure becomes an error answer
        return run.fail(exc)


def _execute(run: _Run, executor, reasoning, normalizer, table_dict, method) -> ExecutionOutcome:
    begin = time.monotonic()
    outcome = executor.execute(ExecutionRequest(
        reasoning_code=reasoning,
        normalizer_code=normalizer,
        table=table_dict,
        timeout=method.execution_timeout,
    ))
    run.timings["execution"] = run.timings.get("execution", 0.0) + (time.monotonic() - begin)
    run.state.outcomes.append(outcome)
    return outcome


def _fall_back(run: _Run, db: PromptsDatabase, question: str) -> FinalResult:
    state = run.state
    method = state.method
    default = state.default_answer
    if method.use_default and default is not None:
        if has_braced_answer(default.raw):
            return run.finish(default)
        # an unbraced default gets one alignment attempt before being used raw
        aligned = _align(run, db, question, default.value)
        return run.finish(aligned if aligned is not None else default)
    return run.finish(Answer(value=_ERROR_TEXT, provenance=Provenance.ERROR))


def _align(run: _Run, db: PromptsDatabase, question: str, raw_answer: str) -> Answer | None:
    try:
        prompt = build_alignment_prompt(db, question, raw_answer)
    except ValueError:
        return None
    text = run.call("alignment", prompt)
    try:
        parsed = parse_braced_answer(text, provenance=Provenance.ALIGNED)
    except FormatError:
        run.state.warnings.append("alignment completion had no braced answer")
        return None
    return Answer(parsed.value, Provenance.ALIGNED, raw=text)


def run_baseline(
    table: SemiStructuredTable,
    question: str,
    method: MethodConfig,
    db: PromptsDatabase,
    llm: LlmClient,
    executor,
) -> FinalResult:
    """Single-call baselines: direct and chain prompting parse a braced answer
    (with one alignment retry); code-writing variants execute their code with
    no correction stage and no default answer."""
    if method.kind == "tabpot":
        raise ValueError("run_baseline cannot run the staged method")
    run = _Run(method, llm)
    state = run.state
    try:
        if method.kind in ("direct", "cot"):
            prompt = build_baseline_prompt(db, method.kind, table, question)
            text = run.call(method.kind, prompt)
            try:
                answer = parse_braced_answer(text)
                return run.finish(Answer(answer.value, Provenance.DIRECT_COMPLETION, raw=text))
            except FormatError:
                aligned = _align(run, db, question, text)
                if aligned is not None:
                    return run.finish(aligned)
                return run.finish(Answer(value=_ERROR_TEXT, provenance=Provenance.ERROR))

        stage = f"pot_{method.pot_variant}"
        prompt = build_baseline_prompt(db, stage, table, question)
        text = run.call(stage, prompt)
        try:
            state.reasoning_code = extract_code(text, role="reasoning")
            state.warnings.extend(state.reasoning_code.warnings)
        except NoCodeFound:
            state.warnings.append("completion had no code")
            return run.finish(Answer(value=_ERROR_TEXT, provenance=Provenance.ERROR))

        outcome = _execute(run, executor, state.reasoning_code, None, to_column_dict(table), method)
        if outcome.status == "ok":
            return run.finish(Answer(outcome.value, Provenance.CODE_EXECUTION))
        return run.finish(Answer(value=_ERROR_TEXT, provenance=Provenance.ERROR))
    except Exception as exc:
        return run.fail(exc)
