"""Table-QA gateway: staged LLM prompting over semi-structured tables,
with a prompts database, sandboxed code execution, baselines, an
evaluation harness and an HTTP service."""

from .datasets import DatasetItem, DatasetSplit, load_fixture_split, load_split
from .evalharness import EvalReport, crossover_report, run_eval, write_crossover_csv
from .execution import (
    ExecutionOutcome,
    ExecutionRequest,
    SandboxExecutor,
    StubExecutor,
    error_outcome,
    ok_outcome,
    stub_fingerprint,
    timeout_outcome,
)
from .gateway import ServiceConfig, create_app
from .llm import (
    CompletionResult,
    HttpLlmClient,
    LlmConfig,
    MockLlmClient,
    MockRule,
    load_mock_script,
    usage_totals,
)
from .pipeline import (
    FinalResult,
    MethodConfig,
    PipelineState,
    route_by_table_size,
    run_baseline,
    run_method,
    run_tabpot,
)
from .postprocess import (
    Answer,
    CodeArtifact,
    Plan,
    Provenance,
    em_match,
    extract_code,
    extract_default_answer,
    parse_braced_answer,
    parse_plan,
)
from .prompting import (
    Prompt,
    TaskRequest,
    build_alignment_prompt,
    build_baseline_prompt,
    build_conducting_prompt,
    build_correction_prompt,
    build_planning_prompt,
    parse_request,
)
from .promptdb import (
    AtomicOperation,
    Demonstration,
    PromptRecord,
    PromptsDatabase,
    load_db,
    select_demonstrations,
    validate_db,
)
from .tables import (
    InferredType,
    SemiStructuredTable,
    StatisticsTable,
    build_statistics_table,
    estimate_tokens,
    extract_columns,
    infer_column_type,
    parse_table,
    render_markdown,
    render_statistics,
    table_from_dict,
    to_column_dict,
)

__version__ = "0.1.0"
