"""HTTP gateway exposing the request/answer loop to devices on the local network.

POST /v1/tasks runs a request through the pipeline; GET /healthz reports
database digest, LLM reachability and executor pool state. New tasks are
registered by dropping prompt records plus a small task.json descriptor
into the prompts database, no code changes.
"""

from __future__ import annotations

import json
import os
import threading
import time
from contextlib import asynccontextmanager
from dataclasses import dataclass, field
from pathlib import Path

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse
from starlette.concurrency import run_in_threadpool

from .errors import MalformedPayload, TabgateError, UnknownTask
from .execution import SandboxExecutor, StubExecutor
from .llm import HttpLlmClient, LlmClient, LlmConfig, load_mock_script
from .pipeline import MethodConfig, route_by_table_size, run_method
from .postprocess import Provenance
from .prompting import Message, Prompt, parse_request
from .promptdb import PromptsDatabase, load_db
from .tables import estimate_tokens

__all__ = ["ServiceConfig", "create_app", "load_service_config"]

DEFAULT_BODY_CAP_BYTES = 2 * 1024 * 1024
HEALTH_PROBE_TTL_S = 30.0


@dataclass
class ServiceConfig:
    host: str = "127.0.0.1"
    port: int = 8080
    llm: LlmConfig = field(default_factory=LlmConfig)
    llm_backend: str = "http"  # "http" or "mock:<script path>"
    db_root: str | None = None
    executor_backend: str = "stub"  # "sandbox" or "stub" or "stub:<table path>"
    executor_pool_size: int = 2
    execution_timeout_s: float = 30.0
    method: str = "tabpot"
    ablate: tuple = ()
    table_token_threshold: int | None = None
    body_cap_bytes: int = DEFAULT_BODY_CAP_BYTES
    max_concurrency: int = 8

    def __post_init__(self):
        if self.body_cap_bytes <= 0 or self.max_concurrency <= 0:
            raise ValueError("caps must be positive")

    def method_config(self) -> MethodConfig:
        ablated = set(self.ablate)
        return MethodConfig.parse(
            self.method,
            use_plan="plan" not in ablated,
            use_correction="correction" not in ablated,
            use_default="default" not in ablated,
            table_token_threshold=self.table_token_threshold,
            execution_timeout=self.execution_timeout_s,
        )


def load_service_config(path: str | Path) -> ServiceConfig:
    """Read a config file; TABGATE_LLM_* environment variables override the
    endpoint URL, model name and API key."""
    with open(path, encoding="utf-8") as handle:
        data = json.load(handle)
    llm_kwargs = data.pop("llm", {})
    for env_key, field_name in (("TABGATE_LLM_BASE_URL", "base_url"),
                                ("TABGATE_LLM_MODEL", "model_name"),
                                ("TABGATE_LLM_API_KEY", "api_key")):
        if os.environ.get(env_key):
            llm_kwargs[field_name] = os.environ[env_key]
    ablate = tuple(data.pop("ablate", ()))
    config = ServiceConfig(**data, ablate=ablate)
    config.llm = LlmConfig(**llm_kwargs)
    return config


def _build_llm(config: ServiceConfig) -> LlmClient:
    if config.llm_backend.startswith("mock:"):
        return load_mock_script(config.llm_backend.split(":", 1)[1])
    return HttpLlmClient(config.llm)


def _build_executor(config: ServiceConfig):
    backend = config.executor_backend
    if backend == "sandbox":
        return SandboxExecutor(pool_size=config.executor_pool_size)
    if backend.startswith("stub:"):
        from .execution import load_stub_table

        return load_stub_table(backend.split(":", 1)[1])
    return StubExecutor()


def _load_descriptors(db: PromptsDatabase) -> dict:
    """Per-task pipeline descriptors, read from <root>/<task>/task.json."""
    descriptors = {}
    root = Path(db.root)
    for task in db.tasks():
        path = root / task / "task.json"
        if path.is_file():
            with open(path, encoding="utf-8") as handle:
                descriptors[task] = json.load(handle)
        elif task == "table_qa":
            descriptors[task] = {"pipeline": "table_qa"}
        elif db.has(task, "direct"):
            descriptors[task] = {"pipeline": "text", "stage": "direct"}
    return descriptors


class _Probe:
    """Cached LLM reachability check."""

    def __init__(self, llm: LlmClient, ttl_s: float = HEALTH_PROBE_TTL_S):
        self.llm = llm
        self.ttl_s = ttl_s
        self._lock = threading.Lock()
        self._checked_at = 0.0
        self._reachable = True

    def reachable(self) -> bool:
        with self._lock:
            now = time.monotonic()
            if now - self._checked_at > self.ttl_s:
                self._reachable = self.llm.probe()
                self._checked_at = now
            return self._reachable


def create_app(
    config: ServiceConfig | None = None,
    db: PromptsDatabase | None = None,
    llm: LlmClient | None = None,
    executor=None,
) -> FastAPI:
    """Build the service. Backends are injectable for tests; anything not
    injected is constructed from the config, failing fast on bad paths."""
    config = config or ServiceConfig()
    db = db or load_db(config.db_root)
    llm = llm or _build_llm(config)
    executor = executor if executor is not None else _build_executor(config)
    descriptors = _load_descriptors(db)
    probe = _Probe(llm)
    slots = threading.BoundedSemaphore(config.max_concurrency)

    @asynccontextmanager
    async def _lifespan(_app):
        yield
        executor.shutdown()

    app = FastAPI(title="tabgate", docs_url=None, redoc_url=None, lifespan=_lifespan)
    app.state.executor = executor
    app.state.db = db
    app.state.llm = llm

    def _run_table_qa(request) -> dict:
        method = config.method_config()
        if method.kind == "tabpot" and method.table_token_threshold is not None:
            if route_by_table_size(request.table, method.table_token_threshold) == "cot":
                method = MethodConfig.parse("cot")
        if request.task_step:
            try:
                method = MethodConfig.parse(request.task_step,
                                            execution_timeout=config.execution_timeout_s)
            except ValueError as exc:
                raise MalformedPayload(f"unknown step {request.task_step!r}: {exc}") from exc
        result = run_method(request.table, request.question, method, db, llm, executor)
        return {
            "answer": result.answer.value,
            "provenance": result.answer.provenance.value,
            "stages": result.state.stages,
            "usage": result.state.usage().as_dict(),
            "latency_ms": round(result.timings.get("total", 0.0) * 1000.0, 3),
            "failure_kind": result.state.failure_kind,
        }

    def _run_text_task(request, descriptor: dict) -> dict:
        stage = descriptor.get("stage", "direct")
        record = db.get(request.task_id, stage)
        start = time.monotonic()
        messages = [Message("system", record.instruction)]
        for demo in record.demonstrations:
            messages.append(Message("user", demo.question))
            messages.append(Message("assistant", demo.body))
        messages.append(Message("user", request.data))
        flattened = "\n\n".join(m.content for m in messages)
        prompt = Prompt(stage=stage, messages=tuple(messages),
                        token_estimate=estimate_tokens(flattened))
        completion = llm.complete(prompt)
        return {
            "answer": completion.text.strip(),
            "provenance": Provenance.DIRECT_COMPLETION.value,
            "stages": [stage],
            "usage": {
                "n_questions": 1,
                "n_calls": 1,
                "total_prompt_tokens": completion.prompt_tokens,
                "total_completion_tokens": completion.completion_tokens,
            },
            "latency_ms": round((time.monotonic() - start) * 1000.0, 3),
            "failure_kind": None,
        }

    def _handle(payload) -> tuple[int, dict]:
        try:
            request = parse_request(payload)
        except UnknownTask as exc:
            return 404, {"error": str(exc)}
        except MalformedPayload as exc:
            return 400, {"error": str(exc)}

        descriptor = descriptors.get(request.task_id)
        if descriptor is None:
            return 404, {"error": f"unknown task {request.task_id!r}"}

        with slots:
            try:
                if descriptor.get("pipeline") == "table_qa":
                    body = _run_table_qa(request)
                else:
                    body = _run_text_task(request, descriptor)
            except MalformedPayload as exc:
                return 400, {"error": str(exc)}
            except TabgateError as exc:
                return 503, {"error": f"backend unavailable: {exc}"}
        if body.pop("failure_kind", None) == "llm_backend":
            return 503, {"error": "LLM backend unavailable", **body}
        return 200, body

    @app.post("/v1/tasks")
    async def handle_task(request: Request):
        body = await request.body()
        if len(body) > config.body_cap_bytes:
            return JSONResponse({"error": "request body exceeds size cap"}, status_code=413)
        try:
            payload = json.loads(body)
        except ValueError:
            return JSONResponse({"error": "request body is not valid JSON"}, status_code=400)
        status, response = await run_in_threadpool(_handle, payload)
        return JSONResponse(response, status_code=status)

    @app.get("/healthz")
    async def handle_health():
        llm_ok = await run_in_threadpool(probe.reachable)
        pool = executor.pool_state()
        saturated = pool.get("queued", 0) > 0 or (
            pool.get("pool_size", 0) > 0
            and pool.get("idle", 0) == 0
            and pool.get("in_flight", 0) >= pool.get("pool_size", 0)
        )
        degraded = not llm_ok or saturated
        return JSONResponse({
            "status": "degraded" if degraded else "ok",
            "db_digest": db.digest,
            "llm": "reachable" if llm_ok else "unreachable",
            "executor": pool,
            "tasks": db.tasks(),
        })

    return app
