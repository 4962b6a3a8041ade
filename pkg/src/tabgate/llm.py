"""Uniform completion interface: OpenAI-compatible HTTP endpoint or scripted mock.

Every LLM call the pipeline makes goes through a client from this module,
so token and latency accounting lives here too.
"""

from __future__ import annotations

import json
import os
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path

import requests

from .errors import CompletionTimeout, EndpointError, ScriptMiss, TransportError
from .prompting import Prompt
from .tables import estimate_tokens

__all__ = [
    "LlmConfig",
    "CompletionResult",
    "UsageSummary",
    "LlmClient",
    "HttpLlmClient",
    "MockLlmClient",
    "MockRule",
    "load_mock_script",
    "complete",
    "usage_totals",
    "config_from_env",
]


@dataclass(frozen=True)
class LlmConfig:
    base_url: str = "http://localhost:8000"
    model_name: str = "local-model"
    temperature: float = 0.0  # greedy decoding: deterministic analogue of the endpoint default
    max_completion_tokens: int = 1024
    request_timeout: float = 60.0
    retry_count: int = 2
    retry_backoff_s: float = 0.2
    api_key: str | None = None
    max_concurrency: int = 8

    def __post_init__(self):
        if self.request_timeout <= 0:
            raise ValueError("request_timeout must be positive")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")


def config_from_env(prefix: str = "TABGATE_LLM_") -> LlmConfig:
    env = os.environ
    kwargs = {}
    if env.get(prefix + "BASE_URL"):
        kwargs["base_url"] = env[prefix + "BASE_URL"]
    if env.get(prefix + "MODEL"):
        kwargs["model_name"] = env[prefix + "MODEL"]
    if env.get(prefix + "API_KEY"):
        kwargs["api_key"] = env[prefix + "API_KEY"]
    if env.get(prefix + "TEMPERATURE"):
        kwargs["temperature"] = float(env[prefix + "TEMPERATURE"])
    if env.get(prefix + "MAX_TOKENS"):
        kwargs["max_completion_tokens"] = int(env[prefix + "MAX_TOKENS"])
    if env.get(prefix + "TIMEOUT"):
        kwargs["request_timeout"] = float(env[prefix + "TIMEOUT"])
    return LlmConfig(**kwargs)


@dataclass(frozen=True)
class CompletionResult:
    text: str
    prompt_tokens: int
    completion_tokens: int
    latency: float
    backend: str  # "http" or "mock"
    retries: int = 0


class LlmClient:
    """Base client: subclasses implement _complete, call counting lives here."""

    backend = "unknown"

    def __init__(self):
        self._lock = threading.Lock()
        self.call_count = 0

    def complete(self, prompt: Prompt) -> CompletionResult:
        with self._lock:
            self.call_count += 1
        return self._complete(prompt)

    def _complete(self, prompt: Prompt) -> CompletionResult:
        raise NotImplementedError

    def probe(self) -> bool:
        """Cheap reachability check for health reporting."""
        return True


class HttpLlmClient(LlmClient):
    """Client for any endpoint speaking the /v1/chat/completions wire format."""

    backend = "http"

    def __init__(self, config: LlmConfig, session: requests.Session | None = None):
        super().__init__()
        self.config = config
        self._session = session or requests.Session()
        self._semaphore = threading.BoundedSemaphore(config.max_concurrency)

    def _headers(self) -> dict:
        headers = {"Content-Type": "application/json"}
        if self.config.api_key:
            headers["Authorization"] = f"Bearer {self.config.api_key}"
        return headers

    def _complete(self, prompt: Prompt) -> CompletionResult:
        url = self.config.base_url.rstrip("/") + "/v1/chat/completions"
        payload = {
            "model": self.config.model_name,
            "messages": prompt.as_wire(),
            "temperature": self.config.temperature,
            "max_tokens": self.config.max_completion_tokens,
        }
        attempts = self.config.retry_count + 1
        last_error: Exception | None = None
        start = time.monotonic()
        with self._semaphore:
            for attempt in range(attempts):
                if attempt:
                    time.sleep(self.config.retry_backoff_s * (2 ** (attempt - 1)))
                try:
                    response = self._session.post(
                        url, json=payload, headers=self._headers(),
                        timeout=self.config.request_timeout,
                    )
                except requests.Timeout as exc:
                    last_error = CompletionTimeout(f"request timed out after {self.config.request_timeout}s")
                    last_error.__cause__ = exc
                    continue
                except requests.RequestException as exc:
                    last_error = TransportError(str(exc))
                    last_error.__cause__ = exc
                    continue
                if response.status_code >= 500:
                    last_error = EndpointError(response.status_code, response.text)
                    continue
                if response.status_code >= 300:
                    raise EndpointError(response.status_code, response.text)
                return self._parse(response, prompt, time.monotonic() - start, retries=attempt)
        assert last_error is not None
        raise last_error

    def _parse(self, response, prompt: Prompt, latency: float, retries: int) -> CompletionResult:
        try:
            data = response.json()
            text = data["choices"][0]["message"]["content"] or ""
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise EndpointError(response.status_code, f"unparseable completion body: {exc}") from exc
        usage = data.get("usage") or {}
        return CompletionResult(
            text=text,
            prompt_tokens=int(usage.get("prompt_tokens") or estimate_tokens(prompt.text())),
            completion_tokens=int(usage.get("completion_tokens") or estimate_tokens(text)),
            latency=latency,
            backend=self.backend,
            retries=retries,
        )

    def probe(self) -> bool:
        try:
            response = self._session.get(
                self.config.base_url.rstrip("/") + "/v1/models",
                headers=self._headers(), timeout=min(self.config.request_timeout, 5.0),
            )
            return response.status_code < 500
        except requests.RequestException:
            return False


@dataclass
class MockRule:
    match: str
    completion: str
    once: bool = False
    consumed: bool = field(default=False, compare=False)


class MockLlmClient(LlmClient):
    """Deterministic scripted backend for desk-scale tests.

    Rules are substring matchers evaluated in order, first over the final
    user turn, then over the full flattened prompt. An unmatched prompt is
    a hard ScriptMiss, never a silent empty completion.
    """

    backend = "mock"

    def __init__(self, rules: list[MockRule]):
        super().__init__()
        self.rules = list(rules)
        self._rules_lock = threading.Lock()
        self.transcript: list[tuple[str, str]] = []  # (prompt digest, completion)

    def _find(self, text: str) -> MockRule | None:
        for rule in self.rules:
            if rule.once and rule.consumed:
                continue
            if rule.match in text:
                return rule
        return None

    def _complete(self, prompt: Prompt) -> CompletionResult:
        with self._rules_lock:
            rule = self._find(prompt.final_user_text()) or self._find(prompt.text())
            if rule is None:
                raise ScriptMiss(
                    f"no mock rule matches stage {prompt.stage!r} prompt "
                    f"(final turn starts: {prompt.final_user_text()[:80]!r})"
                )
            rule.consumed = True
            self.transcript.append((prompt.digest(), rule.completion))
        return CompletionResult(
            text=rule.completion,
            prompt_tokens=estimate_tokens(prompt.text()),
            completion_tokens=estimate_tokens(rule.completion),
            latency=0.0,
            backend=self.backend,
        )


def load_mock_script(path: str | Path) -> MockLlmClient:
    """Load a mock script: a JSON list of {"match", "completion", "once"?}."""
    with open(path, encoding="utf-8") as handle:
        entries = json.load(handle)
    if not isinstance(entries, list):
        raise ValueError(f"{path}: mock script must be a JSON list")
    rules = []
    for i, entry in enumerate(entries):
        if not isinstance(entry, dict) or "match" not in entry or "completion" not in entry:
            raise ValueError(f"{path}: rule {i} needs 'match' and 'completion'")
        rules.append(MockRule(
            match=str(entry["match"]),
            completion=str(entry["completion"]),
            once=bool(entry.get("once", False)),
        ))
    return MockLlmClient(rules)


def complete(config: LlmConfig, prompt: Prompt) -> CompletionResult:
    """One-shot completion against an HTTP endpoint."""
    return HttpLlmClient(config).complete(prompt)


@dataclass(frozen=True)
class UsageSummary:
    n_questions: int = 0
    n_calls: int = 0
    total_prompt_tokens: int = 0
    total_completion_tokens: int = 0
    avg_prompt_tokens: float = 0.0
    avg_completion_tokens: float = 0.0
    total_latency_s: float = 0.0
    prompt_tokens_per_s: float = 0.0
    completion_tokens_per_s: float = 0.0

    def as_dict(self) -> dict:
        return {
            "n_questions": self.n_questions,
            "n_calls": self.n_calls,
            "total_prompt_tokens": self.total_prompt_tokens,
            "total_completion_tokens": self.total_completion_tokens,
            "avg_prompt_tokens": round(self.avg_prompt_tokens, 4),
            "avg_completion_tokens": round(self.avg_completion_tokens, 4),
            "total_latency_s": round(self.total_latency_s, 6),
            "prompt_tokens_per_s": round(self.prompt_tokens_per_s, 4),
            "completion_tokens_per_s": round(self.completion_tokens_per_s, 4),
        }


def usage_totals(per_question) -> UsageSummary:
    """Aggregate usage with per-question semantics.

    Each element is either one CompletionResult or the list of results for
    all stages of one question; stage tokens are summed per question before
    averaging, so a three-stage run counts as one question.
    """
    groups: list[list[CompletionResult]] = []
    for item in per_question:
        if isinstance(item, CompletionResult):
            groups.append([item])
        else:
            groups.append(list(item))
    groups = [g for g in groups if g is not None]
    if not groups:
        return UsageSummary()

    question_prompt = [sum(r.prompt_tokens for r in g) for g in groups]
    question_completion = [sum(r.completion_tokens for r in g) for g in groups]
    total_prompt = sum(question_prompt)
    total_completion = sum(question_completion)
    total_latency = sum(r.latency for g in groups for r in g)
    n_calls = sum(len(g) for g in groups)
    return UsageSummary(
        n_questions=len(groups),
        n_calls=n_calls,
        total_prompt_tokens=total_prompt,
        total_completion_tokens=total_completion,
        avg_prompt_tokens=total_prompt / len(groups),
        avg_completion_tokens=total_completion / len(groups),
        total_latency_s=total_latency,
        prompt_tokens_per_s=(total_prompt / total_latency) if total_latency > 0 else 0.0,
        completion_tokens_per_s=(total_completion / total_latency) if total_latency > 0 else 0.0,
    )
