"""Bridge to the sandbox worker, plus an in-process stub executor.

The bridge owns process lifecycle and deadlines: it keeps a warm pool of
pre-spawned workers, gives each worker exactly one request, and kills any
worker that outlives its deadline. The JSON line protocol it speaks is the
only coupling to the worker implementation; the stub executor lets the
rest of the package run and test without any worker at all.
"""

from __future__ import annotations

import hashlib
import json
import subprocess
import sys
import threading
import time
import uuid
from dataclasses import dataclass

from .errors import ProtocolError, WorkerSpawnFailure
from .postprocess import CodeArtifact

__all__ = [
    "ExecutionRequest",
    "ExecutionOutcome",
    "SandboxExecutor",
    "StubExecutor",
    "stub_fingerprint",
    "load_stub_table",
    "ok_outcome",
    "error_outcome",
    "timeout_outcome",
]

MIN_TIMEOUT_S = 1.0
MAX_TIMEOUT_S = 120.0
DEFAULT_TIMEOUT_S = 30.0


@dataclass(frozen=True)
class ExecutionRequest:
    reasoning_code: CodeArtifact
    table: dict
    normalizer_code: CodeArtifact | None = None
    timeout: float = DEFAULT_TIMEOUT_S

    def clamped_timeout(self) -> float:
        return min(MAX_TIMEOUT_S, max(MIN_TIMEOUT_S, self.timeout))


@dataclass(frozen=True)
class ExecutionOutcome:
    status: str  # "ok" | "error" | "timeout"
    value: str | None = None
    error_type: str | None = None
    error_message: str | None = None
    traceback: str | None = None
    wall_time: float = 0.0

    def __post_init__(self):
        if self.status == "ok" and self.value is None:
            raise ValueError("ok outcome requires a value")
        if self.status == "error" and not self.error_type:
            raise ValueError("error outcome requires an error type")

    @property
    def failed(self) -> bool:
        return self.status != "ok"


def ok_outcome(value: str, wall_time: float = 0.0) -> ExecutionOutcome:
    return ExecutionOutcome(status="ok", value=value, wall_time=wall_time)


def error_outcome(error_type: str, message: str = "", traceback_text: str | None = None) -> ExecutionOutcome:
    return ExecutionOutcome(
        status="error", error_type=error_type, error_message=message, traceback=traceback_text
    )


def timeout_outcome(wall_time: float) -> ExecutionOutcome:
    return ExecutionOutcome(status="timeout", error_type="timeout",
                            error_message="execution exceeded its time budget",
                            wall_time=wall_time)


class _Worker:
    """One pre-spawned worker process, good for exactly one request."""

    def __init__(self, command: list[str]):
        try:
            self.process = subprocess.Popen(
                command,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                stderr=subprocess.DEVNULL,
                text=True,
                bufsize=1,
            )
        except OSError as exc:
            raise WorkerSpawnFailure(f"could not start worker {command!r}: {exc}") from exc

    def run(self, payload: dict, deadline_s: float) -> tuple[str | None, float]:
        """Send one request line and read one reply line before the deadline.

        Returns (reply line or None on deadline, wall seconds). The worker
        process is always dead afterwards.
        """
        line = json.dumps(payload) + "\n"
        start = time.monotonic()
        reply: list[str] = []

        def _reader():
            try:
                self.process.stdin.write(line)
                self.process.stdin.flush()
                self.process.stdin.close()
                out = self.process.stdout.readline()
                if out:
                    reply.append(out)
            except (OSError, ValueError):
                pass

        thread = threading.Thread(target=_reader, daemon=True)
        thread.start()
        thread.join(deadline_s)
        wall = time.monotonic() - start
        if thread.is_alive() or not reply:
            self.kill()
            thread.join(1.0)
            return (reply[0] if reply else None), wall
        self.kill()
        return reply[0], wall

    def kill(self):
        if self.process.poll() is None:
            self.process.kill()
        try:
            self.process.wait(timeout=5)
        except subprocess.TimeoutExpired:
            pass

    @property
    def alive(self) -> bool:
        return self.process.poll() is None


def default_worker_command() -> list[str]:
    """Launch command for an installed sandbox worker package."""
    return [sys.executable, "-m", "sandbox_runner"]


class SandboxExecutor:
    """Warm pool of single-shot workers speaking the JSON line protocol."""

    def __init__(self, worker_command: list[str] | None = None, pool_size: int = 2):
        if pool_size < 1:
            raise ValueError("pool_size must be >= 1")
        self.worker_command = list(worker_command or default_worker_command())
        self.pool_size = pool_size
        self._idle: list[_Worker] = []
        self._lock = threading.Lock()
        self._slots = threading.BoundedSemaphore(pool_size)
        self._in_flight = 0
        self._queued = 0
        self._closed = False
        # fail fast on a bad command, and leave the pool warm
        for _ in range(pool_size):
            self._idle.append(_Worker(self.worker_command))

    def _acquire(self) -> _Worker:
        with self._lock:
            if self._closed:
                raise WorkerSpawnFailure("executor is shut down")
            self._in_flight += 1
            while self._idle:
                worker = self._idle.pop()
                if worker.alive:
                    return worker
        return _Worker(self.worker_command)

    def _replenish(self):
        def _spawn():
            try:
                worker = _Worker(self.worker_command)
            except WorkerSpawnFailure:
                return
            with self._lock:
                if self._closed or len(self._idle) >= self.pool_size:
                    worker.kill()
                else:
                    self._idle.append(worker)
        threading.Thread(target=_spawn, daemon=True).start()

    def execute(self, request: ExecutionRequest) -> ExecutionOutcome:
        timeout = request.clamped_timeout()
        payload = {
            "id": uuid.uuid4().hex,
            "reasoning_code": request.reasoning_code.source,
            "entry": request.reasoning_code.entry_name,
            "table": request.table,
            "time_budget_s": timeout,
        }
        if request.normalizer_code is not None:
            payload["normalizer_code"] = request.normalizer_code.source
            payload["normalizer_entry"] = request.normalizer_code.entry_name

        if not self._slots.acquire(blocking=False):
            with self._lock:
                self._queued += 1
            self._slots.acquire()
            with self._lock:
                self._queued -= 1
        try:
            worker = self._acquire()
            try:
                reply_line, wall = worker.run(payload, timeout)
            finally:
                worker.kill()
                with self._lock:
                    self._in_flight -= 1
                self._replenish()
        finally:
            self._slots.release()

        if reply_line is None:
            return timeout_outcome(wall)
        try:
            reply = json.loads(reply_line)
        except ValueError as exc:
            raise ProtocolError(f"worker reply is not JSON: {reply_line[:200]!r}") from exc
        if not isinstance(reply, dict) or reply.get("id") != payload["id"]:
            # a protocol-level worker error may carry a best-effort id
            if not (isinstance(reply, dict) and reply.get("error_type") == "protocol"):
                raise ProtocolError(f"worker reply id mismatch: {reply_line[:200]!r}")
        status = reply.get("status")
        if status == "ok":
            return ExecutionOutcome(status="ok", value=str(reply.get("value", "")), wall_time=wall)
        if status == "error":
            return ExecutionOutcome(
                status="error",
                error_type=str(reply.get("error_type") or "UnknownError"),
                error_message=str(reply.get("error_message") or ""),
                traceback=reply.get("traceback"),
                wall_time=wall,
            )
        raise ProtocolError(f"worker reply has unknown status {status!r}")

    def pool_state(self) -> dict:
        with self._lock:
            return {
                "kind": "sandbox",
                "pool_size": self.pool_size,
                "idle": len(self._idle),
                "in_flight": self._in_flight,
                "queued": self._queued,
            }

    def shutdown(self):
        with self._lock:
            self._closed = True
            workers, self._idle = self._idle, []
        for worker in workers:
            worker.kill()


def stub_fingerprint(reasoning_source: str, normalizer_source: str | None = None) -> str:
    digest = hashlib.sha256()
    digest.update(reasoning_source.strip().encode("utf-8"))
    digest.update(b"\x00")
    digest.update((normalizer_source or "").strip().encode("utf-8"))
    return digest.hexdigest()


@dataclass
class _StubRule:
    match: str
    outcome: ExecutionOutcome


class StubExecutor:
    """Deterministic fingerprint -> outcome table standing in for the sandbox.

    Outcomes may be registered per fingerprint (a single outcome, or a FIFO
    list whose last element repeats) or as substring rules over the
    reasoning source. Unknown code yields the configured default.
    """

    def __init__(self, default: ExecutionOutcome | None = None):
        self.default = default or error_outcome("StubMiss", "no stubbed outcome for this code")
        self._by_fingerprint: dict[str, list[ExecutionOutcome]] = {}
        self._rules: list[_StubRule] = []
        self._lock = threading.Lock()
        self.calls: list[str] = []  # fingerprints, in call order

    def register(self, fingerprint: str, outcome) -> None:
        outcomes = list(outcome) if isinstance(outcome, (list, tuple)) else [outcome]
        if not outcomes:
            raise ValueError("at least one outcome required")
        with self._lock:
            self._by_fingerprint[fingerprint] = outcomes

    def register_code(self, reasoning_source: str, outcome, normalizer_source: str | None = None) -> None:
        self.register(stub_fingerprint(reasoning_source, normalizer_source), outcome)

    def add_rule(self, match: str, outcome: ExecutionOutcome) -> None:
        with self._lock:
            self._rules.append(_StubRule(match=match, outcome=outcome))

    def execute(self, request: ExecutionRequest) -> ExecutionOutcome:
        normalizer = request.normalizer_code.source if request.normalizer_code else None
        fingerprint = stub_fingerprint(request.reasoning_code.source, normalizer)
        with self._lock:
            self.calls.append(fingerprint)
            queue = self._by_fingerprint.get(fingerprint)
            if queue is not None:
                outcome = queue.pop(0) if len(queue) > 1 else queue[0]
                return outcome
            for rule in self._rules:
                if rule.match in request.reasoning_code.source:
                    return rule.outcome
            return self.default

    def pool_state(self) -> dict:
        return {"kind": "stub", "pool_size": 0, "idle": 0, "in_flight": 0}

    def shutdown(self):
        pass


def _outcome_from_dict(entry: dict) -> ExecutionOutcome:
    status = entry.get("status", "error")
    if status == "ok":
        return ok_outcome(str(entry.get("value", "")))
    if status == "timeout":
        return timeout_outcome(0.0)
    return error_outcome(
        str(entry.get("error_type", "StubError")),
        str(entry.get("error_message", "")),
    )


def load_stub_table(path) -> StubExecutor:
    """Load a stub table: {"default"?: outcome, "entries": [{"match"|"fingerprint", ...outcome}]}."""
    with open(path, encoding="utf-8") as handle:
        data = json.load(handle)
    default = _outcome_from_dict(data["default"]) if data.get("default") else None
    stub = StubExecutor(default=default)
    for entry in data.get("entries", []):
        outcome = _outcome_from_dict(entry)
        if "fingerprint" in entry:
            stub.register(entry["fingerprint"], outcome)
        elif "match" in entry:
            stub.add_rule(str(entry["match"]), outcome)
        else:
            raise ValueError(f"stub entry needs 'match' or 'fingerprint': {entry!r}")
    return stub
