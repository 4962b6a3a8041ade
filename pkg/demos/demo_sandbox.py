"""Run real generated code through the bridge and the sandbox worker.

Needs the sandbox_runner package from this repository (no install
required; the worker is launched by file path). Run with:

    python3 demos/demo_sandbox.py
"""

import sys
from pathlib import Path

from tabgate import CodeArtifact, ExecutionRequest, SandboxExecutor

WORKER = [sys.executable,
          str(Path(__file__).resolve().parents[1] / "sandbox_runner" / "src" / "sandbox_runner" / "worker.py")]

REASONING = '''def solution(table):
    points = [int(v) for v in table["Result"]]
    return sum(points[-3:])'''

NORMALIZER = '''import re

def normalize(table):
    table["Result"] = [re.search(r"(\\d+)-", v).group(1) for v in table["Result"]]
    return table'''

TABLE = {"Result": ["W 33-6", "L 9-14", "W 21-14", "L 23-24", "W 24-17"]}


def main():
    executor = SandboxExecutor(worker_command=WORKER, pool_size=2)
    try:
        print("=== first run: raw cells, the int() conversion fails ===")
        outcome = executor.execute(ExecutionRequest(
            reasoning_code=CodeArtifact(source=REASONING, entry_name="solution"),
            table=dict(TABLE),
        ))
        print(f"{outcome.status}: {outcome.error_type}: {outcome.error_message}")

        print("\n=== second run: normalization first, then the same reasoning ===")
        outcome = executor.execute(ExecutionRequest(
            reasoning_code=CodeArtifact(source=REASONING, entry_name="solution"),
            normalizer_code=CodeArtifact(source=NORMALIZER, entry_name="normalize",
                                         role="normalization"),
            table=dict(TABLE),
        ))
        print(f"{outcome.status}: value = {outcome.value}  (wall {outcome.wall_time * 1000:.0f} ms)")

        print("\n=== runaway code is killed at its deadline ===")
        outcome = executor.execute(ExecutionRequest(
            reasoning_code=CodeArtifact(source="def solution(table):\n    while True:\n        pass",
                                        entry_name="solution"),
            table={}, timeout=2,
        ))
        print(f"{outcome.status} after {outcome.wall_time:.1f}s")
    finally:
        executor.shutdown()


if __name__ == "__main__":
    main()
