"""Request loop executing generated reasoning and normalization functions.

One JSON object per stdin line, one JSON reply per stdout line. Submitted
code runs in a fresh namespace per request with builtins available; the
normalizer (when present) rewrites the column dictionary before the
reasoning entry sees it. Nothing but reply lines ever reaches stdout:
user print output is captured and attached to the reply.

This module is deliberately self-contained (stdlib imports only) so the
worker can be launched either as ``python -m sandbox_runner`` or directly
by file path.
"""

from __future__ import annotations

import inspect
import io
import json
import re
import sys
import traceback

STDOUT_CAP = 10000
TRACEBACK_CAP = 4000

_ID_RE = re.compile(r'"id"\s*:\s*"([^"]*)"')


def _best_effort_id(line: str) -> str:
    match = _ID_RE.search(line)
    return match.group(1) if match else ""


def _protocol_error(request_id: str, message: str) -> dict:
    return {
        "id": request_id,
        "status": "error",
        "error_type": "protocol",
        "error_message": message,
    }


def stringify(value) -> str:
    """Uniform text rendering of return values for answer comparison."""
    if value is None:
        return "None"
    if isinstance(value, bool):
        return str(value)
    if isinstance(value, str):
        return value
    if isinstance(value, float):
        return repr(value)  # shortest round-trip decimal
    if isinstance(value, int):
        return str(value)
    if isinstance(value, (list, tuple)):
        return ", ".join(stringify(v) for v in value)
    if isinstance(value, (set, frozenset)):
        return ", ".join(sorted(stringify(v) for v in value))
    module = type(value).__module__
    if module.startswith(("numpy", "pandas")):
        for attr in ("item", "tolist"):
            method = getattr(value, attr, None)
            if callable(method):
                try:
                    return stringify(method())
                except (TypeError, ValueError):
                    continue  # size-N arrays refuse item(); fall through to tolist()
    return str(value)


def _load_entry(code: str, entry: str, filename: str):
    namespace = {"__builtins__": __builtins__, "__name__": "__sandbox__"}
    exec(compile(code, filename, "exec"), namespace)
    fn = namespace.get(entry)
    if not callable(fn):
        raise LookupError(f"code does not define a callable named {entry!r}")
    return fn


def _call_entry(fn, table):
    """Pass the table only when the entry accepts a parameter: inlined-data
    solutions are defined with no arguments."""
    try:
        takes_args = bool(inspect.signature(fn).parameters)
    except (TypeError, ValueError):
        takes_args = True
    return fn(table) if takes_args else fn()


def _run(request: dict) -> dict:
    request_id = str(request.get("id", ""))
    code = request.get("reasoning_code")
    if not isinstance(code, str) or not code.strip():
        return _protocol_error(request_id, "request lacks reasoning_code")
    entry = str(request.get("entry") or "solution")
    table = request.get("table")
    if not isinstance(table, dict):
        return _protocol_error(request_id, "request lacks a table mapping")

    captured = io.StringIO()
    real_stdout, real_stdin = sys.stdout, sys.stdin
    sys.stdout, sys.stdin = captured, io.StringIO()
    phase = "reasoning"
    try:
        normalizer_code = request.get("normalizer_code")
        if isinstance(normalizer_code, str) and normalizer_code.strip():
            phase = "normalizer"
            normalize = _load_entry(
                normalizer_code, str(request.get("normalizer_entry") or "normalize"),
                "<normalizer>",
            )
            result = normalize(table)
            if result is None:
                pass  # mutated in place
            elif isinstance(result, dict):
                table = result
            else:
                raise TypeError(f"normalizer returned {type(result).__name__}, expected a mapping")

        phase = "reasoning"
        fn = _load_entry(code, entry, "<reasoning>")
        value = _call_entry(fn, table)
        reply = {"id": request_id, "status": "ok", "value": stringify(value)}
    except BaseException as exc:  # noqa: BLE001 - everything must go in-band
        error_type = type(exc).__name__
        if phase == "normalizer":
            error_type = f"normalizer:{error_type}"
        reply = {
            "id": request_id,
            "status": "error",
            "error_type": error_type,
            "error_message": str(exc),
            "traceback": traceback.format_exc()[:TRACEBACK_CAP],
        }
    finally:
        sys.stdout, sys.stdin = real_stdout, real_stdin

    printed = captured.getvalue()
    if printed:
        reply["stdout"] = printed[:STDOUT_CAP]
    return reply


def handle_line(line: str) -> str:
    try:
        request = json.loads(line)
        if not isinstance(request, dict):
            raise ValueError("request must be a JSON object")
    except ValueError as exc:
        return json.dumps(_protocol_error(_best_effort_id(line), f"bad request line: {exc}"))
    try:
        return json.dumps(_run(request))
    except BaseException as exc:  # the loop itself must never die
        return json.dumps(_protocol_error(str(request.get("id", "")), f"worker failure: {exc}"))


def main() -> int:
    stdout = sys.stdout
    for line in sys.stdin:
        if not line.strip():
            continue
        stdout.write(handle_line(line) + "\n")
        stdout.flush()
    return 0


if __name__ == "__main__":
    sys.exit(main())
