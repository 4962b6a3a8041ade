"""Live-mode smoke: the http backend end to end against a local fake endpoint.

Stands in for pointing --llm http at a real deployment: a socket server
speaking the chat-completions wire format answers every prompt, and a
20-item sample must complete with no pipeline errors and a well-formed
report.
"""

from __future__ import annotations

import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import pytest

from tabgate.cli import main


class ChatCompletionsHandler(BaseHTTPRequestHandler):
    def log_message(self, *args):
        pass

    def do_GET(self):
        if self.path == "/v1/models":
            self._reply(200, {"data": [{"id": "fake-model"}]})
        else:
            self._reply(404, {"error": "not found"})

    def do_POST(self):
        if self.path != "/v1/chat/completions":
            self._reply(404, {"error": "not found"})
            return
        length = int(self.headers.get("Content-Length", 0))
        payload = json.loads(self.rfile.read(length))
        assert payload["messages"][0]["role"] == "system"
        self._reply(200, {
            "choices": [{"message": {"content": "the answer is {10}"}}],
            "usage": {"prompt_tokens": 100, "completion_tokens": 5},
        })

    def _reply(self, status: int, body: dict):
        data = json.dumps(body).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)


@pytest.fixture
def fake_endpoint():
    server = ThreadingHTTPServer(("127.0.0.1", 0), ChatCompletionsHandler)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    yield f"http://127.0.0.1:{server.server_address[1]}"
    server.shutdown()
    thread.join(2)


def test_http_backend_twenty_item_sample(fake_endpoint, released_root, tmp_path, monkeypatch):
    monkeypatch.setenv("TABGATE_LLM_BASE_URL", fake_endpoint)
    monkeypatch.setenv("TABGATE_LLM_MODEL", "fake-model")
    out = tmp_path / "smoke-report.json"
    code = main([
        "eval",
        "--dataset", "wikitableqa_test",
        "--data-root", str(released_root),
        "--method", "direct",
        "--llm", "http",
        "--executor", "stub",
        "--limit", "20",
        "--out", str(out),
    ])
    assert code == 0
    report = json.loads(out.read_text(encoding="utf-8"))
    assert report["schema_version"] == 1
    assert len(report["items"]) == 20
    assert all(record["failure_kind"] is None for record in report["items"])
    # endpoint-reported usage flows through to the per-item records
    assert all(record["prompt_tokens"] == 100 for record in report["items"])
    assert report["accuracy"]["items"] == 20
