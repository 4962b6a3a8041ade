"""Serve the gateway on localhost and talk to it the way a device would.

Uses the scripted mock backend so no model endpoint is needed. Run with:

    python3 demos/demo_gateway.py
"""

import json
import threading
import time

import requests
import uvicorn

from tabgate import (
    MockLlmClient,
    MockRule,
    ServiceConfig,
    StubExecutor,
    create_app,
    error_outcome,
    ok_outcome,
    stub_fingerprint,
)
from demo_pipeline import NORMALIZER, PLAN, QUESTION, REASONING

PORT = 8123

TABLE_DOC = {
    "title": "1995 Crimson Tide Season",
    "header": ["Date", "Result"],
    "rows": [["Nov 4", "W 21-14"], ["Nov 11", "L 23-24"], ["Nov 18", "W 24-17"]],
}


def build_app():
    llm = MockLlmClient([
        MockRule(match="Failing Code", completion=f"```python\n{NORMALIZER}\n```"),
        MockRule(match="Column Details",
                 completion=f"```python\n{REASONING}\n```\nDEFAULT_ANSWER: {{64}}"),
        MockRule(match="Statistics Table", completion=PLAN),
        MockRule(match="translation", completion="Ceci est un exemple de service de traduction."),
    ])
    executor = StubExecutor()
    executor.register(stub_fingerprint(REASONING), error_outcome("ValueError", "bad literal"))
    executor.register(stub_fingerprint(REASONING, NORMALIZER), ok_outcome("68"))
    return create_app(ServiceConfig(port=PORT), llm=llm, executor=executor)


def main():
    server = uvicorn.Server(uvicorn.Config(build_app(), host="127.0.0.1", port=PORT,
                                           log_level="warning"))
    thread = threading.Thread(target=server.run, daemon=True)
    thread.start()
    while not server.started:
        time.sleep(0.05)
    base = f"http://127.0.0.1:{PORT}"

    print("=== health ===")
    print(json.dumps(requests.get(f"{base}/healthz").json(), indent=2)[:400])

    print("\n=== table question ===")
    response = requests.post(f"{base}/v1/tasks", json={
        "task": "table_qa", "question": QUESTION, "table": TABLE_DOC,
    })
    print(response.status_code, json.dumps(response.json(), indent=2))

    print("\n=== a task registered purely through the prompts database ===")
    response = requests.post(f"{base}/v1/tasks", json={
        "task": "translation", "data": "This is a sample translation service.",
    })
    print(response.status_code, response.json()["answer"])

    print("\n=== unknown task ===")
    response = requests.post(f"{base}/v1/tasks", json={"task": "nope", "data": "x"})
    print(response.status_code, response.json())

    server.should_exit = True
    thread.join(3)


if __name__ == "__main__":
    main()
