"""Walk through the three-stage pipeline on the classic heterogeneous-cells case.

The question needs the points hidden inside strings like "W 21-14". The
scripted model plans, writes a reasoning function whose first run fails,
then writes a normalization function; the second run returns 68. Run with:

    python3 demos/demo_pipeline.py
"""

from tabgate import (
    MethodConfig,
    MockLlmClient,
    MockRule,
    StubExecutor,
    build_statistics_table,
    error_outcome,
    load_db,
    ok_outcome,
    parse_table,
    render_statistics,
    run_tabpot,
    stub_fingerprint,
)

TABLE = parse_table({
    "title": "1995 Crimson Tide Season",
    "header": ["Date", "Result"],
    "rows": [
        ["Sep 2", "W 33-6"],
        ["Oct 14", "L 9-14"],
        ["Nov 4", "W 21-14"],
        ["Nov 11", "L 23-24"],
        ["Nov 18", "W 24-17"],
    ],
})

QUESTION = "the total number of points scored by the tide in the last 3 games combined"

PLAN = """Relevant Columns: Result
Operations: ADDITION/DIFF
Programming Steps:
1. Extract the points scored from each Result cell.
2. Sum the points of the last 3 games."""

REASONING = '''def solution(table):
    points = [int(r.split()[1].split("-")[0]) for r in table["Result"]]
    return sum(points[-3:])'''

NORMALIZER = '''import re

def normalize(table):
    table["Result"] = [re.search(r"(\\d+)-", v).group(1) for v in table["Result"]]
    return table'''


def main():
    db = load_db()
    print("=== the table ===")
    print(f"title: {TABLE.title}  ({TABLE.row_count} rows)")
    print("\n=== what the planning prompt sees instead of the table ===")
    print(render_statistics(build_statistics_table(TABLE)))

    # a scripted model: one canned completion per stage
    llm = MockLlmClient([
        MockRule(match="Failing Code", completion=f"```python\n{NORMALIZER}\n```"),
        MockRule(match="Column Details",
                 completion=f"```python\n{REASONING}\n```\nDEFAULT_ANSWER: {{64}}"),
        MockRule(match="Statistics Table", completion=PLAN),
    ])

    # a scripted executor: the plain run fails the way real execution would,
    # the normalized run succeeds with 21 + 23 + 24
    executor = StubExecutor()
    executor.register(stub_fingerprint(REASONING),
                      error_outcome("ValueError", "invalid literal for int(): 'W 21-14'"))
    executor.register(stub_fingerprint(REASONING, NORMALIZER), ok_outcome("68"))

    result = run_tabpot(TABLE, QUESTION, MethodConfig(kind="tabpot"), db, llm, executor)

    print("\n=== what happened ===")
    for i, record in enumerate(result.state.transcript):
        print(f"round {i + 1}: {record.stage:<10} -> {record.completion.splitlines()[0][:60]}...")
    for outcome in result.state.outcomes:
        label = outcome.value if outcome.status == "ok" else f"{outcome.error_type}: {outcome.error_message}"
        print(f"execution: {outcome.status:<7} {label}")

    print(f"\nanswer: {result.answer.value}  (provenance: {result.answer.provenance.value})")
    print(f"llm usage: {result.state.usage().as_dict()}")


if __name__ == "__main__":
    main()
