"""Prompt-cost sweep: when does the staged method get cheaper than plain code
prompting?

The single-call code-writing baseline embeds the whole table, so its prompt
grows with the table; the staged method embeds a fixed-size statistics table
plus capped column details. Sweeping row counts shows the crossover. Run:

    python3 demos/demo_crossover.py
"""

from tabgate import (
    DatasetItem,
    DatasetSplit,
    MethodConfig,
    MockLlmClient,
    MockRule,
    StubExecutor,
    crossover_report,
    load_db,
    ok_outcome,
    run_eval,
    table_from_dict,
)

SIZES = [10, 50, 100, 250, 500, 1000, 1500, 2000, 2500, 3000, 3500, 4000, 4500, 5000, 6000]

CODE = "def solution(table):\n    return len(table[\"A\"])"


def sweep_split() -> DatasetSplit:
    items = []
    for n in SIZES:
        table = table_from_dict({
            "A": [f"a-{r}" for r in range(n)],
            "B": [f"value-{r}" for r in range(n)],
            "C": [str(r) for r in range(n)],
        }, title=f"{n}-row table")
        items.append(DatasetItem(id=f"rows-{n:05d}", question="how many rows are there?",
                                 table=table, gold=str(n)))
    return DatasetSplit(name="sweep", items=tuple(items))


def main():
    db = load_db()
    split = sweep_split()
    executor = StubExecutor(default=ok_outcome("1"))

    staged_llm = MockLlmClient([
        MockRule(match="Column Details", completion=f"```python\n{CODE}\n```\nDEFAULT_ANSWER: {{1}}"),
        MockRule(match="Statistics Table",
                 completion="Relevant Columns: A\nOperations: COUNT\nProgramming Steps:\n1. count"),
    ])
    single_llm = MockLlmClient([MockRule(match="Question:", completion=f"```python\n{CODE}\n```")])

    staged = run_eval(split, MethodConfig(kind="tabpot"), db, staged_llm, executor)
    single = run_eval(split, MethodConfig.parse("pot:pandas"), db, single_llm, executor)

    table = crossover_report(list(staged.items), list(single.items),
                             label_a="tabpot", label_b="pot")

    print(f"{'rows':>6} {'table tokens':>13} {'tabpot prompt':>14} {'pot prompt':>11}")
    staged_by_id = {r["id"]: r for r in staged.items}
    single_by_id = {r["id"]: r for r in single.items}
    for n, item in zip(SIZES, split.items):
        a = staged_by_id[item.id]
        b = single_by_id[item.id]
        cheaper = "  <- staged cheaper" if a["prompt_tokens"] < b["prompt_tokens"] else ""
        print(f"{n:>6} {a['table_tokens']:>13} {a['prompt_tokens']:>14} {b['prompt_tokens']:>11}{cheaper}")

    bins = table.crossover_bins()
    print(f"\nbins where the staged method uses fewer prompt tokens: {bins}")


if __name__ == "__main__":
    main()
