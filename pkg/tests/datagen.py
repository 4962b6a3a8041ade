"""Builders for released-layout dataset fixtures.

The real splits are large downloads; these builders synthesize directory
trees with the released file layouts and the released item counts so the
loaders' hard count checks can be exercised at desk scale.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

WTQ_TOTAL = 4344
TABFACT_SIMPLE = 4219
TABFACT_COMPLEX = 8609
TABFACT_SMALL_SIMPLE = 1005
TABFACT_SMALL_COMPLEX = 1019


def make_wikitableqa_fixture(root: Path, n_items: int = WTQ_TOTAL, n_tables: int = 12) -> Path:
    base = Path(root) / "wikitableqa"
    csv_dir = base / "csv" / "204-csv"
    csv_dir.mkdir(parents=True, exist_ok=True)

    contexts = []
    for t in range(n_tables):
        path = csv_dir / f"{t}.csv"
        with open(path, "w", encoding="utf-8", newline="") as handle:
            writer = csv.writer(handle)
            writer.writerow(["Year", "Team", "Points"])
            for r in range(3 + t % 4):
                writer.writerow([str(1990 + r), f"Team {t}-{r}", str(10 * (r + 1))])
        contexts.append(f"csv/204-csv/{t}.csv")

    with open(base / "pristine-unseen-tables.tsv", "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle, delimiter="\t")
        writer.writerow(["id", "utterance", "context", "targetValue"])
        for i in range(n_items):
            gold = "10|20" if i % 97 == 0 else str(10 * (i % 3 + 1))
            writer.writerow([
                f"nu-{i}",
                f"what were the points in row {i % 3}?",
                contexts[i % n_tables],
                gold,
            ])
    return Path(root)


def _tabfact_counts(total: int) -> list[int]:
    """Split a statement total into per-table counts of 5 with one remainder table."""
    fives, rest = divmod(total, 5)
    counts = [5] * fives
    if rest:
        counts.append(rest)
    return counts


def make_tabfact_fixture(root: Path) -> Path:
    base = Path(root) / "tabfact"
    csv_dir = base / "all_csv"
    csv_dir.mkdir(parents=True, exist_ok=True)

    examples = {}
    simple_ids: list[str] = []
    complex_ids: list[str] = []

    def add_tables(prefix: str, counts: list[int], bucket: list[str]):
        for t, n_statements in enumerate(counts):
            table_id = f"{prefix}-{t:05d}.html.csv"
            bucket.append(table_id)
            with open(csv_dir / table_id, "w", encoding="utf-8") as handle:
                handle.write("team#wins#losses\n")
                handle.write(f"albion {t}#18#4\n")
                handle.write(f"rovers {t}#11#9\n")
            statements = [f"statement {k} about {table_id}" for k in range(n_statements)]
            labels = [(k + t) % 2 for k in range(n_statements)]
            examples[table_id] = [statements, labels, f"caption for {table_id}"]

    add_tables("s", _tabfact_counts(TABFACT_SIMPLE), simple_ids)
    add_tables("c", _tabfact_counts(TABFACT_COMPLEX), complex_ids)

    # the small subset picks whole tables whose statement counts sum exactly
    # to the released small-split category sizes
    small: list[str] = []
    total = 0
    for table_id in simple_ids:
        if total >= TABFACT_SMALL_SIMPLE:
            break
        small.append(table_id)
        total += len(examples[table_id][0])
    assert total == TABFACT_SMALL_SIMPLE, total
    total = 0
    for table_id in sorted(complex_ids, key=lambda t: len(examples[t][0])):
        if total >= TABFACT_SMALL_COMPLEX:
            break
        small.append(table_id)
        total += len(examples[table_id][0])
    assert total == TABFACT_SMALL_COMPLEX, total

    (base / "test_examples.json").write_text(json.dumps(examples), encoding="utf-8")
    (base / "simple_test_id.json").write_text(json.dumps(simple_ids), encoding="utf-8")
    (base / "complex_test_id.json").write_text(json.dumps(complex_ids), encoding="utf-8")
    (base / "small_test_id.json").write_text(json.dumps(small), encoding="utf-8")
    return Path(root)
