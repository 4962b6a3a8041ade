"""Dataset split loaders for the two released table-QA benchmarks.

Expected layouts under a data root:

wikitableqa/
    pristine-unseen-tables.tsv        # id, utterance, context, targetValue
    csv/<dir>/<n>.csv                 # tables referenced by the context column

tabfact/
    test_examples.json                # table_id -> [statements, labels, caption]
    simple_test_id.json               # table ids in the simple category
    complex_test_id.json              # table ids in the complex category
    small_test_id.json                # table ids of the small subset
    all_csv/<table_id>                # '#'-delimited table files

Fixture splits (a single JSON file of items) exist for desk-scale runs.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

from .errors import CountMismatch, MissingFiles
from .tables import SemiStructuredTable, parse_table

__all__ = [
    "DatasetItem",
    "DatasetSplit",
    "SPLIT_NAMES",
    "EXPECTED_COUNTS",
    "load_split",
    "load_fixture_split",
]

SPLIT_NAMES = ("wikitableqa_test", "tabfact_full", "tabfact_small")

# released test-split sizes: (total, simple, complex); None where not categorized
EXPECTED_COUNTS = {
    "wikitableqa_test": (4344, None, None),
    "tabfact_full": (12828, 4219, 8609),
    "tabfact_small": (2024, 1005, 1019),
}


@dataclass(frozen=True)
class DatasetItem:
    id: str
    question: str
    table: SemiStructuredTable
    gold: str  # multiple acceptable answers joined with "|"
    category: str | None = None


@dataclass(frozen=True)
class DatasetSplit:
    name: str
    items: tuple[DatasetItem, ...]
    warnings: tuple[str, ...] = ()

    def category_counts(self) -> dict:
        counts: dict = {}
        for item in self.items:
            if item.category:
                counts[item.category] = counts.get(item.category, 0) + 1
        return counts


def _require(path: Path) -> Path:
    if not path.exists():
        raise MissingFiles(f"expected dataset file {path}")
    return path


def _check_counts(split: DatasetSplit, allow_count_mismatch: bool) -> DatasetSplit:
    expected_total, expected_simple, expected_complex = EXPECTED_COUNTS[split.name]
    problems = []
    if len(split.items) != expected_total:
        problems.append(f"{split.name}: {len(split.items)} items, released split has {expected_total}")
    counts = split.category_counts()
    if expected_simple is not None and counts.get("simple", 0) != expected_simple:
        problems.append(f"{split.name}: {counts.get('simple', 0)} simple items, expected {expected_simple}")
    if expected_complex is not None and counts.get("complex", 0) != expected_complex:
        problems.append(f"{split.name}: {counts.get('complex', 0)} complex items, expected {expected_complex}")
    if problems:
        if not allow_count_mismatch:
            raise CountMismatch("; ".join(problems))
        return DatasetSplit(split.name, split.items, split.warnings + tuple(problems))
    return split


def _load_wtq_table(csv_path: Path) -> SemiStructuredTable:
    with open(csv_path, encoding="utf-8", newline="") as handle:
        rows = list(csv.reader(handle))
    if not rows:
        raise MissingFiles(f"table file {csv_path} is empty")
    return parse_table({"title": "", "header": rows[0], "rows": rows[1:]})


def _load_wikitableqa(root: Path, allow_count_mismatch: bool) -> DatasetSplit:
    base = root / "wikitableqa"
    index = _require(base / "pristine-unseen-tables.tsv")
    items: list[DatasetItem] = []
    tables: dict[str, SemiStructuredTable] = {}
    with open(index, encoding="utf-8", newline="") as handle:
        reader = csv.DictReader(handle, delimiter="\t")
        for row in reader:
            context = row["context"]
            if context not in tables:
                tables[context] = _load_wtq_table(_require(base / context))
            items.append(DatasetItem(
                id=row["id"],
                question=row["utterance"],
                table=tables[context],
                gold=row["targetValue"],
            ))
    split = DatasetSplit("wikitableqa_test", tuple(items))
    return _check_counts(split, allow_count_mismatch)


def _load_tabfact_table(path: Path, title: str) -> SemiStructuredTable:
    with open(path, encoding="utf-8", newline="") as handle:
        rows = [line.rstrip("\n").split("#") for line in handle if line.strip()]
    if not rows:
        raise MissingFiles(f"table file {path} is empty")
    return parse_table({"title": title, "header": rows[0], "rows": rows[1:]})


def _load_tabfact(root: Path, small: bool, allow_count_mismatch: bool) -> DatasetSplit:
    base = root / "tabfact"
    with open(_require(base / "test_examples.json"), encoding="utf-8") as handle:
        examples = json.load(handle)

    def _ids(name: str) -> set:
        with open(_require(base / name), encoding="utf-8") as f:
            return set(json.load(f))

    simple_ids = _ids("simple_test_id.json")
    complex_ids = _ids("complex_test_id.json")
    wanted = _ids("small_test_id.json") if small else None

    items: list[DatasetItem] = []
    for table_id in sorted(examples):
        if wanted is not None and table_id not in wanted:
            continue
        statements, labels, caption = examples[table_id]
        table = _load_tabfact_table(_require(base / "all_csv" / table_id), caption)
        category = "simple" if table_id in simple_ids else "complex" if table_id in complex_ids else None
        for k, (statement, label) in enumerate(zip(statements, labels)):
            items.append(DatasetItem(
                id=f"{table_id}::{k}",
                question=statement,
                table=table,
                gold="True" if label else "False",
                category=category,
            ))
    split = DatasetSplit("tabfact_small" if small else "tabfact_full", tuple(items))
    return _check_counts(split, allow_count_mismatch)


def load_split(name: str, root: str | Path, allow_count_mismatch: bool = False) -> DatasetSplit:
    """Load a released split by name, hard-checking its expected size."""
    root = Path(root)
    if name == "wikitableqa_test":
        return _load_wikitableqa(root, allow_count_mismatch)
    if name == "tabfact_full":
        return _load_tabfact(root, small=False, allow_count_mismatch=allow_count_mismatch)
    if name == "tabfact_small":
        return _load_tabfact(root, small=True, allow_count_mismatch=allow_count_mismatch)
    raise ValueError(f"unknown split {name!r}; expected one of {SPLIT_NAMES}")


def load_fixture_split(path: str | Path) -> DatasetSplit:
    """Load a hand-built split: {"name", "items": [{id, question, table, gold, category?}]}."""
    path = Path(path)
    if not path.exists():
        raise MissingFiles(f"fixture split {path} does not exist")
    with open(path, encoding="utf-8") as handle:
        data = json.load(handle)
    items = tuple(
        DatasetItem(
            id=str(entry["id"]),
            question=entry["question"],
            table=parse_table(entry["table"]),
            gold=str(entry["gold"]),
            category=entry.get("category"),
        )
        for entry in data["items"]
    )
    return DatasetSplit(name=data.get("name", path.stem), items=items)
