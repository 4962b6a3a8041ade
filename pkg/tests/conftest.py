"""Shared fixtures: the default DB, small tables, and the canonical
three-stage scripted scenario (points hidden in strings like "W 21-14",
first execution fails, a normalizer fixes the cells, re-execution returns 68).
"""

from __future__ import annotations

from dataclasses import dataclass

import pytest

from tabgate import (
    MethodConfig,
    MockLlmClient,
    MockRule,
    StubExecutor,
    error_outcome,
    load_db,
    ok_outcome,
    parse_table,
    stub_fingerprint,
)


@pytest.fixture(scope="session")
def db():
    return load_db()


@pytest.fixture
def tide_table():
    return parse_table({
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


TIDE_QUESTION = "the total number of points scored by the tide in the last 3 games combined"

PLAN_COMPLETION = """Relevant Columns: Result
Operations: ADDITION/DIFF
Programming Steps:
1. Extract the points scored from each Result cell.
2. Sum the points of the last 3 games."""

REASONING_CODE = '''def solution(table):
    points = [int(r.split()[1].split("-")[0]) for r in table["Result"]]
    return sum(points[-3:])'''

NORMALIZER_CODE = '''import re

def normalize(table):
    table["Result"] = [re.search(r"(\\d+)-", v).group(1) for v in table["Result"]]
    return table'''

CONDUCT_COMPLETION = f"```python\n{REASONING_CODE}\n```\nDEFAULT_ANSWER: {{64}}"
CORRECTION_COMPLETION = f"```python\n{NORMALIZER_CODE}\n```"


@dataclass
class StagedScenario:
    """One scripted run of the staged method, with pluggable outcomes."""

    question: str = TIDE_QUESTION
    plan_completion: str = PLAN_COMPLETION
    conduct_completion: str = CONDUCT_COMPLETION
    correction_completion: str = CORRECTION_COMPLETION

    def mock_llm(self) -> MockLlmClient:
        # order matters: the correction prompt also contains column details,
        # and the conducting prompt also contains the statistics table
        return MockLlmClient([
            MockRule(match="Failing Code", completion=self.correction_completion),
            MockRule(match="Column Details", completion=self.conduct_completion),
            MockRule(match="Statistics Table", completion=self.plan_completion),
        ])

    def stub(self, first=None, corrected=None) -> StubExecutor:
        """Stub with the plain run and the normalized run wired up."""
        executor = StubExecutor()
        executor.register(
            stub_fingerprint(REASONING_CODE),
            first if first is not None else error_outcome("TypeError", "'>' not supported"),
        )
        executor.register(
            stub_fingerprint(REASONING_CODE, NORMALIZER_CODE),
            corrected if corrected is not None else ok_outcome("68"),
        )
        return executor

    def method(self, **flags) -> MethodConfig:
        return MethodConfig(kind="tabpot", **flags)


@pytest.fixture
def scenario():
    return StagedScenario()


@pytest.fixture(scope="session")
def released_root(tmp_path_factory):
    """Released-layout dataset fixtures at the released split sizes."""
    from tests.datagen import make_tabfact_fixture, make_wikitableqa_fixture

    root = tmp_path_factory.mktemp("datasets")
    make_wikitableqa_fixture(root)
    make_tabfact_fixture(root)
    return root
