"""Completion parsers and the exact-match scorer."""

from __future__ import annotations

import random
import string

import pytest

from tabgate import (
    AtomicOperation,
    Provenance,
    em_match,
    extract_code,
    extract_default_answer,
    parse_braced_answer,
    parse_plan,
)
from tabgate.errors import FormatError, NoCodeFound


class TestParsePlan:
    def test_direct_extraction(self):
        plan = parse_plan(
            "Relevant Columns: Date, Result\n"
            "Operations: ADDITION/DIFF\n"
            "Programming Steps: 1. filter the rows 2. sum the points"
        )
        assert plan.relevant_columns == ("Date", "Result")
        assert plan.operations == (AtomicOperation.ADDITION_DIFF,)
        assert len(plan.programming_steps) >= 1

    def test_multiline_numbered_steps(self):
        plan = parse_plan(
            "Relevant Columns: Result\n"
            "Operations: COUNT\n"
            "Programming Steps:\n1. scan the column\n2. count matching rows"
        )
        assert plan.programming_steps == ("scan the column", "count matching rows")

    def test_unmatchable_operations_yield_empty(self):
        plan = parse_plan("Operations: think step by step")
        assert plan.operations == ()
        assert plan.raw  # kept for audit

    def test_lowercase_slashed_operation(self):
        plan = parse_plan("operations: max/min")
        assert plan.operations == (AtomicOperation.MAX_MIN,)

    def test_missing_sections_are_empty(self):
        plan = parse_plan("no labels at all here")
        assert plan.is_empty

    def test_duplicates_removed_preserving_order(self):
        plan = parse_plan("Relevant Columns: A, B, A\nOperations: COUNT, count")
        assert plan.relevant_columns == ("A", "B")
        assert plan.operations == (AtomicOperation.COUNT,)

    def test_parse_render_parse_is_fixed_point(self):
        completions = [
            "Relevant Columns: Date, Result\nOperations: AVG, MAX/MIN\n"
            "Programming Steps:\n1. first step\n2. second step",
            "operations: count\nrelevant columns: Pts",
            "Programming Steps:\nscan rows\ncount them",
            "nothing recognizable",
        ]
        for completion in completions:
            once = parse_plan(completion)
            twice = parse_plan(once.render())
            assert once.relevant_columns == twice.relevant_columns
            assert once.operations == twice.operations
            assert once.programming_steps == twice.programming_steps


class TestExtractCode:
    def test_fenced_solution(self):
        artifact = extract_code("intro\n```python\ndef solution(table):\n    return 1\n```\nend")
        assert artifact.entry_name == "solution"
        assert artifact.role == "reasoning"
        assert "def solution" in artifact.source

    def test_prose_only_raises(self):
        with pytest.raises(NoCodeFound):
            extract_code("I cannot write code for this question.")

    def test_two_blocks_first_wins_with_warning(self):
        completion = (
            "```python\ndef solution(table):\n    return 1\n```\n"
            "```python\ndef other(table):\n    return 2\n```"
        )
        artifact = extract_code(completion)
        assert artifact.entry_name == "solution"
        assert "other" not in artifact.source
        assert any("2 fenced blocks" in w for w in artifact.warnings)

    def test_unfenced_definition_salvaged(self):
        completion = (
            "Here is the function:\n"
            "def solution(table):\n    return len(table)\n\nHope that helps!"
        )
        artifact = extract_code(completion)
        assert artifact.entry_name == "solution"
        assert "Hope that helps" not in artifact.source

    def test_normalization_entry_preferred(self):
        completion = "```python\ndef helper():\n    pass\n\ndef normalize(table):\n    return table\n```"
        artifact = extract_code(completion, role="normalization")
        assert artifact.entry_name == "normalize"

    def test_unexpected_entry_name_warns(self):
        artifact = extract_code("```python\ndef main(t):\n    return t\n```")
        assert artifact.entry_name == "main"
        assert any("expected entry" in w for w in artifact.warnings)

    def test_unterminated_fence_still_extracts(self):
        artifact = extract_code("```python\ndef solution(table):\n    return 0\n")
        assert artifact.entry_name == "solution"


class TestExtractDefaultAnswer:
    def test_braced_marker(self):
        answer = extract_default_answer("```\ncode\n```\nDEFAULT_ANSWER: {12}")
        assert answer is not None
        assert answer.value == "12"
        assert answer.provenance is Provenance.DEFAULT_ANSWER

    def test_missing_marker(self):
        assert extract_default_answer("no marker here") is None

    def test_unbraced_value_accepted(self):
        answer = extract_default_answer("DEFAULT_ANSWER: 12 games")
        assert answer is not None
        assert answer.value == "12 games"

    def test_last_marker_wins(self):
        answer = extract_default_answer("DEFAULT_ANSWER: {1}\n...\nDEFAULT_ANSWER: {2}")
        assert answer is not None and answer.value == "2"

    def test_empty_marker_is_none(self):
        assert extract_default_answer("DEFAULT_ANSWER:") is None


class TestParseBracedAnswer:
    def test_simple(self):
        assert parse_braced_answer("The answer is {68}").value == "68"

    def test_last_brace_wins(self):
        assert parse_braced_answer("{a}... final {b}").value == "b"

    def test_no_braces_is_format_error(self):
        with pytest.raises(FormatError):
            parse_braced_answer("sixty-eight")

    def test_unbalanced_braces_are_format_error(self):
        with pytest.raises(FormatError):
            parse_braced_answer("} nothing {")

    def test_nested_braces(self):
        assert parse_braced_answer("x {outer {inner} rest} y").value == "outer {inner} rest"

    def test_wrap_identity_on_brace_free_payloads(self):
        rng = random.Random(13)
        alphabet = string.ascii_letters + string.digits + " .,:;|-/()%$'\""
        for _ in range(300):
            payload = "".join(rng.choice(alphabet) for _ in range(rng.randint(0, 40)))
            assert parse_braced_answer("{" + payload + "}").value == payload.strip()


class TestEmMatch:
    def test_numeric_equivalence(self):
        assert em_match("68.0", "68")
        assert em_match("1,234", "1234")
        assert not em_match("68.1", "68")

    def test_case_fold(self):
        assert em_match("True", "true")
        assert em_match("PARIS", "paris")

    def test_plain_mismatch(self):
        assert not em_match("Paris", "London")

    def test_braces_and_quotes_stripped(self):
        assert em_match("{68}", "68")
        assert em_match('"Lyon"', "Lyon")

    def test_multi_answer_set_equality(self):
        assert em_match("a|b", "b|a")
        assert em_match("Lyon, Paris", "Lyon|Paris")
        assert not em_match("a|b", "a|c")
        assert not em_match("a", "a|b")

    def test_numeric_tolerance_oracle(self):
        rng = random.Random(17)
        for _ in range(500):
            value = rng.uniform(-1000, 1000)
            delta = rng.choice([0.0, 5e-7, 1e-3, 1.0])
            lhs = f"{value:.6f}"
            rhs = f"{value + delta:.6f}"
            expected = abs(float(lhs) - float(rhs)) <= 1e-6
            assert em_match(lhs, rhs) == expected, (lhs, rhs)

    def test_symmetric_and_reflexive(self):
        rng = random.Random(19)
        samples = ["68", "68.0", "{68}", "true", "TRUE", "a|b", "b|a", "Lyon, Paris",
                   "", "  x ", "1,000", "0.5"]
        for _ in range(300):
            a, b = rng.choice(samples), rng.choice(samples)
            assert em_match(a, b) == em_match(b, a), (a, b)
        for sample in samples:
            assert em_match(sample, sample)


def test_parsers_total_over_fuzzed_text():
    rng = random.Random(23)
    alphabet = string.printable + "{}`#"
    for _ in range(2000):
        text = "".join(rng.choice(alphabet) for _ in range(rng.randint(0, 120)))
        parse_plan(text)
        extract_default_answer(text)
        try:
            extract_code(text)
        except NoCodeFound:
            pass
        try:
            parse_braced_answer(text)
        except FormatError:
            pass
