"""Request parsing and stage prompt assembly."""

from __future__ import annotations

import pytest

from tabgate import (
    AtomicOperation,
    build_alignment_prompt,
    build_baseline_prompt,
    build_conducting_prompt,
    build_correction_prompt,
    build_planning_prompt,
    build_statistics_table,
    parse_request,
    parse_table,
    render_markdown,
    table_from_dict,
)
from tabgate.errors import MalformedPayload, UnknownTask
from tabgate.prompting import cap_column_details

TABLE_DOC = {"title": "T", "header": ["A", "B"], "rows": [["1", "x"], ["2", "y"]]}


class TestParseRequest:
    def test_table_qa_request(self):
        request = parse_request({"task": "table_qa", "question": "q", "table": TABLE_DOC})
        assert request.task_id == "table_qa"
        assert request.question == "q"
        assert request.table is not None and request.table.col_count == 2

    def test_generic_text_task(self):
        request = parse_request(
            {"task": "translation", "data": "This is a sample translation service."}
        )
        assert request.task_id == "translation"
        assert request.data == "This is a sample translation service."

    def test_missing_task_is_unknown(self):
        with pytest.raises(UnknownTask):
            parse_request({"question": "q"})

    def test_missing_table_is_malformed(self):
        with pytest.raises(MalformedPayload):
            parse_request({"task": "table_qa", "question": "q"})

    def test_missing_question_is_malformed(self):
        with pytest.raises(MalformedPayload):
            parse_request({"task": "table_qa", "table": TABLE_DOC})

    def test_invalid_table_is_malformed(self):
        with pytest.raises(MalformedPayload):
            parse_request({"task": "table_qa", "question": "q", "table": {"header": []}})

    def test_json_text_accepted(self):
        request = parse_request('{"task": "translation", "data": "hello"}')
        assert request.data == "hello"

    def test_invalid_json_is_malformed(self):
        with pytest.raises(MalformedPayload):
            parse_request("{nope")

    def test_step_is_optional(self):
        request = parse_request({"task": "table_qa", "step": "cot", "question": "q",
                                 "table": TABLE_DOC})
        assert request.task_step == "cot"


class TestPlanningPrompt:
    def test_contains_statistics_and_operation_menu(self, db):
        table = parse_table(TABLE_DOC)
        prompt = build_planning_prompt(db, table.title, build_statistics_table(table), "how many?")
        text = prompt.text()
        assert "column | type | first | last" in text
        for name in ("SelectTable", "ADDITION/DIFF", "TIMES/DIVISION", "AVG", "COUNT", "MAX/MIN"):
            assert name in text
        assert prompt.messages[0].role == "system"
        assert prompt.messages[-1].role == "user"
        assert "how many?" in prompt.final_user_text()
        assert prompt.token_estimate > 0

    def test_excludes_table_body(self, db):
        table = table_from_dict({"A": ["needle-value-%d" % i for i in range(50)]}, title="T")
        prompt = build_planning_prompt(db, "T", build_statistics_table(table), "q")
        text = prompt.text()
        # first/last entries are sampled; everything in between must be absent
        assert "needle-value-0" in text and "needle-value-49" in text
        assert "needle-value-25" not in text

    def test_size_independent_of_row_count(self, db):
        small = table_from_dict({"A": [str(i) for i in range(10)], "B": ["x"] * 10})
        big = table_from_dict({"A": [str(i) for i in range(10000)], "B": ["x"] * 10000})
        question = "what is the total?"
        small_prompt = build_planning_prompt(db, "T", build_statistics_table(small), question)
        big_prompt = build_planning_prompt(db, "T", build_statistics_table(big), question)
        assert abs(big_prompt.token_estimate - small_prompt.token_estimate) \
            <= 0.05 * small_prompt.token_estimate

    def test_empty_question_rejected(self, db):
        table = parse_table(TABLE_DOC)
        with pytest.raises(MalformedPayload):
            build_planning_prompt(db, "T", build_statistics_table(table), "  ")

    def test_deterministic_digest(self, db):
        table = parse_table(TABLE_DOC)
        stats = build_statistics_table(table)
        a = build_planning_prompt(db, "T", stats, "q")
        b = build_planning_prompt(db, "T", stats, "q")
        assert a.digest() == b.digest()


class TestConductingPrompt:
    def _build(self, db, operations, steps=("do it",)):
        table = parse_table(TABLE_DOC)
        return build_conducting_prompt(
            db, "T", build_statistics_table(table), render_markdown(table),
            list(steps), operations, "how many?",
        )

    def test_selected_operation_embeds_two_exemplars(self, db):
        prompt = self._build(db, [AtomicOperation.COUNT])
        assistants = [m for m in prompt.messages if m.role == "assistant"]
        assert len(assistants) == 2
        assert all("DEFAULT_ANSWER:" in m.content for m in assistants)

    def test_unrecognized_operations_embed_all_twelve(self, db):
        prompt = self._build(db, [])
        assistants = [m for m in prompt.messages if m.role == "assistant"]
        assert len(assistants) == 12

    def test_programming_steps_rendered(self, db):
        prompt = self._build(db, [AtomicOperation.AVG], steps=("first", "second"))
        final = prompt.final_user_text()
        assert "Programming Steps:\n1. first\n2. second" in final

    def test_relevant_columns_only(self, db):
        columns = {f"col{i}": [f"cell-{i}-{j}" for j in range(3)] for i in range(20)}
        table = table_from_dict(columns, title="wide")
        from tabgate import extract_columns

        selection = extract_columns(table, ["col7"])
        prompt = build_conducting_prompt(
            db, "wide", build_statistics_table(table), render_markdown(selection.table),
            [], None, "q?",
        )
        final = prompt.final_user_text()
        assert "cell-7-1" in final
        for i in range(20):
            if i != 7:
                assert f"cell-{i}-1" not in final


class TestCorrectionPrompt:
    def test_embeds_code_error_and_cells(self, db):
        details = "| Result |\n| --- |\n| W 21-14 |\n| L 23-24 |"
        prompt = build_correction_prompt(
            db, details, "def solution(table):\n    return 0",
            {"error_type": "TypeError", "error_message": "'>' not supported", "traceback": ""},
        )
        final = prompt.final_user_text()
        assert "W 21-14" in final
        assert "TypeError" in final and "'>' not supported" in final
        assert "def solution" in final

    def test_traceback_truncated_to_cap(self, db):
        long_traceback = "x" * 2000
        prompt = build_correction_prompt(
            db, "| A |", "def solution(table): pass",
            {"error_type": "ValueError", "error_message": "bad", "traceback": long_traceback},
        )
        final = prompt.final_user_text()
        assert "x" * 1000 in final
        assert "x" * 1001 not in final
        assert "[traceback truncated]" in final


class TestBaselinePrompts:
    def test_direct_embeds_full_table_and_brace_request(self, db):
        table = parse_table(TABLE_DOC)
        prompt = build_baseline_prompt(db, "direct", table, "q?")
        text = prompt.text()
        assert render_markdown(table) in text
        assert "{" in prompt.messages[0].content  # instruction shows the braced format

    def test_pot_pandas_demo_consumes_dict_parameter(self, db):
        table = parse_table(TABLE_DOC)
        prompt = build_baseline_prompt(db, "pot_pandas", table, "q?")
        assistants = [m.content for m in prompt.messages if m.role == "assistant"]
        assert assistants
        assert all("def solution(table)" in body for body in assistants)
        assert any("pd.DataFrame(table)" in body for body in assistants)

    def test_pot_stdlib_demo_inlines_literals(self, db):
        table = parse_table(TABLE_DOC)
        prompt = build_baseline_prompt(db, "pot_stdlib", table, "q?")
        assistants = [m.content for m in prompt.messages if m.role == "assistant"]
        assert all("def solution()" in body for body in assistants)
        assert any("[(" in body for body in assistants)  # list-of-tuples data

    def test_unknown_method_rejected(self, db):
        with pytest.raises(ValueError):
            build_baseline_prompt(db, "tabpot", parse_table(TABLE_DOC), "q?")


class TestAlignmentPrompt:
    def test_embeds_raw_answer(self, db):
        prompt = build_alignment_prompt(db, "total?", "The total is 68.")
        final = prompt.final_user_text()
        assert "The total is 68." in final
        assert "total?" in final

    def test_braced_raw_answer_rejected(self, db):
        with pytest.raises(ValueError):
            build_alignment_prompt(db, "q", "already {68} formatted")

    def test_long_raw_truncated_question_retained(self, db):
        prompt = build_alignment_prompt(db, "the question", "y" * 5000)
        final = prompt.final_user_text()
        assert "the question" in final
        assert "y" * 2000 in final
        assert "y" * 2001 not in final
        assert "[answer truncated]" in final


class TestColumnDetailsCap:
    def test_small_text_unchanged(self):
        assert cap_column_details("| A |\n| 1 |") == "| A |\n| 1 |"

    def test_large_text_sampled_head_and_tail(self):
        lines = [f"| row-{i} |" for i in range(4000)]
        capped = cap_column_details("\n".join(lines), max_tokens=500)
        from tabgate import estimate_tokens

        assert estimate_tokens(capped) <= 550  # cap plus the marker line
        assert "row-0" in capped
        assert "row-3999" in capped
        assert "rows omitted" in capped
