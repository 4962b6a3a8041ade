"""Prompts database: loading, validation, selection, digests."""

from __future__ import annotations

import shutil

import pytest

from tabgate import AtomicOperation, load_db, select_demonstrations, validate_db
from tabgate.errors import MalformedRecord, MissingStage, UnknownTaskStage
from tabgate.promptdb import OPERATION_ORDER, REQUIRED_TABLE_QA_STAGES, default_db_root


@pytest.fixture
def db_copy(tmp_path):
    root = tmp_path / "prompts"
    shutil.copytree(default_db_root(), root)
    return root


class TestAtomicOperation:
    def test_menu_names_round_trip(self):
        for op in AtomicOperation:
            assert AtomicOperation.parse(str(op)) is op
            assert AtomicOperation.parse(str(op).lower()) is op

    def test_partial_spellings(self):
        assert AtomicOperation.parse("MAX") is AtomicOperation.MAX_MIN
        assert AtomicOperation.parse("min") is AtomicOperation.MAX_MIN
        assert AtomicOperation.parse("average") is AtomicOperation.AVG
        assert AtomicOperation.parse("Select Table") is AtomicOperation.SELECT_TABLE
        assert AtomicOperation.parse("addition / diff") is AtomicOperation.ADDITION_DIFF

    def test_unrecognized_tokens(self):
        assert AtomicOperation.parse("think step by step") is None
        assert AtomicOperation.parse("") is None
        assert AtomicOperation.parse("1234") is None


class TestLoadDb:
    def test_default_db_has_all_stages(self, db):
        for stage in REQUIRED_TABLE_QA_STAGES:
            assert db.has("table_qa", stage)
        assert db.get("table_qa", "planning").instruction

    def test_empty_directory_lists_all_missing_stages(self, tmp_path):
        (tmp_path / "empty").mkdir()
        with pytest.raises(MissingStage) as exc_info:
            load_db(tmp_path / "empty")
        assert set(exc_info.value.missing) == set(REQUIRED_TABLE_QA_STAGES)

    def test_conducting_demo_without_default_answer(self, db_copy):
        path = db_copy / "table_qa" / "conducting" / "demos" / "count_a.md"
        text = path.read_text(encoding="utf-8")
        marker = "### DEFAULT_ANSWER"
        path.write_text(text[: text.index(marker)], encoding="utf-8")
        with pytest.raises(MalformedRecord) as exc_info:
            load_db(db_copy)
        assert "count_a" in str(exc_info.value)

    def test_missing_front_matter(self, db_copy):
        path = db_copy / "table_qa" / "alignment" / "demos" / "verdict.md"
        path.write_text("### QUESTION\nq\n\n### ANSWER\n{a}\n", encoding="utf-8")
        with pytest.raises(MalformedRecord):
            load_db(db_copy)

    def test_planning_demo_missing_fields(self, db_copy):
        path = db_copy / "table_qa" / "planning" / "demos" / "avg.md"
        path.write_text(
            "---\nkind: planning\noperation: AVG\n---\n"
            "### QUESTION\nq\n\n### ANSWER\njust prose\n",
            encoding="utf-8",
        )
        with pytest.raises(MalformedRecord):
            load_db(db_copy)

    def test_non_strict_load_collects_problems(self, db_copy):
        path = db_copy / "table_qa" / "conducting" / "demos" / "count_a.md"
        text = path.read_text(encoding="utf-8")
        path.write_text(text[: text.index("### DEFAULT_ANSWER")], encoding="utf-8")
        db = load_db(db_copy, strict=False)
        assert not db.report.passed
        assert any("count_a" in f for f in db.report.failures)

    def test_unknown_task_stage(self, db):
        with pytest.raises(UnknownTaskStage):
            db.get("table_qa", "nope")
        with pytest.raises(UnknownTaskStage):
            db.get("no_such_task", "planning")


class TestSelectDemonstrations:
    def test_single_operation_gets_its_two_pairs(self, db):
        demos = select_demonstrations(db, "table_qa", "conducting", [AtomicOperation.COUNT])
        assert len(demos) == 2
        assert all(d.operation_tag is AtomicOperation.COUNT for d in demos)
        assert [d.name for d in demos] == sorted(d.name for d in demos)

    def test_unrecognized_operations_fall_back_to_all_pairs(self, db):
        demos = select_demonstrations(db, "table_qa", "conducting", [])
        assert len(demos) == 12
        demos_none = select_demonstrations(db, "table_qa", "conducting", None)
        assert [d.name for d in demos_none] == [d.name for d in demos]

    def test_all_pairs_follow_menu_order(self, db):
        demos = select_demonstrations(db, "table_qa", "conducting", None)
        tags = [d.operation_tag for d in demos]
        expected = [op for op in OPERATION_ORDER for _ in range(2)]
        assert tags == expected

    def test_planning_returns_one_per_operation(self, db):
        demos = select_demonstrations(db, "table_qa", "planning", [AtomicOperation.AVG])
        assert len(demos) == 6
        assert [d.operation_tag for d in demos] == list(OPERATION_ORDER)

    def test_subset_selection_is_union_of_singletons(self, db):
        subset = [AtomicOperation.MAX_MIN, AtomicOperation.COUNT]
        combined = select_demonstrations(db, "table_qa", "conducting", subset)
        count_only = select_demonstrations(db, "table_qa", "conducting", [AtomicOperation.COUNT])
        maxmin_only = select_demonstrations(db, "table_qa", "conducting", [AtomicOperation.MAX_MIN])
        # menu order puts COUNT before MAX/MIN regardless of the argument order
        assert [d.name for d in combined] == [d.name for d in count_only + maxmin_only]

    def test_selection_deterministic_bytes(self, db):
        first = select_demonstrations(db, "table_qa", "conducting", [AtomicOperation.AVG])
        second = select_demonstrations(db, "table_qa", "conducting", [AtomicOperation.AVG])
        joined_a = "\x00".join(d.question + "\x1f" + d.body for d in first).encode()
        joined_b = "\x00".join(d.question + "\x1f" + d.body for d in second).encode()
        assert joined_a == joined_b

    def test_other_stages_return_full_list(self, db):
        correction = select_demonstrations(db, "table_qa", "correction")
        assert len(correction) == 2
        alignment = select_demonstrations(db, "table_qa", "alignment")
        assert len(alignment) == 3


class TestValidateDb:
    def test_default_db_passes_with_full_coverage(self, db):
        report = validate_db(db)
        assert report.passed
        assert sum(report.planning_counts.values()) == 6
        assert sum(report.conducting_counts.values()) == 12

    def test_missing_conducting_pair_fails(self, db_copy):
        (db_copy / "table_qa" / "conducting" / "demos" / "max_min_b.md").unlink()
        report = validate_db(load_db(db_copy))
        assert not report.passed
        assert any("MAX_MIN" in f and "1 of 2" in f for f in report.failures)

    def test_extra_unknown_operation_tag_is_warning(self, db_copy):
        extra = db_copy / "table_qa" / "conducting" / "demos" / "zz_extra.md"
        source = (db_copy / "table_qa" / "conducting" / "demos" / "count_a.md").read_text(encoding="utf-8")
        extra.write_text(source.replace("operation: COUNT", "operation: SORT"), encoding="utf-8")
        report = validate_db(load_db(db_copy))
        assert report.passed
        assert any("zz_extra" in w for w in report.warnings)


class TestDigest:
    def test_digest_stable_for_identical_content(self, db_copy):
        assert load_db(db_copy).digest == load_db(db_copy).digest

    def test_digest_changes_with_any_byte(self, db_copy):
        before = load_db(db_copy).digest
        path = db_copy / "table_qa" / "direct" / "instruction.md"
        path.write_text(path.read_text(encoding="utf-8") + " ", encoding="utf-8")
        assert load_db(db_copy).digest != before

    def test_reload_is_a_new_value(self, db_copy):
        first = load_db(db_copy)
        second = load_db(db_copy)
        assert first is not second
        assert first.digest == second.digest
