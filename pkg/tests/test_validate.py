from __future__ import annotations

from dataclasses import replace

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from taskmint.errors import InvalidArgument
from taskmint.metadata import DatasetMetadata
from taskmint.taskgen import TaskDefinition
from taskmint.validate import (
    augment_label_space,
    check_balance,
    dedup_tasks,
    detect_classification,
    rendered_output,
    run_validation,
    validate_task,
)

FIELDS = ["title", "text", "author", "subjects", "issued"]


def meta_with(fields: list[str], instances=()) -> DatasetMetadata:
    return DatasetMetadata(
        dataset_id="d",
        name="d",
        description="",
        license="mit",
        data_fields=list(fields),
        sample_instances=list(instances),
    )


FIELDS_META = meta_with(FIELDS)


def task(
    inputs: list[str],
    outputs: list[str],
    *,
    mode: str = "aware",
    task_id: str = "d-aware-0-task1",
) -> TaskDefinition:
    return TaskDefinition(
        task_id=task_id,
        dataset_id="d",
        instruction="Given the input, produce the output.",
        input_fields=inputs,
        output_fields=outputs,
        mode=mode,
    )


class TestValidateTask:
    def test_clean_task_is_valid(self):
        got = validate_task(task(["text"], ["title"]), FIELDS_META)
        assert got.status == "valid"
        assert got.reject_reason is None

    def test_unknown_output_field(self):
        got = validate_task(task(["title"], ["content"]), FIELDS_META)
        assert got.status == "rejected"
        assert got.reject_reason == "unknown-field"

    def test_unknown_input_field(self):
        got = validate_task(task(["body"], ["title"]), FIELDS_META)
        assert got.reject_reason == "unknown-field"

    def test_multi_output(self):
        got = validate_task(task(["text"], ["title", "author"]), FIELDS_META)
        assert got.reject_reason == "multi-output"

    def test_io_overlap(self):
        got = validate_task(task(["title", "text"], ["title"]), FIELDS_META)
        assert got.reject_reason == "io-overlap"

    def test_empty_input(self):
        got = validate_task(task([], ["title"]), FIELDS_META)
        assert got.reject_reason == "empty-input"

    def test_unknown_field_wins_over_multi_output(self):
        got = validate_task(task(["text"], ["content", "title"]), FIELDS_META)
        assert got.reject_reason == "unknown-field"

    def test_multi_output_wins_over_overlap(self):
        got = validate_task(task(["title"], ["title", "author"]), FIELDS_META)
        assert got.reject_reason == "multi-output"

    valid_ids = st.lists(
        st.sampled_from(FIELDS), min_size=1, max_size=4, unique=True
    )

    @given(fields=valid_ids, out=st.sampled_from(FIELDS))
    @settings(max_examples=80)
    def test_verdict_matches_predicates(self, fields, out):
        got = validate_task(task(fields, [out]), FIELDS_META)
        should_pass = out not in fields
        assert (got.status == "valid") == should_pass


class TestDedup:
    def test_aware_wins_over_unaware(self):
        aware = task(["text"], ["title"], mode="aware", task_id="d-aware-0-task1")
        unaware = task(["text"], ["title"], mode="unaware", task_id="d-unaware-0-task1")
        kept, dropped = dedup_tasks([unaware, aware])
        assert [t.task_id for t in kept] == ["d-aware-0-task1"]
        assert [t.task_id for t in dropped] == ["d-unaware-0-task1"]
        assert dropped[0].status == "rejected"
        assert dropped[0].reject_reason == "duplicate"

    def test_smallest_task_id_breaks_ties(self):
        a = task(["text"], ["title"], task_id="d-aware-0-task2")
        b = task(["text"], ["title"], task_id="d-aware-0-task1")
        kept, _ = dedup_tasks([a, b])
        assert [t.task_id for t in kept] == ["d-aware-0-task1"]

    def test_input_order_ignored(self):
        a = task(["text", "author"], ["title"], task_id="d-aware-0-task1")
        b = task(["author", "text"], ["title"], task_id="d-aware-0-task2")
        kept, dropped = dedup_tasks([a, b])
        assert len(kept) == 1 and len(dropped) == 1

    def test_distinct_tasks_survive(self):
        a = task(["text"], ["title"], task_id="d-aware-0-task1")
        b = task(["text"], ["author"], task_id="d-aware-0-task2")
        kept, dropped = dedup_tasks([a, b])
        assert len(kept) == 2 and not dropped

    def test_kept_preserves_input_order(self):
        a = task(["text"], ["author"], task_id="d-aware-0-task2")
        b = task(["text"], ["title"], task_id="d-aware-0-task1")
        kept, _ = dedup_tasks([a, b])
        assert [t.task_id for t in kept] == ["d-aware-0-task2", "d-aware-0-task1"]


def rows(values: list[str]) -> list[dict[str, str]]:
    return [{"label": v, "text": f"t{i}"} for i, v in enumerate(values)]


class TestDetectClassification:
    def test_small_label_set_detected(self):
        is_cls, labels = detect_classification(
            task(["text"], ["label"]), rows(["pos", "neg", "pos"])
        )
        assert is_cls and labels == ["neg", "pos"]

    def test_boundary_nine_distinct_is_classification(self):
        is_cls, labels = detect_classification(
            task(["text"], ["label"]), rows([f"l{i}" for i in range(9)])
        )
        assert is_cls and len(labels) == 9

    def test_boundary_ten_distinct_is_not(self):
        is_cls, labels = detect_classification(
            task(["text"], ["label"]), rows([f"l{i}" for i in range(10)])
        )
        assert not is_cls and labels is None

    def test_list_outputs_rendered_before_counting(self):
        instances = [{"label": ["a", "b"], "text": "x"}, {"label": "a, b", "text": "y"}]
        is_cls, labels = detect_classification(task(["text"], ["label"]), instances)
        assert is_cls and labels == ["a, b"]

    def test_no_instances_rejected(self):
        with pytest.raises(InvalidArgument):
            detect_classification(task(["text"], ["label"]), [])


class TestAugmentLabelSpace:
    def test_suffix_appended(self):
        got = augment_label_space(task(["text"], ["label"]), ["neg", "pos"])
        assert got.instruction.endswith("Answers must be one of [neg, pos].")
        assert got.is_classification and got.label_space == ["neg", "pos"]

    def test_idempotent(self):
        once = augment_label_space(task(["text"], ["label"]), ["neg", "pos"])
        twice = augment_label_space(once, ["neg", "pos"])
        assert twice.instruction == once.instruction

    def test_empty_labels_rejected(self):
        with pytest.raises(InvalidArgument):
            augment_label_space(task(["text"], ["label"]), [])


class TestCheckBalance:
    def test_balanced_kept(self):
        decision = check_balance(["a", "b", "a", "b"])
        assert decision.kept

    def test_single_label_dropped(self):
        decision = check_balance(["a", "a", "a"])
        assert not decision.kept and decision.reason == "single-label"

    def test_imbalanced_dropped_at_point_995(self):
        decision = check_balance(["a"] * 199 + ["b"])
        assert not decision.kept and decision.reason == "imbalanced"

    def test_just_under_threshold_kept(self):
        decision = check_balance(["a"] * 98 + ["b"] * 2)
        assert decision.kept

    def test_empty_outputs_rejected(self):
        with pytest.raises(InvalidArgument):
            check_balance([])


class TestRenderedOutput:
    def test_string_passthrough(self):
        assert rendered_output("abc") == "abc"

    def test_list_joined(self):
        assert rendered_output(["a", "b"]) == "a, b"


class TestRunValidation:
    def meta(self, instances) -> DatasetMetadata:
        return DatasetMetadata(
            dataset_id="d",
            name="d",
            description="",
            license="mit",
            data_fields=FIELDS + ["label"],
            sample_instances=instances,
        )

    def test_counts_add_up(self):
        candidates = [
            task(["text"], ["title"], task_id="d-aware-0-task1"),
            task(["text"], ["content"], task_id="d-aware-0-task2"),
            task(["text"], ["title"], mode="unaware", task_id="d-unaware-0-task1"),
        ]
        instances = [
            {"title": f"t{i}", "text": f"x{i}", "label": "y"} for i in range(12)
        ]
        valid, rejected, report = run_validation(candidates, self.meta(instances))
        assert report.total == len(candidates)
        assert len(valid) == report.valid
        assert len(rejected) == sum(report.rejected.values()) + report.deduplicated
        assert report.rejected == {"unknown-field": 1}
        assert report.deduplicated == 1

    def test_classification_labels_attached(self):
        candidates = [task(["text"], ["label"], task_id="d-aware-0-task1")]
        instances = [{"text": f"x{i}", "label": "pos" if i % 2 else "neg"} for i in range(10)]
        valid, _, _ = run_validation(candidates, self.meta(instances))
        assert valid[0].is_classification
        assert valid[0].label_space == ["neg", "pos"]
        assert valid[0].instruction.endswith("Answers must be one of [neg, pos].")

    def test_single_label_task_dropped(self):
        candidates = [task(["text"], ["label"], task_id="d-aware-0-task1")]
        instances = [{"text": f"x{i}", "label": "same"} for i in range(8)]
        valid, rejected, report = run_validation(candidates, self.meta(instances))
        assert not valid
        assert rejected[0].reject_reason == "single-label"
        assert report.rejected == {"single-label": 1}

    def test_no_instances_skips_classification(self):
        candidates = [task(["text"], ["title"], task_id="d-aware-0-task1")]
        valid, _, _ = run_validation(candidates, self.meta([]))
        assert len(valid) == 1 and not valid[0].is_classification
