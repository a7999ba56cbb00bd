"""Rule-based post-processing of generated tasks.

Order is fixed: field validity, cross-mode dedup, classification
detection, label-space augmentation, imbalance discard. A task dropped
at any step never reappears downstream.
"""

from __future__ import annotations

import logging
from collections import Counter
from dataclasses import dataclass, field, replace
from typing import Any, Sequence

from .errors import InvalidArgument
from .metadata import DatasetMetadata, Decision
from .taskgen import TaskDefinition

logger = logging.getLogger(__name__)

DISTINCT_LABEL_CUTOFF = 10
IMBALANCE_THRESHOLD = 0.99


@dataclass
class ValidationReport:
    """Per-dataset outcome counts; they always sum to the input count."""

    dataset_id: str
    valid: int = 0
    rejected: dict[str, int] = field(default_factory=dict)
    deduplicated: int = 0
    reasons: list[tuple[str, str]] = field(default_factory=list)

    @property
    def total(self) -> int:
        return self.valid + sum(self.rejected.values()) + self.deduplicated

    def to_record(self) -> dict[str, Any]:
        return {
            "dataset_id": self.dataset_id,
            "valid": self.valid,
            "rejected": dict(sorted(self.rejected.items())),
            "deduplicated": self.deduplicated,
            "reasons": [list(pair) for pair in self.reasons],
        }


def validate_task(task: TaskDefinition, meta: DatasetMetadata) -> TaskDefinition:
    """Check field validity; returns the task restamped valid or rejected."""
    known = set(meta.data_fields)
    reason = None
    if any(name not in known for name in task.input_fields) or any(
        name not in known for name in task.output_fields
    ):
        reason = "unknown-field"
    elif len(task.output_fields) != 1:
        reason = "multi-output"
    elif task.output_fields[0] in task.input_fields:
        reason = "io-overlap"
    elif not task.input_fields:
        reason = "empty-input"
    if reason is None:
        return replace(task, status="valid", reject_reason=None)
    return replace(task, status="rejected", reject_reason=reason)


def _dedup_key(task: TaskDefinition) -> tuple[str, tuple[str, ...], tuple[str, ...]]:
    return (task.dataset_id, tuple(sorted(task.input_fields)), tuple(task.output_fields))


def dedup_tasks(tasks: Sequence[TaskDefinition]) -> tuple[list[TaskDefinition], list[TaskDefinition]]:
    """Drop tasks repeating a (dataset, input multiset, output) mapping.

    Within a duplicate group the description-aware variant wins, then the
    lexicographically smallest task_id.
    """
    groups: dict[tuple, list[TaskDefinition]] = {}
    for task in tasks:
        groups.setdefault(_dedup_key(task), []).append(task)
    winners: set[str] = set()
    for members in groups.values():
        best = min(members, key=lambda t: (0 if t.mode == "aware" else 1, t.task_id))
        winners.add(best.task_id)
    kept: list[TaskDefinition] = []
    dropped: list[TaskDefinition] = []
    for task in tasks:
        if task.task_id in winners:
            kept.append(task)
        else:
            dropped.append(replace(task, status="rejected", reject_reason="duplicate"))
    return kept, dropped


def rendered_output(value: Any) -> str:
    """Flatten one output value to the text that assembly would emit."""
    if isinstance(value, list):
        return ", ".join(str(item) for item in value)
    return str(value)


def detect_classification(
    task: TaskDefinition,
    instances: Sequence[dict[str, Any]],
    *,
    distinct_cutoff: int = DISTINCT_LABEL_CUTOFF,
) -> tuple[bool, list[str] | None]:
    """Call a task classification when its sampled outputs are few-valued."""
    if not instances:
        raise InvalidArgument("classification detection needs at least one instance")
    values = {rendered_output(inst.get(task.output_field, "")) for inst in instances}
    if len(values) < distinct_cutoff:
        return True, sorted(values)
    return False, None


def augment_label_space(task: TaskDefinition, label_space: Sequence[str]) -> TaskDefinition:
    """Append the closed answer list to the instruction, idempotently."""
    if not label_space:
        raise InvalidArgument("label space must be non-empty")
    labels = list(label_space)
    suffix = "Answers must be one of [" + ", ".join(labels) + "]."
    instruction = task.instruction
    if not instruction.endswith(suffix):
        instruction = f"{instruction} {suffix}"
    return replace(task, instruction=instruction, is_classification=True, label_space=labels)


def check_balance(outputs: Sequence[str], *, threshold: float = IMBALANCE_THRESHOLD) -> Decision:
    """Flag degenerate label distributions over the sampled outputs."""
    if not outputs:
        raise InvalidArgument("balance check needs at least one output value")
    counts = Counter(outputs)
    if len(counts) == 1:
        return Decision.drop("single-label")
    majority = max(counts.values()) / len(outputs)
    if majority >= threshold:
        return Decision.drop("imbalanced")
    return Decision.keep()


def run_validation(
    candidates: Sequence[TaskDefinition],
    meta: DatasetMetadata,
    *,
    distinct_cutoff: int = DISTINCT_LABEL_CUTOFF,
    imbalance_threshold: float = IMBALANCE_THRESHOLD,
) -> tuple[list[TaskDefinition], list[TaskDefinition], ValidationReport]:
    """Run the full post-processing chain for one dataset's candidates."""
    report = ValidationReport(dataset_id=meta.dataset_id)
    rejected: list[TaskDefinition] = []

    checked = [validate_task(task, meta) for task in candidates]
    valid = [task for task in checked if task.status == "valid"]
    for task in checked:
        if task.status == "rejected":
            rejected.append(task)
            report.rejected[task.reject_reason] = report.rejected.get(task.reject_reason, 0) + 1
            report.reasons.append((task.task_id, task.reject_reason))

    deduped, duplicates = dedup_tasks(valid)
    rejected.extend(duplicates)
    report.deduplicated = len(duplicates)
    report.reasons.extend((task.task_id, "duplicate") for task in duplicates)

    kept: list[TaskDefinition] = []
    for task in deduped:
        if not meta.sample_instances:
            kept.append(task)
            continue
        is_classification, labels = detect_classification(
            task, meta.sample_instances, distinct_cutoff=distinct_cutoff
        )
        if not is_classification:
            kept.append(task)
            continue
        outputs = [rendered_output(inst.get(task.output_field, "")) for inst in meta.sample_instances]
        verdict = check_balance(outputs, threshold=imbalance_threshold)
        if not verdict.kept:
            dropped = replace(task, status="rejected", reject_reason=verdict.reason)
            rejected.append(dropped)
            report.rejected[verdict.reason] = report.rejected.get(verdict.reason, 0) + 1
            report.reasons.append((task.task_id, verdict.reason))
            continue
        kept.append(augment_label_space(task, labels))

    report.valid = len(kept)
    return kept, rejected, report
