"""Render valid tasks against sampled instances into training records.

Each task expands over its dataset's instances: single-field inputs pass
the raw value through, multi-field inputs become one templated sentence
per field. Outputs are always the raw output-field value.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Any, Sequence

from .errors import EmptyOutput, MissingField
from .taskgen import TaskDefinition
from .validate import rendered_output

logger = logging.getLogger(__name__)

INSTANCE_CAP = 200


@dataclass
class InstructionInstance:
    """One final training record."""

    task_id: str
    instance_index: int
    instruction: str
    input: str
    output: str

    def to_record(self) -> dict[str, Any]:
        return {
            "instruction": self.instruction,
            "input": self.input,
            "output": self.output,
            "task_id": self.task_id,
            "instance_index": self.instance_index,
        }

    @classmethod
    def from_record(cls, record: dict[str, Any]) -> "InstructionInstance":
        return cls(
            task_id=record["task_id"],
            instance_index=record["instance_index"],
            instruction=record["instruction"],
            input=record["input"],
            output=record["output"],
        )


@dataclass
class TaskAssembly:
    """Emitted records plus per-reason skip counts for one task."""

    task_id: str
    records: list[InstructionInstance] = field(default_factory=list)
    skipped: dict[str, int] = field(default_factory=dict)

    @property
    def emitted(self) -> int:
        return len(self.records)

    def to_record(self) -> dict[str, Any]:
        return {
            "task_id": self.task_id,
            "emitted": self.emitted,
            "skipped": dict(sorted(self.skipped.items())),
        }


def render_input(task: TaskDefinition, instance: dict[str, Any]) -> str:
    """Raw value for one input field; templated sentences for several."""
    for name in task.input_fields:
        if name not in instance:
            raise MissingField(f"instance lacks input field {name!r}")
    if len(task.input_fields) == 1:
        return rendered_output(instance[task.input_fields[0]])
    parts = [
        f"The {name} is {rendered_output(instance[name])}." for name in task.input_fields
    ]
    return " ".join(parts)


def render_instance(task: TaskDefinition, instance: dict[str, Any], index: int) -> InstructionInstance:
    """Build one record; raises on missing fields or an empty output value."""
    rendered = render_input(task, instance)
    output_name = task.output_field
    if output_name not in instance:
        raise MissingField(f"instance lacks output field {output_name!r}")
    output = rendered_output(instance[output_name])
    if not output:
        raise EmptyOutput(f"instance has empty value for output field {output_name!r}")
    return InstructionInstance(
        task_id=task.task_id,
        instance_index=index,
        instruction=task.instruction,
        input=rendered,
        output=output,
    )


def assemble_task_data(
    task: TaskDefinition, instances: Sequence[dict[str, Any]], cap: int = INSTANCE_CAP
) -> TaskAssembly:
    """Expand one task over its instances, up to `cap` emitted records.

    Rows that cannot render are skipped and counted by reason; they do
    not consume the cap.
    """
    if cap < 1:
        raise ValueError("cap must be >= 1")
    assembly = TaskAssembly(task_id=task.task_id)
    for instance in instances:
        if len(assembly.records) == cap:
            break
        try:
            record = render_instance(task, instance, len(assembly.records))
        except MissingField:
            assembly.skipped["missing-field"] = assembly.skipped.get("missing-field", 0) + 1
            continue
        except EmptyOutput:
            assembly.skipped["empty-output"] = assembly.skipped.get("empty-output", 0) + 1
            continue
        if not record.input:
            assembly.skipped["empty-input"] = assembly.skipped.get("empty-input", 0) + 1
            continue
        assembly.records.append(record)
    return assembly


def assemble_all(
    tasks: Sequence[TaskDefinition],
    instances_by_dataset: dict[str, Sequence[dict[str, Any]]],
    cap: int = INSTANCE_CAP,
) -> list[TaskAssembly]:
    """Assemble every task in canonical task_id order."""
    assemblies = []
    for task in sorted(tasks, key=lambda t: t.task_id):
        instances = instances_by_dataset.get(task.dataset_id, [])
        assemblies.append(assemble_task_data(task, instances, cap))
    return assemblies
