"""Evaluation-oriented subset construction.

Three selection mechanisms: quota/cap sampling over task categories,
output-length filtering, and fusing short inputs into the instruction to
mimic user-written prompts.
"""

from __future__ import annotations

import json
import logging
import random
from dataclasses import dataclass, field
from importlib import resources
from typing import Any, Sequence

from .assemble import InstructionInstance
from .errors import EmptyResponse, TransportError
from .llm import LlmClient, LlmParams
from .taskgen import TaskDefinition, _call_with_retry

logger = logging.getLogger(__name__)

# Categories treated as programming-language tasks; the concept is fixed,
# the membership is configurable.
PROGRAMMING_CATEGORIES = frozenset(
    {"Text to Code", "Code to Text", "Program Execution", "Code Generation", "Code Completion"}
)

FUSION_INPUT_LIMIT = 50

FUSION_PROMPT_HEADER = "We plan to infuse the text inputs into the user instructions. Here're two examples:"

FUSION_DEMOS = (
    (
        "Given a sentiment label, generate a movie review.",
        "positive",
        "Generate a positive movie review.",
    ),
    (
        "Give some examples of what people usually say in the given social situation.",
        "when someone arrives safely",
        "Give some examples of what people usually say when someone arrives safely.",
    ),
)

FUSION_REQUEST = "Now please do the same thing for new instruction data:"


@dataclass
class SamplingProfile:
    """Named recipe for drawing an evaluation subset."""

    name: str
    total_tasks: int
    classification_quota: int = 0
    per_source_caps: dict[str, int] = field(default_factory=dict)
    excluded_categories: set[str] = field(default_factory=set)
    min_avg_output_words: int | None = None
    discard_programming: bool = False
    seed: int = 0
    instances_per_task: int | None = None
    fuse_short_inputs: bool = False

    def __post_init__(self) -> None:
        if self.classification_quota > self.total_tasks:
            raise ValueError("classification quota cannot exceed total tasks")
        if any(cap < 0 for cap in self.per_source_caps.values()):
            raise ValueError("per-source caps must be non-negative")

    @classmethod
    def from_record(cls, name: str, record: dict[str, Any]) -> "SamplingProfile":
        return cls(
            name=name,
            total_tasks=record["total_tasks"],
            classification_quota=record.get("classification_quota", 0),
            per_source_caps=dict(record.get("per_source_caps", {})),
            excluded_categories=set(record.get("excluded_categories", [])),
            min_avg_output_words=record.get("min_avg_output_words"),
            discard_programming=record.get("discard_programming", False),
            seed=record.get("seed", 0),
            instances_per_task=record.get("instances_per_task"),
            fuse_short_inputs=record.get("fuse_short_inputs", False),
        )


def load_profiles() -> dict[str, SamplingProfile]:
    """Load the bundled named profiles."""
    text = resources.files("taskmint.data").joinpath("profiles.json").read_text(encoding="utf-8")
    raw = json.loads(text)
    return {name: SamplingProfile.from_record(name, record) for name, record in raw.items()}


def task_source(task: TaskDefinition) -> str:
    """Source collection of a task: the dataset id's leading path segment."""
    return task.dataset_id.split("/", 1)[0]


def sample_eval_subset(
    tasks: Sequence[TaskDefinition],
    categories: dict[str, str],
    profile: SamplingProfile,
    *,
    programming_categories: frozenset[str] | set[str] = PROGRAMMING_CATEGORIES,
) -> list[TaskDefinition]:
    """Draw a capped, quota-respecting subset, deterministic in the seed.

    Classification tasks fill their quota first, generation tasks fill
    the remainder, and leftover classification tasks top the subset up
    when generation supply runs short. Per-source caps bind throughout.
    """
    eligible = []
    for task in tasks:
        category = categories.get(task.task_id, task.category or "Unknown")
        if category in profile.excluded_categories:
            continue
        if profile.discard_programming and category in programming_categories:
            continue
        eligible.append(task)

    rng = random.Random(profile.seed)
    classification = sorted((t for t in eligible if t.is_classification), key=lambda t: t.task_id)
    generation = sorted((t for t in eligible if not t.is_classification), key=lambda t: t.task_id)
    rng.shuffle(classification)
    rng.shuffle(generation)

    source_counts: dict[str, int] = {}
    selected: list[TaskDefinition] = []

    def take(pool: list[TaskDefinition], want: int) -> list[TaskDefinition]:
        taken: list[TaskDefinition] = []
        remaining: list[TaskDefinition] = []
        for task in pool:
            if len(taken) >= want:
                remaining.append(task)
                continue
            source = task_source(task)
            cap = profile.per_source_caps.get(source)
            if cap is not None and source_counts.get(source, 0) >= cap:
                remaining.append(task)
                continue
            source_counts[source] = source_counts.get(source, 0) + 1
            taken.append(task)
        pool[:] = remaining
        return taken

    quota_hits = take(classification, min(profile.classification_quota, profile.total_tasks))
    if len(quota_hits) < profile.classification_quota:
        logger.warning(
            "profile %s: classification quota %d unmet, only %d eligible",
            profile.name,
            profile.classification_quota,
            len(quota_hits),
        )
    selected.extend(quota_hits)
    selected.extend(take(generation, profile.total_tasks - len(selected)))
    if len(selected) < profile.total_tasks:
        selected.extend(take(classification, profile.total_tasks - len(selected)))
    if len(selected) < profile.total_tasks:
        logger.warning(
            "profile %s: requested %d tasks, only %d available under caps",
            profile.name,
            profile.total_tasks,
            len(selected),
        )
    return sorted(selected, key=lambda t: t.task_id)


def mean_output_words(records: Sequence[InstructionInstance]) -> float:
    """Mean whitespace-delimited token count over record outputs."""
    if not records:
        return 0.0
    return sum(len(record.output.split()) for record in records) / len(records)


def filter_long_output(
    task_records: Sequence[tuple[TaskDefinition, Sequence[InstructionInstance]]],
    min_avg_words: int,
) -> list[TaskDefinition]:
    """Keep tasks whose mean output length strictly exceeds the threshold."""
    kept = []
    for task, records in task_records:
        if mean_output_words(list(records)) > min_avg_words:
            kept.append(task)
    return kept


def build_fusion_prompt(instruction: str, input_text: str) -> str:
    lines = [FUSION_PROMPT_HEADER, ""]
    for demo_instruction, demo_input, demo_fused in FUSION_DEMOS:
        lines.append(f"Instruction: {demo_instruction}")
        lines.append(f"Input: {demo_input}")
        lines.append(f"New Instruction: {demo_fused}")
        lines.append("")
    lines.append(FUSION_REQUEST)
    lines.append("")
    lines.append(f"Instruction: {instruction}")
    lines.append(f"Input: {input_text}")
    lines.append("New Instruction:")
    return "\n".join(lines)


def integrate_instruction_input(
    record: InstructionInstance,
    client: LlmClient,
    params: LlmParams,
    *,
    input_limit: int = FUSION_INPUT_LIMIT,
) -> InstructionInstance:
    """Fold a short input into the instruction via the fusion prompt.

    Records with long inputs pass through unchanged, as does anything the
    model fails on: fusion is best-effort styling, not a filter.
    """
    if len(record.input) >= input_limit:
        return record
    prompt = build_fusion_prompt(record.instruction, record.input)
    try:
        reply, _, _ = _call_with_retry(client, prompt, params)
    except (TransportError, EmptyResponse) as exc:
        logger.warning("fusion failed for task %s: %s", record.task_id, exc)
        return record
    fused = reply.strip().splitlines()[0].strip() if reply.strip() else ""
    if not fused:
        logger.warning("fusion returned nothing for task %s", record.task_id)
        return record
    return InstructionInstance(
        task_id=record.task_id,
        instance_index=record.instance_index,
        instruction=fused,
        input="",
        output=record.output,
    )
