"""Prompt construction, LLM dispatch, response parsing, and cost math.

Prompts follow a fixed skeleton: a header, two worked demonstrations,
the target dataset rendered as a dictionary (with its summary only in
description-aware mode), a field constraint sentence, and a trailing
"Tasks:" cue. Responses come back as dictionary-of-tasks text.
"""

from __future__ import annotations

import difflib
import json
import logging
import math
import time
from dataclasses import dataclass, field
from importlib import resources
from typing import Any, Sequence

from .errors import EmptyResponse, EmptySchema, InvalidArgument, TransportError
from .llm import LlmClient, LlmParams
from .looseparse import ParseIssue, parse_loose_dict
from .metadata import DatasetMetadata

logger = logging.getLogger(__name__)

PROMPT_HEADER = (
    "Given a dictionary containing a dataset description and a few examples, "
    "our goal is to design up to three different tasks based on this dataset. "
    "Each task should still be a dictionary, including the instruction, input "
    "fields and one output field. The following are two examples."
)

PROMPT_REQUEST = (
    "Now given a dictionary as input, please help us to generate new tasks. "
    "You may stop when there is no more plausible task."
)

PROMPT_CONSTRAINT = (
    "Note that the input and output fields should not be duplicated and should "
    "both appear in {fields}. Each task should still be a dictionary, "
    "containing no text or explanations outside the dictionary."
)

UNKNOWN_CATEGORY = "Unknown"


@dataclass
class GenerationPrompt:
    """One fully rendered prompt for one dataset and mode."""

    dataset_id: str
    mode: str
    demo_ids: tuple[str, str]
    text: str


@dataclass
class LlmExchange:
    """One prompt/response round trip with its token usage."""

    prompt: str
    raw_response: str
    prompt_tokens: int
    completion_tokens: int
    model_tag: str
    wall_time: float = 0.0

    def usage_record(self, **extra: Any) -> dict[str, Any]:
        """Usage log line; wall time stays out so artifacts are stable."""
        from .io import sha256_text

        record: dict[str, Any] = dict(extra)
        record.update(
            {
                "prompt_sha256": sha256_text(self.prompt),
                "prompt_tokens": self.prompt_tokens,
                "completion_tokens": self.completion_tokens,
                "model_tag": self.model_tag,
            }
        )
        return record


@dataclass
class TaskDefinition:
    """One generated task; output_fields keeps every parsed output name

    so downstream validation can reject multi-output candidates itself.
    """

    task_id: str
    dataset_id: str
    instruction: str
    input_fields: list[str]
    output_fields: list[str]
    mode: str
    is_classification: bool = False
    label_space: list[str] | None = None
    status: str = "candidate"
    reject_reason: str | None = None
    category: str | None = None

    @property
    def output_field(self) -> str:
        if len(self.output_fields) != 1:
            raise ValueError(f"task {self.task_id!r} has {len(self.output_fields)} output fields")
        return self.output_fields[0]

    def to_record(self) -> dict[str, Any]:
        return {
            "task_id": self.task_id,
            "dataset_id": self.dataset_id,
            "instruction": self.instruction,
            "input_fields": list(self.input_fields),
            "output_fields": list(self.output_fields),
            "mode": self.mode,
            "is_classification": self.is_classification,
            "label_space": list(self.label_space) if self.label_space is not None else None,
            "status": self.status,
            "reject_reason": self.reject_reason,
            "category": self.category,
        }

    @classmethod
    def from_record(cls, record: dict[str, Any]) -> "TaskDefinition":
        return cls(
            task_id=record["task_id"],
            dataset_id=record["dataset_id"],
            instruction=record["instruction"],
            input_fields=list(record["input_fields"]),
            output_fields=list(record["output_fields"]),
            mode=record["mode"],
            is_classification=record.get("is_classification", False),
            label_space=list(record["label_space"]) if record.get("label_space") is not None else None,
            status=record.get("status", "candidate"),
            reject_reason=record.get("reject_reason"),
            category=record.get("category"),
        )


@dataclass
class CostEstimate:
    """Money totals over a batch of exchanges."""

    total: float
    per_task_average: float | None
    prompt_tokens: int
    completion_tokens: int
    valid_tasks: int


# --- prompt rendering -------------------------------------------------------


def load_demos() -> list[dict[str, Any]]:
    """Load the bundled demonstration library (four worked examples)."""
    text = resources.files("taskmint.data").joinpath("demos.json").read_text(encoding="utf-8")
    return json.loads(text)


def load_categories() -> list[str]:
    """Load the bundled task-category name list."""
    text = resources.files("taskmint.data").joinpath("superni_categories.json").read_text(encoding="utf-8")
    return json.loads(text)


def load_classifier_examples() -> list[dict[str, str]]:
    """Load the in-context examples used by the category classifier."""
    text = resources.files("taskmint.data").joinpath("classifier_examples.json").read_text(encoding="utf-8")
    return json.loads(text)


def _quote(value: str, limit: int) -> str:
    if limit > 0 and len(value) > limit:
        value = value[:limit].rstrip() + " ..."
    value = value.replace("\\", "\\\\").replace("\n", "\\n").replace("\r", "")
    return f"'{value}'"


def _flatten(value: Any) -> str:
    if isinstance(value, list):
        return ", ".join(str(item) for item in value)
    return str(value)


def _render_row(row: dict[str, Any], limit: int) -> str:
    parts = [f"'{name}': {_quote(_flatten(value), limit)}" for name, value in row.items()]
    return "{" + ", ".join(parts) + "}"


def _render_input_dict(
    task_name: str,
    rows: Sequence[dict[str, Any]],
    summary: str | None,
    limit: int,
) -> str:
    lines = [f"{{'task_name': {_quote(task_name, 0)},", " 'selected_data':"]
    if rows:
        row_lines = []
        for i, row in enumerate(rows):
            prefix = " [" if i == 0 else "  "
            row_lines.append(prefix + _render_row(row, limit))
        body = ",\n".join(row_lines) + "]"
    else:
        body = " []"
    if summary is None:
        lines.append(body + "}")
    else:
        lines.append(body + ",")
        lines.append(f" 'summary': {_quote(summary, 0)}}}")
    return "\n".join(lines)


def _render_tasks_dict(tasks: dict[str, dict[str, Any]], limit: int) -> str:
    lines = []
    keys = list(tasks)
    for i, key in enumerate(keys):
        task = tasks[key]
        fields = ", ".join(f"'{name}'" for name in task["input_fields"])
        outputs = task["output_field"]
        if isinstance(outputs, str):
            outputs = [outputs]
        out = ", ".join(f"'{name}'" for name in outputs)
        entry = (
            f"'{key}': {{'instruction': {_quote(task['instruction'], limit)}, "
            f"'input_fields': [{fields}], 'output_field': [{out}]}}"
        )
        prefix = "{" if i == 0 else " "
        suffix = "}" if i == len(keys) - 1 else ","
        lines.append(prefix + entry + suffix)
    return "\n".join(lines)


def _demo_block(number: int, demo: dict[str, Any], mode: str, limit: int) -> str:
    demo_input = demo["input"]
    summary = demo_input.get("summary") if mode == "aware" else None
    rendered_input = _render_input_dict(
        demo_input["task_name"], demo_input["selected_data"], summary, limit
    )
    rendered_tasks = _render_tasks_dict(demo["tasks"], limit)
    return f"Example {number}:\nInput:\n{rendered_input}\n\nTasks:\n{rendered_tasks}"


def build_prompt(
    meta: DatasetMetadata,
    mode: str,
    demos: Sequence[dict[str, Any]],
    call_index: int,
    *,
    rows_in_prompt: int = 2,
    truncate_value_chars: int = 500,
) -> GenerationPrompt:
    """Render the full generation prompt for one dataset.

    Demonstrations come in fixed consecutive pairs; the pair for a call is
    picked round-robin by call_index so repeated calls rotate through them.
    """
    if mode not in ("aware", "unaware"):
        raise InvalidArgument(f"unknown generation mode {mode!r}")
    if not meta.data_fields:
        raise EmptySchema(f"dataset {meta.dataset_id!r} has no data fields")
    if len(demos) < 2:
        raise InvalidArgument("demo library must hold at least one pair")
    n_pairs = len(demos) // 2
    pair_index = call_index % n_pairs
    first, second = demos[2 * pair_index], demos[2 * pair_index + 1]

    rows = meta.sample_instances[:rows_in_prompt]
    summary = (meta.description or "") if mode == "aware" else None
    target = _render_input_dict(meta.name, rows, summary, truncate_value_chars)
    field_list = "[" + ", ".join(f"'{name}'" for name in meta.data_fields) + "]"

    parts = [
        PROMPT_HEADER,
        "",
        _demo_block(1, first, mode, truncate_value_chars),
        "",
        _demo_block(2, second, mode, truncate_value_chars),
        "",
        PROMPT_REQUEST,
        "",
        "Input:",
        target,
        "",
        PROMPT_CONSTRAINT.format(fields=field_list),
        "",
        "Tasks:",
    ]
    return GenerationPrompt(
        dataset_id=meta.dataset_id,
        mode=mode,
        demo_ids=(first["demo_id"], second["demo_id"]),
        text="\n".join(parts),
    )


# --- LLM dispatch -----------------------------------------------------------


def _call_with_retry(client: LlmClient, prompt_text: str, params: LlmParams) -> tuple[str, tuple[int, int], float]:
    attempts = params.max_retries + 1
    last: TransportError | None = None
    for attempt in range(attempts):
        started = time.perf_counter()
        try:
            text, usage = client.complete(prompt_text, params)
            return text, usage, time.perf_counter() - started
        except TransportError as exc:
            last = exc
            if attempt + 1 < attempts and params.backoff_base > 0:
                time.sleep(params.backoff_base * (2**attempt))
    raise TransportError(f"gave up after {attempts} attempts: {last}") from last


def generate_tasks(prompt: GenerationPrompt, client: LlmClient, params: LlmParams) -> LlmExchange:
    """Send one generation prompt, retrying transient transport failures."""
    text, (prompt_tokens, completion_tokens), elapsed = _call_with_retry(client, prompt.text, params)
    if not text.strip():
        raise EmptyResponse(f"empty completion for dataset {prompt.dataset_id!r}")
    return LlmExchange(
        prompt=prompt.text,
        raw_response=text,
        prompt_tokens=prompt_tokens,
        completion_tokens=completion_tokens,
        model_tag=params.model_tag,
        wall_time=elapsed,
    )


# --- response parsing -------------------------------------------------------


def parse_task_response(
    raw: str,
    *,
    dataset_id: str = "",
    mode: str = "unaware",
    call_index: int = 0,
) -> tuple[list[TaskDefinition], list[ParseIssue]]:
    """Read the dictionary-of-tasks response into candidate definitions.

    Malformed entries become ParseIssues; well-formed siblings survive.
    Never raises on response content.
    """
    entries, issues = parse_loose_dict(raw)
    candidates: list[TaskDefinition] = []
    for key, value in entries.items():
        if not isinstance(value, dict):
            issues.append(ParseIssue(key, "not-a-dict", f"entry value is {type(value).__name__}"))
            continue
        instruction = value.get("instruction")
        if not isinstance(instruction, str) or not instruction.strip():
            issues.append(ParseIssue(key, "bad-instruction", "missing or empty instruction"))
            continue
        input_fields = value.get("input_fields")
        if not isinstance(input_fields, list) or any(not isinstance(f, str) for f in input_fields):
            issues.append(ParseIssue(key, "bad-fields", "input_fields is not a list of names"))
            continue
        outputs = value.get("output_field", value.get("output_fields"))
        if isinstance(outputs, str):
            outputs = [outputs]
        if not isinstance(outputs, list) or not outputs or any(not isinstance(f, str) for f in outputs):
            issues.append(ParseIssue(key, "bad-output", "output_field is not a name or list of names"))
            continue
        prefix = f"{dataset_id}-" if dataset_id else ""
        candidates.append(
            TaskDefinition(
                task_id=f"{prefix}{mode}-{call_index}-{key}",
                dataset_id=dataset_id,
                instruction=instruction.strip(),
                input_fields=list(input_fields),
                output_fields=list(outputs),
                mode=mode,
            )
        )
    return candidates, issues


# --- task category classification -------------------------------------------


def classify_task_category(
    task: TaskDefinition,
    categories: Sequence[str],
    client: LlmClient,
    params: LlmParams,
    *,
    examples: Sequence[dict[str, str]] | None = None,
) -> str:
    """Ask the model for a category, then snap the reply onto the list.

    Replies that match nothing closely enough map to the "Unknown"
    sentinel rather than inventing a category.
    """
    if not categories:
        raise InvalidArgument("category list must be non-empty")
    if examples is None:
        examples = load_classifier_examples()
    lines = [
        "Classify the instruction into exactly one of the task categories below.",
        "Answer with the category name only.",
        "",
        "Categories: " + "; ".join(categories),
        "",
    ]
    for example in examples:
        lines.append(f"Instruction: {example['instruction']}")
        lines.append(f"Category: {example['category']}")
        lines.append("")
    lines.append(f"Instruction: {task.instruction}")
    lines.append("Category:")
    prompt_text = "\n".join(lines)
    reply, _, _ = _call_with_retry(client, prompt_text, params)
    return match_category(reply, categories)


def match_category(reply: str, categories: Sequence[str]) -> str:
    """Normalize a free-text reply onto the closest listed category name."""
    if not categories:
        raise InvalidArgument("category list must be non-empty")
    cleaned = reply.strip().splitlines()[0].strip() if reply.strip() else ""
    cleaned = cleaned.strip(" .\"'")
    if not cleaned:
        return UNKNOWN_CATEGORY
    by_lower = {name.lower(): name for name in categories}
    if cleaned.lower() in by_lower:
        return by_lower[cleaned.lower()]
    close = difflib.get_close_matches(cleaned.lower(), list(by_lower), n=1, cutoff=0.6)
    if close:
        return by_lower[close[0]]
    return UNKNOWN_CATEGORY


# --- cost accounting ---------------------------------------------------------


def estimate_cost(
    exchanges: Sequence[LlmExchange] | Sequence[dict[str, Any]],
    *,
    input_per_1k: float,
    output_per_1k: float,
    valid_tasks: int,
) -> CostEstimate:
    """Money total over exchanges plus the per-valid-task average.

    The average is absent (None) when there are no valid tasks to divide by.
    """
    if input_per_1k < 0 or output_per_1k < 0:
        raise InvalidArgument("token rates must be non-negative")
    costs: list[float] = []
    prompt_total = 0
    completion_total = 0
    for exchange in exchanges:
        if isinstance(exchange, dict):
            pt, ct = int(exchange["prompt_tokens"]), int(exchange["completion_tokens"])
        else:
            pt, ct = exchange.prompt_tokens, exchange.completion_tokens
        prompt_total += pt
        completion_total += ct
        costs.append(pt / 1000.0 * input_per_1k + ct / 1000.0 * output_per_1k)
    total = math.fsum(costs)
    average = total / valid_tasks if valid_tasks > 0 else None
    return CostEstimate(
        total=total,
        per_task_average=average,
        prompt_tokens=prompt_total,
        completion_tokens=completion_total,
        valid_tasks=valid_tasks,
    )
