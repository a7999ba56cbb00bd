from __future__ import annotations

import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from taskmint.errors import EmptySchema, InvalidArgument, TransportError
from taskmint.llm import LlmParams, StaticLlmClient
from taskmint.taskgen import (
    LlmExchange,
    TaskDefinition,
    build_prompt,
    classify_task_category,
    estimate_cost,
    generate_tasks,
    load_categories,
    load_demos,
    match_category,
)

PARAMS = LlmParams(max_retries=2, backoff_base=0.0)


def make_task(instruction: str = "Write a title for the text.") -> TaskDefinition:
    return TaskDefinition(
        task_id="d-aware-0-task1",
        dataset_id="d",
        instruction=instruction,
        input_fields=["text"],
        output_fields=["title"],
        mode="aware",
    )


class TestBuildPrompt:
    def test_aware_contains_summary(self, gutenberg_meta):
        prompt = build_prompt(gutenberg_meta, "aware", load_demos(), 0)
        assert "'summary'" in prompt.text
        assert "A collection of public-domain English ebooks" in prompt.text
        assert prompt.text.endswith("Tasks:")
        assert "['title', 'text', 'author', 'subjects', 'issued']" in prompt.text

    def test_unaware_has_no_summary_anywhere(self, gutenberg_meta):
        prompt = build_prompt(gutenberg_meta, "unaware", load_demos(), 0)
        assert "'summary'" not in prompt.text

    def test_exactly_two_demos(self, gutenberg_meta):
        prompt = build_prompt(gutenberg_meta, "aware", load_demos(), 0)
        assert len(prompt.demo_ids) == 2
        assert prompt.text.count("Example 1:") == 1
        assert prompt.text.count("Example 2:") == 1
        assert "Example 3:" not in prompt.text

    def test_demo_rotation_by_call_index(self, gutenberg_meta):
        demos = load_demos()
        first = build_prompt(gutenberg_meta, "aware", demos, 0)
        second = build_prompt(gutenberg_meta, "aware", demos, 1)
        third = build_prompt(gutenberg_meta, "aware", demos, 2)
        assert first.demo_ids != second.demo_ids
        assert first.demo_ids == third.demo_ids

    def test_deterministic(self, gutenberg_meta):
        demos = load_demos()
        assert build_prompt(gutenberg_meta, "aware", demos, 0).text == build_prompt(
            gutenberg_meta, "aware", demos, 0
        ).text

    def test_empty_fields_rejected(self, gutenberg_meta):
        from dataclasses import replace

        with pytest.raises(EmptySchema):
            build_prompt(replace(gutenberg_meta, data_fields=[]), "aware", load_demos(), 0)

    def test_long_values_truncated(self, gutenberg_meta):
        from dataclasses import replace

        meta = replace(
            gutenberg_meta,
            sample_instances=[dict(gutenberg_meta.sample_instances[0], text="x" * 2000)],
        )
        prompt = build_prompt(meta, "aware", load_demos(), 0, truncate_value_chars=100)
        assert "x" * 101 not in prompt.text
        assert "x" * 100 + " ..." in prompt.text


class TestGenerateTasks:
    def test_replays_canned_response(self, gutenberg_meta):
        prompt = build_prompt(gutenberg_meta, "aware", load_demos(), 0)
        client = StaticLlmClient(by_prompt={prompt.text: "{'task1': {}}"}, usage=(812, 301))
        exchange = generate_tasks(prompt, client, PARAMS)
        assert exchange.raw_response == "{'task1': {}}"
        assert (exchange.prompt_tokens, exchange.completion_tokens) == (812, 301)
        assert exchange.model_tag == PARAMS.model_tag

    def test_retries_then_succeeds(self, gutenberg_meta):
        prompt = build_prompt(gutenberg_meta, "aware", load_demos(), 0)
        client = StaticLlmClient(script=["{'task1': {}}"], fail_times=2)
        exchange = generate_tasks(prompt, client, PARAMS)
        assert exchange.raw_response == "{'task1': {}}"
        assert client.calls == 3

    def test_exhausted_retries_raise(self, gutenberg_meta):
        prompt = build_prompt(gutenberg_meta, "aware", load_demos(), 0)
        client = StaticLlmClient(script=["{'task1': {}}"], fail_times=3)
        with pytest.raises(TransportError):
            generate_tasks(prompt, client, PARAMS)
        assert client.calls == 3


class TestClassifyCategory:
    def test_exact_reply_matches(self):
        client = StaticLlmClient(script=["Title Generation"])
        got = classify_task_category(make_task(), load_categories(), client, PARAMS)
        assert got == "Title Generation"

    def test_normalizes_case_and_punctuation(self):
        assert match_category("title generation.", load_categories()) == "Title Generation"

    def test_close_reply_fuzzy_matched(self):
        assert match_category("Title Generaton", load_categories()) == "Title Generation"

    def test_unmatched_reply_is_unknown(self):
        assert match_category("underwater basket weaving", load_categories()) == "Unknown"

    def test_empty_categories_rejected(self):
        client = StaticLlmClient(script=["x"])
        with pytest.raises(InvalidArgument):
            classify_task_category(make_task(), [], client, PARAMS)


def exchange(pt: int, ct: int) -> LlmExchange:
    return LlmExchange(
        prompt="p", raw_response="r", prompt_tokens=pt, completion_tokens=ct, model_tag="m"
    )


class TestEstimateCost:
    def test_single_exchange_arithmetic(self):
        est = estimate_cost(
            [exchange(1000, 500)], input_per_1k=0.0015, output_per_1k=0.002, valid_tasks=1
        )
        assert est.total == pytest.approx(0.0025, abs=1e-12)

    def test_zero_exchanges(self):
        est = estimate_cost([], input_per_1k=0.0015, output_per_1k=0.002, valid_tasks=0)
        assert est.total == 0.0
        assert est.per_task_average is None

    def test_average_over_valid_tasks(self):
        est = estimate_cost(
            [exchange(800, 400)] * 10, input_per_1k=0.0015, output_per_1k=0.002, valid_tasks=5
        )
        assert est.per_task_average == pytest.approx(est.total / 5)

    def test_negative_rates_rejected(self):
        with pytest.raises(InvalidArgument):
            estimate_cost([], input_per_1k=-1, output_per_1k=0, valid_tasks=0)

    @given(
        st.lists(st.tuples(st.integers(0, 5000), st.integers(0, 5000)), max_size=40),
        st.lists(st.tuples(st.integers(0, 5000), st.integers(0, 5000)), max_size=40),
    )
    @settings(max_examples=60)
    def test_linearity(self, a, b):
        kwargs = dict(input_per_1k=0.0015, output_per_1k=0.002, valid_tasks=1)
        total_a = estimate_cost([exchange(*pair) for pair in a], **kwargs).total
        total_b = estimate_cost([exchange(*pair) for pair in b], **kwargs).total
        total_ab = estimate_cost([exchange(*pair) for pair in a + b], **kwargs).total
        assert math.isclose(total_ab, total_a + total_b, rel_tol=0, abs_tol=1e-9)
