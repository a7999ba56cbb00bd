"""Pytest fixtures and reporting hooks for the pipeline suite.

Test data and plain helpers live in _support.py; only what must be a
fixture or a hook stays here.
"""

from __future__ import annotations

import json
from pathlib import Path

import pytest

from taskmint.metadata import DatasetMetadata
from taskmint.pipeline import Pipeline

from _support import (
    ACCEPTANCE_CRITERIA,
    FIXTURE_PROFILES,
    GUTENBERG_CARD,
    GUTENBERG_META,
    GUTENBERG_ROWS,
    GUTENBERG_SCHEMA,
    fixture_config,
    seed_replay_cache,
    write_dataset_dir,
)

_acceptance_outcomes: dict[str, str] = {}


def pytest_runtest_logreport(report):
    if "test_acceptance.py" not in report.nodeid:
        return
    name = report.nodeid.rsplit("::", 1)[-1]
    if name not in ACCEPTANCE_CRITERIA:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        _acceptance_outcomes[name] = report.outcome


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _acceptance_outcomes:
        return
    terminalreporter.write_sep("-", "acceptance criteria")
    for name, label in ACCEPTANCE_CRITERIA.items():
        outcome = _acceptance_outcomes.get(name)
        if outcome is None:
            continue
        verdict = "PASS" if outcome == "passed" else "FAIL"
        terminalreporter.write_line(f"[{verdict}] {label}")


@pytest.fixture
def gutenberg_source(tmp_path: Path) -> Path:
    root = tmp_path / "datasets"
    write_dataset_dir(root, "gutenberg_english", GUTENBERG_CARD, GUTENBERG_SCHEMA, GUTENBERG_ROWS)
    return root


@pytest.fixture
def fixture_pipeline(tmp_path: Path, gutenberg_source: Path) -> Pipeline:
    """A pipeline over the ebook fixture with a seeded replay cache."""
    cache_path = tmp_path / "exchanges.jsonl"
    profiles_path = tmp_path / "profiles.json"
    profiles_path.write_text(json.dumps(FIXTURE_PROFILES), encoding="utf-8")
    config = fixture_config(gutenberg_source, tmp_path / "runs", cache_path, profiles_path)
    seed_replay_cache(config, cache_path)
    return Pipeline(config)


@pytest.fixture
def gutenberg_meta() -> DatasetMetadata:
    return GUTENBERG_META
