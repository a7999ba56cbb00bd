from __future__ import annotations

import json
from dataclasses import replace
from pathlib import Path

import pytest

from taskmint.cli import main
from taskmint.errors import DependencyError, EmptyRun, InvalidArgument, StaleRun
from taskmint.io import read_json, read_jsonl, sha256_file
from taskmint.pipeline import STEP_DEPS, Pipeline

from _support import FIXTURE_PROFILES, fixture_config, seed_replay_cache

ALL_STEPS = list(STEP_DEPS)


def run_all(pipeline: Pipeline) -> None:
    for step in ALL_STEPS:
        pipeline.run_step(step)


class TestStepGraph:
    def test_full_run_produces_expected_artifacts(self, fixture_pipeline):
        run_all(fixture_pipeline)
        run_dir = fixture_pipeline.run_dir
        metas = list(read_jsonl(run_dir / "metadata.jsonl"))
        assert len(metas) == 1
        assert metas[0]["dataset_id"] == "gutenberg_english"
        assert "id" not in metas[0]["data_fields"]

        raw = list(read_jsonl(run_dir / "tasks_raw.jsonl"))
        assert len(raw) == 3

        valid = list(read_jsonl(run_dir / "tasks_valid.jsonl"))
        rejected = list(read_jsonl(run_dir / "tasks_rejected.jsonl"))
        assert len(valid) == 2
        assert len(rejected) == 1
        assert rejected[0]["reject_reason"] == "unknown-field"

        data = list(read_jsonl(run_dir / "data.jsonl"))
        assert len(data) == 6

        plan = read_json(run_dir / "stage_plan.json")
        assert len(plan["stages"]) == 2
        assert plan["stages"][0]["replay_task_ids"] == []
        assert len(plan["stages"][1]["replay_task_ids"]) == 1

        cost = read_json(run_dir / "cost.json")
        assert cost["prompt_tokens"] == 812
        assert cost["completion_tokens"] == 301

    def test_dependency_enforced(self, fixture_pipeline):
        with pytest.raises(DependencyError):
            fixture_pipeline.run_step("generate")

    def test_later_step_requires_all_upstream(self, fixture_pipeline):
        fixture_pipeline.run_step("harvest")
        with pytest.raises(DependencyError):
            fixture_pipeline.run_step("validate")

    def test_unknown_step_rejected(self, fixture_pipeline):
        with pytest.raises(InvalidArgument):
            fixture_pipeline.run_step("polish")

    def test_rerun_is_noop(self, fixture_pipeline):
        run_all(fixture_pipeline)
        paths = sorted(p for p in fixture_pipeline.run_dir.iterdir() if p.suffix != ".json" or True)
        before = {p.name: sha256_file(p) for p in paths if p.is_file()}
        mtimes = {p.name: p.stat().st_mtime_ns for p in paths if p.is_file()}
        run_all(fixture_pipeline)
        after = {p.name: sha256_file(p) for p in paths if p.is_file()}
        assert before == after
        unchanged = {
            p.name: p.stat().st_mtime_ns for p in paths if p.is_file() and p.name != "manifest.json"
        }
        assert unchanged == {k: v for k, v in mtimes.items() if k != "manifest.json"}

    def test_force_rewrites_artifacts(self, fixture_pipeline):
        fixture_pipeline.run_step("harvest")
        target = fixture_pipeline.run_dir / "metadata.jsonl"
        first_mtime = target.stat().st_mtime_ns
        fixture_pipeline.run_step("harvest", force=True)
        assert target.stat().st_mtime_ns >= first_mtime
        manifest = fixture_pipeline.load_manifest()
        assert fixture_pipeline.step_complete(manifest, "harvest")

    def test_damaged_artifact_detected(self, fixture_pipeline):
        fixture_pipeline.run_step("harvest")
        target = fixture_pipeline.run_dir / "metadata.jsonl"
        target.write_text("tampered\n", encoding="utf-8")
        manifest = fixture_pipeline.load_manifest()
        assert not fixture_pipeline.step_complete(manifest, "harvest")

    def test_stale_run_detected(self, tmp_path, gutenberg_source):
        cache = tmp_path / "exchanges.jsonl"
        profiles = tmp_path / "profiles.json"
        profiles.write_text(json.dumps(FIXTURE_PROFILES), encoding="utf-8")
        config = fixture_config(gutenberg_source, tmp_path / "runs", cache, profiles)
        config = replace(config, run_id="pinned")
        seed_replay_cache(config, cache)
        Pipeline(config).run_step("harvest")

        changed = replace(config, seed=config.seed + 1)
        with pytest.raises(StaleRun):
            Pipeline(changed).run_step("harvest")

    def test_distinct_configs_use_distinct_run_dirs(self, tmp_path, gutenberg_source):
        cache = tmp_path / "exchanges.jsonl"
        profiles = tmp_path / "profiles.json"
        profiles.write_text(json.dumps(FIXTURE_PROFILES), encoding="utf-8")
        a = fixture_config(gutenberg_source, tmp_path / "runs", cache, profiles, seed=1)
        b = fixture_config(gutenberg_source, tmp_path / "runs", cache, profiles, seed=2)
        assert Pipeline(a).run_dir != Pipeline(b).run_dir


class TestReport:
    def test_full_report_line(self, fixture_pipeline):
        run_all(fixture_pipeline)
        line = fixture_pipeline.report()
        assert line == (
            "1 dataset, 3 generated, 2 valid, 1 rejected(unknown-field), "
            "6 instances, 2 sampled(fixture), 2 stages(instr-diverse), cost $0.00"
        )

    def test_partial_report_only_covers_finished_steps(self, fixture_pipeline):
        fixture_pipeline.run_step("harvest")
        assert fixture_pipeline.report() == "1 dataset"

    def test_empty_run_rejected(self, fixture_pipeline):
        with pytest.raises(EmptyRun):
            fixture_pipeline.report()


class TestSampleStep:
    def test_subset_respects_instances_per_task(self, fixture_pipeline):
        run_all(fixture_pipeline)
        subset = list(read_jsonl(fixture_pipeline.run_dir / "subset.jsonl"))
        report = read_json(fixture_pipeline.run_dir / "sample_report.json")
        assert report["profile"] == "fixture"
        assert report["task_count"] == 2
        # 2 tasks, capped at 2 instances apiece by the fixture profile.
        assert len(subset) == 4
        per_task: dict[str, int] = {}
        for record in subset:
            per_task[record["task_id"]] = per_task.get(record["task_id"], 0) + 1
        assert all(count == 2 for count in per_task.values())


def write_cli_config(path: Path, config) -> Path:
    path.write_text(json.dumps(config.to_dict()), encoding="utf-8")
    return path


class TestCli:
    @pytest.fixture
    def cli_config(self, tmp_path, gutenberg_source):
        cache = tmp_path / "exchanges.jsonl"
        profiles = tmp_path / "profiles.json"
        profiles.write_text(json.dumps(FIXTURE_PROFILES), encoding="utf-8")
        config = fixture_config(gutenberg_source, tmp_path / "runs", cache, profiles)
        seed_replay_cache(config, cache)
        return write_cli_config(tmp_path / "config.json", config)

    def test_success_exit_zero(self, cli_config, capsys):
        assert main(["--config", str(cli_config), "harvest"]) == 0
        assert "harvest: done" in capsys.readouterr().out

    def test_full_cli_run(self, cli_config, capsys):
        for step in ["harvest", "generate", "validate", "assemble", "sample", "plan-replay", "cost"]:
            assert main(["--config", str(cli_config), step]) == 0, step
        assert main(["--config", str(cli_config), "report"]) == 0
        out = capsys.readouterr().out
        assert "2 valid" in out and "cost $0.00" in out

    def test_usage_error_exit_one(self, cli_config):
        assert main(["--config", str(cli_config), "no-such-command"]) == 1

    def test_dependency_error_exit_two(self, cli_config):
        assert main(["--config", str(cli_config), "validate"]) == 2

    def test_missing_config_exit_two(self, tmp_path):
        assert main(["--config", str(tmp_path / "nope.json"), "harvest"]) == 2

    def test_transport_error_exit_three(self, tmp_path, gutenberg_source):
        empty_cache = tmp_path / "empty_exchanges.jsonl"
        empty_cache.write_text("", encoding="utf-8")
        profiles = tmp_path / "profiles.json"
        profiles.write_text(json.dumps(FIXTURE_PROFILES), encoding="utf-8")
        config = fixture_config(gutenberg_source, tmp_path / "runs", empty_cache, profiles)
        path = write_cli_config(tmp_path / "config.json", config)
        assert main(["--config", str(path), "harvest"]) == 0
        assert main(["--config", str(path), "generate"]) == 3

    def test_seed_override_changes_run_id(self, cli_config, capsys):
        assert main(["--config", str(cli_config), "harvest"]) == 0
        first = capsys.readouterr().out
        assert main(["--config", str(cli_config), "--seed", "99", "harvest"]) == 0
        second = capsys.readouterr().out
        assert first != second
