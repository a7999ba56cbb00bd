"""Resumable step orchestration over a run directory.

Each step writes its artifacts, then records their content hashes in the
run manifest. A completed step is a no-op on re-run unless forced, so an
interrupted run resumes exactly where it stopped.
"""

from __future__ import annotations

import json
import logging
import random
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Sequence

from . import assemble as assemble_mod
from . import metadata as metadata_mod
from . import replay as replay_mod
from . import sampler as sampler_mod
from . import taskgen
from . import validate as validate_mod
from .config import PipelineConfig
from .embeddings import (
    EmbeddingProvider,
    FileEmbeddingStore,
    HashEmbeddingProvider,
    HttpEmbeddingProvider,
)
from .errors import (
    ConfigError,
    DependencyError,
    EmptyRun,
    InvalidArgument,
    StaleRun,
)
from .io import read_json, read_jsonl, sha256_file, write_json, write_jsonl
from .llm import HttpLlmClient, LlmClient, LlmParams, ReplayLlmClient, TokenBucket

logger = logging.getLogger(__name__)

STEP_DEPS: dict[str, tuple[str, ...]] = {
    "harvest": (),
    "generate": ("harvest",),
    "validate": ("harvest", "generate"),
    "assemble": ("harvest", "validate"),
    "sample": ("validate", "assemble"),
    "plan-replay": ("validate", "assemble"),
    "cost": ("generate", "validate"),
}

MANIFEST_NAME = "manifest.json"


@dataclass
class RunManifest:
    """Completion flags and artifact hashes for one run."""

    run_id: str
    config_hash: str
    steps: dict[str, dict[str, Any]] = field(default_factory=dict)

    def to_record(self) -> dict[str, Any]:
        return {"run_id": self.run_id, "config_hash": self.config_hash, "steps": self.steps}

    @classmethod
    def from_record(cls, record: dict[str, Any]) -> "RunManifest":
        return cls(
            run_id=record["run_id"],
            config_hash=record["config_hash"],
            steps=dict(record.get("steps", {})),
        )


class Pipeline:
    """Drives the step graph for one configured run."""

    def __init__(
        self,
        config: PipelineConfig,
        *,
        base_dir: str | Path | None = None,
        llm_client: LlmClient | None = None,
        embedding_provider: EmbeddingProvider | None = None,
    ):
        self.config = config
        self.run_id = config.resolved_run_id()
        self.run_dir = Path(base_dir or config.run_dir) / self.run_id
        self._llm_client = llm_client
        self._embedding_provider = embedding_provider

    # --- manifest handling ---------------------------------------------

    @property
    def manifest_path(self) -> Path:
        return self.run_dir / MANIFEST_NAME

    def load_manifest(self) -> RunManifest:
        if self.manifest_path.exists():
            manifest = RunManifest.from_record(read_json(self.manifest_path))
            if manifest.config_hash != self.config.config_hash():
                raise StaleRun(
                    f"run {self.run_id!r} was created with a different configuration"
                )
            return manifest
        return RunManifest(run_id=self.run_id, config_hash=self.config.config_hash())

    def _save_manifest(self, manifest: RunManifest) -> None:
        write_json(self.manifest_path, manifest.to_record())

    def step_complete(self, manifest: RunManifest, step: str) -> bool:
        entry = manifest.steps.get(step)
        if not entry or not entry.get("complete"):
            return False
        for artifact in entry.get("artifacts", {}).values():
            path = self.run_dir / artifact["path"]
            if not path.exists() or sha256_file(path) != artifact["sha256"]:
                return False
        return True

    # --- step execution --------------------------------------------------

    def run_step(self, step: str, *, force: bool = False) -> RunManifest:
        """Execute one step if needed; returns the updated manifest."""
        if step not in STEP_DEPS:
            raise InvalidArgument(f"unknown step {step!r}")
        manifest = self.load_manifest()
        if self.step_complete(manifest, step) and not force:
            logger.info("step %s already complete; skipping", step)
            return manifest
        for dep in STEP_DEPS[step]:
            if not self.step_complete(manifest, dep):
                raise DependencyError(f"step {step!r} requires completed step {dep!r}")
        runner: Callable[[], dict[str, Path]] = getattr(self, "_step_" + step.replace("-", "_"))
        self.run_dir.mkdir(parents=True, exist_ok=True)
        artifacts = runner()
        manifest.steps[step] = {
            "complete": True,
            "artifacts": {
                name: {"path": path.name, "sha256": sha256_file(path)}
                for name, path in sorted(artifacts.items())
            },
        }
        self._save_manifest(manifest)
        return manifest

    # --- shared helpers ---------------------------------------------------

    def _path(self, name: str) -> Path:
        return self.run_dir / name

    def _llm(self) -> LlmClient:
        if self._llm_client is not None:
            return self._llm_client
        llm = self.config.llm
        if llm.replay_cache:
            inner = None
            if llm.base_url and llm.record:
                inner = HttpLlmClient(llm.base_url, token_env=llm.token_env)
            return ReplayLlmClient(llm.replay_cache, inner=inner)
        if llm.base_url:
            return HttpLlmClient(llm.base_url, token_env=llm.token_env)
        raise ConfigError("no LLM backend: set llm.replay_cache or llm.base_url")

    def _llm_params(self) -> LlmParams:
        llm = self.config.llm
        return LlmParams(
            model_tag=llm.model_tag,
            temperature=llm.temperature,
            max_tokens=llm.max_tokens,
            max_retries=llm.max_retries,
            backoff_base=llm.backoff_base,
            timeout=llm.timeout,
        )

    def _read_metadata(self) -> list[metadata_mod.DatasetMetadata]:
        return [
            metadata_mod.DatasetMetadata.from_record(record)
            for record in read_jsonl(self._path("metadata.jsonl"))
        ]

    def _read_tasks(self, name: str) -> list[taskgen.TaskDefinition]:
        return [taskgen.TaskDefinition.from_record(record) for record in read_jsonl(self._path(name))]

    def _read_records_by_task(self) -> dict[str, list[assemble_mod.InstructionInstance]]:
        grouped: dict[str, list[assemble_mod.InstructionInstance]] = {}
        for record in read_jsonl(self._path("data.jsonl")):
            instance = assemble_mod.InstructionInstance.from_record(record)
            grouped.setdefault(instance.task_id, []).append(instance)
        return grouped

    # --- steps -----------------------------------------------------------

    def _step_harvest(self) -> dict[str, Path]:
        cfg = self.config.harvest
        if not cfg.source:
            raise ConfigError("harvest.source is not set")
        if cfg.source.startswith("local:"):
            raw_stream = metadata_mod.harvest_local(
                cfg.source[len("local:") :],
                cap=cfg.max_instances,
                seed=self.config.seed,
                head=cfg.head_sampling,
            )
        elif cfg.source.startswith("hub:"):
            raw_stream = metadata_mod.harvest_hub(
                cfg.source[len("hub:") :],
                cap=cfg.max_instances,
                seed=self.config.seed,
                head=cfg.head_sampling,
            )
        else:
            raise ConfigError(f"harvest.source must start with 'local:' or 'hub:', got {cfg.source!r}")

        blocklist = frozenset(cfg.license_blocklist)
        denylist = frozenset(cfg.index_denylist)
        kept: list[metadata_mod.DatasetMetadata] = []
        dropped: list[tuple[str, str]] = []
        seen = 0
        for raw in raw_stream:
            seen += 1
            verdict = metadata_mod.filter_by_license(raw, blocklist)
            if not verdict.kept:
                dropped.append((raw.dataset_id, verdict.reason))
                continue
            try:
                kept.append(metadata_mod.normalize_fields(raw, denylist))
            except metadata_mod.EmptySchema:
                dropped.append((raw.dataset_id, "empty-schema"))
        kept.sort(key=lambda m: m.dataset_id)

        meta_path = self._path("metadata.jsonl")
        write_jsonl(meta_path, (m.to_record() for m in kept))
        reasons: dict[str, int] = {}
        for _, reason in dropped:
            reasons[reason] = reasons.get(reason, 0) + 1
        report_path = self._path("harvest_report.json")
        write_json(
            report_path,
            {
                "datasets_seen": seen,
                "kept": len(kept),
                "dropped": dict(sorted(reasons.items())),
                "dropped_datasets": [list(pair) for pair in sorted(dropped)],
            },
        )
        return {"metadata": meta_path, "harvest_report": report_path}

    def _step_generate(self) -> dict[str, Path]:
        metas = self._read_metadata()
        gen = self.config.generation
        demos = (
            json.loads(Path(gen.demos_path).read_text(encoding="utf-8"))
            if gen.demos_path
            else taskgen.load_demos()
        )
        client = self._llm()
        params = self._llm_params()
        bucket = (
            TokenBucket(self.config.llm.rate_per_second, max(1, self.config.llm.max_in_flight))
            if self.config.llm.rate_per_second > 0
            else None
        )

        jobs: list[tuple[metadata_mod.DatasetMetadata, str, int]] = []
        for meta in metas:
            for mode in gen.modes:
                for call_index in range(gen.calls_per_mode):
                    jobs.append((meta, mode, call_index))

        def run_job(job: tuple[metadata_mod.DatasetMetadata, str, int]):
            meta, mode, call_index = job
            if bucket is not None:
                bucket.acquire()
            prompt = taskgen.build_prompt(
                meta,
                mode,
                demos,
                call_index,
                rows_in_prompt=gen.rows_in_prompt,
                truncate_value_chars=gen.truncate_value_chars,
            )
            exchange = taskgen.generate_tasks(prompt, client, params)
            candidates, issues = taskgen.parse_task_response(
                exchange.raw_response,
                dataset_id=meta.dataset_id,
                mode=mode,
                call_index=call_index,
            )
            return candidates, issues, exchange.usage_record(
                dataset_id=meta.dataset_id, mode=mode, call_index=call_index
            )

        max_workers = max(1, self.config.llm.max_in_flight)
        if max_workers > 1 and len(jobs) > 1:
            with ThreadPoolExecutor(max_workers=max_workers) as pool:
                results = list(pool.map(run_job, jobs))
        else:
            results = [run_job(job) for job in jobs]

        all_tasks: list[dict[str, Any]] = []
        all_usage: list[dict[str, Any]] = []
        all_issues: list[dict[str, Any]] = []
        for (meta, mode, call_index), (candidates, issues, usage) in zip(jobs, results):
            all_tasks.extend(task.to_record() for task in candidates)
            all_usage.append(usage)
            all_issues.extend(
                {
                    "dataset_id": meta.dataset_id,
                    "mode": mode,
                    "call_index": call_index,
                    "key": issue.key,
                    "reason": issue.reason,
                    "detail": issue.detail,
                }
                for issue in issues
            )

        tasks_path = self._path("tasks_raw.jsonl")
        usage_path = self._path("usage.jsonl")
        issues_path = self._path("parse_issues.jsonl")
        write_jsonl(tasks_path, all_tasks)
        write_jsonl(usage_path, all_usage)
        write_jsonl(issues_path, all_issues)
        return {"tasks_raw": tasks_path, "usage": usage_path, "parse_issues": issues_path}

    def _step_validate(self) -> dict[str, Path]:
        metas = {meta.dataset_id: meta for meta in self._read_metadata()}
        candidates = self._read_tasks("tasks_raw.jsonl")
        cfg = self.config.validation

        by_dataset: dict[str, list[taskgen.TaskDefinition]] = {}
        for task in candidates:
            by_dataset.setdefault(task.dataset_id, []).append(task)

        kept_all: list[taskgen.TaskDefinition] = []
        rejected_all: list[taskgen.TaskDefinition] = []
        reports: list[validate_mod.ValidationReport] = []
        for dataset_id in sorted(by_dataset):
            meta = metas.get(dataset_id)
            if meta is None:
                meta = metadata_mod.DatasetMetadata(
                    dataset_id=dataset_id, name="", description=None, license=None, data_fields=[]
                )
            kept, rejected, report = validate_mod.run_validation(
                by_dataset[dataset_id],
                meta,
                distinct_cutoff=cfg.distinct_cutoff,
                imbalance_threshold=cfg.imbalance_threshold,
            )
            kept_all.extend(kept)
            rejected_all.extend(rejected)
            reports.append(report)

        totals_rejected: dict[str, int] = {}
        for report in reports:
            for reason, count in report.rejected.items():
                totals_rejected[reason] = totals_rejected.get(reason, 0) + count
        valid_path = self._path("tasks_valid.jsonl")
        rejected_path = self._path("tasks_rejected.jsonl")
        report_path = self._path("validation_report.json")
        write_jsonl(valid_path, (task.to_record() for task in kept_all))
        write_jsonl(rejected_path, (task.to_record() for task in rejected_all))
        write_json(
            report_path,
            {
                "datasets": [report.to_record() for report in reports],
                "totals": {
                    "candidates": len(candidates),
                    "valid": len(kept_all),
                    "rejected": dict(sorted(totals_rejected.items())),
                    "deduplicated": sum(report.deduplicated for report in reports),
                },
            },
        )
        return {
            "tasks_valid": valid_path,
            "tasks_rejected": rejected_path,
            "validation_report": report_path,
        }

    def _step_assemble(self) -> dict[str, Path]:
        metas = {meta.dataset_id: meta for meta in self._read_metadata()}
        tasks = self._read_tasks("tasks_valid.jsonl")
        instances_by_dataset = {
            dataset_id: meta.sample_instances for dataset_id, meta in metas.items()
        }
        assemblies = assemble_mod.assemble_all(
            tasks, instances_by_dataset, self.config.assembly.instance_cap
        )
        data_path = self._path("data.jsonl")
        report_path = self._path("assembly_report.json")
        write_jsonl(
            data_path,
            (record.to_record() for assembly in assemblies for record in assembly.records),
        )
        write_json(
            report_path,
            {
                "tasks": [assembly.to_record() for assembly in assemblies],
                "total_emitted": sum(a.emitted for a in assemblies),
                "total_skipped": sum(sum(a.skipped.values()) for a in assemblies),
            },
        )
        return {"data": data_path, "assembly_report": report_path}

    def _step_sample(self) -> dict[str, Path]:
        cfg = self.config.sampling
        tasks = self._read_tasks("tasks_valid.jsonl")
        records = self._read_records_by_task()
        if cfg.profiles_path:
            raw = json.loads(Path(cfg.profiles_path).read_text(encoding="utf-8"))
            profiles = {
                name: sampler_mod.SamplingProfile.from_record(name, record)
                for name, record in raw.items()
            }
        else:
            profiles = sampler_mod.load_profiles()
        if cfg.profile not in profiles:
            raise ConfigError(f"unknown sampling profile {cfg.profile!r}")
        profile = profiles[cfg.profile]

        categories: dict[str, str] = {}
        if cfg.categories_path:
            categories = json.loads(Path(cfg.categories_path).read_text(encoding="utf-8"))
        elif cfg.classify:
            client = self._llm()
            params = self._llm_params()
            names = taskgen.load_categories()
            for task in sorted(tasks, key=lambda t: t.task_id):
                categories[task.task_id] = taskgen.classify_task_category(
                    task, names, client, params
                )

        pool = tasks
        if profile.min_avg_output_words is not None:
            pool = sampler_mod.filter_long_output(
                [(task, records.get(task.task_id, [])) for task in pool],
                profile.min_avg_output_words,
            )
        selected = sampler_mod.sample_eval_subset(pool, categories, profile)

        fusion_client = None
        fusion_params = None
        if profile.fuse_short_inputs:
            fusion_client = self._llm()
            fusion_params = self._llm_params()
        out_records: list[dict[str, Any]] = []
        for task in selected:
            task_records = records.get(task.task_id, [])
            if profile.instances_per_task is not None:
                task_records = task_records[: profile.instances_per_task]
            for record in task_records:
                if fusion_client is not None:
                    record = sampler_mod.integrate_instruction_input(
                        record, fusion_client, fusion_params
                    )
                out_records.append(record.to_record())

        subset_path = self._path("subset.jsonl")
        report_path = self._path("sample_report.json")
        write_jsonl(subset_path, out_records)
        write_json(
            report_path,
            {
                "profile": profile.name,
                "selected_tasks": [task.task_id for task in selected],
                "task_count": len(selected),
                "classification_count": sum(1 for t in selected if t.is_classification),
                "record_count": len(out_records),
                "categories": {k: categories[k] for k in sorted(categories)},
            },
        )
        return {"subset": subset_path, "sample_report": report_path}

    def _embedding_provider_for(self, cfg) -> EmbeddingProvider:
        if self._embedding_provider is not None:
            return self._embedding_provider
        if cfg.source == "hash":
            return HashEmbeddingProvider(cfg.dim)
        if cfg.source == "service":
            if not cfg.base_url:
                raise ConfigError("replay.embeddings.base_url is required for source 'service'")
            return HttpEmbeddingProvider(cfg.base_url)
        raise ConfigError(f"unknown embeddings source {cfg.source!r}")

    def _step_plan_replay(self) -> dict[str, Path]:
        cfg = self.config.replay
        tasks = sorted(self._read_tasks("tasks_valid.jsonl"), key=lambda t: t.task_id)
        records = self._read_records_by_task()
        if cfg.strategy == "data-diverse":
            with_data = [task for task in tasks if records.get(task.task_id)]
            skipped = len(tasks) - len(with_data)
            if skipped:
                logger.warning("data-diverse planning skips %d tasks without records", skipped)
            tasks = with_data
        if not tasks:
            raise EmptyRun("no valid tasks to plan stages over")

        shuffled = list(tasks)
        random.Random(self.config.seed).shuffle(shuffled)
        stages = max(1, cfg.stages)
        base, extra = divmod(len(shuffled), stages)
        groups: list[list[taskgen.TaskDefinition]] = []
        start = 0
        for i in range(stages):
            size = base + (1 if i < extra else 0)
            groups.append(shuffled[start : start + size])
            start += size

        emb_cfg = cfg.embeddings
        matrices: list[replay_mod.EmbeddingMatrix] = []
        if emb_cfg.source == "file":
            if not emb_cfg.path:
                raise ConfigError("replay.embeddings.path is required for source 'file'")
            store = FileEmbeddingStore(emb_cfg.path)
            for group in groups:
                ids = [task.task_id for task in group]
                matrices.append(replay_mod.EmbeddingMatrix.from_rows(ids, store.vectors_for(ids)))
        else:
            provider = self._embedding_provider_for(emb_cfg)
            for group in groups:
                ids = [task.task_id for task in group]
                if cfg.strategy == "data-diverse":
                    vectors = [
                        replay_mod.data_representation(
                            task,
                            records[task.task_id],
                            provider,
                            sample_size=cfg.data_sample_size,
                            seed=self.config.seed,
                        )
                        for task in group
                    ]
                else:
                    vectors = provider.embed([task.instruction for task in group])
                matrices.append(replay_mod.EmbeddingMatrix.from_rows(ids, vectors))

        counts = {task_id: len(items) for task_id, items in records.items()}
        plans = replay_mod.plan_stages(
            matrices,
            strategy=cfg.strategy,
            replay_count=cfg.replay_count,
            split=(cfg.train_per_task, cfg.holdout_per_task),
            seed=self.config.seed,
            instance_counts=counts,
            all_history=cfg.all_history,
        )
        plan_path = self._path("stage_plan.json")
        write_json(
            plan_path,
            {
                "strategy": cfg.strategy,
                "replay_count": cfg.replay_count,
                "split": [cfg.train_per_task, cfg.holdout_per_task],
                "all_history": cfg.all_history,
                "stages": [plan.to_record() for plan in plans],
            },
        )
        return {"stage_plan": plan_path}

    def _step_cost(self) -> dict[str, Path]:
        usage = list(read_jsonl(self._path("usage.jsonl")))
        valid_count = sum(1 for _ in read_jsonl(self._path("tasks_valid.jsonl")))
        pricing = self.config.pricing
        estimate = taskgen.estimate_cost(
            usage,
            input_per_1k=pricing.input_per_1k,
            output_per_1k=pricing.output_per_1k,
            valid_tasks=valid_count,
        )
        cost_path = self._path("cost.json")
        write_json(
            cost_path,
            {
                "total": estimate.total,
                "per_task_average": estimate.per_task_average,
                "prompt_tokens": estimate.prompt_tokens,
                "completion_tokens": estimate.completion_tokens,
                "valid_tasks": estimate.valid_tasks,
                "input_per_1k": pricing.input_per_1k,
                "output_per_1k": pricing.output_per_1k,
            },
        )
        return {"cost": cost_path}

    # --- reporting --------------------------------------------------------

    def report(self) -> str:
        """One-line run summary in fixed artifact order."""
        manifest = self.load_manifest()
        completed = [step for step in STEP_DEPS if self.step_complete(manifest, step)]
        if not completed:
            raise EmptyRun(f"run {self.run_id!r} has no completed steps")
        parts: list[str] = []
        if "harvest" in completed:
            n = sum(1 for _ in read_jsonl(self._path("metadata.jsonl")))
            parts.append(f"{n} dataset{'s' if n != 1 else ''}")
        if "generate" in completed:
            n = sum(1 for _ in read_jsonl(self._path("tasks_raw.jsonl")))
            parts.append(f"{n} generated")
        if "validate" in completed:
            totals = read_json(self._path("validation_report.json"))["totals"]
            parts.append(f"{totals['valid']} valid")
            for reason, count in sorted(totals["rejected"].items()):
                parts.append(f"{count} rejected({reason})")
            if totals["deduplicated"]:
                parts.append(f"{totals['deduplicated']} deduplicated")
        if "assemble" in completed:
            n = read_json(self._path("assembly_report.json"))["total_emitted"]
            parts.append(f"{n} instance{'s' if n != 1 else ''}")
        if "sample" in completed:
            report = read_json(self._path("sample_report.json"))
            parts.append(f"{report['task_count']} sampled({report['profile']})")
        if "plan-replay" in completed:
            plan = read_json(self._path("stage_plan.json"))
            parts.append(f"{len(plan['stages'])} stages({plan['strategy']})")
        if "cost" in completed:
            cost = read_json(self._path("cost.json"))
            parts.append(f"cost ${cost['total']:.2f}")
        return ", ".join(parts)
