"""Run configuration: defaults, JSON loading, and content hashing.

Every constant the pipeline depends on but cannot derive lives here so a
config file plus a seed fully determines a run.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any

from .errors import ConfigError
from .io import sha256_text
from .metadata import DEFAULT_INDEX_DENYLIST, DEFAULT_LICENSE_BLOCKLIST


@dataclass
class HarvestConfig:
    source: str = ""
    max_instances: int = 200
    head_sampling: bool = False
    license_blocklist: list[str] = field(default_factory=lambda: sorted(DEFAULT_LICENSE_BLOCKLIST))
    index_denylist: list[str] = field(default_factory=lambda: sorted(DEFAULT_INDEX_DENYLIST))


@dataclass
class LlmConfig:
    base_url: str = ""
    model_tag: str = "gpt-3.5-turbo"
    temperature: float = 0.7
    max_tokens: int = 1024
    max_retries: int = 2
    backoff_base: float = 0.5
    timeout: float = 60.0
    token_env: str = "LLM_API_TOKEN"
    replay_cache: str = ""
    record: bool = False
    max_in_flight: int = 4
    rate_per_second: float = 0.0


@dataclass
class PricingConfig:
    input_per_1k: float = 0.0015
    output_per_1k: float = 0.002


@dataclass
class GenerationConfig:
    modes: list[str] = field(default_factory=lambda: ["aware", "unaware"])
    calls_per_mode: int = 1
    rows_in_prompt: int = 2
    truncate_value_chars: int = 500
    demos_path: str = ""


@dataclass
class ValidationConfig:
    distinct_cutoff: int = 10
    imbalance_threshold: float = 0.99


@dataclass
class AssemblyConfig:
    instance_cap: int = 200


@dataclass
class SamplingConfig:
    profile: str = "user"
    profiles_path: str = ""
    categories_path: str = ""
    classify: bool = False


@dataclass
class EmbeddingSourceConfig:
    source: str = "hash"
    path: str = ""
    base_url: str = ""
    dim: int = 16


@dataclass
class ReplayConfig:
    strategy: str = "instr-diverse"
    replay_count: int = 50
    train_per_task: int = 100
    holdout_per_task: int = 100
    stages: int = 3
    all_history: bool = False
    data_sample_size: int = 10
    embeddings: EmbeddingSourceConfig = field(default_factory=EmbeddingSourceConfig)


@dataclass
class PipelineConfig:
    seed: int = 0
    run_dir: str = "runs"
    run_id: str = ""
    harvest: HarvestConfig = field(default_factory=HarvestConfig)
    llm: LlmConfig = field(default_factory=LlmConfig)
    pricing: PricingConfig = field(default_factory=PricingConfig)
    generation: GenerationConfig = field(default_factory=GenerationConfig)
    validation: ValidationConfig = field(default_factory=ValidationConfig)
    assembly: AssemblyConfig = field(default_factory=AssemblyConfig)
    sampling: SamplingConfig = field(default_factory=SamplingConfig)
    replay: ReplayConfig = field(default_factory=ReplayConfig)

    def config_hash(self) -> str:
        canonical = json.dumps(asdict(self), sort_keys=True, separators=(",", ":"))
        return sha256_text(canonical)

    def resolved_run_id(self) -> str:
        return self.run_id or self.config_hash()[:12]

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


_SECTIONS = {
    "harvest": HarvestConfig,
    "llm": LlmConfig,
    "pricing": PricingConfig,
    "generation": GenerationConfig,
    "validation": ValidationConfig,
    "assembly": AssemblyConfig,
    "sampling": SamplingConfig,
    "replay": ReplayConfig,
}


def _build(cls: type, data: dict[str, Any], path: str) -> Any:
    fields = {f.name: f for f in cls.__dataclass_fields__.values()}  # type: ignore[attr-defined]
    unknown = set(data) - set(fields)
    if unknown:
        raise ConfigError(f"unknown key {sorted(unknown)[0]!r} under {path!r}")
    kwargs: dict[str, Any] = {}
    for name, value in data.items():
        if name == "embeddings" and cls is ReplayConfig:
            if not isinstance(value, dict):
                raise ConfigError(f"{path}.embeddings must be an object")
            kwargs[name] = _build(EmbeddingSourceConfig, value, f"{path}.embeddings")
        else:
            kwargs[name] = value
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise ConfigError(f"bad value under {path!r}: {exc}") from exc


def load_config(path: str | Path | None = None, overrides: dict[str, Any] | None = None) -> PipelineConfig:
    """Build a config from an optional JSON file plus override values.

    Overrides use dotted keys ("llm.model_tag") and win over the file.
    """
    data: dict[str, Any] = {}
    if path is not None:
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise ConfigError(f"config file {str(path)!r} not found") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {str(path)!r} is not valid JSON: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError("config file must hold a JSON object")
    for dotted, value in (overrides or {}).items():
        parts = dotted.split(".")
        node = data
        for part in parts[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ConfigError(f"cannot override {dotted!r}: {part!r} is not an object")
        node[parts[-1]] = value

    top_unknown = set(data) - set(_SECTIONS) - {"seed", "run_dir", "run_id"}
    if top_unknown:
        raise ConfigError(f"unknown top-level config key {sorted(top_unknown)[0]!r}")
    kwargs: dict[str, Any] = {}
    for key in ("seed", "run_dir", "run_id"):
        if key in data:
            kwargs[key] = data[key]
    for key, cls in _SECTIONS.items():
        if key in data:
            if not isinstance(data[key], dict):
                raise ConfigError(f"config section {key!r} must be an object")
            kwargs[key] = _build(cls, data[key], key)
    return PipelineConfig(**kwargs)
