"""Harvest, filter, and normalize dataset metadata.

Sources are either a hub HTTP API or a local directory of per-dataset
dumps (card.json + schema.json + rows.jsonl). Output is a canonical
DatasetMetadata stream, sorted by dataset_id.
"""

from __future__ import annotations

import json
import logging
import random
from dataclasses import dataclass, field, replace
from email.utils import parsedate_to_datetime
from pathlib import Path
from typing import Any, Iterable, Iterator

import httpx

from .errors import EmptySchema, InvalidName, TransportError

logger = logging.getLogger(__name__)

# Licenses whose terms forbid building derived training data, plus the
# catch-all tags that mean the terms are not actually known.
DEFAULT_LICENSE_BLOCKLIST = frozenset(
    {
        "cc-by-nc-nd-4.0",
        "cc-by-nd-4.0",
        "cc-by-nc-nd-3.0",
        "ofl",
        "other",
        "unknown",
    }
)

# Common auto-generated row-index field names; configurable per run.
DEFAULT_INDEX_DENYLIST = frozenset({"id", "idx", "index", "__index_level_0__"})

INSTANCE_CAP = 200

Scalar = str | list[str]


@dataclass
class Decision:
    """Keep-or-drop verdict with a machine-readable reason when dropped."""

    kept: bool
    reason: str | None = None

    @classmethod
    def keep(cls) -> "Decision":
        return cls(kept=True)

    @classmethod
    def drop(cls, reason: str) -> "Decision":
        return cls(kept=False, reason=reason)


@dataclass
class DatasetMetadata:
    """Normalized description, fields, and sampled instances for one dataset."""

    dataset_id: str
    name: str
    description: str | None
    license: str | None
    data_fields: list[str]
    sample_instances: list[dict[str, Scalar]] = field(default_factory=list)
    source: str = ""
    retrieved_at: str = ""

    def to_record(self) -> dict[str, Any]:
        """Plain dict with documented key order, for metadata.jsonl."""
        return {
            "dataset_id": self.dataset_id,
            "name": self.name,
            "description": self.description,
            "license": self.license,
            "data_fields": list(self.data_fields),
            "sample_instances": [dict(inst) for inst in self.sample_instances],
            "source": self.source,
            "retrieved_at": self.retrieved_at,
        }

    @classmethod
    def from_record(cls, record: dict[str, Any]) -> "DatasetMetadata":
        return cls(
            dataset_id=record["dataset_id"],
            name=record["name"],
            description=record.get("description"),
            license=record.get("license"),
            data_fields=list(record["data_fields"]),
            sample_instances=[dict(inst) for inst in record.get("sample_instances", [])],
            source=record.get("source", ""),
            retrieved_at=record.get("retrieved_at", ""),
        )


def resolve_name(parent_name: str | None, child_name: str) -> str:
    """Join nested dataset names as "parent_child"; bare name otherwise."""
    if not child_name:
        raise InvalidName("child name must be non-empty")
    if parent_name:
        return f"{parent_name}_{child_name}"
    return child_name


def filter_by_license(
    meta: DatasetMetadata, blocklist: frozenset[str] | set[str] = DEFAULT_LICENSE_BLOCKLIST
) -> Decision:
    """Drop datasets with no license or a blocklisted one; keep the rest."""
    if not meta.license:
        return Decision.drop("no-license")
    if meta.license.strip().lower() in blocklist:
        return Decision.drop("blocked-license")
    return Decision.keep()


def extract_summary(description: str) -> str:
    """Return the "Dataset Summary" section when the description has one.

    The section runs from the heading line to the next heading (a line
    starting with "#"). Without the heading the text passes through whole.
    """
    lines = description.splitlines()
    start = None
    for i, line in enumerate(lines):
        stripped = line.strip()
        if stripped.startswith("#") and "dataset summary" in stripped.lstrip("#").strip().lower():
            start = i + 1
            break
    if start is None:
        return description.strip()
    body: list[str] = []
    for line in lines[start:]:
        if line.strip().startswith("#"):
            break
        body.append(line)
    return "\n".join(body).strip()


def coerce_text(value: Any) -> Scalar:
    """Coerce a scalar or flat list to text; booleans before ints on purpose."""
    if isinstance(value, str):
        return value
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (int, float)):
        return repr(value) if isinstance(value, float) else str(value)
    if isinstance(value, list):
        return [item if isinstance(item, str) else _coerce_item(item) for item in value]
    if value is None:
        return ""
    return str(value)


def _coerce_item(item: Any) -> str:
    coerced = coerce_text(item)
    if isinstance(coerced, list):
        return ", ".join(coerced)
    return coerced


def normalize_fields(
    meta: DatasetMetadata,
    index_denylist: frozenset[str] | set[str] = DEFAULT_INDEX_DENYLIST,
) -> DatasetMetadata:
    """Strip index and map-valued fields; trim description to its summary.

    Raises EmptySchema when nothing survives, which callers record as a
    drop reason rather than a crash.
    """
    nested = {
        name
        for inst in meta.sample_instances
        for name, value in inst.items()
        if isinstance(value, dict) or (isinstance(value, list) and any(isinstance(v, dict) for v in value))
    }
    kept: list[str] = []
    seen: set[str] = set()
    for name in meta.data_fields:
        if name in index_denylist or name in nested or name in seen:
            continue
        seen.add(name)
        kept.append(name)
    if not kept:
        raise EmptySchema(f"dataset {meta.dataset_id!r} has no usable fields")
    instances = [
        {name: coerce_text(inst.get(name, "")) for name in kept} for inst in meta.sample_instances
    ]
    description = extract_summary(meta.description) if meta.description else meta.description
    return replace(meta, description=description, data_fields=kept, sample_instances=instances)


def sample_instances(rows: Iterable[dict[str, Any]], cap: int, seed: int, *, head: bool = False) -> list[dict[str, Any]]:
    """Sample up to `cap` rows, deterministic in seed, original order kept.

    Reservoir sampling over a single pass; `head=True` takes the first
    `cap` rows instead.
    """
    if cap < 1:
        raise ValueError("cap must be >= 1")
    if head:
        out: list[dict[str, Any]] = []
        for row in rows:
            out.append(row)
            if len(out) == cap:
                break
        return out
    rng = random.Random(seed)
    reservoir: list[tuple[int, dict[str, Any]]] = []
    for i, row in enumerate(rows):
        if i < cap:
            reservoir.append((i, row))
        else:
            j = rng.randrange(i + 1)
            if j < cap:
                reservoir[j] = (i, row)
    reservoir.sort(key=lambda pair: pair[0])
    return [row for _, row in reservoir]


# --- harvesting -------------------------------------------------------------


def harvest_local(
    root: str | Path,
    *,
    cap: int = INSTANCE_CAP,
    seed: int = 0,
    head: bool = False,
) -> Iterator[DatasetMetadata]:
    """Read per-dataset dumps from `root`, one subdirectory per dataset.

    Expected layout: <root>/<dataset_id>/card.json, schema.json, rows.jsonl.
    Yields raw (un-normalized, un-filtered) metadata sorted by dataset_id.
    """
    root = Path(root)
    for entry in sorted(p for p in root.iterdir() if p.is_dir()):
        card = json.loads((entry / "card.json").read_text(encoding="utf-8"))
        schema = json.loads((entry / "schema.json").read_text(encoding="utf-8"))
        rows_path = entry / "rows.jsonl"
        rows: list[dict[str, Any]] = []
        if rows_path.exists():
            with open(rows_path, encoding="utf-8") as fp:
                rows = [json.loads(line) for line in fp if line.strip()]
        mtimes = [p.stat().st_mtime for p in (entry / "card.json", entry / "schema.json", rows_path) if p.exists()]
        retrieved_at = _format_timestamp(max(mtimes)) if mtimes else ""
        yield DatasetMetadata(
            dataset_id=entry.name,
            name=resolve_name(card.get("parent_name"), card["name"]),
            description=card.get("description"),
            license=card.get("license"),
            data_fields=list(schema["fields"]),
            sample_instances=sample_instances(rows, cap, seed, head=head) if rows else [],
            source=str(entry),
            retrieved_at=retrieved_at,
        )


def harvest_hub(
    base_url: str,
    *,
    cap: int = INSTANCE_CAP,
    seed: int = 0,
    head: bool = False,
    client: httpx.Client | None = None,
) -> Iterator[DatasetMetadata]:
    """Fetch dataset listings, cards, and rows from a hub HTTP API."""
    own_client = client is None
    http = client or httpx.Client(base_url=base_url, timeout=30.0)
    try:
        listing = _get_json(http, "/datasets")
        ids = sorted(item["id"] for item in listing)
        for dataset_id in ids:
            detail, retrieved_at = _get_json_with_date(http, f"/datasets/{dataset_id}")
            rows_payload = _get_json(http, f"/datasets/{dataset_id}/rows", params={"limit": cap * 5})
            rows = rows_payload.get("rows", [])
            yield DatasetMetadata(
                dataset_id=dataset_id,
                name=resolve_name(detail.get("parent_name"), detail["name"]),
                description=detail.get("description"),
                license=detail.get("license"),
                data_fields=list(detail["features"]),
                sample_instances=sample_instances(rows, cap, seed, head=head) if rows else [],
                source=f"{base_url.rstrip('/')}/datasets/{dataset_id}",
                retrieved_at=retrieved_at,
            )
    finally:
        if own_client:
            http.close()


def _get_json(client: httpx.Client, path: str, **kwargs: Any) -> Any:
    payload, _ = _get_json_with_date(client, path, **kwargs)
    return payload


def _get_json_with_date(client: httpx.Client, path: str, **kwargs: Any) -> tuple[Any, str]:
    try:
        response = client.get(path, **kwargs)
        response.raise_for_status()
    except httpx.HTTPError as exc:
        raise TransportError(f"hub request {path!r} failed: {exc}") from exc
    stamp = ""
    modified = response.headers.get("last-modified")
    if modified:
        try:
            stamp = parsedate_to_datetime(modified).isoformat()
        except (TypeError, ValueError):
            stamp = ""
    return response.json(), stamp


def _format_timestamp(epoch: float) -> str:
    from datetime import datetime, timezone

    return datetime.fromtimestamp(epoch, tz=timezone.utc).isoformat()
