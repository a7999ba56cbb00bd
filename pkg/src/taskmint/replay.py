"""Continual-learning stage planning over embedding similarity.

Incoming tasks form I_c (L rows), previous-stage tasks form I_p (K
rows). Replay candidates are ranked by column sums of cos(I_c, I_p) or
row sums of cos(I_p, I_p), depending on strategy.
"""

from __future__ import annotations

import logging
import math
import random
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

from .assemble import InstructionInstance
from .embeddings import EmbeddingProvider
from .errors import DimensionError, InvalidArgument, InvalidEmbedding, ProviderError
from .taskgen import TaskDefinition

logger = logging.getLogger(__name__)

STRATEGIES = ("no-replay", "instr-diverse", "instr-similar", "instr-support", "data-diverse")

# Strategies whose ranking prefers the smallest similarity sums.
_ASCENDING = frozenset({"instr-diverse", "data-diverse"})

DEFAULT_REPLAY_COUNT = 50
DEFAULT_SPLIT = (100, 100)
DATA_SAMPLE_SIZE = 10


@dataclass
class EmbeddingMatrix:
    """Id-aligned rows of fixed-dimension vectors."""

    ids: list[str]
    rows: np.ndarray

    def __post_init__(self) -> None:
        self.rows = np.asarray(self.rows, dtype=np.float64)
        if self.rows.size == 0:
            self.rows = self.rows.reshape(0, max(1, self.rows.shape[-1] if self.rows.ndim == 2 else 1))
        if self.rows.ndim != 2 or self.rows.shape[1] < 1:
            raise InvalidEmbedding("matrix must be n x d with d >= 1")
        if len(self.ids) != self.rows.shape[0]:
            raise InvalidEmbedding("ids and rows disagree on length")
        if not np.isfinite(self.rows).all():
            raise InvalidEmbedding("matrix contains non-finite entries")
        norms = np.linalg.norm(self.rows, axis=1)
        if (norms == 0).any():
            bad = self.ids[int(np.argmax(norms == 0))]
            raise InvalidEmbedding(f"row {bad!r} has zero norm")

    @property
    def d(self) -> int:
        return int(self.rows.shape[1])

    def __len__(self) -> int:
        return len(self.ids)

    @classmethod
    def from_rows(cls, ids: Sequence[str], vectors: Sequence[Sequence[float]]) -> "EmbeddingMatrix":
        return cls(ids=list(ids), rows=np.asarray(vectors, dtype=np.float64))

    @classmethod
    def concat(cls, matrices: Sequence["EmbeddingMatrix"]) -> "EmbeddingMatrix":
        ids = [item_id for m in matrices for item_id in m.ids]
        rows = np.concatenate([m.rows for m in matrices], axis=0)
        return cls(ids=ids, rows=rows)


@dataclass
class SimilarityMatrix:
    """Cosine similarities between two id-aligned embedding sets."""

    row_ids: list[str]
    col_ids: list[str]
    values: np.ndarray


def cosine_similarity(a: EmbeddingMatrix, b: EmbeddingMatrix) -> SimilarityMatrix:
    """cos(a, b): values[i][j] over normalized rows."""
    if a.d != b.d:
        raise DimensionError(f"dimension mismatch: {a.d} vs {b.d}")
    a_norm = a.rows / np.linalg.norm(a.rows, axis=1, keepdims=True)
    b_norm = b.rows / np.linalg.norm(b.rows, axis=1, keepdims=True)
    return SimilarityMatrix(row_ids=list(a.ids), col_ids=list(b.ids), values=a_norm @ b_norm.T)


def column_sums(matrix: SimilarityMatrix) -> list[float]:
    """Per-column compensated sums, permutation-stable below 1e-9."""
    return [math.fsum(matrix.values[:, j].tolist()) for j in range(matrix.values.shape[1])]


def row_sums(matrix: SimilarityMatrix) -> list[float]:
    return [math.fsum(matrix.values[i, :].tolist()) for i in range(matrix.values.shape[0])]


def select_replay(
    strategy: str,
    s_cp: SimilarityMatrix | None,
    s_pp: SimilarityMatrix | None,
    replay_count: int,
) -> list[str]:
    """Rank previous tasks under a strategy and take the top replay_count.

    Ordering is (score, id) with score negated for the "largest" rules,
    so ties always fall to the lexicographically smaller task id.
    """
    if strategy not in STRATEGIES:
        raise InvalidArgument(f"unknown strategy {strategy!r}")
    if replay_count < 0:
        raise InvalidArgument("replay count must be >= 0")
    if strategy == "no-replay":
        return []
    if strategy in ("instr-diverse", "instr-similar", "data-diverse"):
        if s_cp is None:
            raise InvalidArgument(f"strategy {strategy!r} needs the cross-similarity matrix")
        ids = s_cp.col_ids
        scores = column_sums(s_cp)
        if s_pp is not None and list(s_pp.row_ids) != list(ids):
            raise DimensionError("cross and self similarity matrices disagree on previous tasks")
    else:
        if s_pp is None:
            raise InvalidArgument("strategy 'instr-support' needs the self-similarity matrix")
        ids = s_pp.row_ids
        scores = row_sums(s_pp)
    k = len(ids)
    if replay_count > k:
        logger.warning("requested %d replay tasks but only %d exist; taking all", replay_count, k)
    ascending = strategy in _ASCENDING
    order = sorted(range(k), key=lambda j: (scores[j] if ascending else -scores[j], ids[j]))
    return [ids[j] for j in order[: min(replay_count, k)]]


@dataclass
class StagePlan:
    """One training stage: its new tasks, replay tasks, and splits."""

    stage_index: int
    strategy: str
    replay_count: int
    new_task_ids: list[str]
    replay_task_ids: list[str]
    splits: dict[str, tuple[list[int], list[int]]] = field(default_factory=dict)

    def to_record(self) -> dict[str, Any]:
        return {
            "stage_index": self.stage_index,
            "strategy": self.strategy,
            "replay_count": self.replay_count,
            "new_task_ids": list(self.new_task_ids),
            "replay_task_ids": list(self.replay_task_ids),
            "splits": {
                task_id: {"train": list(train), "holdout": list(holdout)}
                for task_id, (train, holdout) in self.splits.items()
            },
        }


def split_instances(
    count: int, split: tuple[int, int], seed: int, task_id: str
) -> tuple[list[int], list[int]]:
    """Disjoint seeded train/holdout index sets over `count` instances.

    Short tasks are split proportionally to the requested ratio.
    """
    train_n, holdout_n = split
    if train_n < 0 or holdout_n < 0 or train_n + holdout_n == 0:
        raise InvalidArgument("split sizes must be non-negative and not both zero")
    if count >= train_n + holdout_n:
        train_k, holdout_k = train_n, holdout_n
    else:
        train_k = round(count * train_n / (train_n + holdout_n))
        train_k = min(train_k, train_n, count)
        holdout_k = min(count - train_k, holdout_n)
    indices = list(range(count))
    rng = random.Random(f"{seed}:{task_id}")
    rng.shuffle(indices)
    train = sorted(indices[:train_k])
    holdout = sorted(indices[train_k : train_k + holdout_k])
    return train, holdout


def plan_stage(
    stage_index: int,
    incoming: EmbeddingMatrix,
    previous: EmbeddingMatrix | None,
    *,
    strategy: str,
    replay_count: int = DEFAULT_REPLAY_COUNT,
    split: tuple[int, int] = DEFAULT_SPLIT,
    seed: int = 0,
    instance_counts: dict[str, int] | None = None,
) -> StagePlan:
    """Plan one stage: pick replay ids and split every trained task.

    A first stage (no previous tasks) has an empty replay list whatever
    the strategy says.
    """
    if strategy not in STRATEGIES:
        raise InvalidArgument(f"unknown strategy {strategy!r}")
    replay_ids: list[str] = []
    if previous is not None and len(previous) > 0 and strategy != "no-replay":
        s_cp = cosine_similarity(incoming, previous)
        s_pp = cosine_similarity(previous, previous)
        replay_ids = select_replay(strategy, s_cp, s_pp, replay_count)
    overlap = set(replay_ids) & set(incoming.ids)
    if overlap:
        raise InvalidArgument(f"replay and incoming task sets overlap: {sorted(overlap)[:3]}")
    plan = StagePlan(
        stage_index=stage_index,
        strategy=strategy,
        replay_count=replay_count,
        new_task_ids=list(incoming.ids),
        replay_task_ids=replay_ids,
    )
    counts = instance_counts or {}
    for task_id in list(incoming.ids) + replay_ids:
        count = counts.get(task_id, 0)
        if count > 0:
            plan.splits[task_id] = split_instances(count, split, seed, task_id)
        else:
            plan.splits[task_id] = ([], [])
    return plan


def plan_stages(
    stage_matrices: Sequence[EmbeddingMatrix],
    *,
    strategy: str,
    replay_count: int = DEFAULT_REPLAY_COUNT,
    split: tuple[int, int] = DEFAULT_SPLIT,
    seed: int = 0,
    instance_counts: dict[str, int] | None = None,
    all_history: bool = False,
) -> list[StagePlan]:
    """Plan a multi-stage protocol over disjoint task groups.

    Replay candidates come from the immediately previous stage, or from
    every earlier stage when all_history is set.
    """
    plans = []
    for i, incoming in enumerate(stage_matrices):
        if i == 0:
            previous = None
        elif all_history:
            previous = EmbeddingMatrix.concat(list(stage_matrices[:i]))
        else:
            previous = stage_matrices[i - 1]
        plans.append(
            plan_stage(
                i,
                incoming,
                previous,
                strategy=strategy,
                replay_count=replay_count,
                split=split,
                seed=seed,
                instance_counts=instance_counts,
            )
        )
    return plans


def data_representation(
    task: TaskDefinition,
    records: Sequence[InstructionInstance],
    provider: EmbeddingProvider,
    *,
    sample_size: int = DATA_SAMPLE_SIZE,
    seed: int = 0,
) -> list[float]:
    """Mean embedding of up to `sample_size` seeded-sampled record texts."""
    if not records:
        raise InvalidArgument(f"task {task.task_id!r} has no assembled records")
    pool = list(records)
    if len(pool) > sample_size:
        rng = random.Random(f"{seed}:{task.task_id}")
        indices = sorted(rng.sample(range(len(pool)), sample_size))
        pool = [pool[i] for i in indices]
    texts = [f"{record.input} {record.output}" for record in pool]
    try:
        vectors = provider.embed(texts)
    except ProviderError:
        raise
    except Exception as exc:
        raise ProviderError(f"embedding provider failed: {exc}") from exc
    return np.asarray(vectors, dtype=np.float64).mean(axis=0).tolist()
