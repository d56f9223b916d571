"""Negative sampling for training and evaluation.

Candidates come in priority tiers. A tier that fits in the remaining quota is
taken whole; otherwise the quota is filled by drawing uniformly without
replacement from it. S1 uses the tiers (mini-batch, recent buffer); S2 first
exhausts same-state jobs from both sources and then falls back to the rest.
"""

from __future__ import annotations

from collections import deque
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .data import UNKNOWN, Instance, normalize_state
from .errors import SamplingError, UsageError

S1 = "S1"
S2 = "S2"
UNIFORM = "uniform"
STRATEGIES = (S1, S2, UNIFORM)


class RecentBuffer:
    """The N most recently applied job ids, oldest first. Duplicates allowed."""

    def __init__(self, size: int = 5000, items: Iterable[str] = ()):
        if size < 1:
            raise UsageError(f"buffer size must be >= 1, got {size}")
        self.size = size
        self._items: deque[str] = deque(items, maxlen=size)

    def extend(self, job_ids: Iterable[str]) -> None:
        self._items.extend(job_ids)

    def snapshot(self) -> list[str]:
        return list(self._items)

    def __len__(self) -> int:
        return len(self._items)


def minibatch_negatives(batch: Sequence[Instance]) -> list[list[str]]:
    """Positives of the other instances, minus the instance's own positive and prefix."""
    positives = list(dict.fromkeys(inst.positive for inst in batch))
    out = []
    for inst in batch:
        banned = set(inst.prefix)
        banned.add(inst.positive)
        out.append([j for j in positives if j not in banned])
    return out


def _draw(tiers: Iterable[Callable[[], list[str]]], k: int, rng, what: str) -> list[str]:
    chosen: list[str] = []
    available = 0
    for make in tiers:
        need = k - len(chosen)
        if need == 0:
            break
        tier = make()
        available += len(tier)
        if len(tier) <= need:
            chosen.extend(tier)
        else:
            picks = rng.choice(len(tier), size=need, replace=False)
            chosen.extend(tier[int(i)] for i in picks)
    if len(chosen) < k:
        raise SamplingError(
            f"{what}: needed {k} negatives but only {len(chosen)} candidates exist "
            f"(shortfall {k - len(chosen)})"
        )
    return chosen


def _buffer_tier(instance: Instance, batch_candidates, buffer_items) -> list[str]:
    banned = set(instance.prefix)
    banned.add(instance.positive)
    banned.update(batch_candidates)
    return [j for j in dict.fromkeys(buffer_items) if j not in banned]


def strategy_s1(
    instance: Instance,
    batch_candidates: Sequence[str],
    buffer: RecentBuffer | Sequence[str],
    k: int,
    rng: np.random.Generator,
) -> list[str]:
    buffer_items = buffer.snapshot() if isinstance(buffer, RecentBuffer) else buffer
    tiers = (
        lambda: list(batch_candidates),
        lambda: _buffer_tier(instance, batch_candidates, buffer_items),
    )
    return _draw(tiers, k, rng, "S1")


def strategy_s2(
    instance: Instance,
    batch_candidates: Sequence[str],
    buffer: RecentBuffer | Sequence[str],
    k: int,
    rng: np.random.Generator,
    seeker_state: str,
    state_of: Mapping[str, str],
) -> list[str]:
    """Same-state jobs (batch, then buffer) first; other states only as backfill.

    ``state_of`` maps job ids to normalized state codes. An UNKNOWN seeker
    state matches nothing, so the draw degenerates to S1.
    """
    buffer_items = buffer.snapshot() if isinstance(buffer, RecentBuffer) else buffer
    home = normalize_state(seeker_state)
    cache: dict[str, list[str]] = {}

    def same(j):
        return home != UNKNOWN and state_of.get(j, UNKNOWN) == home

    def buf():
        if "buf" not in cache:
            cache["buf"] = _buffer_tier(instance, batch_candidates, buffer_items)
        return cache["buf"]

    tiers = (
        lambda: [j for j in batch_candidates if same(j)],
        lambda: [j for j in buf() if same(j)],
        lambda: [j for j in batch_candidates if not same(j)],
        lambda: [j for j in buf() if not same(j)],
    )
    return _draw(tiers, k, rng, "S2")


def strategy_uniform(
    instance: Instance, pool: Sequence[str], k: int, rng: np.random.Generator
) -> list[str]:
    banned = set(instance.prefix)
    banned.add(instance.positive)
    return _draw((lambda: [j for j in pool if j not in banned],), k, rng, "uniform")


class NegativeSampler:
    """Draws k negatives for each instance of a mini-batch under one strategy."""

    def __init__(
        self,
        strategy: str,
        k: int,
        buffer: RecentBuffer,
        seeker_state: Mapping[str, str] | None = None,
        job_state: Mapping[str, str] | None = None,
        pool: Sequence[str] | None = None,
    ):
        if strategy not in STRATEGIES:
            raise UsageError(f"unknown sampling strategy {strategy!r}")
        if k < 1:
            raise UsageError(f"number of negatives must be >= 1, got {k}")
        if strategy == UNIFORM and pool is None:
            raise UsageError("uniform sampling needs a candidate pool")
        self.strategy = strategy
        self.k = k
        self.buffer = buffer
        self.seeker_state = seeker_state or {}
        self.job_state = {j: normalize_state(s) for j, s in (job_state or {}).items()}
        self.pool = list(pool) if pool is not None else None

    def sample_batch(self, batch: Sequence[Instance], rng: np.random.Generator) -> list[list[str]]:
        if self.strategy == UNIFORM:
            return [strategy_uniform(inst, self.pool, self.k, rng) for inst in batch]
        snapshot = self.buffer.snapshot()
        cands = minibatch_negatives(batch)
        out = []
        for inst, c in zip(batch, cands):
            if self.strategy == S1:
                out.append(strategy_s1(inst, c, snapshot, self.k, rng))
            else:
                state = self.seeker_state.get(inst.user_id, UNKNOWN)
                out.append(strategy_s2(inst, c, snapshot, self.k, rng, state, self.job_state))
        return out
