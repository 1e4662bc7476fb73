"""Subset selection, dataset mixing, and epoch budgeting.

Subsets come from single-pass reservoir sampling so 300K-scale JSONL pools
never need to fit in memory. Mixing concatenates sources, prefixes every id
with its source tag to keep ids unique, and applies one seeded shuffle.
Epoch budgeting reproduces the equal-epoch and equal-compute settings:
equal compute scales the baseline epochs by the size ratio of the mixed run.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Iterator, Sequence

from .corpus import ChatRecord, read_jsonl
from .errors import DuplicateIdError, SchemaViolationError, SourceTooSmallError

METHOD_UNIFORM = "uniform_without_replacement"

MODE_EQUAL_EPOCH = "equal_epoch"
MODE_EQUAL_COMPUTE = "equal_compute"


@dataclass(frozen=True)
class SubsetPlan:
    k: int
    seed: int
    method: str = METHOD_UNIFORM

    def __post_init__(self) -> None:
        if self.k < 1:
            raise SchemaViolationError("subset size k must be >= 1")
        if self.method != METHOD_UNIFORM:
            raise SchemaViolationError(f"unknown sampling method {self.method!r}")


def sample_subset(records: Iterable[ChatRecord], plan: SubsetPlan) -> list[ChatRecord]:
    """Exactly k records, uniform without replacement, in source order.

    Algorithm R: the reservoir holds k (position, record) pairs; element i
    replaces a random slot with probability k/(i+1). Memory is O(k).
    """
    rng = random.Random(plan.seed)
    reservoir: list[tuple[int, ChatRecord]] = []
    seen = 0
    for seen, record in enumerate(records, start=1):
        if seen <= plan.k:
            reservoir.append((seen, record))
            continue
        j = rng.randint(0, seen - 1)
        if j < plan.k:
            reservoir[j] = (seen, record)
    if seen < plan.k:
        raise SourceTooSmallError(f"need {plan.k} records, source has {seen}")
    reservoir.sort(key=lambda pair: pair[0])
    return [record for _, record in reservoir]


@dataclass(frozen=True)
class MixPlan:
    sources: tuple[tuple[str, str], ...]  # (path, source tag) in order
    shuffle_seed: int

    def __post_init__(self) -> None:
        object.__setattr__(self, "sources", tuple((str(p), str(t)) for p, t in self.sources))
        if not self.sources:
            raise SchemaViolationError("mix plan needs at least one source")
        for _, tag in self.sources:
            if not tag:
                raise SchemaViolationError("source tag must be non-empty")


def mix_records(
    tagged: Sequence[tuple[str, Iterable[ChatRecord]]], shuffle_seed: int
) -> list[ChatRecord]:
    """Concatenate tagged record streams, then shuffle with the given seed.

    Ids are prefixed "tag:id" and the record's source set to the tag, so
    each record's origin survives the shuffle. The output is materialized: a
    seeded
    permutation needs the whole mix in memory.
    """
    mixed: list[ChatRecord] = []
    seen_ids: set[str] = set()
    for tag, records in tagged:
        for record in records:
            rid = f"{tag}:{record.id}"
            if rid in seen_ids:
                raise DuplicateIdError(f"id {rid!r} occurs twice after tag-prefixing")
            seen_ids.add(rid)
            mixed.append(record.retagged(rid, tag))
    random.Random(shuffle_seed).shuffle(mixed)
    return mixed


def mix(plan: MixPlan) -> list[ChatRecord]:
    return mix_records(
        [(tag, read_jsonl(Path(path))) for path, tag in plan.sources],
        plan.shuffle_seed,
    )


@dataclass(frozen=True)
class EpochBudget:
    mode: str
    epochs: int
    baseline_size: int
    mixed_size: int
    mixed_epochs: int

    def to_json(self) -> dict:
        return {
            "epochs": self.epochs,
            "mode": self.mode,
            "baseline_size": self.baseline_size,
            "mixed_size": self.mixed_size,
            "mixed_epochs": self.mixed_epochs,
        }


def epoch_budget(mode: str, baseline_size: int, mixed_size: int, mixed_epochs: int) -> EpochBudget:
    """equal_epoch echoes mixed_epochs; equal_compute matches total exposure.

    equal_compute: epochs = round(mixed_epochs * mixed_size / baseline_size),
    round half to even on the exact ratio, floored at 1.
    """
    if baseline_size < 1 or mixed_size < 1:
        raise SchemaViolationError("sizes must be positive")
    if mixed_epochs < 1:
        raise SchemaViolationError("mixed_epochs must be >= 1")
    if mode == MODE_EQUAL_EPOCH:
        epochs = mixed_epochs
    elif mode == MODE_EQUAL_COMPUTE:
        epochs = max(1, round(Fraction(mixed_epochs * mixed_size, baseline_size)))
    else:
        raise SchemaViolationError(f"unknown budget mode {mode!r}")
    return EpochBudget(
        mode=mode,
        epochs=epochs,
        baseline_size=baseline_size,
        mixed_size=mixed_size,
        mixed_epochs=mixed_epochs,
    )
