"""Prefix-prompted generation against a completions endpoint, plus harvesting.

The endpoint speaks the de-facto completions wire format: POST
``<endpoint>/completions`` with ``{"prompt", "temperature", "top_p",
"max_tokens", "n"}`` answered by ``{"choices": [{"text", "finish_reason"},
...]}``. Only the role prefix (default ``"User: "``) is sent, so the model
produces both the prompt and the response of a conversation.

Raw outputs are persisted to a replay JSONL before harvesting; harvesting is
a pure function of the raw texts, so replayed runs reproduce bytes exactly.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator

import httpx

from . import endpoints
from .corpus import ChatRecord, Discard, SOURCE_SYNTHESIS, TemplateConfig, parse_first_round
from .errors import EndpointRequestError, SchemaViolationError

DEFAULT_PREFIX = "User: "
DEFAULT_PARALLELISM = 8

FINISH_ERROR = "error"
DISCARD_GENERATION_ERROR = "generation_error"


@dataclass(frozen=True)
class GenParams:
    """Sampling parameters for one generation run."""

    prefix: str = DEFAULT_PREFIX
    temperature: float = 1.0
    top_p: float = 0.9
    max_tokens: int = 512
    count: int = 1
    seed: int | None = None

    def __post_init__(self) -> None:
        if self.temperature < 0:
            raise SchemaViolationError("temperature must be >= 0")
        if not 0 < self.top_p <= 1:
            raise SchemaViolationError("top_p must be in (0, 1]")
        if self.count < 1:
            raise SchemaViolationError("count must be >= 1")
        if self.max_tokens < 1:
            raise SchemaViolationError("max_tokens must be >= 1")

    def to_json(self) -> dict:
        out = {
            "prefix": self.prefix,
            "temperature": self.temperature,
            "top_p": self.top_p,
            "max_tokens": self.max_tokens,
            "count": self.count,
        }
        if self.seed is not None:
            out["seed"] = self.seed
        return out

    @classmethod
    def from_json(cls, obj: dict) -> "GenParams":
        return cls(
            prefix=obj.get("prefix", DEFAULT_PREFIX),
            temperature=float(obj.get("temperature", 1.0)),
            top_p=float(obj.get("top_p", 0.9)),
            max_tokens=int(obj.get("max_tokens", 512)),
            count=int(obj.get("count", 1)),
            seed=obj.get("seed"),
        )

    def meta_strings(self) -> dict[str, str]:
        """Generation settings recorded into each harvested record's meta."""
        meta = {
            "temperature": repr(self.temperature),
            "top_p": repr(self.top_p),
            "max_tokens": str(self.max_tokens),
        }
        if self.seed is not None:
            meta["seed"] = str(self.seed)
        return meta


@dataclass(frozen=True)
class RawGeneration:
    index: int
    text: str
    finish_reason: str
    endpoint_meta: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {"index": self.index, "text": self.text, "finish_reason": self.finish_reason}


@dataclass
class HarvestStats:
    """Conservation accounting: valid_count + sum(discards) == raw_count."""

    raw_count: int = 0
    valid_count: int = 0
    discards: dict[str, int] = field(default_factory=dict)

    def add_discard(self, reason: str) -> None:
        self.discards[reason] = self.discards.get(reason, 0) + 1

    def to_json(self) -> dict:
        return {
            "raw_count": self.raw_count,
            "valid_count": self.valid_count,
            "discards": dict(sorted(self.discards.items())),
        }


def generate_batch(
    endpoint_url: str,
    params: GenParams,
    *,
    parallelism: int = DEFAULT_PARALLELISM,
    request_batch: int = 8,
    max_attempts: int = endpoints.DEFAULT_MAX_ATTEMPTS,
    backoff_base: float = endpoints.DEFAULT_BACKOFF_BASE,
    timeout: float = endpoints.DEFAULT_TIMEOUT,
    api_key: str | None = None,
) -> Iterator[RawGeneration]:
    """Yield exactly ``params.count`` RawGenerations in index order.

    Requests run with bounded in-flight parallelism and are re-sequenced by
    index before emission. A request that keeps failing at the HTTP level
    degrades to per-item placeholders (empty text, finish_reason="error")
    instead of aborting the run; unreachable endpoints and persistent rate
    limiting raise.
    """
    url = endpoint_url.rstrip("/") + "/completions"
    spans = [
        (start, min(start + request_batch, params.count))
        for start in range(0, params.count, request_batch)
    ]

    def one_request(span: tuple[int, int]) -> list[RawGeneration]:
        start, stop = span
        n = stop - start
        payload = {
            "prompt": params.prefix,
            "temperature": params.temperature,
            "top_p": params.top_p,
            "max_tokens": params.max_tokens,
            "n": n,
        }
        if params.seed is not None:
            # Stable per-request seed so reruns hit the endpoint identically.
            payload["seed"] = params.seed + start
        try:
            body = endpoints.post_json_with_retries(
                client,
                url,
                payload,
                max_attempts=max_attempts,
                backoff_base=backoff_base,
                api_key=api_key,
            )
            choices = body["choices"]
            if len(choices) != n:
                raise EndpointRequestError(
                    f"asked for {n} completions, endpoint returned {len(choices)}"
                )
            out = []
            for offset, choice in enumerate(choices):
                meta = {k: body[k] for k in ("model", "id") if k in body}
                out.append(
                    RawGeneration(
                        index=start + offset,
                        text=params.prefix + str(choice.get("text", "")),
                        finish_reason=str(choice.get("finish_reason", "")),
                        endpoint_meta=meta,
                    )
                )
            return out
        except (EndpointRequestError, KeyError, TypeError):
            return [
                RawGeneration(index=i, text="", finish_reason=FINISH_ERROR)
                for i in range(start, stop)
            ]

    with httpx.Client(timeout=timeout) as client:
        with ThreadPoolExecutor(max_workers=max(1, parallelism)) as pool:
            futures = [pool.submit(one_request, span) for span in spans]
            for future in futures:
                yield from future.result()


def write_replay(path: str | Path, generations: Iterable[RawGeneration]) -> int:
    """Persist raw generations for offline re-harvesting; returns the count."""
    count = 0
    with open(path, "w", encoding="utf-8") as fh:
        for gen in generations:
            fh.write(json.dumps(gen.to_json(), ensure_ascii=False))
            fh.write("\n")
            count += 1
    return count


def read_replay(path: str | Path) -> Iterator[RawGeneration]:
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            obj = json.loads(line)
            yield RawGeneration(
                index=int(obj["index"]),
                text=str(obj["text"]),
                finish_reason=str(obj.get("finish_reason", "")),
            )


def harvest(
    raw: Iterable[RawGeneration],
    *,
    template: TemplateConfig = TemplateConfig(),
    params: GenParams | None = None,
    id_prefix: str = "synthesis",
    stats: HarvestStats | None = None,
) -> tuple[Iterator[ChatRecord], HarvestStats]:
    """Parse raw generations into first-round records with discard accounting.

    The stats object is complete once the record stream is exhausted.
    """
    if stats is None:
        stats = HarvestStats()
    base_meta = params.meta_strings() if params is not None else {}

    def records() -> Iterator[ChatRecord]:
        for gen in raw:
            stats.raw_count += 1
            if gen.finish_reason == FINISH_ERROR and not gen.text:
                stats.add_discard(DISCARD_GENERATION_ERROR)
                continue
            meta = dict(base_meta)
            meta["raw_index"] = str(gen.index)
            if gen.finish_reason:
                meta["finish_reason"] = gen.finish_reason
            parsed = parse_first_round(
                gen.text,
                template,
                record_id=f"{id_prefix}-{gen.index:06d}",
                source=SOURCE_SYNTHESIS,
                meta=meta,
            )
            if isinstance(parsed, Discard):
                stats.add_discard(parsed.reason)
                continue
            stats.valid_count += 1
            yield parsed

    return records(), stats
