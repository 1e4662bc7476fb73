"""Loss-span emission: response-only vs whole-sequence training targets.

Spans are byte offsets into the rendered template text, always on UTF-8
character boundaries, so any downstream trainer can map them to its own
token mask. In masked mode the loss covers the response content only (the
literal ``Assistant: `` tag stays masked unless explicitly included).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator

from .corpus import ASSISTANT_MARKER, ChatRecord, TemplateConfig, render_unified
from .errors import SchemaViolationError

MODE_MASKED = "masked"
MODE_NOMASK = "nomask"
MODES = (MODE_MASKED, MODE_NOMASK)

_ASSISTANT_TAG_BYTES = len((ASSISTANT_MARKER + " ").encode("utf-8"))


@dataclass(frozen=True)
class MaskedExample:
    """Rendered text plus sorted, disjoint, non-empty byte loss spans."""

    id: str
    text: str
    loss_spans: tuple[tuple[int, int], ...]
    mode: str

    def __post_init__(self) -> None:
        if self.mode not in MODES:
            raise SchemaViolationError(f"unknown mask mode: {self.mode!r}")
        object.__setattr__(
            self, "loss_spans", tuple((int(s), int(e)) for s, e in self.loss_spans)
        )
        limit = len(self.text.encode("utf-8"))
        prev_end = 0
        for start, end in self.loss_spans:
            if not (0 <= start < end <= limit):
                raise SchemaViolationError(f"span [{start},{end}) out of bounds 0..{limit}")
            if start < prev_end:
                raise SchemaViolationError("loss spans must be sorted and disjoint")
            prev_end = end

    def to_json(self) -> dict:
        return {
            "id": self.id,
            "text": self.text,
            "loss_spans": [[s, e] for s, e in self.loss_spans],
            "mode": self.mode,
        }

    @classmethod
    def from_json(cls, obj: object) -> "MaskedExample":
        if not isinstance(obj, dict):
            raise SchemaViolationError("masked example must be a JSON object")
        try:
            return cls(
                id=obj["id"],
                text=obj["text"],
                loss_spans=tuple((int(s), int(e)) for s, e in obj["loss_spans"]),
                mode=obj["mode"],
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise SchemaViolationError(f"bad masked example: {exc}") from exc


def emit_masks(
    record: ChatRecord,
    mode: str,
    template: TemplateConfig = TemplateConfig(),
    *,
    include_assistant_tag: bool = False,
) -> MaskedExample:
    """Render a single-round record and attach its loss spans for ``mode``.

    Deterministic for a fixed record, mode, and template. With
    ``include_assistant_tag`` the masked-mode span also covers the literal
    ``Assistant: `` tag (for ablations).
    """
    if mode not in MODES:
        raise SchemaViolationError(f"unknown mask mode: {mode!r}")
    rendered = render_unified(record, template)
    byte_len = len(rendered.text.encode("utf-8"))

    if mode == MODE_NOMASK:
        spans: tuple[tuple[int, int], ...] = ((0, byte_len),)
    else:
        start, end = rendered.response_span
        if include_assistant_tag:
            start -= _ASSISTANT_TAG_BYTES
        spans = ((start, end),) if end > start else ()

    return MaskedExample(id=record.id, text=rendered.text, loss_spans=spans, mode=mode)


def mask_coverage(example: MaskedExample) -> float:
    """Fraction of the text bytes that receive loss."""
    total = len(example.text.encode("utf-8"))
    if total == 0:
        return 0.0
    return sum(end - start for start, end in example.loss_spans) / total


def write_masked_jsonl(path: str | Path, examples: Iterable[MaskedExample]) -> int:
    count = 0
    with open(path, "w", encoding="utf-8") as fh:
        for example in examples:
            fh.write(json.dumps(example.to_json(), ensure_ascii=False))
            fh.write("\n")
            count += 1
    return count


def read_masked_jsonl(path: str | Path) -> Iterator[MaskedExample]:
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                yield MaskedExample.from_json(json.loads(line))
