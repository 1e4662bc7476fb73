"""Chat data model, unified-template rendering/parsing, and JSONL streaming.

Every conversation is stored as a ChatRecord and rendered to plain text with
two role markers::

    User: <prompt content><SEP>Assistant: <response content>

SEP is a single newline by default; a single space reproduces the one-line
form. Parsing anchors role markers at line starts (newline SEP) or after any
whitespace (space SEP), so marker strings inside ordinary content do not
split a message.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Iterator, Union

from .errors import EmptyPromptError, MultiRoundRecordError, SchemaViolationError

ROLE_USER = "user"
ROLE_ASSISTANT = "assistant"
ROLES = (ROLE_USER, ROLE_ASSISTANT)

SOURCE_TRAIN = "train"
SOURCE_SYNTHESIS = "synthesis"
SOURCES = (SOURCE_TRAIN, SOURCE_SYNTHESIS)

USER_MARKER = "User:"
ASSISTANT_MARKER = "Assistant:"

SEP_NEWLINE = "\n"
SEP_SPACE = " "

# Anchored role markers. With the newline SEP a marker counts only at a line
# start; with the space SEP it also counts after any whitespace.
_MARKER_RE_NEWLINE = re.compile(r"(?m)^(User:|Assistant:)")
_MARKER_RE_SPACE = re.compile(r"(?:^|(?<=\s))(User:|Assistant:)")

# Machine-readable discard reasons emitted by parse_first_round.
DISCARD_INVALID_ENCODING = "invalid_encoding"
DISCARD_MISSING_USER_MARKER = "missing_user_marker"
DISCARD_NO_RESPONSE = "no_response"
DISCARD_EMPTY_PROMPT = "empty_prompt"
DISCARD_EMPTY_RESPONSE = "empty_response"


@dataclass(frozen=True)
class TemplateConfig:
    """Unified-template settings; only the separator is configurable."""

    sep: str = SEP_NEWLINE

    def __post_init__(self) -> None:
        if self.sep not in (SEP_NEWLINE, SEP_SPACE):
            raise SchemaViolationError(f"unsupported template separator: {self.sep!r}")

    @property
    def marker_re(self) -> re.Pattern[str]:
        return _MARKER_RE_NEWLINE if self.sep == SEP_NEWLINE else _MARKER_RE_SPACE


@dataclass(frozen=True)
class Message:
    role: str
    content: str

    def __post_init__(self) -> None:
        if self.role not in ROLES:
            raise SchemaViolationError(f"unknown role: {self.role!r}")
        if not isinstance(self.content, str):
            raise SchemaViolationError("message content must be a string")


@dataclass(frozen=True)
class ChatRecord:
    """One conversation: role-alternating messages starting with a user turn."""

    id: str
    messages: tuple[Message, ...]
    source: str = SOURCE_TRAIN
    meta: dict[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        object.__setattr__(self, "messages", tuple(self.messages))
        if not self.messages:
            raise SchemaViolationError("record has no messages")
        for i, msg in enumerate(self.messages):
            expected = ROLE_USER if i % 2 == 0 else ROLE_ASSISTANT
            if msg.role != expected:
                raise SchemaViolationError(
                    f"message {i} has role {msg.role!r}, expected {expected!r}"
                )
        if self.source not in SOURCES:
            raise SchemaViolationError(f"unknown source: {self.source!r}")

    @property
    def is_single_round(self) -> bool:
        return len(self.messages) == 2

    @property
    def prompt(self) -> str:
        """User content of a single-round record."""
        self._require_single_round()
        return self.messages[0].content

    @property
    def response(self) -> str:
        """Assistant content of a single-round record."""
        self._require_single_round()
        return self.messages[1].content

    def _require_single_round(self) -> None:
        if not self.is_single_round:
            raise MultiRoundRecordError(
                f"record {self.id!r} has {len(self.messages)} messages, "
                "expected exactly one user/assistant round"
            )

    def to_json(self) -> dict:
        return {
            "id": self.id,
            "messages": [{"role": m.role, "content": m.content} for m in self.messages],
            "source": self.source,
            "meta": dict(self.meta),
        }

    @classmethod
    def from_json(cls, obj: object) -> "ChatRecord":
        if not isinstance(obj, dict):
            raise SchemaViolationError("record must be a JSON object")
        rec_id = obj.get("id")
        if not isinstance(rec_id, str):
            raise SchemaViolationError("record id must be a string")
        raw_messages = obj.get("messages")
        if not isinstance(raw_messages, list) or not raw_messages:
            raise SchemaViolationError("record messages must be a non-empty list")
        messages = []
        for m in raw_messages:
            if not isinstance(m, dict):
                raise SchemaViolationError("message must be a JSON object")
            role = m.get("role")
            content = m.get("content")
            if not isinstance(role, str) or not isinstance(content, str):
                raise SchemaViolationError("message role/content must be strings")
            messages.append(Message(role=role, content=content))
        source = obj.get("source", SOURCE_TRAIN)
        if not isinstance(source, str):
            raise SchemaViolationError("record source must be a string")
        meta = obj.get("meta", {})
        if not isinstance(meta, dict) or not all(
            isinstance(k, str) and isinstance(v, str) for k, v in meta.items()
        ):
            raise SchemaViolationError("record meta must map strings to strings")
        return cls(id=rec_id, messages=tuple(messages), source=source, meta=dict(meta))

    def with_meta(self, extra: dict[str, str]) -> "ChatRecord":
        merged = dict(self.meta)
        merged.update(extra)
        return replace(self, meta=merged)

    def retagged(self, new_id: str, source: str) -> "ChatRecord":
        return replace(self, id=new_id, source=source)


def single_round(
    record_id: str,
    prompt: str,
    response: str,
    source: str = SOURCE_TRAIN,
    meta: dict[str, str] | None = None,
) -> ChatRecord:
    """Convenience constructor for one user/assistant round."""
    return ChatRecord(
        id=record_id,
        messages=(Message(ROLE_USER, prompt), Message(ROLE_ASSISTANT, response)),
        source=source,
        meta=dict(meta or {}),
    )


@dataclass(frozen=True)
class RenderedText:
    """Rendered template text with byte spans of the two content regions."""

    text: str
    prompt_span: tuple[int, int]
    response_span: tuple[int, int]


@dataclass(frozen=True)
class Discard:
    """Why a raw generation was rejected; a value, not an exception."""

    reason: str


def render_unified(record: ChatRecord, template: TemplateConfig = TemplateConfig()) -> RenderedText:
    """Render a single-round record to the unified template.

    The returned spans index the raw UTF-8 bytes of ``text`` and cover the
    prompt and response content exactly (role markers excluded).
    """
    if len(record.messages) != 2:
        raise MultiRoundRecordError(
            f"record {record.id!r} has {len(record.messages)} messages, "
            "expected exactly one user/assistant round"
        )
    prompt = record.prompt
    response = record.response
    if not prompt.strip():
        raise EmptyPromptError(f"record {record.id!r} has an empty prompt")

    user_tag = USER_MARKER + " "
    assistant_tag = ASSISTANT_MARKER + " "
    text = user_tag + prompt + template.sep + assistant_tag + response

    # Tags and SEP are ASCII, so byte arithmetic only needs the contents encoded.
    prompt_start = len(user_tag)
    prompt_end = prompt_start + len(prompt.encode("utf-8"))
    response_start = prompt_end + len(template.sep) + len(assistant_tag)
    response_end = response_start + len(response.encode("utf-8"))
    return RenderedText(
        text=text,
        prompt_span=(prompt_start, prompt_end),
        response_span=(response_start, response_end),
    )


def parse_first_round(
    raw: Union[str, bytes],
    template: TemplateConfig = TemplateConfig(),
    *,
    record_id: str = "",
    source: str = SOURCE_SYNTHESIS,
    meta: dict[str, str] | None = None,
) -> ChatRecord | Discard:
    """Extract the first user/assistant round from raw template text.

    Anything after the first round is dropped. Returns a Discard with a
    machine-readable reason when no complete first round exists.
    """
    if isinstance(raw, bytes):
        try:
            raw = raw.decode("utf-8")
        except UnicodeDecodeError:
            return Discard(DISCARD_INVALID_ENCODING)
    else:
        try:
            raw.encode("utf-8")
        except UnicodeEncodeError:
            return Discard(DISCARD_INVALID_ENCODING)

    markers = list(template.marker_re.finditer(raw))
    if not markers or markers[0].group(1) != USER_MARKER:
        return Discard(DISCARD_MISSING_USER_MARKER)
    if len(markers) < 2 or markers[1].group(1) != ASSISTANT_MARKER:
        # The first round never reached an assistant turn.
        return Discard(DISCARD_NO_RESPONSE)

    prompt = raw[markers[0].end() : markers[1].start()].strip()
    if not prompt:
        return Discard(DISCARD_EMPTY_PROMPT)

    response_end = markers[2].start() if len(markers) > 2 else len(raw)
    response = raw[markers[1].end() : response_end].strip()
    if not response:
        return Discard(DISCARD_EMPTY_RESPONSE)

    return single_round(record_id, prompt, response, source=source, meta=meta)


@dataclass
class ReadSummary:
    """Sidecar accounting for a JSONL read: schema violations are skipped, not fatal."""

    records: int = 0
    skipped: int = 0

    def to_json(self) -> dict:
        return {"records": self.records, "skipped": self.skipped}


def read_jsonl(
    path: str | Path, summary: ReadSummary | None = None
) -> Iterator[ChatRecord]:
    """Stream ChatRecords from a JSONL file, skipping malformed lines.

    Constant memory in the dataset size. Pass a ReadSummary to learn how many
    lines were skipped; it is complete once the stream is exhausted.
    """
    if summary is None:
        summary = ReadSummary()
    with open(path, "rb") as fh:
        for line in fh:
            if not line.strip():
                continue
            try:
                obj = json.loads(line.decode("utf-8"))
                record = ChatRecord.from_json(obj)
            except (UnicodeDecodeError, json.JSONDecodeError, SchemaViolationError):
                summary.skipped += 1
                continue
            summary.records += 1
            yield record


def write_jsonl(path: str | Path, records: Iterable[ChatRecord]) -> int:
    """Write records one JSON object per line, in input order; returns the count."""
    count = 0
    with open(path, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(record.to_json(), ensure_ascii=False))
            fh.write("\n")
            count += 1
    return count
