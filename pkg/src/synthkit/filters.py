"""Rule-based filters: code-keyword removal and consecutive-repetition removal.

Both verdicts are pure functions of (record, config). A flagged record is
dropped whole; reasons are tallied in a FilterReport whose arithmetic always
conserves the input count.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Callable, Iterable, Iterator, Sequence

from .corpus import ChatRecord, ROLE_ASSISTANT, ROLE_USER
from .errors import FilterConfigError

REASON_CODE_KEYWORD = "code_keyword"
REASON_REPEAT_LINES = "repeat_lines"
REASON_REPEAT_NGRAM = "repeat_ngram"

SCAN_PROMPT = "prompt"
SCAN_RESPONSE = "response"
SCAN_BOTH = "both"
SCAN_TARGETS = (SCAN_PROMPT, SCAN_RESPONSE, SCAN_BOTH)


def load_keywords(path: str | Path) -> tuple[str, ...]:
    """Read one literal keyword per line.

    Blank lines and comment lines are skipped; a comment starts with ``# ``
    (hash space) or is a lone ``#``, so keywords like ``#include`` survive.
    Trailing spaces inside a keyword are significant.
    """
    keywords = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.rstrip("\r\n")
            if not line.strip():
                continue
            if line == "#" or line.lstrip().startswith("# "):
                continue
            keywords.append(line)
    return tuple(keywords)


@lru_cache(maxsize=1)
def default_code_keywords() -> tuple[str, ...]:
    """Keyword list shipped with the package; fully user-overridable."""
    ref = resources.files("synthkit").joinpath("data/code_keywords.txt")
    with resources.as_file(ref) as path:
        return load_keywords(path)


@dataclass(frozen=True)
class FilterConfig:
    code_keywords: tuple[str, ...] = field(default_factory=default_code_keywords)
    code_scan_targets: str = SCAN_BOTH
    repeat_line_threshold: int = 3
    repeat_ngram_max: int = 8
    repeat_ngram_min_count: int = 5
    case_insensitive: bool = False
    code_enabled: bool = True
    repeats_enabled: bool = True

    def __post_init__(self) -> None:
        object.__setattr__(self, "code_keywords", tuple(self.code_keywords))
        if self.code_scan_targets not in SCAN_TARGETS:
            raise FilterConfigError(f"unknown scan target: {self.code_scan_targets!r}")
        if self.repeat_line_threshold < 2:
            raise FilterConfigError("repeat_line_threshold must be >= 2")
        if self.repeat_ngram_max < 1 or self.repeat_ngram_min_count < 2:
            raise FilterConfigError("repeat n-gram thresholds must be positive")
        if self.code_enabled and not self.code_keywords:
            raise FilterConfigError("code filter enabled with an empty keyword list")


@dataclass(frozen=True)
class FilterVerdict:
    keep: bool
    reasons: tuple[str, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "reasons", tuple(self.reasons))
        if self.keep != (not self.reasons):
            raise FilterConfigError("keep must be true exactly when reasons is empty")


_KEEP = FilterVerdict(keep=True, reasons=())


@dataclass
class FilterReport:
    """Aggregate accounting: a record dropped for several reasons is counted
    once in kept/dropped arithmetic but appears in every matching reason tally."""

    input_count: int = 0
    kept_count: int = 0
    dropped_count: int = 0
    reason_counts: dict[str, int] = field(default_factory=dict)

    def record(self, verdict: FilterVerdict) -> None:
        self.input_count += 1
        if verdict.keep:
            self.kept_count += 1
        else:
            self.dropped_count += 1
            for reason in verdict.reasons:
                self.reason_counts[reason] = self.reason_counts.get(reason, 0) + 1

    def to_json(self) -> dict:
        return {
            "input_count": self.input_count,
            "kept_count": self.kept_count,
            "dropped_count": self.dropped_count,
            "reason_counts": dict(sorted(self.reason_counts.items())),
        }


def _scanned_contents(record: ChatRecord, targets: str) -> Iterator[str]:
    for message in record.messages:
        if targets == SCAN_BOTH:
            yield message.content
        elif targets == SCAN_PROMPT and message.role == ROLE_USER:
            yield message.content
        elif targets == SCAN_RESPONSE and message.role == ROLE_ASSISTANT:
            yield message.content


def filter_code(record: ChatRecord, cfg: FilterConfig) -> FilterVerdict:
    """Flag records containing any configured keyword as a literal substring."""
    if not cfg.code_enabled:
        return _KEEP
    keywords: Sequence[str] = cfg.code_keywords
    fold = str.casefold if cfg.case_insensitive else (lambda s: s)
    folded_keywords = [fold(k) for k in keywords]
    for content in _scanned_contents(record, cfg.code_scan_targets):
        haystack = fold(content)
        if any(k in haystack for k in folded_keywords):
            return FilterVerdict(keep=False, reasons=(REASON_CODE_KEYWORD,))
    return _KEEP


def _has_repeated_lines(text: str, threshold: int) -> bool:
    run = 0
    previous: str | None = None
    for line in text.splitlines():
        line = line.strip()
        if not line:
            run, previous = 0, None
            continue
        run = run + 1 if line == previous else 1
        previous = line
        if run >= threshold:
            return True
    return False


def _has_repeated_ngram(tokens: Sequence[str], max_n: int, min_count: int) -> bool:
    total = len(tokens)
    for n in range(1, max_n + 1):
        if n * min_count > total:
            break
        for start in range(total - n):
            block = tokens[start : start + n]
            count = 1
            pos = start + n
            while pos + n <= total and tokens[pos : pos + n] == block:
                count += 1
                if count >= min_count:
                    return True
                pos += n
    return False


def filter_repeats(record: ChatRecord, cfg: FilterConfig) -> FilterVerdict:
    """Flag consecutive identical non-empty lines and consecutive n-gram loops.

    Lines are compared after stripping surrounding whitespace; n-grams are
    whitespace tokens, with every length 1..repeat_ngram_max checked.
    """
    if not cfg.repeats_enabled:
        return _KEEP
    reasons = []
    contents = [message.content for message in record.messages]
    if any(_has_repeated_lines(c, cfg.repeat_line_threshold) for c in contents):
        reasons.append(REASON_REPEAT_LINES)
    if any(
        _has_repeated_ngram(c.split(), cfg.repeat_ngram_max, cfg.repeat_ngram_min_count)
        for c in contents
    ):
        reasons.append(REASON_REPEAT_NGRAM)
    if reasons:
        return FilterVerdict(keep=False, reasons=tuple(reasons))
    return _KEEP


def evaluate(record: ChatRecord, cfg: FilterConfig) -> FilterVerdict:
    """Combined verdict of both filters; reasons accumulate."""
    reasons = filter_code(record, cfg).reasons + filter_repeats(record, cfg).reasons
    return FilterVerdict(keep=not reasons, reasons=reasons)


def apply_filters(
    records: Iterable[ChatRecord],
    cfg: FilterConfig,
    *,
    on_reject: Callable[[ChatRecord], None] | None = None,
) -> tuple[Iterator[ChatRecord], FilterReport]:
    """Stream kept records in input order; the report is complete once the
    stream is exhausted. Rejected records get their reasons recorded in meta
    and are handed to ``on_reject`` when provided."""
    report = FilterReport()

    def kept() -> Iterator[ChatRecord]:
        for record in records:
            verdict = evaluate(record, cfg)
            report.record(verdict)
            if verdict.keep:
                yield record
            elif on_reject is not None:
                on_reject(record.with_meta({"filter_reasons": ",".join(verdict.reasons)}))

    return kept(), report


def write_report(report: FilterReport, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(report.to_json(), fh, indent=2, sort_keys=False)
        fh.write("\n")
