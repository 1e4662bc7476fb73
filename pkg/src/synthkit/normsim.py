"""Exact max-inner-product scoring of a query corpus against a reference.

NormSim(x) is the maximum over reference rows z of the inner product z·x.
All rows are L2-normalized (the shipped default), so scores are cosine
similarities in [-1, 1]; a raw-products mode is available for sensitivity
checks. Scoring is exact: the reference is tiled to a scratch-memory budget
and every pair is visited, with products accumulated in double precision.
Max is order-independent, so results do not depend on the tiling.

Embeddings live in a simple binary container (magic ``NSIM``) that can be
memory-mapped, so reference corpora far larger than RAM score fine.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import httpx
import numpy as np

from . import endpoints
from .errors import (
    CorruptHeaderError,
    DimensionMismatchError,
    DuplicateIdError,
    EmptyMatrixError,
    EmptyReferenceError,
    EmptyScoresError,
    EndpointRequestError,
    SchemaViolationError,
)

SIDE_PROMPT = "prompt"
SIDE_RESPONSE = "response"
_SIDES = (SIDE_PROMPT, SIDE_RESPONSE)

MAGIC = b"NSIM"
# The version field doubles as the storage precision: 1 = float32 rows,
# 2 = float64 rows. There is no separate dtype field in the header.
VERSION_F32 = 1
VERSION_F64 = 2
_DTYPES = {VERSION_F32: np.dtype("<f4"), VERSION_F64: np.dtype("<f8")}

DEFAULT_MEMORY_BUDGET = 512 * 1024 * 1024
DEFAULT_BANDS = (0.35, 0.85)
DEFAULT_EMBED_BATCH = 64

_HEADER = struct.Struct("<4sIIQ")
_IDLEN = struct.Struct("<I")


def default_grid() -> np.ndarray:
    """Threshold grid -1.00, -0.99, ..., 1.00."""
    return np.round(np.linspace(-1.0, 1.0, 201), 2)


def l2_normalize(rows: np.ndarray) -> np.ndarray:
    """Return a float64 copy with unit-norm rows."""
    out = np.asarray(rows, dtype=np.float64)
    norms = np.linalg.norm(out, axis=1, keepdims=True)
    if out.shape[0] and not norms.all():
        where = int(np.flatnonzero(norms.ravel() == 0.0)[0])
        raise SchemaViolationError(f"row {where} has zero norm, cannot normalize")
    return out / norms if out.shape[0] else out


@dataclass(frozen=True)
class EmbeddingMatrix:
    """One embedding row per id; ``side`` records which text was embedded."""

    ids: tuple[str, ...]
    rows: np.ndarray
    side: str | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "ids", tuple(str(i) for i in self.ids))
        if self.rows.ndim != 2:
            raise SchemaViolationError("embedding rows must be a 2-d matrix")
        if len(self.ids) != self.rows.shape[0]:
            raise SchemaViolationError(
                f"{len(self.ids)} ids for {self.rows.shape[0]} rows"
            )
        if self.rows.shape[0] and self.rows.shape[1] < 1:
            raise SchemaViolationError("embedding dim must be positive")
        if self.side is not None and self.side not in _SIDES:
            raise SchemaViolationError(f"unknown side {self.side!r}")
        if len(set(self.ids)) != len(self.ids):
            raise DuplicateIdError("duplicate ids in embedding matrix")

    @property
    def count(self) -> int:
        return self.rows.shape[0]

    @property
    def dim(self) -> int:
        return self.rows.shape[1]

    @classmethod
    def build(
        cls,
        ids: Iterable[str],
        rows: np.ndarray,
        *,
        side: str | None = None,
        normalize: bool = True,
    ) -> "EmbeddingMatrix":
        rows = np.asarray(rows, dtype=np.float64)
        if normalize:
            rows = l2_normalize(rows)
        return cls(ids=tuple(ids), rows=rows, side=side)


def embed_via_endpoint(
    texts: Sequence[str],
    endpoint_url: str,
    side: str | None,
    *,
    ids: Sequence[str] | None = None,
    batch_size: int = DEFAULT_EMBED_BATCH,
    max_attempts: int = endpoints.DEFAULT_MAX_ATTEMPTS,
    backoff_base: float = endpoints.DEFAULT_BACKOFF_BASE,
    timeout: float = endpoints.DEFAULT_TIMEOUT,
    api_key: str | None = None,
) -> EmbeddingMatrix:
    """Embed texts in batches; rows come back L2-normalized, input order."""
    texts = list(texts)
    if not texts:
        raise EmptyMatrixError("no texts to embed")
    if ids is None:
        ids = [str(i) for i in range(len(texts))]
    elif len(ids) != len(texts):
        raise SchemaViolationError(f"{len(ids)} ids for {len(texts)} texts")

    url = endpoint_url.rstrip("/") + "/embeddings"
    chunks: list[np.ndarray] = []
    dim: int | None = None
    with httpx.Client(timeout=timeout) as client:
        for start in range(0, len(texts), max(1, batch_size)):
            batch = texts[start : start + batch_size]
            body = endpoints.post_json_with_retries(
                client,
                url,
                {"input": batch},
                max_attempts=max_attempts,
                backoff_base=backoff_base,
                api_key=api_key,
            )
            try:
                vectors = [item["embedding"] for item in body["data"]]
            except (KeyError, TypeError) as exc:
                raise EndpointRequestError(f"malformed embedding response: {exc}") from exc
            if len(vectors) != len(batch):
                raise EndpointRequestError(
                    f"sent {len(batch)} texts, got {len(vectors)} embeddings"
                )
            arr = np.asarray(vectors, dtype=np.float64)
            if arr.ndim != 2:
                raise DimensionMismatchError("ragged embedding batch")
            if dim is None:
                dim = arr.shape[1]
            elif arr.shape[1] != dim:
                raise DimensionMismatchError(
                    f"embedding dim changed across batches: {dim} then {arr.shape[1]}"
                )
            chunks.append(arr)
    return EmbeddingMatrix.build(ids, np.vstack(chunks), side=side, normalize=True)


def save_embeddings(
    matrix: EmbeddingMatrix, path: str | Path, *, precision: str = "f32"
) -> None:
    """Write the binary container; ``precision`` is ``f32`` or ``f64``."""
    version = {"f32": VERSION_F32, "f64": VERSION_F64}.get(precision)
    if version is None:
        raise SchemaViolationError(f"unknown precision {precision!r}")
    dtype = _DTYPES[version]
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, version, matrix.dim, matrix.count))
        for rid in matrix.ids:
            raw = rid.encode("utf-8")
            fh.write(_IDLEN.pack(len(raw)))
            fh.write(raw)
        # Chunked so float64 matrices larger than RAM headroom still save.
        step = max(1, (8 << 20) // max(1, matrix.dim * dtype.itemsize))
        for start in range(0, matrix.count, step):
            block = np.ascontiguousarray(matrix.rows[start : start + step], dtype=dtype)
            fh.write(block.tobytes())


def load_embeddings(
    path: str | Path,
    *,
    side: str | None = None,
    normalize: bool = True,
    mmap: bool = False,
) -> EmbeddingMatrix:
    """Read the binary container.

    ``mmap=True`` maps the row payload instead of reading it; combine with
    ``normalize=False`` or the normalized copy materializes anyway. The
    format does not record the side, so the caller supplies it.
    """
    with open(path, "rb") as fh:
        head = fh.read(_HEADER.size)
        if len(head) < _HEADER.size:
            raise CorruptHeaderError(f"{path}: truncated header")
        magic, version, dim, count = _HEADER.unpack(head)
        if magic != MAGIC:
            raise CorruptHeaderError(f"{path}: bad magic {magic!r}")
        if version not in _DTYPES:
            raise CorruptHeaderError(f"{path}: unknown version {version}")
        if dim < 1:
            raise CorruptHeaderError(f"{path}: non-positive dim {dim}")
        if count == 0:
            raise EmptyMatrixError(f"{path}: zero rows")
        dtype = _DTYPES[version]
        ids = []
        for _ in range(count):
            raw_len = fh.read(_IDLEN.size)
            if len(raw_len) < _IDLEN.size:
                raise CorruptHeaderError(f"{path}: truncated id table")
            (n,) = _IDLEN.unpack(raw_len)
            raw = fh.read(n)
            if len(raw) < n:
                raise CorruptHeaderError(f"{path}: truncated id table")
            ids.append(raw.decode("utf-8"))
        offset = fh.tell()
        payload = count * dim * dtype.itemsize
        fh.seek(0, 2)
        if fh.tell() - offset < payload:
            raise CorruptHeaderError(f"{path}: row payload shorter than header claims")
        if mmap:
            rows: np.ndarray = np.memmap(
                path, dtype=dtype, mode="r", offset=offset, shape=(count, dim)
            )
        else:
            fh.seek(offset)
            rows = np.fromfile(fh, dtype=dtype, count=count * dim).reshape(count, dim)
    if normalize:
        rows = l2_normalize(rows)
    return EmbeddingMatrix(ids=tuple(ids), rows=rows, side=side)


@dataclass(frozen=True)
class BlockPlan:
    """Tile sizes chosen so f64 scratch stays within the budget."""

    query_block: int
    ref_block: int
    scratch_bytes: int


def plan_blocks(n_query: int, n_ref: int, dim: int, budget: int) -> BlockPlan:
    # Scratch = query tile + reference tile (both f64) + their product.
    item = dim * 8
    qb = min(max(1, n_query), max(1, (budget // 3) // item))
    rb = (budget - qb * item) // (item + qb * 8)
    rb = min(max(1, n_ref), max(1, rb))
    scratch = qb * item + rb * item + qb * rb * 8
    return BlockPlan(query_block=qb, ref_block=rb, scratch_bytes=scratch)


@dataclass(frozen=True)
class NormSimScores:
    """One score per query id: the max inner product against the reference."""

    side: str | None
    reference_id: str
    scores: dict[str, float]

    def values(self) -> list[float]:
        return list(self.scores.values())

    def to_json(self) -> dict:
        return {
            "side": self.side,
            "reference_id": self.reference_id,
            "scores": self.scores,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "NormSimScores":
        return cls(
            side=obj.get("side"),
            reference_id=str(obj.get("reference_id", "")),
            scores={str(k): float(v) for k, v in obj["scores"].items()},
        )


def write_scores(scores: NormSimScores, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(scores.to_json(), fh)
        fh.write("\n")


def read_scores(path: str | Path) -> NormSimScores:
    with open(path, "r", encoding="utf-8") as fh:
        return NormSimScores.from_json(json.load(fh))


def _block_f64(rows: np.ndarray, start: int, stop: int, normalize: bool) -> np.ndarray:
    block = np.asarray(rows[start:stop], dtype=np.float64)
    if not normalize:
        return block
    norms = np.linalg.norm(block, axis=1, keepdims=True)
    if not norms.all():
        where = start + int(np.flatnonzero(norms.ravel() == 0.0)[0])
        raise SchemaViolationError(f"row {where} has zero norm, cannot normalize")
    return block / norms


def normsim_scores(
    query: EmbeddingMatrix,
    reference: EmbeddingMatrix,
    *,
    memory_budget: int = DEFAULT_MEMORY_BUDGET,
    raw_products: bool = False,
    reference_id: str = "reference",
) -> NormSimScores:
    """score(x) = max over reference rows z of z·x, exactly.

    Rows are renormalized in double precision on the way in (a no-op for
    already-unit rows) and scores clipped to [-1, 1]; ``raw_products=True``
    skips both, leaving plain max inner products. Either matrix may be
    memory-mapped: only the current tiles are materialized.
    """
    if reference.count == 0:
        raise EmptyReferenceError("reference matrix has no rows")
    if query.count and query.dim != reference.dim:
        raise DimensionMismatchError(
            f"query dim {query.dim} != reference dim {reference.dim}"
        )
    if query.side and reference.side and query.side != reference.side:
        raise SchemaViolationError(
            f"query side {query.side!r} != reference side {reference.side!r}"
        )

    plan = plan_blocks(query.count, reference.count, reference.dim, memory_budget)
    best = np.full(query.count, -np.inf)
    for qstart in range(0, query.count, plan.query_block):
        qstop = min(qstart + plan.query_block, query.count)
        qblk = _block_f64(query.rows, qstart, qstop, not raw_products)
        out = best[qstart:qstop]
        for rstart in range(0, reference.count, plan.ref_block):
            rstop = min(rstart + plan.ref_block, reference.count)
            rblk = _block_f64(reference.rows, rstart, rstop, not raw_products)
            np.maximum(out, (qblk @ rblk.T).max(axis=1), out=out)
    if not raw_products:
        np.clip(best, -1.0, 1.0, out=best)
    scores = {rid: float(val) for rid, val in zip(query.ids, best)}
    return NormSimScores(side=query.side or reference.side, reference_id=reference_id, scores=scores)


@dataclass(frozen=True)
class SimilarityCurve:
    """fraction(t) = share of scores >= t, over an ascending threshold grid."""

    thresholds: tuple[float, ...]
    fractions: tuple[float, ...]

    def __post_init__(self) -> None:
        if len(self.thresholds) != len(self.fractions):
            raise SchemaViolationError("thresholds and fractions differ in length")

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("threshold,fraction\n")
            for t, f in zip(self.thresholds, self.fractions):
                fh.write(f"{t!r},{f!r}\n")

    def to_json(self) -> dict:
        return {"thresholds": list(self.thresholds), "fractions": list(self.fractions)}


def _score_values(scores: "NormSimScores | Mapping[str, float] | Iterable[float]") -> np.ndarray:
    if isinstance(scores, NormSimScores):
        vals = list(scores.scores.values())
    elif isinstance(scores, Mapping):
        vals = list(scores.values())
    else:
        vals = list(scores)
    if not vals:
        raise EmptyScoresError("no scores")
    return np.asarray(vals, dtype=np.float64)


def similarity_curve(
    scores: "NormSimScores | Mapping[str, float] | Iterable[float]",
    grid: Sequence[float] | np.ndarray | None = None,
) -> SimilarityCurve:
    vals = _score_values(scores)
    thresholds = default_grid() if grid is None else np.asarray(grid, dtype=np.float64)
    if thresholds.size == 0:
        raise SchemaViolationError("empty threshold grid")
    if thresholds.size > 1 and not (np.diff(thresholds) > 0).all():
        raise SchemaViolationError("threshold grid must be strictly ascending")
    ordered = np.sort(vals)
    # searchsorted(left) finds the first score >= t.
    idx = np.searchsorted(ordered, thresholds, side="left")
    fractions = (ordered.size - idx) / ordered.size
    return SimilarityCurve(
        thresholds=tuple(float(t) for t in thresholds),
        fractions=tuple(float(f) for f in fractions),
    )


def write_curves_csv(path: str | Path, curves: Mapping[str, SimilarityCurve]) -> None:
    """Long-form CSV of several curves, one labeled row per grid point."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("side,threshold,fraction\n")
        for side, curve in curves.items():
            for t, f in zip(curve.thresholds, curve.fractions):
                fh.write(f"{side},{t!r},{f!r}\n")


@dataclass(frozen=True)
class SideStats:
    count: int
    q1: float
    median: float
    q3: float
    mass_below: float
    mass_mid: float
    mass_above: float

    def to_json(self) -> dict:
        return {
            "count": self.count,
            "q1": self.q1,
            "median": self.median,
            "q3": self.q3,
            "mass_below": self.mass_below,
            "mass_mid": self.mass_mid,
            "mass_above": self.mass_above,
        }


@dataclass(frozen=True)
class RelevanceNoveltyReport:
    """Score concentration per side: quartiles plus low/mid/high band masses.

    Mass near the top band means the synthesis mostly repeats the reference;
    mass in the bottom band means it drifted off-distribution. The three
    masses partition the scores, so they sum to 1.
    """

    low_band: float
    high_band: float
    prompt: SideStats
    response: SideStats

    def to_json(self) -> dict:
        return {
            "bands": {"low": self.low_band, "high": self.high_band},
            "prompt": self.prompt.to_json(),
            "response": self.response.to_json(),
        }


def _side_stats(values: np.ndarray, low: float, high: float) -> SideStats:
    q1, median, q3 = np.percentile(values, [25.0, 50.0, 75.0])
    n = values.size
    return SideStats(
        count=int(n),
        q1=float(q1),
        median=float(median),
        q3=float(q3),
        mass_below=float((values < low).sum() / n),
        mass_mid=float(((values >= low) & (values <= high)).sum() / n),
        mass_above=float((values > high).sum() / n),
    )


def relevance_novelty_report(
    prompt_scores: "NormSimScores | Mapping[str, float] | Iterable[float]",
    response_scores: "NormSimScores | Mapping[str, float] | Iterable[float]",
    bands: tuple[float, float] = DEFAULT_BANDS,
) -> RelevanceNoveltyReport:
    low, high = bands
    if not low < high:
        raise SchemaViolationError(f"band bounds must satisfy low < high, got {bands}")
    return RelevanceNoveltyReport(
        low_band=float(low),
        high_band=float(high),
        prompt=_side_stats(_score_values(prompt_scores), low, high),
        response=_side_stats(_score_values(response_scores), low, high),
    )
