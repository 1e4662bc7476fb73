"""Curation toolkit for synthetic instruction data.

Render and parse the unified chat template, emit response-only or
full-sequence loss spans, drive prefix-prompted generation, harvest and
filter first-round conversations, select subsets, mix datasets with epoch
budgeting, and score synthesis against a reference corpus with NormSim.
"""

from .corpus import (
    ChatRecord,
    Discard,
    Message,
    RenderedText,
    TemplateConfig,
    parse_first_round,
    read_jsonl,
    render_unified,
    single_round,
    write_jsonl,
)
from .errors import (
    DataError,
    EndpointError,
    SynthkitError,
)
from .filters import FilterConfig, FilterReport, FilterVerdict, apply_filters, evaluate
from .genclient import GenParams, HarvestStats, RawGeneration, generate_batch, harvest
from .maskgen import MaskedExample, emit_masks, mask_coverage
from .mixer import (
    EpochBudget,
    MixPlan,
    SubsetPlan,
    epoch_budget,
    mix,
    mix_records,
    sample_subset,
)
from .normsim import (
    EmbeddingMatrix,
    NormSimScores,
    RelevanceNoveltyReport,
    SimilarityCurve,
    embed_via_endpoint,
    load_embeddings,
    normsim_scores,
    relevance_novelty_report,
    save_embeddings,
    similarity_curve,
)

__version__ = "0.1.0"

__all__ = [
    "ChatRecord",
    "DataError",
    "Discard",
    "EmbeddingMatrix",
    "EndpointError",
    "EpochBudget",
    "FilterConfig",
    "FilterReport",
    "FilterVerdict",
    "GenParams",
    "HarvestStats",
    "MaskedExample",
    "Message",
    "MixPlan",
    "NormSimScores",
    "RawGeneration",
    "RelevanceNoveltyReport",
    "RenderedText",
    "SimilarityCurve",
    "SubsetPlan",
    "SynthkitError",
    "TemplateConfig",
    "apply_filters",
    "embed_via_endpoint",
    "emit_masks",
    "epoch_budget",
    "evaluate",
    "generate_batch",
    "harvest",
    "load_embeddings",
    "mask_coverage",
    "mix",
    "mix_records",
    "normsim_scores",
    "parse_first_round",
    "read_jsonl",
    "relevance_novelty_report",
    "render_unified",
    "sample_subset",
    "save_embeddings",
    "similarity_curve",
    "single_round",
    "write_jsonl",
]
