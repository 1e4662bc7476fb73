"""TOML pipeline configuration with documented defaults for every field.

The file is a tree of tables, one per pipeline stage::

    output_dir = "out"

    [template]
    sep = "newline"            # or "space"

    [mask]
    mode = "masked"            # or "nomask"
    include_assistant_tag = false

    [generation]
    endpoint = ""              # completions endpoint base URL
    prefix = "User: "
    temperature = 1.0
    top_p = 0.9
    max_tokens = 512
    count = 1
    # seed = 7                 # optional; omitted = endpoint default
    parallelism = 8
    request_batch = 8

    [filter]                   # inline settings, or config = "filters.toml"
    # config = "filters.toml"
    # keywords_file = "kw.txt" # default: the shipped keyword list
    scan_targets = "both"
    repeat_line_threshold = 3
    repeat_ngram_max = 8
    repeat_ngram_min_count = 5
    case_insensitive = false
    enable_code = true
    enable_repeats = true

    [embedding]
    endpoint = ""              # embeddings endpoint base URL, or use files:
    # query_prompt = "a.emb" ... ref_response = "d.emb"
    batch_size = 64
    precision = "f32"          # on-disk row precision, f32 or f64

    [normsim]
    memory_budget_mb = 512
    low_band = 0.35
    high_band = 0.85

    [mix]
    train = ""                 # existing training set to mix in
    shuffle_seed = 7

    [subset]
    k = 15000
    seed = 7

Unknown tables or keys are rejected so typos fail loudly. Command-line flags
override config values.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

from .corpus import SEP_NEWLINE, SEP_SPACE, TemplateConfig
from .errors import SchemaViolationError
from .filters import FilterConfig, load_keywords
from .genclient import GenParams
from .maskgen import MODE_MASKED

_SEP_NAMES = {"newline": SEP_NEWLINE, "space": SEP_SPACE}


def sep_from_name(name: str) -> str:
    try:
        return _SEP_NAMES[name]
    except KeyError:
        raise SchemaViolationError(
            f"template sep must be 'newline' or 'space', got {name!r}"
        ) from None


@dataclass(frozen=True)
class GenerationSettings:
    endpoint: str = ""
    prefix: str = "User: "
    temperature: float = 1.0
    top_p: float = 0.9
    max_tokens: int = 512
    count: int = 1
    seed: int | None = None
    parallelism: int = 8
    request_batch: int = 8

    def params(self) -> GenParams:
        return GenParams(
            prefix=self.prefix,
            temperature=self.temperature,
            top_p=self.top_p,
            max_tokens=self.max_tokens,
            count=self.count,
            seed=self.seed,
        )


@dataclass(frozen=True)
class FilterSettings:
    config: str = ""  # path to a standalone filter TOML; overrides the rest
    keywords_file: str = ""
    scan_targets: str = "both"
    repeat_line_threshold: int = 3
    repeat_ngram_max: int = 8
    repeat_ngram_min_count: int = 5
    case_insensitive: bool = False
    enable_code: bool = True
    enable_repeats: bool = True

    def build(self, base_dir: Path) -> FilterConfig:
        if self.config:
            return load_filter_config(_resolve(self.config, base_dir))
        kwargs = {}
        if self.keywords_file:
            kwargs["code_keywords"] = load_keywords(_resolve(self.keywords_file, base_dir))
        return FilterConfig(
            code_scan_targets=self.scan_targets,
            repeat_line_threshold=self.repeat_line_threshold,
            repeat_ngram_max=self.repeat_ngram_max,
            repeat_ngram_min_count=self.repeat_ngram_min_count,
            case_insensitive=self.case_insensitive,
            code_enabled=self.enable_code,
            repeats_enabled=self.enable_repeats,
            **kwargs,
        )


@dataclass(frozen=True)
class EmbeddingSettings:
    endpoint: str = ""
    batch_size: int = 64
    precision: str = "f32"
    # Precomputed matrices, used instead of the endpoint when set.
    query_prompt: str = ""
    query_response: str = ""
    ref_prompt: str = ""
    ref_response: str = ""


@dataclass(frozen=True)
class NormSimSettings:
    memory_budget_mb: int = 512
    low_band: float = 0.35
    high_band: float = 0.85


@dataclass(frozen=True)
class MixSettings:
    train: str = ""
    shuffle_seed: int = 7


@dataclass(frozen=True)
class SubsetSettings:
    k: int = 15000
    seed: int = 7


@dataclass(frozen=True)
class PipelineConfig:
    output_dir: str = "out"
    sep: str = "newline"
    mask_mode: str = MODE_MASKED
    include_assistant_tag: bool = False
    generation: GenerationSettings = field(default_factory=GenerationSettings)
    filter: FilterSettings = field(default_factory=FilterSettings)
    embedding: EmbeddingSettings = field(default_factory=EmbeddingSettings)
    normsim: NormSimSettings = field(default_factory=NormSimSettings)
    mix: MixSettings = field(default_factory=MixSettings)
    subset: SubsetSettings = field(default_factory=SubsetSettings)
    base_dir: str = "."  # directory of the config file; anchors relative paths

    def template(self) -> TemplateConfig:
        return TemplateConfig(sep=sep_from_name(self.sep))

    def filters(self) -> FilterConfig:
        return self.filter.build(Path(self.base_dir))

    def resolve(self, path: str) -> Path:
        return _resolve(path, Path(self.base_dir))

    def validate_paths(self) -> None:
        """Fail fast on referenced files that do not exist."""
        named = {
            "filter.config": self.filter.config,
            "filter.keywords_file": self.filter.keywords_file,
            "mix.train": self.mix.train,
            "embedding.query_prompt": self.embedding.query_prompt,
            "embedding.query_response": self.embedding.query_response,
            "embedding.ref_prompt": self.embedding.ref_prompt,
            "embedding.ref_response": self.embedding.ref_response,
        }
        for key, value in named.items():
            if value and not self.resolve(value).exists():
                raise SchemaViolationError(f"{key} points to a missing file: {value}")


def _resolve(path: str, base_dir: Path) -> Path:
    p = Path(path)
    return p if p.is_absolute() else base_dir / p


def _typed(table: dict, cls, where: str):
    known = {f.name for f in fields(cls)}
    unknown = set(table) - known
    if unknown:
        raise SchemaViolationError(f"unknown key(s) in {where}: {sorted(unknown)}")
    try:
        return cls(**table)
    except TypeError as exc:
        raise SchemaViolationError(f"bad {where} section: {exc}") from exc


def load_config(path: str | Path) -> PipelineConfig:
    path = Path(path)
    with open(path, "rb") as fh:
        try:
            tree = tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise SchemaViolationError(f"{path}: {exc}") from exc
    return config_from_tree(tree, base_dir=path.parent)


def config_from_tree(tree: dict, *, base_dir: Path | str = ".") -> PipelineConfig:
    tree = dict(tree)
    template = tree.pop("template", {})
    mask = tree.pop("mask", {})
    sections = {
        "generation": (GenerationSettings, tree.pop("generation", {})),
        "filter": (FilterSettings, tree.pop("filter", {})),
        "embedding": (EmbeddingSettings, tree.pop("embedding", {})),
        "normsim": (NormSimSettings, tree.pop("normsim", {})),
        "mix": (MixSettings, tree.pop("mix", {})),
        "subset": (SubsetSettings, tree.pop("subset", {})),
    }
    output_dir = tree.pop("output_dir", "out")
    unknown = set(tree)
    if unknown:
        raise SchemaViolationError(f"unknown config table(s)/key(s): {sorted(unknown)}")
    for where, table in (("template", template), ("mask", mask)):
        if not isinstance(table, dict):
            raise SchemaViolationError(f"{where} must be a table")
    bad_template = set(template) - {"sep"}
    if bad_template:
        raise SchemaViolationError(f"unknown key(s) in template: {sorted(bad_template)}")
    bad_mask = set(mask) - {"mode", "include_assistant_tag"}
    if bad_mask:
        raise SchemaViolationError(f"unknown key(s) in mask: {sorted(bad_mask)}")

    cfg = PipelineConfig(
        output_dir=str(output_dir),
        sep=str(template.get("sep", "newline")),
        mask_mode=str(mask.get("mode", MODE_MASKED)),
        include_assistant_tag=bool(mask.get("include_assistant_tag", False)),
        base_dir=str(base_dir),
        **{name: _typed(table, cls, name) for name, (cls, table) in sections.items()},
    )
    sep_from_name(cfg.sep)  # reject bad sep names at load time
    return cfg


def load_filter_config(path: str | Path) -> FilterConfig:
    """Standalone filter TOML: the FilterSettings keys minus ``config``."""
    path = Path(path)
    with open(path, "rb") as fh:
        try:
            tree = tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise SchemaViolationError(f"{path}: {exc}") from exc
    settings = _typed(tree, FilterSettings, str(path))
    if settings.config:
        raise SchemaViolationError(f"{path}: nested 'config' keys are not allowed")
    return settings.build(path.parent)
