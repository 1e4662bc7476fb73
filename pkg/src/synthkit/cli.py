"""Single executable exposing the curation pipeline as subcommands.

Exit codes: 0 success, 1 usage error, 2 data error (bad records, bad config,
I/O), 3 endpoint error. Every run that produces files also writes a
``<subcommand>_summary.json`` next to its primary output with counts,
timings, and the config hash. ``--dry-run`` validates configuration and
prints the execution plan without touching outputs.
"""

from __future__ import annotations

import argparse
import contextlib
import hashlib
import json
import logging
import sys
import time
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Callable

from . import corpus, filters, genclient, maskgen, mixer, normsim
from .config import PipelineConfig, load_config, load_filter_config, sep_from_name
from .corpus import SOURCE_SYNTHESIS, SOURCE_TRAIN, TemplateConfig
from .errors import (
    DataError,
    EmptyPromptError,
    EndpointError,
    MultiRoundRecordError,
    SchemaViolationError,
)

log = logging.getLogger("synthkit.cli")

_LOG_LEVELS = ("debug", "info", "warning", "error")


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on usage errors; 2 is reserved for data errors here.
    def error(self, message: str):  # noqa: ANN201 - argparse contract
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


@dataclass
class RunContext:
    cfg: PipelineConfig
    config_sha256: str
    dry_run: bool
    threads: int | None

    def parallelism(self) -> int:
        if self.threads is not None:
            return max(1, self.threads)
        return max(1, self.cfg.generation.parallelism)


def _template(args: argparse.Namespace, ctx: RunContext) -> TemplateConfig:
    name = getattr(args, "sep", None) or ctx.cfg.sep
    return TemplateConfig(sep=sep_from_name(name))


def _plan(name: str, inputs: list[str], outputs: list[str]) -> int:
    print(json.dumps({"subcommand": name, "inputs": inputs, "outputs": outputs}))
    return 0


def _finish(ctx: RunContext, name: str, anchor: Path, counts: dict, started: float) -> None:
    summary = {
        "subcommand": name,
        "counts": counts,
        "elapsed_seconds": round(time.monotonic() - started, 6),
        "config_sha256": ctx.config_sha256,
    }
    path = anchor.parent / f"{name}_summary.json"
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2)
        fh.write("\n")
    log.info("%s done: %s", name, counts)


def _write_json(path: str | Path, obj: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2)
        fh.write("\n")


# ---------------------------------------------------------------- subcommands


def cmd_format(args: argparse.Namespace, ctx: RunContext) -> int:
    if ctx.dry_run:
        return _plan("format", [args.infile], [args.out])
    started = time.monotonic()
    template = _template(args, ctx)
    out = Path(args.out)
    summary = corpus.ReadSummary()
    rendered_count = unrenderable = 0
    with open(out, "w", encoding="utf-8") as fh:
        for record in corpus.read_jsonl(args.infile, summary):
            try:
                rendered = corpus.render_unified(record, template)
            except (MultiRoundRecordError, EmptyPromptError):
                unrenderable += 1
                continue
            fh.write(
                json.dumps(
                    {
                        "id": record.id,
                        "text": rendered.text,
                        "prompt_span": list(rendered.prompt_span),
                        "response_span": list(rendered.response_span),
                    },
                    ensure_ascii=False,
                )
            )
            fh.write("\n")
            rendered_count += 1
    counts = {
        "rendered": rendered_count,
        "unrenderable": unrenderable,
        "malformed_lines": summary.skipped,
    }
    _finish(ctx, "format", out, counts, started)
    return 0


def cmd_mask(args: argparse.Namespace, ctx: RunContext) -> int:
    if ctx.dry_run:
        return _plan("mask", [args.infile], [args.out])
    started = time.monotonic()
    template = _template(args, ctx)
    mode = args.mode or ctx.cfg.mask_mode
    include_tag = (
        args.include_assistant_tag
        if args.include_assistant_tag is not None
        else ctx.cfg.include_assistant_tag
    )
    out = Path(args.out)
    summary = corpus.ReadSummary()
    unrenderable = 0

    def examples():
        nonlocal unrenderable
        for record in corpus.read_jsonl(args.infile, summary):
            try:
                yield maskgen.emit_masks(
                    record, mode, template, include_assistant_tag=include_tag
                )
            except (MultiRoundRecordError, EmptyPromptError):
                unrenderable += 1

    written = maskgen.write_masked_jsonl(out, examples())
    counts = {
        "mode": mode,
        "written": written,
        "unrenderable": unrenderable,
        "malformed_lines": summary.skipped,
    }
    _finish(ctx, "mask", out, counts, started)
    return 0


def _gen_params(args: argparse.Namespace, ctx: RunContext) -> genclient.GenParams:
    gen = ctx.cfg.generation
    return genclient.GenParams(
        prefix=args.prefix if args.prefix is not None else gen.prefix,
        temperature=args.temperature if args.temperature is not None else gen.temperature,
        top_p=args.top_p if args.top_p is not None else gen.top_p,
        max_tokens=args.max_tokens if args.max_tokens is not None else gen.max_tokens,
        count=args.count if args.count is not None else gen.count,
        seed=args.seed if args.seed is not None else gen.seed,
    )


def cmd_generate(args: argparse.Namespace, ctx: RunContext) -> int:
    endpoint = args.endpoint or ctx.cfg.generation.endpoint
    if not endpoint:
        raise SchemaViolationError("no completions endpoint configured")
    params = _gen_params(args, ctx)
    if ctx.dry_run:
        return _plan("generate", [endpoint], [args.out])
    started = time.monotonic()
    out = Path(args.out)
    request_batch = (
        args.request_batch
        if args.request_batch is not None
        else ctx.cfg.generation.request_batch
    )
    raws = genclient.generate_batch(
        endpoint,
        params,
        parallelism=ctx.parallelism(),
        request_batch=max(1, request_batch),
    )
    request_errors = 0

    def stream():
        nonlocal request_errors
        for raw in raws:
            if raw.finish_reason == genclient.FINISH_ERROR:
                request_errors += 1
            yield raw

    written = genclient.write_replay(out, stream())
    counts = {"requested": params.count, "written": written, "request_errors": request_errors}
    _finish(ctx, "generate", out, counts, started)
    return 0


def cmd_harvest(args: argparse.Namespace, ctx: RunContext) -> int:
    if ctx.dry_run:
        outputs = [args.out] + ([args.stats] if args.stats else [])
        return _plan("harvest", [args.infile], outputs)
    started = time.monotonic()
    template = _template(args, ctx)
    records_iter, stats = genclient.harvest(
        genclient.read_replay(args.infile),
        template=template,
        params=ctx.cfg.generation.params(),
        id_prefix=args.id_prefix,
    )
    out = Path(args.out)
    written = corpus.write_jsonl(out, records_iter)
    if args.stats:
        _write_json(args.stats, stats.to_json())
    counts = dict(stats.to_json(), written=written)
    _finish(ctx, "harvest", out, counts, started)
    return 0


def cmd_filter(args: argparse.Namespace, ctx: RunContext) -> int:
    if ctx.dry_run:
        outputs = [args.out] + [p for p in (args.rejects, args.report) if p]
        return _plan("filter", [args.infile], outputs)
    started = time.monotonic()
    if args.filter_config:
        fcfg = load_filter_config(args.filter_config)
    else:
        fcfg = ctx.cfg.filters()
    out = Path(args.out)
    summary = corpus.ReadSummary()
    records = corpus.read_jsonl(args.infile, summary)
    with contextlib.ExitStack() as stack:
        on_reject = None
        if args.rejects:
            rejects_fh = stack.enter_context(open(args.rejects, "w", encoding="utf-8"))

            def on_reject(record: corpus.ChatRecord) -> None:
                rejects_fh.write(json.dumps(record.to_json(), ensure_ascii=False))
                rejects_fh.write("\n")

        kept_iter, report = filters.apply_filters(records, fcfg, on_reject=on_reject)
        written = corpus.write_jsonl(out, kept_iter)
    if args.report:
        filters.write_report(report, args.report)
    counts = dict(report.to_json(), written=written, malformed_lines=summary.skipped)
    _finish(ctx, "filter", out, counts, started)
    return 0


def cmd_subset(args: argparse.Namespace, ctx: RunContext) -> int:
    if ctx.dry_run:
        return _plan("subset", [args.infile], [args.out])
    started = time.monotonic()
    plan = mixer.SubsetPlan(
        k=args.k if args.k is not None else ctx.cfg.subset.k,
        seed=args.seed if args.seed is not None else ctx.cfg.subset.seed,
    )
    selected = mixer.sample_subset(corpus.read_jsonl(args.infile), plan)
    out = Path(args.out)
    written = corpus.write_jsonl(out, selected)
    counts = {"k": plan.k, "seed": plan.seed, "written": written}
    _finish(ctx, "subset", out, counts, started)
    return 0


def cmd_mix(args: argparse.Namespace, ctx: RunContext) -> int:
    if ctx.dry_run:
        return _plan("mix", [args.train, args.synth], [args.out])
    started = time.monotonic()
    seed = args.seed if args.seed is not None else ctx.cfg.mix.shuffle_seed
    plan = mixer.MixPlan(
        sources=((args.train, SOURCE_TRAIN), (args.synth, SOURCE_SYNTHESIS)),
        shuffle_seed=seed,
    )
    mixed = mixer.mix(plan)
    out = Path(args.out)
    written = corpus.write_jsonl(out, mixed)
    counts = {
        "written": written,
        "train": sum(1 for r in mixed if r.source == SOURCE_TRAIN),
        "synthesis": sum(1 for r in mixed if r.source == SOURCE_SYNTHESIS),
        "shuffle_seed": seed,
    }
    _finish(ctx, "mix", out, counts, started)
    return 0


def cmd_budget(args: argparse.Namespace, ctx: RunContext) -> int:
    budget = mixer.epoch_budget(
        args.mode.replace("-", "_"),
        args.baseline_size,
        args.mixed_size,
        args.mixed_epochs,
    )
    print(json.dumps(budget.to_json()))
    return 0


def cmd_embed(args: argparse.Namespace, ctx: RunContext) -> int:
    endpoint = args.endpoint or ctx.cfg.embedding.endpoint
    if not endpoint:
        raise SchemaViolationError("no embeddings endpoint configured")
    if ctx.dry_run:
        return _plan("embed", [args.infile, endpoint], [args.out])
    started = time.monotonic()
    records = list(corpus.read_jsonl(args.infile))
    texts = [r.prompt if args.side == normsim.SIDE_PROMPT else r.response for r in records]
    matrix = normsim.embed_via_endpoint(
        texts,
        endpoint,
        args.side,
        ids=[r.id for r in records],
        batch_size=args.batch_size if args.batch_size is not None else ctx.cfg.embedding.batch_size,
    )
    out = Path(args.out)
    precision = args.precision or ctx.cfg.embedding.precision
    normsim.save_embeddings(matrix, out, precision=precision)
    counts = {"rows": matrix.count, "dim": matrix.dim, "side": args.side}
    _finish(ctx, "embed", out, counts, started)
    return 0


def cmd_normsim_score(args: argparse.Namespace, ctx: RunContext) -> int:
    if ctx.dry_run:
        return _plan("normsim_score", [args.query, args.ref], [args.out])
    started = time.monotonic()
    # Rows are renormalized in double precision during scoring, so both
    # matrices can stay memory-mapped here no matter how large they are.
    query = normsim.load_embeddings(args.query, side=args.side, normalize=False, mmap=True)
    ref = normsim.load_embeddings(args.ref, side=args.side, normalize=False, mmap=True)
    budget_mb = args.budget_mb if args.budget_mb is not None else ctx.cfg.normsim.memory_budget_mb
    scores = normsim.normsim_scores(
        query,
        ref,
        memory_budget=budget_mb * 1024 * 1024,
        raw_products=args.raw_products,
        reference_id=Path(args.ref).stem,
    )
    out = Path(args.out)
    normsim.write_scores(scores, out)
    counts = {"queries": query.count, "references": ref.count, "dim": ref.dim}
    _finish(ctx, "normsim_score", out, counts, started)
    return 0


def cmd_normsim_curve(args: argparse.Namespace, ctx: RunContext) -> int:
    if ctx.dry_run:
        return _plan("normsim_curve", [args.scores], [args.out])
    started = time.monotonic()
    scores = normsim.read_scores(args.scores)
    curve = normsim.similarity_curve(scores)
    out = Path(args.out)
    curve.to_csv(out)
    counts = {"scores": len(scores.scores), "points": len(curve.thresholds)}
    _finish(ctx, "normsim_curve", out, counts, started)
    return 0


def cmd_report(args: argparse.Namespace, ctx: RunContext) -> int:
    if ctx.dry_run:
        outputs = [args.out] + ([args.curves_csv] if args.curves_csv else [])
        return _plan("report", [args.prompt_scores, args.response_scores], outputs)
    started = time.monotonic()
    prompt_scores = normsim.read_scores(args.prompt_scores)
    response_scores = normsim.read_scores(args.response_scores)
    bands = (
        args.low_band if args.low_band is not None else ctx.cfg.normsim.low_band,
        args.high_band if args.high_band is not None else ctx.cfg.normsim.high_band,
    )
    report = normsim.relevance_novelty_report(prompt_scores, response_scores, bands)
    out = Path(args.out)
    _write_json(out, report.to_json())
    if args.curves_csv:
        normsim.write_curves_csv(
            args.curves_csv,
            {
                "prompt": normsim.similarity_curve(prompt_scores),
                "response": normsim.similarity_curve(response_scores),
            },
        )
    counts = {
        "prompt_scores": report.prompt.count,
        "response_scores": report.response.count,
    }
    _finish(ctx, "report", out, counts, started)
    return 0


_PIPELINE_FILES = (
    "raw.jsonl",
    "synth.jsonl",
    "harvest_stats.json",
    "filtered.jsonl",
    "rejects.jsonl",
    "filter_report.json",
    "mixed.jsonl",
    "query_prompt.emb",
    "query_response.emb",
    "ref_prompt.emb",
    "ref_response.emb",
    "prompt_scores.json",
    "response_scores.json",
    "prompt_curve.csv",
    "response_curve.csv",
    "curves.csv",
    "report.json",
    "pipeline_summary.json",
)


def cmd_pipeline(args: argparse.Namespace, ctx: RunContext) -> int:
    cfg = ctx.cfg
    cfg.validate_paths()
    gen = cfg.generation
    emb = cfg.embedding
    if not gen.endpoint:
        raise SchemaViolationError("pipeline needs [generation].endpoint")
    if not cfg.mix.train:
        raise SchemaViolationError("pipeline needs [mix].train")
    precomputed = emb.query_prompt and emb.query_response and emb.ref_prompt and emb.ref_response
    if not emb.endpoint and not precomputed:
        raise SchemaViolationError(
            "pipeline needs [embedding].endpoint or all four precomputed matrices"
        )
    outdir = Path(args.out_dir or cfg.output_dir)
    paths = {name: outdir / name for name in _PIPELINE_FILES}
    if ctx.dry_run:
        inputs = [gen.endpoint, str(cfg.resolve(cfg.mix.train))]
        if emb.endpoint:
            inputs.append(emb.endpoint)
        return _plan("pipeline", inputs, [str(p) for p in paths.values()])

    started = time.monotonic()
    outdir.mkdir(parents=True, exist_ok=True)
    template = cfg.template()
    params = gen.params()
    steps: list[dict] = []

    def step(name: str, counts: dict, *files: str) -> None:
        steps.append({"name": name, "counts": counts, "outputs": [str(paths[f]) for f in files]})
        log.info("pipeline step %s: %s", name, counts)

    raw_count = genclient.write_replay(
        paths["raw.jsonl"],
        genclient.generate_batch(
            gen.endpoint,
            params,
            parallelism=ctx.parallelism(),
            request_batch=max(1, gen.request_batch),
        ),
    )
    step("generate", {"requested": params.count, "raw": raw_count}, "raw.jsonl")

    records_iter, stats = genclient.harvest(
        genclient.read_replay(paths["raw.jsonl"]), template=template, params=params
    )
    valid_count = corpus.write_jsonl(paths["synth.jsonl"], records_iter)
    _write_json(paths["harvest_stats.json"], stats.to_json())
    step("harvest", stats.to_json(), "synth.jsonl", "harvest_stats.json")

    fcfg = cfg.filters()
    with open(paths["rejects.jsonl"], "w", encoding="utf-8") as rejects_fh:

        def on_reject(record: corpus.ChatRecord) -> None:
            rejects_fh.write(json.dumps(record.to_json(), ensure_ascii=False))
            rejects_fh.write("\n")

        kept_iter, report = filters.apply_filters(
            corpus.read_jsonl(paths["synth.jsonl"]), fcfg, on_reject=on_reject
        )
        kept_count = corpus.write_jsonl(paths["filtered.jsonl"], kept_iter)
    filters.write_report(report, paths["filter_report.json"])
    step("filter", report.to_json(), "filtered.jsonl", "rejects.jsonl", "filter_report.json")

    train_path = cfg.resolve(cfg.mix.train)
    mixed = mixer.mix(
        mixer.MixPlan(
            sources=((str(train_path), SOURCE_TRAIN), (str(paths["filtered.jsonl"]), SOURCE_SYNTHESIS)),
            shuffle_seed=cfg.mix.shuffle_seed,
        )
    )
    mixed_count = corpus.write_jsonl(paths["mixed.jsonl"], mixed)
    train_count = sum(1 for r in mixed if r.source == SOURCE_TRAIN)
    step(
        "mix",
        {"train": train_count, "synthesis": mixed_count - train_count, "mixed": mixed_count},
        "mixed.jsonl",
    )

    matrices: dict[str, normsim.EmbeddingMatrix] = {}
    if emb.endpoint:
        queries = list(corpus.read_jsonl(paths["filtered.jsonl"]))
        refs = list(corpus.read_jsonl(train_path))
        for key, records, side in (
            ("query_prompt", queries, normsim.SIDE_PROMPT),
            ("query_response", queries, normsim.SIDE_RESPONSE),
            ("ref_prompt", refs, normsim.SIDE_PROMPT),
            ("ref_response", refs, normsim.SIDE_RESPONSE),
        ):
            texts = [r.prompt if side == normsim.SIDE_PROMPT else r.response for r in records]
            matrix = normsim.embed_via_endpoint(
                texts, emb.endpoint, side, ids=[r.id for r in records], batch_size=emb.batch_size
            )
            normsim.save_embeddings(matrix, paths[f"{key}.emb"], precision=emb.precision)
            matrices[key] = matrix
    else:
        for key, setting, side in (
            ("query_prompt", emb.query_prompt, normsim.SIDE_PROMPT),
            ("query_response", emb.query_response, normsim.SIDE_RESPONSE),
            ("ref_prompt", emb.ref_prompt, normsim.SIDE_PROMPT),
            ("ref_response", emb.ref_response, normsim.SIDE_RESPONSE),
        ):
            matrices[key] = normsim.load_embeddings(cfg.resolve(setting), side=side)
    step(
        "embed",
        {
            "queries": matrices["query_prompt"].count,
            "references": matrices["ref_prompt"].count,
            "dim": matrices["ref_prompt"].dim,
        },
        *(f"{k}.emb" for k in matrices if emb.endpoint),
    )

    budget = cfg.normsim.memory_budget_mb * 1024 * 1024
    prompt_scores = normsim.normsim_scores(
        matrices["query_prompt"], matrices["ref_prompt"], memory_budget=budget, reference_id="train"
    )
    response_scores = normsim.normsim_scores(
        matrices["query_response"], matrices["ref_response"], memory_budget=budget, reference_id="train"
    )
    normsim.write_scores(prompt_scores, paths["prompt_scores.json"])
    normsim.write_scores(response_scores, paths["response_scores.json"])
    step(
        "score",
        {"prompt": len(prompt_scores.scores), "response": len(response_scores.scores)},
        "prompt_scores.json",
        "response_scores.json",
    )

    prompt_curve = normsim.similarity_curve(prompt_scores)
    response_curve = normsim.similarity_curve(response_scores)
    prompt_curve.to_csv(paths["prompt_curve.csv"])
    response_curve.to_csv(paths["response_curve.csv"])
    normsim.write_curves_csv(
        paths["curves.csv"], {"prompt": prompt_curve, "response": response_curve}
    )
    novelty = normsim.relevance_novelty_report(
        prompt_scores, response_scores, (cfg.normsim.low_band, cfg.normsim.high_band)
    )
    _write_json(paths["report.json"], novelty.to_json())
    step(
        "report",
        {"prompt_scores": novelty.prompt.count, "response_scores": novelty.response.count},
        "prompt_curve.csv",
        "response_curve.csv",
        "curves.csv",
        "report.json",
    )

    counts = {
        "requested": params.count,
        "raw": raw_count,
        "valid": valid_count,
        "kept": kept_count,
        "mixed": mixed_count,
        "harvest": stats.to_json(),
        "filter": report.to_json(),
        "scored_prompt": len(prompt_scores.scores),
        "scored_response": len(response_scores.scores),
    }
    summary = {
        "subcommand": "pipeline",
        "counts": counts,
        "steps": steps,
        "elapsed_seconds": round(time.monotonic() - started, 6),
        "config_sha256": ctx.config_sha256,
    }
    _write_json(paths["pipeline_summary.json"], summary)
    log.info("pipeline done: %s", counts)
    return 0


# -------------------------------------------------------------------- parser


def _add_io(p: argparse.ArgumentParser, *, infile: str = "input JSONL") -> None:
    p.add_argument("--in", dest="infile", required=True, help=infile)
    p.add_argument("--out", required=True, help="output path")


def _add_sep(p: argparse.ArgumentParser) -> None:
    p.add_argument(
        "--sep",
        choices=["newline", "space"],
        default=None,
        help="template separator between prompt and assistant tag (default: config)",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="synthkit", description=__doc__.splitlines()[0])
    parser.add_argument("--config", help="pipeline TOML config file")
    parser.add_argument("--log-level", choices=_LOG_LEVELS, default="warning")
    parser.add_argument(
        "--dry-run", action="store_true", help="validate config, print the plan, write nothing"
    )
    parser.add_argument("--threads", type=int, help="override request parallelism")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser, metavar="COMMAND")

    p = sub.add_parser("format", help="render records to unified template text")
    _add_io(p)
    _add_sep(p)
    p.set_defaults(func=cmd_format)

    p = sub.add_parser("mask", help="emit loss-span annotations")
    _add_io(p)
    _add_sep(p)
    p.add_argument("--mode", choices=list(maskgen.MODES), default=None)
    p.add_argument(
        "--include-assistant-tag",
        action="store_true",
        default=None,
        help="masked mode also learns the literal assistant tag",
    )
    p.set_defaults(func=cmd_mask)

    p = sub.add_parser("generate", help="prefix-prompted sampling from a completions endpoint")
    p.add_argument("--endpoint", help="completions endpoint base URL")
    p.add_argument("--count", type=int, help="number of raw generations")
    p.add_argument("--temperature", type=float)
    p.add_argument("--top-p", dest="top_p", type=float)
    p.add_argument("--max-tokens", dest="max_tokens", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--prefix", help='role prefix sent as the prompt (default "User: ")')
    p.add_argument("--request-batch", dest="request_batch", type=int)
    p.add_argument("--out", required=True, help="replay JSONL of raw generations")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("harvest", help="parse raw generations into first-round records")
    _add_io(p, infile="replay JSONL from generate")
    _add_sep(p)
    p.add_argument("--stats", help="write harvest accounting JSON here")
    p.add_argument("--id-prefix", dest="id_prefix", default="synthesis")
    p.set_defaults(func=cmd_harvest)

    p = sub.add_parser("filter", help="drop code-keyword and repetition records")
    p.add_argument("--config", dest="filter_config", help="filter settings TOML")
    _add_io(p)
    p.add_argument("--rejects", help="write dropped records here")
    p.add_argument("--report", help="write the filter report JSON here")
    p.set_defaults(func=cmd_filter)

    p = sub.add_parser("subset", help="uniform random subset, reservoir sampled")
    p.add_argument("--k", type=int, help="subset size")
    p.add_argument("--seed", type=int)
    _add_io(p)
    p.set_defaults(func=cmd_subset)

    p = sub.add_parser("mix", help="concatenate train + synthesis, seeded shuffle")
    p.add_argument("--train", required=True, help="existing training JSONL")
    p.add_argument("--synth", required=True, help="synthesis JSONL")
    p.add_argument("--seed", type=int, help="shuffle seed")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_mix)

    p = sub.add_parser("budget", help="epoch budget for a baseline run")
    p.add_argument("--mode", required=True, choices=["equal-epoch", "equal-compute"])
    p.add_argument("--baseline-size", dest="baseline_size", required=True, type=int)
    p.add_argument("--mixed-size", dest="mixed_size", required=True, type=int)
    p.add_argument("--mixed-epochs", dest="mixed_epochs", required=True, type=int)
    p.set_defaults(func=cmd_budget)

    p = sub.add_parser("embed", help="embed record prompts or responses via endpoint")
    _add_io(p)
    p.add_argument("--side", required=True, choices=[normsim.SIDE_PROMPT, normsim.SIDE_RESPONSE])
    p.add_argument("--endpoint", help="embeddings endpoint base URL")
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--precision", choices=["f32", "f64"])
    p.set_defaults(func=cmd_embed)

    p = sub.add_parser("normsim", help="similarity scoring against a reference corpus")
    nsub = p.add_subparsers(dest="normsim_command", parser_class=_Parser, metavar="ACTION")

    ps = nsub.add_parser("score", help="max inner product per query row")
    ps.add_argument("--query", required=True, help="query .emb file")
    ps.add_argument("--ref", required=True, help="reference .emb file")
    ps.add_argument("--out", required=True, help="scores JSON")
    ps.add_argument("--budget-mb", dest="budget_mb", type=int, help="scratch memory budget")
    ps.add_argument("--raw-products", dest="raw_products", action="store_true")
    ps.add_argument("--side", choices=[normsim.SIDE_PROMPT, normsim.SIDE_RESPONSE])
    ps.set_defaults(func=cmd_normsim_score)

    pc = nsub.add_parser("curve", help="fraction of scores above each threshold")
    pc.add_argument("--scores", required=True, help="scores JSON from normsim score")
    pc.add_argument("--out", required=True, help="curve CSV")
    pc.set_defaults(func=cmd_normsim_curve)

    pr = nsub.add_parser("report", help="relevance/novelty report from both sides")
    _add_report_args(pr)

    p = sub.add_parser("report", help="alias for normsim report")
    _add_report_args(p)

    p = sub.add_parser("pipeline", help="generate, harvest, filter, mix, score, report")
    p.add_argument("--out-dir", dest="out_dir", help="artifact directory (default: config)")
    p.set_defaults(func=cmd_pipeline)

    return parser


def _add_report_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--prompt-scores", dest="prompt_scores", required=True)
    p.add_argument("--response-scores", dest="response_scores", required=True)
    p.add_argument("--out", required=True, help="report JSON")
    p.add_argument("--curves-csv", dest="curves_csv", help="also write both curves as CSV")
    p.add_argument("--low-band", dest="low_band", type=float)
    p.add_argument("--high-band", dest="high_band", type=float)
    p.set_defaults(func=cmd_report)


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=getattr(logging, args.log_level.upper()),
        format="%(asctime)s %(levelname)s %(name)s %(message)s",
    )
    func: Callable[[argparse.Namespace, RunContext], int] | None = getattr(args, "func", None)
    if func is None:
        parser.print_usage(sys.stderr)
        return 1
    try:
        if args.config:
            cfg = load_config(args.config)
            config_bytes = Path(args.config).read_bytes()
        else:
            cfg = PipelineConfig()
            config_bytes = json.dumps(asdict(cfg), sort_keys=True).encode("utf-8")
        ctx = RunContext(
            cfg=cfg,
            config_sha256=hashlib.sha256(config_bytes).hexdigest(),
            dry_run=args.dry_run,
            threads=args.threads,
        )
        return func(args, ctx)
    except EndpointError as exc:
        log.error("endpoint error: %s", exc)
        print(f"synthkit: endpoint error: {exc}", file=sys.stderr)
        return 3
    except (DataError, OSError) as exc:
        log.error("data error: %s", exc)
        print(f"synthkit: data error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
