"""Command line interface: ingest, generate, score, report, run.

Every command reads one config file, writes fixed artifact names under the
output directory, and is resumable from its input artifact. Artifacts get a
sidecar ``<name>.meta.json`` carrying the config hash; mixing artifacts
from different hashes in ``report`` is an error unless --force.
"""

from __future__ import annotations

import argparse
import json
import sys
from datetime import datetime, timezone
from pathlib import Path

from .config import ConfigError, RunConfig, config_hash, load_config, with_updates
from .embeddings import RemoteEmbedder, load_vector_file
from .ingestion import (
    CorpusError,
    accepted_samples,
    adapt_vg_region_graph,
    parse_canonical,
    serialize_canonical,
    validate_corpus,
)
from .metrics import MetricsError, group_average, summarize_model
from .negatives import Aspect, GenerationPolicy, build_probe_set, load_probe_set, write_probe_set
from .report import RunMeta, build_report_document, write_report
from .scoring import (
    Batching,
    HttpEndpoint,
    OracleEndpoint,
    ScorerError,
    SubprocessEndpoint,
    load_scored_pairs,
    score_probe_set,
    write_scored_pairs,
)
from .taxonomy import AttributeClass, SizeThresholds

GEOMETRY_NOTE = "relation and attribute image-level buckets use the subject/owner object's bbox"


def _load_lexicon(path: str) -> frozenset[str]:
    entries = json.loads(Path(path).read_text(encoding="utf-8"))
    return frozenset(str(e).lower() for e in entries)


def _load_prototypes(path: str) -> dict[AttributeClass, list[str]]:
    raw = json.loads(Path(path).read_text(encoding="utf-8"))
    return {AttributeClass(key.lower()): [str(a) for a in anchors] for key, anchors in raw.items()}


def _make_embedder(config: RunConfig):
    if config.vector_file:
        return load_vector_file(config.vector_file)
    return RemoteEmbedder(endpoint=config.embed_endpoint)


def _make_endpoint(config: RunConfig):
    scorer = config.scorer
    if scorer["kind"] == "oracle":
        captions = json.loads(Path(scorer["captions"]).read_text(encoding="utf-8"))
        return OracleEndpoint(ground_truth=captions)
    if scorer["kind"] == "subprocess":
        return SubprocessEndpoint(list(scorer["argv"]))
    return HttpEndpoint(scorer["url"])


def _write_meta(path: Path, config: RunConfig, kind: str, **extra) -> None:
    meta = {"kind": kind, "config_hash": config_hash(config), "seed": config.seed, **extra}
    path.write_text(json.dumps(meta, sort_keys=True) + "\n", encoding="utf-8")


def _read_meta(artifact: Path) -> dict | None:
    meta_path = artifact.with_suffix(artifact.suffix + ".meta.json")
    if not meta_path.exists():
        return None
    return json.loads(meta_path.read_text(encoding="utf-8"))


def _meta_path(artifact: Path) -> Path:
    return artifact.with_suffix(artifact.suffix + ".meta.json")


def cmd_ingest(config: RunConfig, input_paths: list[str] | None = None) -> int:
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    samples = []
    paths = input_paths or list(config.corpus)
    for path in paths:
        text = Path(path).read_text(encoding="utf-8")
        if config.adapter == "vg":
            samples.extend(adapt_vg_region_graph(text))
        else:
            samples.extend(parse_canonical(text))
    report = validate_corpus(samples)
    accepted = accepted_samples(samples, report)
    canonical_path = out / "canonical.jsonl"
    canonical_path.write_text(serialize_canonical(accepted), encoding="utf-8")
    _write_meta(_meta_path(canonical_path), config, "canonical")
    (out / "ingest_report.json").write_text(
        json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    print(f"ingested {report.samples} samples: {report.accepted} accepted, {len(report.rejected)} rejected")
    for sample_id, reason in report.rejected:
        print(f"  rejected {sample_id}: {reason}")
    if report.rejected and not config.allow_rejects:
        return 1
    return 0


def _generation_inputs(config: RunConfig):
    thresholds = SizeThresholds(small_max=config.size_small_max, medium_max=config.size_medium_max)
    lexicon = _load_lexicon(config.lexicon_path)
    prototypes = _load_prototypes(config.prototypes_path)
    embedder = _make_embedder(config)
    return thresholds, lexicon, prototypes, embedder


def cmd_generate(
    config: RunConfig,
    canonical_path: str | None = None,
    aspects: list[str] | None = None,
    jobs: int = 1,
) -> int:
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    source = Path(canonical_path) if canonical_path else out / "canonical.jsonl"
    with source.open(encoding="utf-8") as fh:
        corpus = parse_canonical(fh)
    thresholds, lexicon, prototypes, embedder = _generation_inputs(config)
    exclude = frozenset()
    if config.exclude_pairs:
        exclude = frozenset(
            line.strip()
            for line in Path(config.exclude_pairs).read_text(encoding="utf-8").splitlines()
            if line.strip()
        )
    policy = GenerationPolicy(
        seed=config.seed,
        max_similarity=config.max_similarity,
        min_candidates=config.min_candidates,
        caption_templates={**{"object": "{subj} {pred} {obj}", "relation": "{subj} {pred} {obj}", "attribute": "{obj} is {attr}"}, **config.templates},
        crop_variant=config.local_variant is not None,
        local_mode=config.local_variant or "union",
        exclude_pair_ids=exclude,
    )
    wanted = [Aspect(a) for a in aspects] if aspects else None
    pairs, gen_report = build_probe_set(
        corpus,
        policy,
        embedder,
        thresholds,
        lexicon,
        prototypes,
        jobs=jobs,
        aspects=wanted,
        min_assign_similarity=config.min_assign_similarity,
    )
    probes_path = out / "probes.jsonl"
    with probes_path.open("w", encoding="utf-8") as fh:
        write_probe_set(pairs, fh)
    _write_meta(_meta_path(probes_path), config, "probe_set")
    (out / "generation_report.json").write_text(
        json.dumps(gen_report.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    print(f"generated {gen_report.emitted} probe pairs ({gen_report.attempts} attempts)")
    return 0


def cmd_score(
    config: RunConfig,
    probes_path: str | None = None,
    resume: bool = False,
) -> int:
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    source = Path(probes_path) if probes_path else out / "probes.jsonl"
    # The scored artifact inherits the probe set's data-shaping provenance;
    # none of the hashed fields influence scoring itself.
    meta = _read_meta(source)
    inherited_hash = (meta or {}).get("config_hash") or config_hash(config)
    with source.open(encoding="utf-8") as fh:
        pairs = load_probe_set(fh)
    scored_path = out / "scored.jsonl"
    already = {}
    if resume and scored_path.exists():
        with scored_path.open(encoding="utf-8") as fh:
            for scored in load_scored_pairs(fh):
                already[scored.pair_id] = scored
    todo = [p for p in pairs if p.pair_id not in already]
    endpoint = _make_endpoint(config)
    batching = Batching(
        batch_size=int(config.batching["batch_size"]),
        max_in_flight=int(config.batching["max_in_flight"]),
        max_retries=int(config.batching["max_retries"]),
        response_timeout=float(config.batching["response_timeout"]),
    )
    try:
        fresh = {s.pair_id: s for s in score_probe_set(todo, endpoint, batching)}
    finally:
        endpoint.close()
    merged = [already.get(p.pair_id) or fresh[p.pair_id] for p in pairs]
    with scored_path.open("w", encoding="utf-8") as fh:
        write_scored_pairs(merged, fh)
    _write_meta(
        _meta_path(scored_path),
        config,
        "scored",
        model_id=config.scorer_id(),
        config_hash=inherited_hash,
    )
    print(f"scored {len(todo)} pairs ({len(already)} reused), model {config.scorer_id()}")
    return 0


def cmd_report(
    config: RunConfig,
    scored_paths: list[str] | None = None,
    groups_path: str | None = None,
    force: bool = False,
) -> int:
    out = Path(config.out_dir)
    paths = [Path(p) for p in (scored_paths or [out / "scored.jsonl"])]
    hashes = set()
    summaries = []
    scorer_ids = []
    for path in paths:
        meta = _read_meta(path) or {}
        if meta.get("config_hash"):
            hashes.add(meta["config_hash"])
        model_id = meta.get("model_id") or path.stem
        with path.open(encoding="utf-8") as fh:
            scored = load_scored_pairs(fh)
        summaries.append(summarize_model(model_id, scored))
        scorer_ids.append(model_id)
    if len(hashes) > 1 and not force:
        raise ConfigError(
            f"scored files mix config hashes {sorted(hashes)} (use --force to override)"
        )
    run_hash = hashes.pop() if len(hashes) == 1 else config_hash(config)
    groups = None
    if groups_path:
        mapping = json.loads(Path(groups_path).read_text(encoding="utf-8"))
        groups = group_average(summaries, {str(g): [str(m) for m in ids] for g, ids in mapping.items()})
    generation = None
    gen_path = out / "generation_report.json"
    if gen_path.exists():
        generation = json.loads(gen_path.read_text(encoding="utf-8"))
    meta = RunMeta(
        config_hash=run_hash,
        seed=config.seed,
        corpus_ids=list(config.corpus),
        scorer_ids=scorer_ids,
        timestamp=datetime.now(timezone.utc).isoformat(),
        notes=[GEOMETRY_NOTE],
    )
    doc = build_report_document(meta, summaries, group_averages=groups, generation=generation)
    write_report(doc, out / "report")
    print(f"report written to {out / 'report'}")
    return 0


def cmd_run(config: RunConfig, jobs: int = 1) -> int:
    code = cmd_ingest(config)
    if code != 0:
        return code
    code = cmd_generate(config, jobs=jobs)
    if code != 0:
        return code
    code = cmd_score(config)
    if code != 0:
        return code
    return cmd_report(config)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vlprobe", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", required=True, help="path to the run config JSON")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--out", default=None, help="override the output directory")
        p.add_argument("--jobs", type=int, default=1, help="worker count for generation")

    p_ingest = sub.add_parser("ingest", help="parse and validate corpora into canonical JSONL")
    add_common(p_ingest)
    p_ingest.add_argument("--input", action="append", default=None, help="corpus file (repeatable)")
    p_ingest.add_argument("--allow-rejects", action="store_true", help="exit 0 even with rejected samples")

    p_generate = sub.add_parser("generate", help="generate taxonomy-tagged probe pairs")
    add_common(p_generate)
    p_generate.add_argument("--canonical", default=None, help="canonical JSONL input")
    p_generate.add_argument(
        "--aspect",
        action="append",
        choices=["object", "attribute", "relation"],
        default=None,
        help="restrict generation to an aspect (repeatable)",
    )
    p_generate.add_argument(
        "--local-variant",
        choices=["subj_only", "obj_only", "union"],
        default=None,
        help="duplicate relation pairs with a crop rectangle",
    )

    p_score = sub.add_parser("score", help="score a probe set through the configured scorer")
    add_common(p_score)
    p_score.add_argument("--probes", default=None, help="probe-set JSONL input")
    p_score.add_argument("--resume", action="store_true", help="re-send only pairs missing from scored.jsonl")

    p_report = sub.add_parser("report", help="emit the report directory from scored pairs")
    add_common(p_report)
    p_report.add_argument("--scored", action="append", default=None, help="scored JSONL (repeatable, one per model)")
    p_report.add_argument("--groups", default=None, help="JSON file mapping group name to model ids")
    p_report.add_argument("--force", action="store_true", help="allow mixing config hashes")

    p_run = sub.add_parser("run", help="ingest, generate, score, and report in sequence")
    add_common(p_run)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        overrides = {"seed": args.seed, "out_dir": args.out}
        if getattr(args, "allow_rejects", False):
            overrides["allow_rejects"] = True
        if getattr(args, "local_variant", None):
            overrides["local_variant"] = args.local_variant
        config = load_config(args.config, overrides)
        if args.command == "ingest":
            return cmd_ingest(config, input_paths=args.input)
        if args.command == "generate":
            return cmd_generate(config, canonical_path=args.canonical, aspects=args.aspect, jobs=args.jobs)
        if args.command == "score":
            return cmd_score(config, probes_path=args.probes, resume=args.resume)
        if args.command == "report":
            return cmd_report(config, scored_paths=args.scored, groups_path=args.groups, force=args.force)
        if args.command == "run":
            return cmd_run(config, jobs=args.jobs)
        parser.error(f"unknown command {args.command}")
    except (ConfigError, CorpusError, ScorerError, MetricsError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
