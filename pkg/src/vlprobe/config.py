"""Run configuration: a single JSON file, flag overrides, and the config hash.

Precedence is flags > config file > defaults. The config hash covers every
field that shapes generated data (corpus, adapter, seed, thresholds,
similarity bound, templates, embedding source, local variant, exclusions)
and deliberately excludes the scorer spec, batching, and output paths so
that probe sets scored by different models still share one hash.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path

SCORER_URL_ENV = "VLPROBE_SCORER_URL"

DEFAULT_BATCHING = {"batch_size": 16, "max_in_flight": 32, "max_retries": 2, "response_timeout": 30.0}


class ConfigError(ValueError):
    pass


def packaged_data_path(name: str) -> str:
    return str(resources.files("vlprobe").joinpath("data", name))


@dataclass(frozen=True)
class RunConfig:
    corpus: tuple[str, ...]
    scorer: dict
    adapter: str = "canonical"
    seed: int = 0
    size_small_max: float = 1024.0
    size_medium_max: float = 9216.0
    max_similarity: float = 0.5
    min_candidates: int = 1
    min_assign_similarity: float = 0.3
    templates: dict = field(default_factory=dict)
    lexicon_path: str = ""
    prototypes_path: str = ""
    vector_file: str | None = None
    embed_endpoint: str | None = None
    batching: dict = field(default_factory=lambda: dict(DEFAULT_BATCHING))
    out_dir: str = "out"
    local_variant: str | None = None
    allow_rejects: bool = False
    exclude_pairs: str | None = None

    def scorer_id(self) -> str:
        if "model_id" in self.scorer:
            return str(self.scorer["model_id"])
        kind = self.scorer.get("kind")
        if kind == "oracle":
            return "oracle"
        if kind == "subprocess":
            return Path(self.scorer["argv"][0]).name
        if kind == "http":
            return str(self.scorer.get("url", "http"))
        return "unknown"


_REQUIRED_FIELDS = ("corpus", "scorer")
_KNOWN_FIELDS = {
    "corpus",
    "scorer",
    "adapter",
    "seed",
    "size_small_max",
    "size_medium_max",
    "max_similarity",
    "min_candidates",
    "min_assign_similarity",
    "templates",
    "lexicon_path",
    "prototypes_path",
    "vector_file",
    "embed_endpoint",
    "batching",
    "out_dir",
    "local_variant",
    "allow_rejects",
    "exclude_pairs",
}
_SCORER_KINDS = ("oracle", "subprocess", "http")


def load_config(path: str, overrides: dict | None = None) -> RunConfig:
    """Load and validate the config file, applying flag overrides and the
    VLPROBE_SCORER_URL environment override. Raises ConfigError naming the
    first missing or invalid field before any pipeline work starts."""
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc.msg}") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"config file {path} must contain a JSON object")
    unknown = set(raw) - _KNOWN_FIELDS
    if unknown:
        raise ConfigError(f"unknown config field: {sorted(unknown)[0]}")
    for name in _REQUIRED_FIELDS:
        if name not in raw:
            raise ConfigError(f"missing config field: {name}")
    merged = dict(raw)
    for key, value in (overrides or {}).items():
        if value is not None:
            merged[key] = value

    corpus = merged["corpus"]
    if isinstance(corpus, str):
        corpus = [corpus]
    if not isinstance(corpus, list) or not corpus:
        raise ConfigError("config field corpus must be a non-empty path or list of paths")

    scorer = merged["scorer"]
    if not isinstance(scorer, dict) or scorer.get("kind") not in _SCORER_KINDS:
        raise ConfigError(f"config field scorer must declare kind in {_SCORER_KINDS}")
    scorer = dict(scorer)
    env_url = os.environ.get(SCORER_URL_ENV)
    if env_url and scorer["kind"] == "http":
        scorer["url"] = env_url
    if scorer["kind"] == "subprocess" and not scorer.get("argv"):
        raise ConfigError("missing config field: scorer.argv")
    if scorer["kind"] == "http" and not scorer.get("url"):
        raise ConfigError("missing config field: scorer.url")
    if scorer["kind"] == "oracle" and not scorer.get("captions"):
        raise ConfigError("missing config field: scorer.captions")

    vector_file = merged.get("vector_file")
    embed_endpoint = merged.get("embed_endpoint")
    if bool(vector_file) == bool(embed_endpoint):
        raise ConfigError("exactly one embedding source required: vector_file or embed_endpoint")

    adapter = merged.get("adapter", "canonical")
    if adapter not in ("canonical", "vg"):
        raise ConfigError(f"unknown adapter {adapter!r} (expected canonical or vg)")

    local_variant = merged.get("local_variant")
    if local_variant is not None and local_variant not in ("subj_only", "obj_only", "union"):
        raise ConfigError(f"unknown local_variant {local_variant!r}")

    batching = dict(DEFAULT_BATCHING)
    batching.update(merged.get("batching") or {})

    config = RunConfig(
        corpus=tuple(str(p) for p in corpus),
        scorer=scorer,
        adapter=adapter,
        seed=int(merged.get("seed", 0)),
        size_small_max=float(merged.get("size_small_max", 1024.0)),
        size_medium_max=float(merged.get("size_medium_max", 9216.0)),
        max_similarity=float(merged.get("max_similarity", 0.5)),
        min_candidates=int(merged.get("min_candidates", 1)),
        min_assign_similarity=float(merged.get("min_assign_similarity", 0.3)),
        templates=dict(merged.get("templates") or {}),
        lexicon_path=str(merged.get("lexicon_path") or packaged_data_path("spatial_lexicon.json")),
        prototypes_path=str(merged.get("prototypes_path") or packaged_data_path("attribute_prototypes.json")),
        vector_file=str(vector_file) if vector_file else None,
        embed_endpoint=str(embed_endpoint) if embed_endpoint else None,
        batching=batching,
        out_dir=str(merged.get("out_dir", "out")),
        local_variant=local_variant,
        allow_rejects=bool(merged.get("allow_rejects", False)),
        exclude_pairs=str(merged["exclude_pairs"]) if merged.get("exclude_pairs") else None,
    )
    if config.size_small_max <= 0 or config.size_small_max >= config.size_medium_max:
        raise ConfigError("size thresholds must satisfy 0 < size_small_max < size_medium_max")
    if not (0.0 <= config.max_similarity <= 1.0):
        raise ConfigError("max_similarity must be in [0, 1]")
    return config


def with_updates(config: RunConfig, **updates) -> RunConfig:
    return replace(config, **{k: v for k, v in updates.items() if v is not None})


def config_hash(config: RunConfig) -> str:
    """Stable hash over the data-shaping config fields."""
    hashed = {
        "corpus": list(config.corpus),
        "adapter": config.adapter,
        "seed": config.seed,
        "size_small_max": config.size_small_max,
        "size_medium_max": config.size_medium_max,
        "max_similarity": config.max_similarity,
        "min_candidates": config.min_candidates,
        "min_assign_similarity": config.min_assign_similarity,
        "templates": config.templates,
        "lexicon_path": config.lexicon_path,
        "prototypes_path": config.prototypes_path,
        "vector_file": config.vector_file,
        "embed_endpoint": config.embed_endpoint,
        "local_variant": config.local_variant,
        "exclude_pairs": config.exclude_pairs,
    }
    canonical = json.dumps(hashed, sort_keys=True, ensure_ascii=False)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:16]
