"""Hard-negative probe generation by aspect-specific phrase replacement.

One negative per positive: a caption is rendered from a template, then
exactly one slot (object noun, attribute value, or predicate) is swapped
for a pool member whose cosine similarity to the original stays at or
below the policy threshold. The threshold is an upper bound so that
near-synonyms are excluded and the negative is genuinely false for the
image. Replacement draws are uniform over the eligible set using a random
stream derived from (seed, sample id), which makes generation order- and
schedule-independent.
"""

from __future__ import annotations

import json
import random
import string
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import IO, Iterable

from .embeddings import cosine_similarity
from .ingestion import BBox, CanonicalSample, ImageMeta
from .taxonomy import (
    AspectPath,
    Aspect,
    AttributeClass,
    RelationKind,
    SizeThresholds,
    TaggedEntry,
    tag_sample,
)


class GenerationError(ValueError):
    pass


DEFAULT_TEMPLATES = {
    "object": "{subj} {pred} {obj}",
    "relation": "{subj} {pred} {obj}",
    "attribute": "{obj} is {attr}",
}

LOCAL_VARIANT_MODES = ("subj_only", "obj_only", "union")


@dataclass(frozen=True)
class GenerationPolicy:
    seed: int = 0
    max_similarity: float = 0.5
    min_candidates: int = 1
    caption_templates: dict = field(default_factory=lambda: dict(DEFAULT_TEMPLATES))
    crop_variant: bool = False
    local_mode: str = "union"
    exclude_pair_ids: frozenset[str] = frozenset()

    def __post_init__(self):
        if not (0.0 <= self.max_similarity <= 1.0):
            raise ValueError(f"max_similarity must be in [0, 1], got {self.max_similarity}")
        if self.min_candidates < 1:
            raise ValueError("min_candidates must be >= 1")
        if self.crop_variant and self.local_mode not in LOCAL_VARIANT_MODES:
            raise ValueError(f"unknown local variant mode {self.local_mode!r}")


@dataclass(frozen=True)
class ReplacementCandidate:
    phrase: str
    similarity_to_original: float
    same_class: bool = True


@dataclass(frozen=True)
class ProbePair:
    pair_id: str
    sample_id: str
    path: AspectPath
    image: ImageMeta
    crop: BBox | None
    positive_text: str
    negative_text: str
    replaced_original: str
    replacement: str
    similarity: float


@dataclass(frozen=True)
class CandidatePools:
    objects: tuple[str, ...]
    attributes: dict[AttributeClass, tuple[str, ...]]
    predicates: dict[RelationKind, tuple[str, ...]]


def build_candidate_pool(
    corpus: list[CanonicalSample],
    tagged: dict[str, list[TaggedEntry]],
    aspect: Aspect,
) -> dict:
    """Deduplicated, lowercased, sorted phrase pools for one aspect.

    Object nouns pool globally; attribute values pool per class; predicates
    pool per kind.
    """
    by_id = {sample.id: sample for sample in corpus}
    if aspect is Aspect.OBJECT:
        names = {obj.name.lower() for sample in corpus for obj in sample.objects}
        return {"object": sorted(names)}
    if aspect is Aspect.ATTRIBUTE:
        values: dict[AttributeClass, set[str]] = {}
        for sample_id, entries in tagged.items():
            sample = by_id[sample_id]
            for entry in entries:
                if entry.path.aspect is not Aspect.ATTRIBUTE:
                    continue
                obj = sample.object_by_oid(entry.oid)
                value = obj.attributes[entry.attribute_index].value.lower()
                values.setdefault(entry.path.attr_class, set()).add(value)
        return {cls: sorted(vals) for cls, vals in values.items()}
    if aspect is Aspect.RELATION:
        preds: dict[RelationKind, set[str]] = {}
        for sample_id, entries in tagged.items():
            sample = by_id[sample_id]
            for entry in entries:
                if entry.path.aspect is not Aspect.RELATION:
                    continue
                pred = sample.relations[entry.relation_index].pred.lower()
                preds.setdefault(entry.path.rel_kind, set()).add(pred)
        return {kind: sorted(vals) for kind, vals in preds.items()}
    raise ValueError(f"unknown aspect {aspect!r}")


def build_candidate_pools(corpus: list[CanonicalSample], tagged: dict[str, list[TaggedEntry]]) -> CandidatePools:
    objects = build_candidate_pool(corpus, tagged, Aspect.OBJECT)["object"]
    attributes = build_candidate_pool(corpus, tagged, Aspect.ATTRIBUTE)
    predicates = build_candidate_pool(corpus, tagged, Aspect.RELATION)
    return CandidatePools(
        objects=tuple(objects),
        attributes={cls: tuple(vals) for cls, vals in attributes.items()},
        predicates={kind: tuple(vals) for kind, vals in predicates.items()},
    )


def sample_replacement(
    original: str,
    pool: Iterable[str],
    policy: GenerationPolicy,
    embedder,
    rng: random.Random,
) -> ReplacementCandidate | None:
    """Uniform draw over pool members with similarity <= the policy bound.

    The eligible set is walked in the pool's (sorted) order so draws are
    reproducible for a given random stream. Returns None when fewer than
    ``min_candidates`` members are eligible or the original has no vector.
    """
    original_lower = original.lower()
    original_vec = embedder.embed(original)
    if original_vec is None:
        return None
    eligible = []
    for candidate in pool:
        if candidate.lower() == original_lower:
            continue
        vec = embedder.embed(candidate)
        if vec is None:
            continue
        sim = cosine_similarity(original_vec, vec)
        if sim <= policy.max_similarity:
            eligible.append((candidate, sim))
    if len(eligible) < policy.min_candidates:
        return None
    phrase, sim = eligible[rng.randrange(len(eligible))]
    return ReplacementCandidate(phrase=phrase, similarity_to_original=sim)


def render_caption(template: str, slots: dict[str, str]) -> str:
    """Substitute {name} placeholders verbatim; unknown placeholders are errors."""
    out = []
    for literal, field_name, format_spec, conversion in string.Formatter().parse(template):
        out.append(literal)
        if field_name is None:
            continue
        if not field_name or format_spec or conversion is not None:
            raise GenerationError(f"unsupported placeholder in template: {template!r}")
        if field_name not in slots:
            raise GenerationError(f"missing slot for placeholder {{{field_name}}}")
        out.append(slots[field_name])
    return "".join(out)


def _relation_for_object(sample: CanonicalSample, oid: str):
    for rel in sample.relations:
        if (rel.subj == oid) != (rel.obj == oid):
            return rel
    return None


def generate_object_pair(
    sample: CanonicalSample,
    entry: TaggedEntry,
    pools: CandidatePools,
    policy: GenerationPolicy,
    embedder,
    rng: random.Random,
) -> ProbePair | None:
    obj = sample.object_by_oid(entry.oid)
    rel = _relation_for_object(sample, obj.oid)
    if rel is not None:
        slot = "subj" if rel.subj == obj.oid else "obj"
        slots = {
            "subj": sample.object_by_oid(rel.subj).name,
            "pred": rel.pred,
            "obj": sample.object_by_oid(rel.obj).name,
        }
        template = policy.caption_templates.get("object", DEFAULT_TEMPLATES["object"])
    elif "object_bare" in policy.caption_templates:
        slot = "obj"
        slots = {"obj": obj.name}
        template = policy.caption_templates["object_bare"]
    else:
        return None
    candidate = sample_replacement(obj.name, pools.objects, policy, embedder, rng)
    if candidate is None:
        return None
    positive = render_caption(template, slots)
    negative = render_caption(template, {**slots, slot: candidate.phrase})
    return ProbePair(
        pair_id=f"{sample.id}-obj-{obj.oid}",
        sample_id=sample.id,
        path=entry.path,
        image=sample.image,
        crop=None,
        positive_text=positive,
        negative_text=negative,
        replaced_original=obj.name,
        replacement=candidate.phrase,
        similarity=candidate.similarity_to_original,
    )


def generate_attribute_pair(
    sample: CanonicalSample,
    entry: TaggedEntry,
    pools: CandidatePools,
    policy: GenerationPolicy,
    embedder,
    rng: random.Random,
) -> ProbePair | None:
    obj = sample.object_by_oid(entry.oid)
    attr = obj.attributes[entry.attribute_index]
    pool = pools.attributes.get(entry.path.attr_class, ())
    candidate = sample_replacement(attr.value, pool, policy, embedder, rng)
    if candidate is None:
        return None
    template = policy.caption_templates.get("attribute", DEFAULT_TEMPLATES["attribute"])
    slots = {"obj": obj.name, "attr": attr.value}
    positive = render_caption(template, slots)
    negative = render_caption(template, {**slots, "attr": candidate.phrase})
    return ProbePair(
        pair_id=f"{sample.id}-attr-{obj.oid}-{entry.attribute_index}",
        sample_id=sample.id,
        path=entry.path,
        image=sample.image,
        crop=None,
        positive_text=positive,
        negative_text=negative,
        replaced_original=attr.value,
        replacement=candidate.phrase,
        similarity=candidate.similarity_to_original,
    )


def generate_relation_pair(
    sample: CanonicalSample,
    entry: TaggedEntry,
    pools: CandidatePools,
    policy: GenerationPolicy,
    embedder,
    rng: random.Random,
) -> ProbePair | None:
    rel = sample.relations[entry.relation_index]
    pool = pools.predicates.get(entry.path.rel_kind, ())
    candidate = sample_replacement(rel.pred, pool, policy, embedder, rng)
    if candidate is None:
        return None
    template = policy.caption_templates.get("relation", DEFAULT_TEMPLATES["relation"])
    slots = {
        "subj": sample.object_by_oid(rel.subj).name,
        "pred": rel.pred,
        "obj": sample.object_by_oid(rel.obj).name,
    }
    positive = render_caption(template, slots)
    negative = render_caption(template, {**slots, "pred": candidate.phrase})
    return ProbePair(
        pair_id=f"{sample.id}-rel-{entry.relation_index}",
        sample_id=sample.id,
        path=entry.path,
        image=sample.image,
        crop=None,
        positive_text=positive,
        negative_text=negative,
        replaced_original=rel.pred,
        replacement=candidate.phrase,
        similarity=candidate.similarity_to_original,
    )


def bbox_union(a: BBox, b: BBox) -> BBox:
    """Minimal axis-aligned box containing both."""
    x0 = min(a.x, b.x)
    y0 = min(a.y, b.y)
    x1 = max(a.x + a.w, b.x + b.w)
    y1 = max(a.y + a.h, b.y + b.h)
    return BBox(x=x0, y=y0, w=x1 - x0, h=y1 - y0)


def generate_local_variant(
    pair: ProbePair,
    subj_bbox: BBox | None,
    obj_bbox: BBox | None,
    mode: str,
) -> ProbePair:
    """Same texts, scoring crop set to the subject box, object box, or their union."""
    if pair.crop is not None:
        raise GenerationError(f"pair {pair.pair_id} already carries a crop")
    if mode == "subj_only":
        if subj_bbox is None:
            raise GenerationError("subj_only variant requires the subject bbox")
        crop = subj_bbox
    elif mode == "obj_only":
        if obj_bbox is None:
            raise GenerationError("obj_only variant requires the object bbox")
        crop = obj_bbox
    elif mode == "union":
        if subj_bbox is None or obj_bbox is None:
            raise GenerationError("union variant requires both bboxes")
        crop = bbox_union(subj_bbox, obj_bbox)
    else:
        raise GenerationError(f"unknown local variant mode {mode!r}")
    return replace(pair, pair_id=f"{pair.pair_id}-local-{mode}", crop=crop)


def path_key(path: AspectPath) -> str:
    if path.aspect is Aspect.OBJECT:
        return f"object/{path.size.value}/{path.location.value}"
    if path.aspect is Aspect.ATTRIBUTE:
        return f"attribute/{path.attr_class.value}"
    return f"relation/{path.rel_kind.value}"


@dataclass
class GenerationReport:
    attempts: int = 0
    emitted: int = 0
    excluded: int = 0
    no_candidate: dict = field(default_factory=dict)  # aspect value -> count
    per_path: dict = field(default_factory=dict)  # path key -> emitted count

    def to_dict(self) -> dict:
        return {
            "attempts": self.attempts,
            "emitted": self.emitted,
            "excluded": self.excluded,
            "no_candidate": dict(sorted(self.no_candidate.items())),
            "per_path": dict(sorted(self.per_path.items())),
        }


_GENERATORS = {
    Aspect.OBJECT: generate_object_pair,
    Aspect.ATTRIBUTE: generate_attribute_pair,
    Aspect.RELATION: generate_relation_pair,
}


def _generate_for_sample(
    sample: CanonicalSample,
    entries: list[TaggedEntry],
    pools: CandidatePools,
    policy: GenerationPolicy,
    embedder,
    aspects: frozenset[Aspect],
) -> tuple[list[ProbePair], list[Aspect], int]:
    """Returns (pairs, no-candidate aspects, excluded count) for one sample."""
    rng = random.Random(f"{policy.seed}:{sample.id}")
    pairs: list[ProbePair] = []
    misses: list[Aspect] = []
    excluded = 0
    for entry in entries:
        aspect = entry.path.aspect
        if aspect not in aspects:
            continue
        pair = _GENERATORS[aspect](sample, entry, pools, policy, embedder, rng)
        if pair is None:
            misses.append(aspect)
            continue
        if pair.pair_id in policy.exclude_pair_ids:
            excluded += 1
            continue
        pairs.append(pair)
        if policy.crop_variant and aspect is Aspect.RELATION:
            rel = sample.relations[entry.relation_index]
            subj = sample.object_by_oid(rel.subj)
            obj = sample.object_by_oid(rel.obj)
            variant = generate_local_variant(
                pair,
                subj.bbox if subj else None,
                obj.bbox if obj else None,
                policy.local_mode,
            )
            if variant.pair_id in policy.exclude_pair_ids:
                excluded += 1
            else:
                pairs.append(variant)
    return pairs, misses, excluded


def build_probe_set(
    corpus: list[CanonicalSample],
    policy: GenerationPolicy,
    embedder,
    thresholds: SizeThresholds,
    lexicon: frozenset[str] | set[str],
    prototypes: dict[AttributeClass, list[str]],
    jobs: int = 1,
    aspects: Iterable[Aspect] | None = None,
    min_assign_similarity: float | None = None,
) -> tuple[list[ProbePair], GenerationReport]:
    """Generate the full probe set; deterministic under (corpus, seed, embedder).

    Local crop variants (policy.crop_variant) duplicate every relation pair
    with the crop rectangle set. Parallel generation (jobs > 1) reassembles
    sample outputs in corpus order, so output equals the sequential run.
    """
    wanted = frozenset(aspects) if aspects is not None else frozenset(Aspect)
    assign_kwargs = {}
    if min_assign_similarity is not None:
        assign_kwargs["min_assign_similarity"] = min_assign_similarity
    tagged = {
        sample.id: tag_sample(sample, thresholds, lexicon, prototypes, embedder, **assign_kwargs)
        for sample in corpus
    }
    pools = build_candidate_pools(corpus, tagged)

    def work(sample: CanonicalSample):
        return _generate_for_sample(sample, tagged[sample.id], pools, policy, embedder, wanted)

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(work, corpus))
    else:
        results = [work(sample) for sample in corpus]

    report = GenerationReport()
    pairs: list[ProbePair] = []
    for sample_pairs, misses, excluded in results:
        report.attempts += len(sample_pairs) + len(misses) + excluded
        report.excluded += excluded
        for aspect in misses:
            key = aspect.value
            report.no_candidate[key] = report.no_candidate.get(key, 0) + 1
        for pair in sample_pairs:
            report.emitted += 1
            key = path_key(pair.path)
            report.per_path[key] = report.per_path.get(key, 0) + 1
        pairs.extend(sample_pairs)
    return pairs, report


def probe_pair_to_dict(pair: ProbePair) -> dict:
    return {
        "pair_id": pair.pair_id,
        "sample_id": pair.sample_id,
        "aspect": pair.path.aspect.value,
        "path": pair.path.to_dict(),
        "image": {"uri": pair.image.uri, "width": pair.image.width, "height": pair.image.height},
        "crop": [pair.crop.x, pair.crop.y, pair.crop.w, pair.crop.h] if pair.crop else None,
        "pos": pair.positive_text,
        "neg": pair.negative_text,
        "orig": pair.replaced_original,
        "repl": pair.replacement,
        "sim": pair.similarity,
    }


def probe_pair_from_dict(raw: dict) -> ProbePair:
    crop = raw.get("crop")
    return ProbePair(
        pair_id=raw["pair_id"],
        sample_id=raw["sample_id"],
        path=AspectPath.from_dict(raw["aspect"], raw.get("path", {})),
        image=ImageMeta(
            uri=raw["image"]["uri"], width=raw["image"]["width"], height=raw["image"]["height"]
        ),
        crop=BBox(*crop) if crop else None,
        positive_text=raw["pos"],
        negative_text=raw["neg"],
        replaced_original=raw["orig"],
        replacement=raw["repl"],
        similarity=raw["sim"],
    )


def write_probe_set(pairs: Iterable[ProbePair], fh: IO[str]) -> None:
    for pair in pairs:
        fh.write(json.dumps(probe_pair_to_dict(pair), ensure_ascii=False) + "\n")


def load_probe_set(stream: str | IO[str]) -> list[ProbePair]:
    lines = stream.splitlines() if isinstance(stream, str) else stream
    pairs = []
    for line in lines:
        if line.strip():
            pairs.append(probe_pair_from_dict(json.loads(line)))
    return pairs
