"""Taxonomy assignment: size and location buckets, relation kinds, attribute classes.

Location splits the ratio of bbox-center distance to the image half-diagonal
at 1/3 and 2/3 (inclusive on the lower side); size splits bbox pixel area at
the small/medium thresholds, defaulting to 1024 and 9216. Boundary
comparisons are exact ``<=`` in double precision, no epsilon.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

from .ingestion import BBox, CanonicalSample, ImageMeta


class Aspect(enum.Enum):
    OBJECT = "object"
    ATTRIBUTE = "attribute"
    RELATION = "relation"


class SizeBucket(enum.Enum):
    SMALL = "small"
    MEDIUM = "medium"
    LARGE = "large"


class LocationBucket(enum.Enum):
    CENTER = "center"
    MID = "mid"
    MARGIN = "margin"


class RelationKind(enum.Enum):
    SPATIAL = "spatial"
    ACTION = "action"


class AttributeClass(enum.Enum):
    COLOR = "color"
    MATERIAL = "material"
    SIZE = "size"
    STATE = "state"
    ACTION = "action"


# Tie-break order for attribute classification.
ATTRIBUTE_CLASS_ORDER = (
    AttributeClass.COLOR,
    AttributeClass.MATERIAL,
    AttributeClass.SIZE,
    AttributeClass.STATE,
    AttributeClass.ACTION,
)

DEFAULT_MIN_ASSIGN_SIMILARITY = 0.3


@dataclass(frozen=True)
class SizeThresholds:
    small_max: float = 1024.0
    medium_max: float = 9216.0

    def __post_init__(self):
        if not (0 < self.small_max < self.medium_max):
            raise ValueError(
                f"thresholds must satisfy 0 < small_max < medium_max, got {self.small_max}, {self.medium_max}"
            )


@dataclass(frozen=True)
class AspectPath:
    aspect: Aspect
    size: SizeBucket | None = None
    location: LocationBucket | None = None
    attr_class: AttributeClass | None = None
    rel_kind: RelationKind | None = None

    def __post_init__(self):
        if self.aspect is Aspect.OBJECT and (self.size is None or self.location is None):
            raise ValueError("object paths require size and location buckets")
        if self.aspect is Aspect.ATTRIBUTE and self.attr_class is None:
            raise ValueError("attribute paths require an attribute class")
        if self.aspect is Aspect.RELATION and self.rel_kind is None:
            raise ValueError("relation paths require a relation kind")

    def to_dict(self) -> dict:
        return {
            "size": self.size.value if self.size else None,
            "location": self.location.value if self.location else None,
            "attr_class": self.attr_class.value if self.attr_class else None,
            "rel_kind": self.rel_kind.value if self.rel_kind else None,
        }

    @classmethod
    def from_dict(cls, aspect: str, raw: dict) -> "AspectPath":
        return cls(
            aspect=Aspect(aspect),
            size=SizeBucket(raw["size"]) if raw.get("size") else None,
            location=LocationBucket(raw["location"]) if raw.get("location") else None,
            attr_class=AttributeClass(raw["attr_class"]) if raw.get("attr_class") else None,
            rel_kind=RelationKind(raw["rel_kind"]) if raw.get("rel_kind") else None,
        )


def half_diagonal(image: ImageMeta) -> float:
    """Half the length of the image diagonal."""
    return math.hypot(image.width, image.height) / 2.0


def center_distance(image: ImageMeta, bbox: BBox) -> float:
    """Euclidean distance between the bbox center and the image center."""
    bcx, bcy = bbox.center
    return math.hypot(bcx - image.width / 2.0, bcy - image.height / 2.0)


def location_ratio(image: ImageMeta, bbox: BBox) -> float:
    return center_distance(image, bbox) / half_diagonal(image)


def bucket_for_ratio(r: float) -> LocationBucket:
    if r <= 1.0 / 3.0:
        return LocationBucket.CENTER
    if r <= 2.0 / 3.0:
        return LocationBucket.MID
    return LocationBucket.MARGIN


def location_bucket(image: ImageMeta, bbox: BBox) -> LocationBucket:
    return bucket_for_ratio(location_ratio(image, bbox))


def size_bucket(bbox: BBox, thresholds: SizeThresholds = SizeThresholds()) -> SizeBucket:
    area = bbox.area
    if area <= thresholds.small_max:
        return SizeBucket.SMALL
    if area <= thresholds.medium_max:
        return SizeBucket.MEDIUM
    return SizeBucket.LARGE


def classify_predicate(pred: str, lexicon: frozenset[str] | set[str]) -> RelationKind:
    """Spatial iff a longest-prefix of the normalized predicate is in the lexicon.

    Normalization lowercases, trims, and collapses whitespace. Prefixes are
    tried longest first so multi-word prepositions win ("in front of"), with
    the single head word as the final fallback.
    """
    words = pred.strip().lower().split()
    if not words:
        raise ValueError("predicate must be non-empty")
    for k in range(len(words), 0, -1):
        if " ".join(words[:k]) in lexicon:
            return RelationKind.SPATIAL
    return RelationKind.ACTION


def assign_attribute_class(
    value: str,
    prototypes: dict[AttributeClass, list[str]],
    embedder,
    min_assign_similarity: float = DEFAULT_MIN_ASSIGN_SIMILARITY,
) -> AttributeClass | None:
    """Nearest class by max cosine similarity to that class's anchor phrases.

    Returns None (unclassifiable) when the value is out of vocabulary or the
    best similarity falls below the threshold. Ties keep the earlier class in
    ATTRIBUTE_CLASS_ORDER.
    """
    from .embeddings import cosine_similarity

    for cls in ATTRIBUTE_CLASS_ORDER:
        if not prototypes.get(cls):
            raise ValueError(f"prototype anchors missing for class {cls.value!r}")
    vec = embedder.embed(value)
    if vec is None:
        return None
    best_cls = None
    best_sim = -math.inf
    for cls in ATTRIBUTE_CLASS_ORDER:
        for anchor in prototypes[cls]:
            avec = embedder.embed(anchor)
            if avec is None:
                continue
            sim = cosine_similarity(vec, avec)
            if sim > best_sim:
                best_sim = sim
                best_cls = cls
    if best_cls is None or best_sim < min_assign_similarity:
        return None
    return best_cls


@dataclass(frozen=True)
class TaggedEntry:
    """One taxonomy assignment: the path plus a reference to its target."""

    path: AspectPath
    oid: str | None = None
    attribute_index: int | None = None
    relation_index: int | None = None


def tag_sample(
    sample: CanonicalSample,
    thresholds: SizeThresholds,
    lexicon: frozenset[str] | set[str],
    prototypes: dict[AttributeClass, list[str]],
    embedder,
    min_assign_similarity: float = DEFAULT_MIN_ASSIGN_SIMILARITY,
) -> list[TaggedEntry]:
    """Tag every object, classifiable attribute value, and relation triple.

    Output order is deterministic: objects sorted by oid, then their
    attributes in input order, then relations in input order. Attribute and
    relation paths additionally carry the owning/subject object's size and
    location buckets so image-level breakdowns stay possible downstream.
    """
    entries = []
    objects = sorted(sample.objects, key=lambda o: o.oid)

    geometry = {
        obj.oid: (size_bucket(obj.bbox, thresholds), location_bucket(sample.image, obj.bbox))
        for obj in sample.objects
    }

    for obj in objects:
        size, location = geometry[obj.oid]
        entries.append(
            TaggedEntry(
                path=AspectPath(aspect=Aspect.OBJECT, size=size, location=location),
                oid=obj.oid,
            )
        )

    for obj in objects:
        size, location = geometry[obj.oid]
        for index, attr in enumerate(obj.attributes):
            cls = _hinted_class(attr.class_hint)
            if cls is None:
                cls = assign_attribute_class(attr.value, prototypes, embedder, min_assign_similarity)
            if cls is None:
                continue
            entries.append(
                TaggedEntry(
                    path=AspectPath(aspect=Aspect.ATTRIBUTE, attr_class=cls, size=size, location=location),
                    oid=obj.oid,
                    attribute_index=index,
                )
            )

    for index, rel in enumerate(sample.relations):
        kind = classify_predicate(rel.pred, lexicon)
        size = location = None
        if rel.subj in geometry:
            size, location = geometry[rel.subj]
        entries.append(
            TaggedEntry(
                path=AspectPath(aspect=Aspect.RELATION, rel_kind=kind, size=size, location=location),
                relation_index=index,
            )
        )
    return entries


def _hinted_class(class_hint: str | None) -> AttributeClass | None:
    if not class_hint:
        return None
    try:
        return AttributeClass(class_hint.strip().lower())
    except ValueError:
        return None
