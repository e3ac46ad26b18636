"""Pairwise accuracy (a positive beats its negative, ties lose), per-bucket
breakdowns, gap statistics, and model-group averages.

Accuracy for a set of scored pairs is wins/n with a strict ``>`` comparison,
so it is invariant under any strictly monotone transformation of one
scorer's outputs. Empty buckets report a null accuracy rather than a
fabricated number.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .scoring import ScoredPair
from .taxonomy import Aspect, AttributeClass, LocationBucket, RelationKind, SizeBucket


class MetricsError(ValueError):
    pass


@dataclass(frozen=True)
class BucketKey:
    aspect: Aspect | None = None
    size: SizeBucket | None = None
    location: LocationBucket | None = None
    attr_class: AttributeClass | None = None
    rel_kind: RelationKind | None = None

    def label(self) -> str:
        if self.aspect is None:
            return "overall"
        parts = [self.aspect.value]
        for name, value in (
            ("size", self.size),
            ("location", self.location),
            ("attr_class", self.attr_class),
            ("rel_kind", self.rel_kind),
        ):
            if value is not None:
                parts.append(f"{name}={value.value}")
        return "/".join(parts)

    def to_dict(self) -> dict:
        return {
            "aspect": self.aspect.value if self.aspect else None,
            "size": self.size.value if self.size else None,
            "location": self.location.value if self.location else None,
            "attr_class": self.attr_class.value if self.attr_class else None,
            "rel_kind": self.rel_kind.value if self.rel_kind else None,
        }


@dataclass(frozen=True)
class BucketAccuracy:
    key: BucketKey
    n: int
    wins: int

    def __post_init__(self):
        if not (0 <= self.wins <= self.n):
            raise MetricsError(f"wins must satisfy 0 <= wins <= n, got {self.wins}/{self.n}")

    @property
    def acc(self) -> float | None:
        return self.wins / self.n if self.n > 0 else None

    @property
    def acc_pct(self) -> float | None:
        return self.wins / self.n * 100.0 if self.n > 0 else None


@dataclass(frozen=True)
class GapStatistic:
    label: str
    lhs: float  # percentage points
    rhs: float
    gap: float  # lhs - rhs exactly


def _is_win(pair: ScoredPair) -> bool:
    return pair.pos_score > pair.neg_score  # strict: ties are losses


def pairwise_accuracy(pairs: list[ScoredPair]) -> BucketAccuracy:
    """Overall accuracy over all pairs; n=0 yields a null accuracy."""
    wins = sum(1 for pair in pairs if _is_win(pair))
    return BucketAccuracy(key=BucketKey(), n=len(pairs), wins=wins)


def _keys_for(pair: ScoredPair) -> list[BucketKey]:
    path = pair.path
    keys = [BucketKey(aspect=path.aspect)]
    if path.size is not None:
        keys.append(BucketKey(aspect=path.aspect, size=path.size))
    if path.location is not None:
        keys.append(BucketKey(aspect=path.aspect, location=path.location))
    if path.attr_class is not None:
        keys.append(BucketKey(aspect=path.aspect, attr_class=path.attr_class))
    if path.rel_kind is not None:
        keys.append(BucketKey(aspect=path.aspect, rel_kind=path.rel_kind))
    return keys


_ASPECT_ORDER = {Aspect.OBJECT: 0, Aspect.ATTRIBUTE: 1, Aspect.RELATION: 2}
_DIMENSIONS = ("size", "location", "attr_class", "rel_kind")


def _sort_index(key: BucketKey) -> tuple:
    aspect_rank = -1 if key.aspect is None else _ASPECT_ORDER[key.aspect]
    for dim_rank, name in enumerate(_DIMENSIONS, start=1):
        value = getattr(key, name)
        if value is not None:
            value_rank = list(type(value)).index(value)
            return (aspect_rank, dim_rank, value_rank)
    return (aspect_rank, 0, 0)


def aggregate_by_bucket(pairs: list[ScoredPair]) -> list[BucketAccuracy]:
    """One BucketAccuracy per observed key: each aspect total plus every
    populated sub-dimension value. A pair contributes independently to each
    of its keys (an object pair to its aspect total, size bucket, and
    location bucket)."""
    counts: dict[BucketKey, list[int]] = {}
    for pair in pairs:
        win = _is_win(pair)
        for key in _keys_for(pair):
            slot = counts.setdefault(key, [0, 0])
            slot[0] += 1
            slot[1] += int(win)
    buckets = [BucketAccuracy(key=key, n=n, wins=wins) for key, (n, wins) in counts.items()]
    buckets.sort(key=lambda b: _sort_index(b.key))
    return buckets


_GAP_SPECS = (
    (
        "center_vs_margin",
        BucketKey(aspect=Aspect.OBJECT, location=LocationBucket.CENTER),
        BucketKey(aspect=Aspect.OBJECT, location=LocationBucket.MARGIN),
    ),
    (
        "large_vs_small",
        BucketKey(aspect=Aspect.OBJECT, size=SizeBucket.LARGE),
        BucketKey(aspect=Aspect.OBJECT, size=SizeBucket.SMALL),
    ),
)


def gap_statistics(buckets: list[BucketAccuracy]) -> tuple[list[GapStatistic], list[str]]:
    """Center-vs-margin and large-vs-small accuracy gaps in percentage points.

    A statistic whose buckets are missing or empty is omitted with a note,
    never fabricated.
    """
    index = {bucket.key: bucket for bucket in buckets}
    stats: list[GapStatistic] = []
    notes: list[str] = []
    for label, lhs_key, rhs_key in _GAP_SPECS:
        lhs = index.get(lhs_key)
        rhs = index.get(rhs_key)
        if lhs is None or rhs is None or lhs.acc is None or rhs.acc is None:
            missing = lhs_key.label() if lhs is None or lhs.acc is None else rhs_key.label()
            notes.append(f"{label} omitted: no data for bucket {missing}")
            continue
        lhs_pct = lhs.acc * 100.0
        rhs_pct = rhs.acc * 100.0
        stats.append(GapStatistic(label=label, lhs=lhs_pct, rhs=rhs_pct, gap=lhs_pct - rhs_pct))
    return stats, notes


@dataclass
class ModelSummary:
    model_id: str
    buckets: list[BucketAccuracy] = field(default_factory=list)
    gaps: list[GapStatistic] = field(default_factory=list)
    gap_notes: list[str] = field(default_factory=list)

    def bucket(self, key: BucketKey) -> BucketAccuracy | None:
        for bucket in self.buckets:
            if bucket.key == key:
                return bucket
        return None

    def aspect_average(self, aspect: Aspect) -> float | None:
        """Pair-level accuracy (in %) over all pairs of the aspect."""
        bucket = self.bucket(BucketKey(aspect=aspect))
        return bucket.acc_pct if bucket is not None else None

    @property
    def object_avg(self) -> float | None:
        return self.aspect_average(Aspect.OBJECT)

    @property
    def attribute_avg(self) -> float | None:
        return self.aspect_average(Aspect.ATTRIBUTE)

    @property
    def relation_avg(self) -> float | None:
        return self.aspect_average(Aspect.RELATION)


def summarize_model(model_id: str, pairs: list[ScoredPair]) -> ModelSummary:
    buckets = aggregate_by_bucket(pairs)
    gaps, notes = gap_statistics(buckets)
    return ModelSummary(model_id=model_id, buckets=buckets, gaps=gaps, gap_notes=notes)


def group_average(
    summaries: list[ModelSummary],
    groups: dict[str, list[str]],
) -> dict[str, dict[BucketKey, float]]:
    """Unweighted arithmetic mean of member models' bucket accuracies.

    Buckets enter a group's average only for members that observed them.
    """
    by_id = {summary.model_id: summary for summary in summaries}
    averages: dict[str, dict[BucketKey, float]] = {}
    for group, member_ids in groups.items():
        members = []
        for model_id in member_ids:
            if model_id not in by_id:
                raise MetricsError(f"group {group!r} references unknown model id {model_id!r}")
            members.append(by_id[model_id])
        keys: list[BucketKey] = []
        for member in members:
            for bucket in member.buckets:
                if bucket.key not in keys:
                    keys.append(bucket.key)
        group_avg: dict[BucketKey, float] = {}
        for key in keys:
            accs = [m.bucket(key).acc for m in members if m.bucket(key) and m.bucket(key).acc is not None]
            if accs:
                group_avg[key] = sum(accs) / len(accs)
        averages[group] = group_avg
    return averages
