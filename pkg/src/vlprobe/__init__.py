"""vlprobe: taxonomy-bucketed image-text probe generation, scoring, and reporting.

The pipeline turns scene-graph-annotated corpora into positive/hard-negative
caption pairs bucketed by object size and location, attribute class, and
relation kind; sends them to an external image-text-matching scorer over a
line or HTTP protocol; and reports per-bucket accuracies, gap statistics,
and a radar chart.
"""

__version__ = "0.1.0"

from .ingestion import BBox, CanonicalSample, ImageMeta, RelationTriple, SceneObject
from .taxonomy import (
    Aspect,
    AspectPath,
    AttributeClass,
    LocationBucket,
    RelationKind,
    SizeBucket,
    SizeThresholds,
)
from .negatives import GenerationPolicy, ProbePair
from .scoring import Batching, OracleEndpoint, ScoredPair
from .metrics import BucketAccuracy, BucketKey, GapStatistic, ModelSummary

__all__ = [
    "Aspect",
    "AspectPath",
    "AttributeClass",
    "Batching",
    "BBox",
    "BucketAccuracy",
    "BucketKey",
    "CanonicalSample",
    "GapStatistic",
    "GenerationPolicy",
    "ImageMeta",
    "LocationBucket",
    "ModelSummary",
    "OracleEndpoint",
    "ProbePair",
    "RelationKind",
    "RelationTriple",
    "SceneObject",
    "ScoredPair",
    "SizeBucket",
    "SizeThresholds",
]
