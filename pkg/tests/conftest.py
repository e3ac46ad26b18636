import json

import numpy as np
import pytest

from vlprobe.config import packaged_data_path
from vlprobe.embeddings import VocabularyIndex, load_vector_file
from vlprobe.ingestion import BBox, CanonicalSample, ImageMeta, ObjectAttribute, RelationTriple, SceneObject
from vlprobe.taxonomy import AttributeClass


@pytest.fixture(scope="session")
def mini_index():
    return load_vector_file(packaged_data_path("mini_vectors.txt"))


@pytest.fixture(scope="session")
def spatial_lexicon():
    with open(packaged_data_path("spatial_lexicon.json"), encoding="utf-8") as fh:
        return frozenset(json.load(fh))


@pytest.fixture(scope="session")
def prototypes():
    with open(packaged_data_path("attribute_prototypes.json"), encoding="utf-8") as fh:
        raw = json.load(fh)
    return {AttributeClass(key): anchors for key, anchors in raw.items()}


@pytest.fixture(scope="session")
def synthetic_corpus_path():
    return packaged_data_path("synthetic_corpus.jsonl")


@pytest.fixture(scope="session")
def synthetic_captions_path():
    return packaged_data_path("synthetic_captions.json")


def make_index(groups: dict[str, list[str]], group_weight_sq: float = 0.4) -> VocabularyIndex:
    """Build a toy index: same-group tokens have cosine similarity
    ``group_weight_sq``, cross-group tokens are orthogonal."""
    tokens = [t for grp in groups.values() for t in grp]
    dim = len(groups) + len(tokens)
    gw = np.sqrt(group_weight_sq)
    iw = np.sqrt(1.0 - group_weight_sq)
    vectors = {}
    token_index = 0
    for group_index, group_tokens in enumerate(groups.values()):
        for token in group_tokens:
            vec = np.zeros(dim)
            vec[group_index] = gw
            vec[len(groups) + token_index] = iw
            vectors[token.lower()] = vec
            token_index += 1
    return VocabularyIndex(vectors=vectors, dim=dim, source="test")


def make_sample(
    sample_id="s1",
    width=100,
    height=100,
    objects=None,
    relations=None,
) -> CanonicalSample:
    objects = objects if objects is not None else [("o1", "cat", (10, 10, 20, 20), [])]
    relations = relations or []
    scene_objects = tuple(
        SceneObject(
            oid=oid,
            name=name,
            bbox=BBox(*bbox),
            attributes=tuple(ObjectAttribute(value=v, class_hint=h) for v, h in attrs),
        )
        for oid, name, bbox, attrs in objects
    )
    return CanonicalSample(
        id=sample_id,
        image=ImageMeta(uri=f"img/{sample_id}.png", width=width, height=height),
        objects=scene_objects,
        relations=tuple(RelationTriple(*r) for r in relations),
    )
