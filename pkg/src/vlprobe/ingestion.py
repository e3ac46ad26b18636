"""Corpus ingestion: canonical JSONL parsing, the VG adapter, and validation.

The canonical corpus format is line-delimited JSON, one sample per line:

    {"id": "...", "image": {"uri": "...", "width": W, "height": H},
     "objects": [{"oid": "...", "name": "...", "bbox": [x, y, w, h],
                  "attributes": [{"value": "...", "class": null}]}],
     "relations": [{"subj": "<oid>", "pred": "...", "obj": "<oid>"}]}

Unknown top-level keys are preserved on round-trip but otherwise ignored.
Parsing enforces per-field schema constraints (types, positive extents,
non-empty strings); corpus-level integrity (boxes inside the image, unique
ids, resolvable relation endpoints) is checked by ``validate_corpus``,
which rejects samples instead of raising.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import IO, Iterable, Iterator


class CorpusError(ValueError):
    """Malformed corpus input. Carries the line number and sample id when known."""

    def __init__(self, message: str, *, line: int | None = None, sample_id: str | None = None):
        parts = []
        if line is not None:
            parts.append(f"line {line}")
        if sample_id is not None:
            parts.append(f"sample {sample_id!r}")
        prefix = ", ".join(parts)
        super().__init__(f"{prefix}: {message}" if prefix else message)
        self.line = line
        self.sample_id = sample_id


@dataclass(frozen=True)
class ImageMeta:
    uri: str
    width: int
    height: int


@dataclass(frozen=True)
class BBox:
    x: float
    y: float
    w: float
    h: float

    @property
    def area(self) -> float:
        return self.w * self.h

    @property
    def center(self) -> tuple[float, float]:
        return (self.x + self.w / 2.0, self.y + self.h / 2.0)


@dataclass(frozen=True)
class ObjectAttribute:
    value: str
    class_hint: str | None = None


@dataclass(frozen=True)
class SceneObject:
    oid: str
    name: str
    bbox: BBox
    attributes: tuple[ObjectAttribute, ...] = ()


@dataclass(frozen=True)
class RelationTriple:
    subj: str
    pred: str
    obj: str


@dataclass(frozen=True)
class CanonicalSample:
    id: str
    image: ImageMeta
    objects: tuple[SceneObject, ...] = ()
    relations: tuple[RelationTriple, ...] = ()
    extra: tuple[tuple[str, str], ...] = ()  # unknown top-level keys, JSON-encoded values

    def object_by_oid(self, oid: str) -> SceneObject | None:
        for obj in self.objects:
            if obj.oid == oid:
                return obj
        return None


_KNOWN_KEYS = {"id", "image", "objects", "relations"}


def _iter_lines(stream: str | IO[str] | Iterable[str]) -> Iterator[str]:
    if isinstance(stream, str):
        yield from stream.splitlines()
    else:
        for line in stream:
            yield line.rstrip("\n")


def _read_text(stream: str | IO[str]) -> str:
    if isinstance(stream, str):
        return stream
    return stream.read()


def _as_number(value, what: str, *, line: int | None, sample_id: str | None) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise CorpusError(f"{what} must be a number, got {value!r}", line=line, sample_id=sample_id)
    return float(value)


def _as_nonempty_str(value, what: str, *, line: int | None, sample_id: str | None) -> str:
    if not isinstance(value, str) or not value:
        raise CorpusError(f"{what} must be a non-empty string, got {value!r}", line=line, sample_id=sample_id)
    return value


def _parse_bbox(raw, *, line: int | None, sample_id: str | None) -> BBox:
    if not isinstance(raw, (list, tuple)) or len(raw) != 4:
        raise CorpusError(f"bbox must be [x, y, w, h], got {raw!r}", line=line, sample_id=sample_id)
    x = _as_number(raw[0], "bbox.x", line=line, sample_id=sample_id)
    y = _as_number(raw[1], "bbox.y", line=line, sample_id=sample_id)
    w = _as_number(raw[2], "bbox.w", line=line, sample_id=sample_id)
    h = _as_number(raw[3], "bbox.h", line=line, sample_id=sample_id)
    if w <= 0:
        raise CorpusError(f"bbox.w must be > 0, got {w}", line=line, sample_id=sample_id)
    if h <= 0:
        raise CorpusError(f"bbox.h must be > 0, got {h}", line=line, sample_id=sample_id)
    return BBox(x, y, w, h)


def _parse_image(raw, *, line: int | None, sample_id: str | None) -> ImageMeta:
    if not isinstance(raw, dict):
        raise CorpusError(f"image must be an object, got {raw!r}", line=line, sample_id=sample_id)
    uri = _as_nonempty_str(raw.get("uri"), "image.uri", line=line, sample_id=sample_id)
    width = raw.get("width")
    height = raw.get("height")
    for name, value in (("image.width", width), ("image.height", height)):
        if isinstance(value, bool) or not isinstance(value, int) or value < 1:
            raise CorpusError(f"{name} must be a positive integer, got {value!r}", line=line, sample_id=sample_id)
    return ImageMeta(uri=uri, width=width, height=height)


def _parse_sample(raw: dict, *, line: int | None = None) -> CanonicalSample:
    sample_id = raw.get("id")
    if not isinstance(sample_id, str) or not sample_id:
        raise CorpusError(f"id must be a non-empty string, got {sample_id!r}", line=line)
    image = _parse_image(raw.get("image"), line=line, sample_id=sample_id)

    objects = []
    raw_objects = raw.get("objects", [])
    if not isinstance(raw_objects, list):
        raise CorpusError("objects must be a list", line=line, sample_id=sample_id)
    for raw_obj in raw_objects:
        if not isinstance(raw_obj, dict):
            raise CorpusError(f"object entry must be an object, got {raw_obj!r}", line=line, sample_id=sample_id)
        oid = _as_nonempty_str(raw_obj.get("oid"), "object.oid", line=line, sample_id=sample_id)
        name = _as_nonempty_str(raw_obj.get("name"), "object.name", line=line, sample_id=sample_id)
        bbox = _parse_bbox(raw_obj.get("bbox"), line=line, sample_id=sample_id)
        attributes = []
        for raw_attr in raw_obj.get("attributes", []) or []:
            if not isinstance(raw_attr, dict):
                raise CorpusError(f"attribute entry must be an object, got {raw_attr!r}", line=line, sample_id=sample_id)
            value = _as_nonempty_str(raw_attr.get("value"), "attribute.value", line=line, sample_id=sample_id)
            class_hint = raw_attr.get("class")
            if class_hint is not None and not isinstance(class_hint, str):
                raise CorpusError(f"attribute.class must be a string or null, got {class_hint!r}", line=line, sample_id=sample_id)
            attributes.append(ObjectAttribute(value=value, class_hint=class_hint))
        objects.append(SceneObject(oid=oid, name=name, bbox=bbox, attributes=tuple(attributes)))

    relations = []
    raw_relations = raw.get("relations", [])
    if not isinstance(raw_relations, list):
        raise CorpusError("relations must be a list", line=line, sample_id=sample_id)
    for raw_rel in raw_relations:
        if not isinstance(raw_rel, dict):
            raise CorpusError(f"relation entry must be an object, got {raw_rel!r}", line=line, sample_id=sample_id)
        subj = _as_nonempty_str(raw_rel.get("subj"), "relation.subj", line=line, sample_id=sample_id)
        pred = _as_nonempty_str(raw_rel.get("pred"), "relation.pred", line=line, sample_id=sample_id)
        obj = _as_nonempty_str(raw_rel.get("obj"), "relation.obj", line=line, sample_id=sample_id)
        relations.append(RelationTriple(subj=subj, pred=pred, obj=obj))

    extra = tuple(
        (key, json.dumps(raw[key], sort_keys=True, ensure_ascii=False))
        for key in sorted(raw)
        if key not in _KNOWN_KEYS
    )
    return CanonicalSample(
        id=sample_id,
        image=image,
        objects=tuple(objects),
        relations=tuple(relations),
        extra=extra,
    )


def parse_canonical(stream: str | IO[str] | Iterable[str]) -> list[CanonicalSample]:
    """Parse canonical JSONL into samples, preserving input order.

    Raises CorpusError with the 1-based line number for malformed JSON and
    with the offending field name and sample id for schema violations.
    """
    samples = []
    for lineno, line in enumerate(_iter_lines(stream), start=1):
        if not line.strip():
            continue
        try:
            raw = json.loads(line)
        except json.JSONDecodeError as exc:
            raise CorpusError(f"malformed JSON ({exc.msg})", line=lineno) from exc
        if not isinstance(raw, dict):
            raise CorpusError(f"expected a JSON object, got {type(raw).__name__}", line=lineno)
        samples.append(_parse_sample(raw, line=lineno))
    return samples


def sample_to_dict(sample: CanonicalSample) -> dict:
    doc = {
        "id": sample.id,
        "image": {"uri": sample.image.uri, "width": sample.image.width, "height": sample.image.height},
        "objects": [
            {
                "oid": obj.oid,
                "name": obj.name,
                "bbox": [obj.bbox.x, obj.bbox.y, obj.bbox.w, obj.bbox.h],
                "attributes": [{"value": a.value, "class": a.class_hint} for a in obj.attributes],
            }
            for obj in sample.objects
        ],
        "relations": [{"subj": r.subj, "pred": r.pred, "obj": r.obj} for r in sample.relations],
    }
    for key, encoded in sample.extra:
        doc[key] = json.loads(encoded)
    return doc


def serialize_canonical(samples: Iterable[CanonicalSample]) -> str:
    """Serialize samples to canonical JSONL (LF terminated, one per line)."""
    lines = [json.dumps(sample_to_dict(s), ensure_ascii=False) for s in samples]
    return "".join(line + "\n" for line in lines)


def adapt_vg_region_graph(stream: str | IO[str]) -> list[CanonicalSample]:
    """Convert VG-style region-graph JSON into canonical samples.

    Expected layout (see the adapter guide in the README): a JSON array of
    image entries, or a single entry object, where each entry carries
    ``image_id``, ``width``, ``height``, an ``objects`` list with
    ``object_id``/``names``/``x``/``y``/``w``/``h`` and optional string
    ``attributes``, and a ``relationships`` list with ``predicate``,
    ``subject_id`` and ``object_id``.

    Attribute strings are stored with an empty class hint; classification
    happens in the taxonomy stage.
    """
    try:
        doc = json.loads(_read_text(stream))
    except json.JSONDecodeError as exc:
        raise CorpusError(f"malformed VG JSON ({exc.msg})") from exc
    entries = doc if isinstance(doc, list) else [doc]

    samples = []
    for index, entry in enumerate(entries):
        if not isinstance(entry, dict):
            raise CorpusError(f"VG entry {index} must be an object, got {type(entry).__name__}")
        image_id = entry.get("image_id", entry.get("id"))
        if image_id is None:
            raise CorpusError(f"VG entry {index} has no image_id")
        sample_id = f"vg-{image_id}"
        width = entry.get("width")
        height = entry.get("height")
        if width is None or height is None:
            raise CorpusError("missing image dimensions (width/height)", sample_id=sample_id)
        uri = entry.get("url") or entry.get("image_url") or f"vg/{image_id}.jpg"

        objects = []
        oids = set()
        for raw_obj in entry.get("objects", []) or []:
            object_id = raw_obj.get("object_id", raw_obj.get("id"))
            if object_id is None:
                raise CorpusError("VG object has no object_id", sample_id=sample_id)
            oid = str(object_id)
            names = raw_obj.get("names") or ([raw_obj["name"]] if raw_obj.get("name") else [])
            name = str(names[0]).strip() if names else ""
            if not name:
                raise CorpusError(f"VG object {oid} has no name", sample_id=sample_id)
            try:
                bbox = BBox(
                    x=float(raw_obj["x"]),
                    y=float(raw_obj["y"]),
                    w=float(raw_obj["w"]),
                    h=float(raw_obj["h"]),
                )
            except (KeyError, TypeError, ValueError) as exc:
                raise CorpusError(f"VG object {oid} has invalid geometry: {exc}", sample_id=sample_id) from exc
            attributes = tuple(
                ObjectAttribute(value=str(a), class_hint=None)
                for a in raw_obj.get("attributes", []) or []
                if str(a).strip()
            )
            objects.append(SceneObject(oid=oid, name=name, bbox=bbox, attributes=attributes))
            oids.add(oid)

        relations = []
        for raw_rel in entry.get("relationships", []) or []:
            pred = str(raw_rel.get("predicate", "")).strip()
            if not pred:
                raise CorpusError("VG relationship has empty predicate", sample_id=sample_id)
            subj = str(raw_rel.get("subject_id"))
            obj = str(raw_rel.get("object_id"))
            for endpoint in (subj, obj):
                if endpoint not in oids:
                    raise CorpusError(
                        f"relationship references unknown object id {endpoint}", sample_id=sample_id
                    )
            relations.append(RelationTriple(subj=subj, pred=pred, obj=obj))

        samples.append(
            CanonicalSample(
                id=sample_id,
                image=ImageMeta(uri=str(uri), width=int(width), height=int(height)),
                objects=tuple(objects),
                relations=tuple(relations),
            )
        )
    return samples


@dataclass
class ValidationReport:
    samples: int = 0
    objects: int = 0
    relations: int = 0
    attribute_values: int = 0
    rejected: list[tuple[str, str]] = field(default_factory=list)
    accepted_indices: list[int] = field(default_factory=list)

    @property
    def accepted(self) -> int:
        return self.samples - len(self.rejected)

    def to_dict(self) -> dict:
        return {
            "samples": self.samples,
            "objects": self.objects,
            "relations": self.relations,
            "attribute_values": self.attribute_values,
            "accepted": self.accepted,
            "rejected": [{"id": sid, "reason": reason} for sid, reason in self.rejected],
        }


def sample_violations(sample: CanonicalSample) -> list[str]:
    """Corpus-level invariant violations for one sample (empty list if clean)."""
    reasons = []
    oids = [obj.oid for obj in sample.objects]
    if len(set(oids)) != len(oids):
        reasons.append("duplicate oid")
    for obj in sample.objects:
        b = obj.bbox
        if b.x < 0 or b.y < 0 or b.x + b.w > sample.image.width or b.y + b.h > sample.image.height:
            reasons.append("bbox out of bounds")
            break
    known = set(oids)
    for rel in sample.relations:
        if rel.subj not in known or rel.obj not in known:
            reasons.append("dangling relation endpoint")
            break
    return reasons


def validate_corpus(samples: list[CanonicalSample]) -> ValidationReport:
    """Classify every sample as accepted or rejected; rejections are data, not errors."""
    report = ValidationReport(samples=len(samples))
    seen_ids = set()
    for index, sample in enumerate(samples):
        report.objects += len(sample.objects)
        report.relations += len(sample.relations)
        report.attribute_values += sum(len(obj.attributes) for obj in sample.objects)
        reasons = sample_violations(sample)
        if sample.id in seen_ids:
            reasons.append("duplicate sample id")
        seen_ids.add(sample.id)
        if reasons:
            report.rejected.append((sample.id, "; ".join(reasons)))
        else:
            report.accepted_indices.append(index)
    return report


def accepted_samples(samples: list[CanonicalSample], report: ValidationReport) -> list[CanonicalSample]:
    return [samples[i] for i in report.accepted_indices]
