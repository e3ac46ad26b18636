"""Report emission: canonical JSON, paper-layout CSV tables, Markdown, radar SVG.

The JSON document is the source of truth; every number printed into CSV,
Markdown, or the SVG also lives there at full precision. All emitters are
pure functions of the document, so identical documents yield identical
bytes. Percentages print with two decimals.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

from .metrics import BucketKey, GapStatistic, ModelSummary
from .taxonomy import Aspect, AttributeClass, LocationBucket, RelationKind, SizeBucket


@dataclass
class RunMeta:
    config_hash: str = ""
    seed: int = 0
    corpus_ids: list[str] = field(default_factory=list)
    scorer_ids: list[str] = field(default_factory=list)
    timestamp: str = ""
    notes: list[str] = field(default_factory=list)


@dataclass
class ReportDocument:
    meta: RunMeta
    models: list[ModelSummary]
    group_averages: dict[str, dict[BucketKey, float]] | None = None
    generation: dict | None = None
    warnings: list[str] = field(default_factory=list)


def build_report_document(
    meta: RunMeta,
    models: list[ModelSummary],
    group_averages: dict[str, dict[BucketKey, float]] | None = None,
    generation: dict | None = None,
) -> ReportDocument:
    """Assemble the document; models without all three aspect averages get a
    warning entry (they will be omitted from the radar chart)."""
    warnings = []
    for summary in sorted(models, key=lambda s: s.model_id):
        missing = [
            aspect.value for aspect in Aspect if summary.aspect_average(aspect) is None
        ]
        if missing:
            warnings.append(
                f"model {summary.model_id!r} omitted from radar chart: "
                f"missing aspect averages ({', '.join(missing)})"
            )
    return ReportDocument(
        meta=meta,
        models=sorted(models, key=lambda s: s.model_id),
        group_averages=group_averages,
        generation=generation,
        warnings=warnings,
    )


def _bucket_to_dict(bucket) -> dict:
    doc = bucket.key.to_dict()
    doc["n"] = bucket.n
    doc["wins"] = bucket.wins
    doc["acc_pct"] = bucket.acc_pct
    return doc


def doc_to_dict(doc: ReportDocument) -> dict:
    models = []
    for summary in doc.models:
        models.append(
            {
                "model_id": summary.model_id,
                "aspects": {
                    "object": summary.object_avg,
                    "attribute": summary.attribute_avg,
                    "relation": summary.relation_avg,
                },
                "buckets": [_bucket_to_dict(b) for b in summary.buckets],
                "gaps": [
                    {"label": g.label, "lhs": g.lhs, "rhs": g.rhs, "gap": g.gap}
                    for g in summary.gaps
                ],
                "gap_notes": list(summary.gap_notes),
            }
        )
    groups = None
    if doc.group_averages is not None:
        groups = {
            group: [
                {**key.to_dict(), "acc_pct": acc * 100.0}
                for key, acc in sorted(avg.items(), key=lambda kv: kv[0].label())
            ]
            for group, avg in doc.group_averages.items()
        }
    return {
        "meta": {
            "config_hash": doc.meta.config_hash,
            "seed": doc.meta.seed,
            "corpus_ids": list(doc.meta.corpus_ids),
            "scorer_ids": list(doc.meta.scorer_ids),
            "timestamp": doc.meta.timestamp,
            "notes": list(doc.meta.notes),
        },
        "models": models,
        "groups": groups,
        "generation": doc.generation,
        "warnings": list(doc.warnings),
    }


def emit_json(doc: ReportDocument) -> bytes:
    """Canonical JSON: sorted keys, LF endings, shortest round-trip floats."""
    payload = json.dumps(doc_to_dict(doc), sort_keys=True, indent=2, ensure_ascii=False)
    return (payload + "\n").encode("utf-8")


def _fmt(value: float | None) -> str:
    return f"{value:.2f}" if value is not None else ""


_OBJECT_COLUMNS = [
    ("Large", BucketKey(aspect=Aspect.OBJECT, size=SizeBucket.LARGE)),
    ("Medium", BucketKey(aspect=Aspect.OBJECT, size=SizeBucket.MEDIUM)),
    ("Small", BucketKey(aspect=Aspect.OBJECT, size=SizeBucket.SMALL)),
    ("Center", BucketKey(aspect=Aspect.OBJECT, location=LocationBucket.CENTER)),
    ("Mid", BucketKey(aspect=Aspect.OBJECT, location=LocationBucket.MID)),
    ("Margin", BucketKey(aspect=Aspect.OBJECT, location=LocationBucket.MARGIN)),
]

_RELATION_COLUMNS = [
    ("Action", BucketKey(aspect=Aspect.RELATION, rel_kind=RelationKind.ACTION)),
    ("Spatial", BucketKey(aspect=Aspect.RELATION, rel_kind=RelationKind.SPATIAL)),
]

_ATTRIBUTE_COLUMNS = [
    ("Color", BucketKey(aspect=Aspect.ATTRIBUTE, attr_class=AttributeClass.COLOR)),
    ("Material", BucketKey(aspect=Aspect.ATTRIBUTE, attr_class=AttributeClass.MATERIAL)),
    ("Size", BucketKey(aspect=Aspect.ATTRIBUTE, attr_class=AttributeClass.SIZE)),
    ("State", BucketKey(aspect=Aspect.ATTRIBUTE, attr_class=AttributeClass.STATE)),
    ("Action", BucketKey(aspect=Aspect.ATTRIBUTE, attr_class=AttributeClass.ACTION)),
]


def _bucket_pct(summary: ModelSummary, key: BucketKey) -> float | None:
    bucket = summary.bucket(key)
    return bucket.acc_pct if bucket is not None else None


def _csv_bytes(header: list[str], rows: list[list[str]]) -> bytes:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return out.getvalue().encode("utf-8")


def emit_csv_tables(doc: ReportDocument) -> dict[str, bytes]:
    """Four tables mirroring the paper's layouts, keyed overall/object/relation/attribute."""
    overall_rows = []
    object_rows = []
    relation_rows = []
    attribute_rows = []
    for summary in doc.models:
        overall_rows.append(
            [summary.model_id, _fmt(summary.object_avg), _fmt(summary.relation_avg), _fmt(summary.attribute_avg)]
        )
        object_rows.append(
            [summary.model_id, _fmt(summary.object_avg)]
            + [_fmt(_bucket_pct(summary, key)) for _, key in _OBJECT_COLUMNS]
        )
        relation_rows.append(
            [summary.model_id, _fmt(summary.relation_avg)]
            + [_fmt(_bucket_pct(summary, key)) for _, key in _RELATION_COLUMNS]
        )
        attribute_rows.append(
            [summary.model_id, _fmt(summary.attribute_avg)]
            + [_fmt(_bucket_pct(summary, key)) for _, key in _ATTRIBUTE_COLUMNS]
        )
    return {
        "overall": _csv_bytes(["Model", "Object", "Relation", "Attribute"], overall_rows),
        "object": _csv_bytes(
            ["Model", "Average"] + [name for name, _ in _OBJECT_COLUMNS], object_rows
        ),
        "relation": _csv_bytes(
            ["Model", "Average"] + [name for name, _ in _RELATION_COLUMNS], relation_rows
        ),
        "attribute": _csv_bytes(
            ["Model", "Average"] + [name for name, _ in _ATTRIBUTE_COLUMNS], attribute_rows
        ),
    }


_RADAR_SIZE = 420.0
_RADAR_CENTER = _RADAR_SIZE / 2.0
_RADAR_RADIUS = 150.0
_RADAR_AXES = (("Object", -90.0), ("Attribute", 30.0), ("Relation", 150.0))
_RADAR_PALETTE = (
    "#1f77b4",
    "#ff7f0e",
    "#2ca02c",
    "#d62728",
    "#9467bd",
    "#8c564b",
    "#e377c2",
    "#7f7f7f",
)


def _radar_point(angle_deg: float, fraction: float) -> tuple[float, float]:
    angle = math.radians(angle_deg)
    return (
        _RADAR_CENTER + _RADAR_RADIUS * fraction * math.cos(angle),
        _RADAR_CENTER + _RADAR_RADIUS * fraction * math.sin(angle),
    )


def emit_radar_svg(doc: ReportDocument) -> bytes:
    """One polygon per model over the Object/Attribute/Relation axes (0-100).

    Models without all three aspect averages are skipped; the corresponding
    warnings live in the JSON document.
    """
    lines = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {_RADAR_SIZE:.0f} {_RADAR_SIZE:.0f}">',
        f'<rect width="{_RADAR_SIZE:.0f}" height="{_RADAR_SIZE:.0f}" fill="white"/>',
    ]
    for ring in (0.25, 0.5, 0.75, 1.0):
        points = " ".join(
            f"{x:.2f},{y:.2f}" for x, y in (_radar_point(a, ring) for _, a in _RADAR_AXES)
        )
        lines.append(f'<polygon points="{points}" fill="none" stroke="#cccccc" stroke-width="1"/>')
    for label, angle in _RADAR_AXES:
        x, y = _radar_point(angle, 1.0)
        lx, ly = _radar_point(angle, 1.18)
        lines.append(
            f'<line x1="{_RADAR_CENTER:.2f}" y1="{_RADAR_CENTER:.2f}" x2="{x:.2f}" y2="{y:.2f}" '
            'stroke="#888888" stroke-width="1"/>'
        )
        lines.append(
            f'<text x="{lx:.2f}" y="{ly:.2f}" font-family="sans-serif" font-size="14" '
            f'text-anchor="middle">{label}</text>'
        )
    plotted = 0
    for summary in doc.models:  # doc.models is sorted by model id
        values = (summary.object_avg, summary.attribute_avg, summary.relation_avg)
        if any(v is None for v in values):
            continue
        color = _RADAR_PALETTE[plotted % len(_RADAR_PALETTE)]
        points = " ".join(
            f"{x:.2f},{y:.2f}"
            for x, y in (
                _radar_point(angle, min(max(value / 100.0, 0.0), 1.0))
                for (_, angle), value in zip(_RADAR_AXES, values)
            )
        )
        lines.append(
            f'<polygon points="{points}" fill="{color}" fill-opacity="0.15" '
            f'stroke="{color}" stroke-width="2"/>'
        )
        lines.append(
            f'<text x="16" y="{20 + plotted * 18:.0f}" font-family="sans-serif" font-size="13" '
            f'fill="{color}">{summary.model_id}</text>'
        )
        plotted += 1
    lines.append("</svg>")
    return ("\n".join(lines) + "\n").encode("utf-8")


def _md_table(header: list[str], rows: list[list[str]]) -> list[str]:
    lines = ["| " + " | ".join(header) + " |", "|" + "|".join("---" for _ in header) + "|"]
    for row in rows:
        lines.append("| " + " | ".join(cell or "-" for cell in row) + " |")
    return lines


def emit_markdown(doc: ReportDocument) -> bytes:
    """Human-readable summary: per-aspect tables plus gap highlights."""
    lines = ["# Probe evaluation summary", ""]
    lines.append(f"- config hash: `{doc.meta.config_hash}`")
    lines.append(f"- seed: {doc.meta.seed}")
    if doc.meta.corpus_ids:
        lines.append(f"- corpora: {', '.join(doc.meta.corpus_ids)}")
    if doc.meta.scorer_ids:
        lines.append(f"- scorers: {', '.join(doc.meta.scorer_ids)}")
    lines.append("")
    if doc.models:
        lines.append("## Overall accuracy (%)")
        lines.append("")
        lines.extend(
            _md_table(
                ["Model", "Object", "Relation", "Attribute"],
                [
                    [s.model_id, _fmt(s.object_avg), _fmt(s.relation_avg), _fmt(s.attribute_avg)]
                    for s in doc.models
                ],
            )
        )
        lines.append("")
        lines.append("## Object breakdown (%)")
        lines.append("")
        lines.extend(
            _md_table(
                ["Model", "Average"] + [name for name, _ in _OBJECT_COLUMNS],
                [
                    [s.model_id, _fmt(s.object_avg)]
                    + [_fmt(_bucket_pct(s, key)) for _, key in _OBJECT_COLUMNS]
                    for s in doc.models
                ],
            )
        )
        lines.append("")
        lines.append("## Relation breakdown (%)")
        lines.append("")
        lines.extend(
            _md_table(
                ["Model", "Average"] + [name for name, _ in _RELATION_COLUMNS],
                [
                    [s.model_id, _fmt(s.relation_avg)]
                    + [_fmt(_bucket_pct(s, key)) for _, key in _RELATION_COLUMNS]
                    for s in doc.models
                ],
            )
        )
        lines.append("")
        lines.append("## Attribute breakdown (%)")
        lines.append("")
        lines.extend(
            _md_table(
                ["Model", "Average"] + [name for name, _ in _ATTRIBUTE_COLUMNS],
                [
                    [s.model_id, _fmt(s.attribute_avg)]
                    + [_fmt(_bucket_pct(s, key)) for _, key in _ATTRIBUTE_COLUMNS]
                    for s in doc.models
                ],
            )
        )
        lines.append("")
        lines.append("## Gap statistics (percentage points)")
        lines.append("")
        for label in ("center_vs_margin", "large_vs_small"):
            entries = []
            for summary in doc.models:
                for gap in summary.gaps:
                    if gap.label == label:
                        entries.append((summary.model_id, gap))
            entries.sort(key=lambda item: item[1].gap, reverse=True)
            if not entries:
                continue
            lines.append(f"### {label}")
            lines.append("")
            lines.extend(
                _md_table(
                    ["Model", "Higher", "Lower", "Gap"],
                    [
                        [model_id, _fmt(g.lhs), _fmt(g.rhs), _fmt(g.gap)]
                        for model_id, g in entries
                    ],
                )
            )
            lines.append("")
    if doc.group_averages:
        lines.append("## Group averages (%)")
        lines.append("")
        for group in sorted(doc.group_averages):
            lines.append(f"### {group}")
            lines.append("")
            rows = [
                [key.label(), _fmt(acc * 100.0)]
                for key, acc in sorted(doc.group_averages[group].items(), key=lambda kv: kv[0].label())
            ]
            lines.extend(_md_table(["Bucket", "Accuracy"], rows))
            lines.append("")
    if doc.warnings:
        lines.append("## Warnings")
        lines.append("")
        for warning in doc.warnings:
            lines.append(f"- {warning}")
        lines.append("")
    return ("\n".join(lines).rstrip("\n") + "\n").encode("utf-8")


def write_report(doc: ReportDocument, outdir: str | Path) -> None:
    """Write the standard directory layout: report.json, tables/*.csv,
    radar.svg, summary.md."""
    outdir = Path(outdir)
    (outdir / "tables").mkdir(parents=True, exist_ok=True)
    (outdir / "report.json").write_bytes(emit_json(doc))
    for name, payload in emit_csv_tables(doc).items():
        (outdir / "tables" / f"{name}.csv").write_bytes(payload)
    (outdir / "radar.svg").write_bytes(emit_radar_svg(doc))
    (outdir / "summary.md").write_bytes(emit_markdown(doc))
