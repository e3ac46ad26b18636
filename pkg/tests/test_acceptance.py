"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Tolerances are pinned here, not calibrated later: gap statistics and group
averages reproduce the reference table within +/-0.005 percentage points;
bucketing and metric equivalence are exact; the analytic end-to-end
accuracies are exact (1.0 and 0.75); determinism checks compare bytes.
"""

import contextlib
import json
import math
import random
import sys
import time
import xml.etree.ElementTree as ET
from pathlib import Path

import pytest

from vlprobe.cli import main
from vlprobe.config import packaged_data_path
from vlprobe.embeddings import cosine_similarity, load_vector_file
from vlprobe.ingestion import BBox, ImageMeta, parse_canonical
from vlprobe.metrics import (
    BucketAccuracy,
    BucketKey,
    aggregate_by_bucket,
    gap_statistics,
    group_average,
    pairwise_accuracy,
)
from vlprobe.negatives import (
    GenerationPolicy,
    ProbePair,
    bbox_union,
    build_candidate_pools,
    build_probe_set,
)
from vlprobe.scoring import (
    Batching,
    OracleEndpoint,
    ScorerError,
    SubprocessEndpoint,
    score_probe_set,
)
from vlprobe.taxonomy import (
    Aspect,
    AspectPath,
    AttributeClass,
    LocationBucket,
    RelationKind,
    SizeBucket,
    SizeThresholds,
    location_bucket,
    size_bucket,
    tag_sample,
)

from test_metrics import GROUPS, OBJECT_ROWS, buckets_from_pcts, random_pair, summary_from_object_row
from test_report import fixture_document
from vlprobe.report import emit_csv_tables, emit_radar_svg

HELPERS = Path(__file__).parent / "helpers"


@contextlib.contextmanager
def criterion(number: int, description: str):
    try:
        yield
    except BaseException:
        print(f"[criterion {number}] FAIL  {description}")
        raise
    print(f"[criterion {number}] PASS  {description}")


# --- criterion 1: bucketing oracle equivalence ------------------------------


def brute_force_location(width, height, x, y, w, h):
    half_diag = ((width * width + height * height) ** 0.5) / 2.0
    cx = x + w / 2.0
    cy = y + h / 2.0
    dx = cx - width / 2.0
    dy = cy - height / 2.0
    ratio = ((dx * dx + dy * dy) ** 0.5) / half_diag
    if ratio <= 1.0 / 3.0:
        return "center"
    if ratio <= 2.0 / 3.0:
        return "mid"
    return "margin"


def brute_force_size(w, h, small_max=1024.0, medium_max=9216.0):
    area = w * h
    if area <= small_max:
        return "small"
    if area <= medium_max:
        return "medium"
    return "large"


def boundary_location_cases():
    """Boxes whose computed distance ratio is exactly the float nearest 1/3
    (and 2/3). The image is 6x8 so the half-diagonal is exactly 5; the box
    center sits on the horizontal axis so the distance is exact."""
    cases = []
    for target in (1.0 / 3.0, 2.0 / 3.0):
        base = 5.0 * target
        found = None
        for ulps in range(-3, 4):
            d = base
            for _ in range(abs(ulps)):
                d = math.nextafter(d, math.inf if ulps > 0 else -math.inf)
            if (d / 5.0) == target:
                found = d
                break
        assert found is not None, "no float distance reproduces the boundary ratio"
        # center at (3 + d, 4); box of size 2x2 may poke outside: geometry only
        cases.append((6, 8, 3.0 + found - 1.0, 4.0 - 1.0, 2.0, 2.0))
    return cases


def test_criterion_1_bucketing_oracle_equivalence():
    with criterion(1, "bucketing matches brute-force oracle on 1000 random + boundary cases"):
        start = time.perf_counter()
        rng = random.Random(1234)
        cases = []
        for _ in range(1000):
            width = rng.randint(1, 2000)
            height = rng.randint(1, 2000)
            if rng.random() < 0.5:
                w = rng.randint(1, width)
                h = rng.randint(1, height)
                x = rng.randint(0, width - w)
                y = rng.randint(0, height - h)
            else:
                w = rng.uniform(0.5, width)
                h = rng.uniform(0.5, height)
                x = rng.uniform(0, width - w)
                y = rng.uniform(0, height - h)
            cases.append((width, height, x, y, w, h))
        cases.extend(boundary_location_cases())
        cases.append((100, 100, 0.0, 0.0, 32.0, 32.0))   # area exactly 1024
        cases.append((1000, 1000, 0.0, 0.0, 96.0, 96.0))  # area exactly 9216
        cases.append((1000, 1000, 0.0, 0.0, 9217.0, 1.0))
        thresholds = SizeThresholds()
        for width, height, x, y, w, h in cases:
            image = ImageMeta("u", width, height)
            bbox = BBox(x, y, w, h)
            assert location_bucket(image, bbox).value == brute_force_location(width, height, x, y, w, h)
            assert size_bucket(bbox, thresholds).value == brute_force_size(w, h)
        # boundary sanity: the engineered cases really sit on the split points
        b1, b2 = boundary_location_cases()
        assert location_bucket(ImageMeta("u", b1[0], b1[1]), BBox(*b1[2:])) is LocationBucket.CENTER
        assert location_bucket(ImageMeta("u", b2[0], b2[1]), BBox(*b2[2:])) is LocationBucket.MID
        assert size_bucket(BBox(0, 0, 32, 32), thresholds) is SizeBucket.SMALL
        assert size_bucket(BBox(0, 0, 96, 96), thresholds) is SizeBucket.MEDIUM
        elapsed = time.perf_counter() - start
        assert elapsed < 1.0, f"bucketing equivalence took {elapsed:.3f}s"


# --- criterion 2: metric equivalence -----------------------------------------


def test_criterion_2_metric_equivalence():
    with criterion(2, "aggregate_by_bucket matches a single-pass counting oracle on 1000 pairs"):
        start = time.perf_counter()
        rng = random.Random(99)
        pairs = [random_pair(rng, i) for i in range(1000)]
        ties = sum(1 for p in pairs if p.pos_score == p.neg_score)
        assert ties > 0, "fixture must include ties"

        counts = {}
        for pair in pairs:
            win = pair.pos_score > pair.neg_score  # ties lose
            path = pair.path
            keys = [(path.aspect, None, None, None, None)]
            if path.size:
                keys.append((path.aspect, path.size, None, None, None))
            if path.location:
                keys.append((path.aspect, None, path.location, None, None))
            if path.attr_class:
                keys.append((path.aspect, None, None, path.attr_class, None))
            if path.rel_kind:
                keys.append((path.aspect, None, None, None, path.rel_kind))
            for key in keys:
                slot = counts.setdefault(key, [0, 0])
                slot[0] += 1
                slot[1] += int(win)

        buckets = aggregate_by_bucket(pairs)
        assert len(buckets) == len(counts)
        for bucket in buckets:
            key = (
                bucket.key.aspect,
                bucket.key.size,
                bucket.key.location,
                bucket.key.attr_class,
                bucket.key.rel_kind,
            )
            assert [bucket.n, bucket.wins] == counts[key]
            assert 0.0 <= bucket.acc <= 1.0

        all_tied = [p for p in pairs if p.pos_score == p.neg_score]
        assert pairwise_accuracy(all_tied).acc == 0.0
        elapsed = time.perf_counter() - start
        assert elapsed < 1.0, f"metric equivalence took {elapsed:.3f}s"


# --- criterion 3: gap arithmetic reproduces the reference table ---------------


def test_criterion_3_gap_arithmetic():
    with criterion(3, "gap statistics and group averages reproduce the reference table (+/-0.005)"):
        table = {
            "E2E": ((85.50, 82.68, 86.35, 78.00), (2.82, 8.35)),
            "Region": ((86.09, 79.28, 86.20, 78.66), (6.81, 7.54)),
            "CLIP": ((88.53, 76.66, 88.83, 75.70), (11.87, 13.13)),
        }
        for (center, margin, large, small), (loc_gap, size_gap) in table.values():
            stats, notes = gap_statistics(buckets_from_pcts(center, margin, large, small))
            assert notes == []
            by_label = {s.label: s for s in stats}
            assert by_label["center_vs_margin"].gap == pytest.approx(loc_gap, abs=0.005)
            assert by_label["large_vs_small"].gap == pytest.approx(size_gap, abs=0.005)

        summaries = [summary_from_object_row(mid, *row) for mid, row in OBJECT_ROWS.items()]
        averages = group_average(summaries, GROUPS)
        center_key = BucketKey(aspect=Aspect.OBJECT, location=LocationBucket.CENTER)
        assert averages["E2E"][center_key] * 100 == pytest.approx(85.50, abs=0.005)
        assert averages["Region"][center_key] * 100 == pytest.approx(86.09, abs=0.005)


# --- criterion 4: end-to-end determinism --------------------------------------


def run_config(tmp_path, name, seed=42):
    config = {
        "corpus": [packaged_data_path("synthetic_corpus.jsonl")],
        "adapter": "canonical",
        "seed": seed,
        "vector_file": packaged_data_path("mini_vectors.txt"),
        "scorer": {
            "kind": "oracle",
            "captions": packaged_data_path("synthetic_captions.json"),
            "model_id": "oracle",
        },
        "out_dir": str(tmp_path / name),
    }
    path = tmp_path / f"{name}.json"
    path.write_text(json.dumps(config), encoding="utf-8")
    return path


def test_criterion_4_end_to_end_determinism(tmp_path):
    with criterion(4, "run on the shipped 50-sample corpus is byte-deterministic across jobs"):
        start = time.perf_counter()
        outputs = []
        for name, jobs in (("r1", 1), ("r2", 1), ("r8", 8)):
            config = run_config(tmp_path, name)
            assert main(["run", "--config", str(config), "--jobs", str(jobs)]) == 0
            out = tmp_path / name
            probes = (out / "probes.jsonl").read_bytes()
            report_lines = [
                line
                for line in (out / "report" / "report.json").read_text(encoding="utf-8").splitlines()
                if '"timestamp"' not in line
            ]
            outputs.append((probes, report_lines))
        assert outputs[0] == outputs[1] == outputs[2]
        elapsed = time.perf_counter() - start
        assert elapsed < 10.0, f"determinism check took {elapsed:.3f}s"


# --- criterion 5: analytic end-to-end accuracy ---------------------------------


def analytic_pairs():
    """20 pairs whose references equal the positive text: the oracle gives the
    positive 1.0 and the negative 2/3 (one token replaced out of three)."""
    pairs = []
    captions = {}
    for i in range(20):
        uri = f"img/fix{i}.png"
        positive = f"w{i} x{i} y{i}"
        negative = f"w{i} x{i} z{i}"
        captions[uri] = positive
        pairs.append(
            ProbePair(
                pair_id=f"fx{i}",
                sample_id=f"fx{i}",
                path=AspectPath(
                    aspect=Aspect.OBJECT, size=SizeBucket.SMALL, location=LocationBucket.CENTER
                ),
                image=ImageMeta(uri=uri, width=10, height=10),
                crop=None,
                positive_text=positive,
                negative_text=negative,
                replaced_original=f"y{i}",
                replacement=f"z{i}",
                similarity=0.0,
            )
        )
    return pairs, captions


def test_criterion_5_analytic_accuracy():
    with criterion(5, "oracle-forced outcomes give acc exactly 1.0, then exactly 0.75"):
        pairs, captions = analytic_pairs()
        scored = score_probe_set(pairs, OracleEndpoint(dict(captions)))
        assert all(s.pos_score == 1.0 and s.neg_score == pytest.approx(2 / 3) for s in scored)
        assert pairwise_accuracy(scored).acc == 1.0

        corrupted = []
        for index, pair in enumerate(pairs):
            if index < 5:
                # positive now shares no token with the reference: scores 0.0
                corrupted.append(
                    ProbePair(
                        pair_id=pair.pair_id,
                        sample_id=pair.sample_id,
                        path=pair.path,
                        image=pair.image,
                        crop=pair.crop,
                        positive_text="q q q",
                        negative_text=pair.negative_text,
                        replaced_original=pair.replaced_original,
                        replacement=pair.replacement,
                        similarity=pair.similarity,
                    )
                )
            else:
                corrupted.append(pair)
        scored = score_probe_set(corrupted, OracleEndpoint(dict(captions)))
        assert pairwise_accuracy(scored).acc == 0.75


# --- criterion 6: negative-generation constraints ------------------------------


def test_criterion_6_negative_generation_constraints():
    with criterion(6, "post-hoc audit of every emitted pair finds zero violations"):
        index = load_vector_file(packaged_data_path("mini_vectors.txt"))
        with open(packaged_data_path("synthetic_corpus.jsonl"), encoding="utf-8") as fh:
            corpus = parse_canonical(fh)
        with open(packaged_data_path("spatial_lexicon.json"), encoding="utf-8") as fh:
            lexicon = frozenset(json.load(fh))
        with open(packaged_data_path("attribute_prototypes.json"), encoding="utf-8") as fh:
            prototypes = {AttributeClass(k): v for k, v in json.load(fh).items()}
        policy = GenerationPolicy(seed=42, crop_variant=True, local_mode="union")
        thresholds = SizeThresholds()
        pairs, report = build_probe_set(
            corpus, policy, index, thresholds, lexicon, prototypes
        )
        assert pairs, "fixture corpus must generate pairs"
        assert report.emitted == len(pairs)

        tagged = {s.id: tag_sample(s, thresholds, lexicon, prototypes, index) for s in corpus}
        pools = build_candidate_pools(corpus, tagged)
        violations = []
        for pair in pairs:
            if pair.positive_text == pair.negative_text:
                violations.append((pair.pair_id, "texts equal"))
            sim = cosine_similarity(index.embed(pair.replaced_original), index.embed(pair.replacement))
            if sim > policy.max_similarity + 1e-12:
                violations.append((pair.pair_id, f"similarity {sim} above bound"))
            if pair.replaced_original.lower() == pair.replacement.lower():
                violations.append((pair.pair_id, "replacement equals original"))
            if not single_span(pair.positive_text, pair.negative_text):
                violations.append((pair.pair_id, "not a single-span substitution"))
            if pair.path.aspect is Aspect.OBJECT:
                pool = pools.objects
            elif pair.path.aspect is Aspect.ATTRIBUTE:
                pool = pools.attributes[pair.path.attr_class]
            else:
                pool = pools.predicates[pair.path.rel_kind]
            if pair.replacement not in pool:
                violations.append((pair.pair_id, "replacement outside same-class pool"))
            if (pair.crop is not None) != pair.pair_id.endswith("-local-union"):
                violations.append((pair.pair_id, "crop presence inconsistent with variant"))
        assert violations == []


def single_span(pos: str, neg: str) -> bool:
    p, n = pos.split(), neg.split()
    i = 0
    while i < min(len(p), len(n)) and p[i] == n[i]:
        i += 1
    j = 0
    while j < min(len(p), len(n)) - i and p[len(p) - 1 - j] == n[len(n) - 1 - j]:
        j += 1
    return bool(p[i : len(p) - j] or n[i : len(n) - j])


# --- criterion 7: local-variant geometry ---------------------------------------


def test_criterion_7_local_variant_geometry():
    with criterion(7, "bbox union properties over 1000 pairs; variants keep texts, add crops"):
        rng = random.Random(777)
        for _ in range(1000):
            a = BBox(rng.randint(0, 500), rng.randint(0, 500), rng.randint(1, 300), rng.randint(1, 300))
            b = BBox(rng.randint(0, 500), rng.randint(0, 500), rng.randint(1, 300), rng.randint(1, 300))
            u = bbox_union(a, b)
            assert bbox_union(a, a) == a
            assert bbox_union(u, a) == u
            assert bbox_union(u, b) == u
            assert bbox_union(a, b) == bbox_union(b, a)
            for box in (a, b):
                assert u.x <= box.x and u.y <= box.y
                assert u.x + u.w >= box.x + box.w
                assert u.y + u.h >= box.y + box.h

        index = load_vector_file(packaged_data_path("mini_vectors.txt"))
        with open(packaged_data_path("synthetic_corpus.jsonl"), encoding="utf-8") as fh:
            corpus = parse_canonical(fh)
        with open(packaged_data_path("spatial_lexicon.json"), encoding="utf-8") as fh:
            lexicon = frozenset(json.load(fh))
        with open(packaged_data_path("attribute_prototypes.json"), encoding="utf-8") as fh:
            prototypes = {AttributeClass(k): v for k, v in json.load(fh).items()}
        pairs, _ = build_probe_set(
            corpus,
            GenerationPolicy(seed=42, crop_variant=True, local_mode="union"),
            index,
            SizeThresholds(),
            lexicon,
            prototypes,
        )
        by_id = {p.pair_id: p for p in pairs}
        variants = [p for p in pairs if p.pair_id.endswith("-local-union")]
        assert variants, "fixture must produce local variants"
        for variant in variants:
            base = by_id[variant.pair_id.removesuffix("-local-union")]
            assert variant.crop is not None
            assert variant.positive_text == base.positive_text
            assert variant.negative_text == base.negative_text


# --- criterion 8: protocol robustness ------------------------------------------


def protocol_pairs():
    captions = {"img/p.png": "wheel on car", "img/q.png": "cat on table"}
    pairs = []
    for index, (uri, pos, neg) in enumerate(
        [
            ("img/p.png", "wheel on car", "wheel under car"),
            ("img/p.png", "wheel on car", "wheel at car"),
            ("img/q.png", "cat on table", "cat under table"),
            ("img/q.png", "cat on table", "cat behind table"),
        ]
    ):
        pairs.append(
            ProbePair(
                pair_id=f"pr{index}",
                sample_id=f"pr{index}",
                path=AspectPath(aspect=Aspect.RELATION, rel_kind=RelationKind.SPATIAL),
                image=ImageMeta(uri=uri, width=10, height=10),
                crop=None,
                positive_text=pos,
                negative_text=neg,
                replaced_original="on",
                replacement="under",
                similarity=0.4,
            )
        )
    return pairs, captions


def test_criterion_8_protocol_robustness(tmp_path):
    with criterion(8, "drop/duplicate/reorder scorer matches the oracle or errors by rid"):
        pairs, captions = protocol_pairs()
        captions_path = tmp_path / "captions.json"
        captions_path.write_text(json.dumps(captions), encoding="utf-8")

        reference = score_probe_set(pairs, OracleEndpoint(dict(captions)))

        faulty = SubprocessEndpoint(
            [sys.executable, str(HELPERS / "faulty_scorer.py"), str(captions_path)]
        )
        try:
            tolerant = score_probe_set(
                pairs, faulty, Batching(batch_size=4, max_retries=2, response_timeout=0.5)
            )
        finally:
            faulty.close()
        assert tolerant == reference

        dropping = SubprocessEndpoint(
            [sys.executable, str(HELPERS / "dropping_scorer.py"), str(captions_path)]
        )
        try:
            with pytest.raises(ScorerError) as excinfo:
                score_probe_set(
                    pairs, dropping, Batching(batch_size=4, max_retries=1, response_timeout=0.3)
                )
        finally:
            dropping.close()
        message = str(excinfo.value)
        assert "unscored rids after retries: pr0#neg" in message
        assert "pr1" not in message  # only the genuinely unscored rid is named


# --- criterion 9: report golden surfaces ----------------------------------------


def test_criterion_9_report_goldens():
    with criterion(9, "object CSV reproduces the reference row; radar SVG is well-formed XML"):
        doc = fixture_document()
        tables = emit_csv_tables(doc)
        assert "ViLT,86.32,88.58,85.29,82.18,88.61,86.65,86.59" in tables["object"].decode("utf-8")
        root = ET.fromstring(emit_radar_svg(doc).decode("utf-8"))
        assert root.tag.endswith("svg")
        assert root.get("viewBox")
