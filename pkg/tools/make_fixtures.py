#!/usr/bin/env python3
"""Regenerate the shipped fixtures: the 50-token vector file, the 50-sample
synthetic corpus, and its oracle caption map.

Vector scheme: every token gets one group axis (its semantic class) with
weight sqrt(0.4) and one private identity axis with weight sqrt(0.6). Two
tokens of the same class then have cosine similarity 0.4 (eligible under
the default 0.5 bound) and different classes are orthogonal, which keeps
attribute classification and replacement filtering exact and auditable.
"""

from __future__ import annotations

import json
import math
import random
from pathlib import Path

DATA_DIR = Path(__file__).resolve().parent.parent / "src" / "vlprobe" / "data"

GROUPS = {
    "object": [
        "man", "woman", "child", "dog", "cat", "car", "table", "chair", "ball",
        "tree", "bench", "bird", "skateboard", "pilot", "wheel", "bus", "sheep",
        "boy", "shirt",
    ],
    "color": ["red", "blue", "green", "white", "black", "golden", "brown"],
    "material": ["wooden", "metal", "plastic", "glass"],
    "size": ["small", "big", "large", "tiny"],
    "state": ["wet", "dry", "clean", "dirty"],
    "action_attr": ["standing", "sitting", "running", "walking"],
    "spatial_pred": ["on", "under", "near", "behind"],
    "action_pred": ["holding", "riding", "chasing", "watching"],
}

GROUP_WEIGHT = math.sqrt(0.4)
IDENTITY_WEIGHT = math.sqrt(0.6)


def write_vectors(path: Path) -> list[str]:
    tokens = [t for group in GROUPS.values() for t in group]
    assert len(tokens) == 50, len(tokens)
    assert len(set(tokens)) == 50
    group_count = len(GROUPS)
    dim = group_count + len(tokens)
    lines = [f"{len(tokens)} {dim}"]
    token_index = 0
    for group_index, group_tokens in enumerate(GROUPS.values()):
        for token in group_tokens:
            values = [0.0] * dim
            values[group_index] = GROUP_WEIGHT
            values[group_count + token_index] = IDENTITY_WEIGHT
            token_index += 1
            lines.append(token + " " + " ".join(f"{v:.9f}" for v in values))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return tokens


def write_corpus(corpus_path: Path, captions_path: Path) -> None:
    rng = random.Random(20240501)
    objects = GROUPS["object"]
    attribute_values = (
        GROUPS["color"] + GROUPS["material"] + GROUPS["size"] + GROUPS["state"] + GROUPS["action_attr"]
    )
    predicates = GROUPS["spatial_pred"] + GROUPS["action_pred"]

    samples = []
    captions = {}
    for index in range(50):
        width = rng.choice([320, 480, 512, 640, 800])
        height = rng.choice([240, 360, 480, 600])
        uri = f"img/{index:03d}.png"
        n_objects = rng.randint(2, 4)
        names = rng.sample(objects, n_objects)
        scene_objects = []
        for obj_index, name in enumerate(names):
            w = rng.randint(16, max(17, width // 2))
            h = rng.randint(16, max(17, height // 2))
            x = rng.randint(0, width - w)
            y = rng.randint(0, height - h)
            attributes = []
            if rng.random() < 0.6:
                attributes.append({"value": rng.choice(attribute_values), "class": None})
            scene_objects.append(
                {
                    "oid": f"o{obj_index}",
                    "name": name,
                    "bbox": [x, y, w, h],
                    "attributes": attributes,
                }
            )
        n_relations = rng.randint(1, min(3, n_objects * (n_objects - 1)))
        seen_endpoints = set()
        relations = []
        for _ in range(n_relations):
            subj, obj = rng.sample(range(n_objects), 2)
            if (subj, obj) in seen_endpoints:
                continue
            seen_endpoints.add((subj, obj))
            relations.append(
                {"subj": f"o{subj}", "pred": rng.choice(predicates), "obj": f"o{obj}"}
            )
        sample = {
            "id": f"syn-{index:03d}",
            "image": {"uri": uri, "width": width, "height": height},
            "objects": scene_objects,
            "relations": relations,
        }
        samples.append(sample)
        rel = relations[0]
        by_oid = {o["oid"]: o["name"] for o in scene_objects}
        caption = f"{by_oid[rel['subj']]} {rel['pred']} {by_oid[rel['obj']]}"
        attr_words = [a["value"] for o in scene_objects for a in o["attributes"]]
        if attr_words:
            caption += " " + " ".join(attr_words)
        captions[uri] = caption

    with corpus_path.open("w", encoding="utf-8") as fh:
        for sample in samples:
            fh.write(json.dumps(sample, ensure_ascii=False) + "\n")
    captions_path.write_text(json.dumps(captions, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def main() -> None:
    DATA_DIR.mkdir(parents=True, exist_ok=True)
    tokens = write_vectors(DATA_DIR / "mini_vectors.txt")
    write_corpus(DATA_DIR / "synthetic_corpus.jsonl", DATA_DIR / "synthetic_captions.json")
    print(f"wrote {len(tokens)} vectors and 50 synthetic samples to {DATA_DIR}")


if __name__ == "__main__":
    main()
