#!/usr/bin/env python3
"""Generate a small synthetic grounded corpus for demos and tests.

Writes corpus.jsonl plus simple PNG images (colored rectangles on a flat
background) into the output directory. The layouts are seeded so repeated
runs produce byte-identical files. Images mix three flavors:

  * unique-category scenes with separated single boxes (positions track)
  * multi-box scenes, some overlapping (counting track, both branches)
  * everything carries tagged captions (attributes track)
"""

from __future__ import annotations

import argparse
import json
import random
from pathlib import Path

from PIL import Image, ImageDraw

PEOPLE = ["woman", "child", "man", "girl"]
THINGS = ["bike", "table", "towel", "ball", "chair", "boat", "umbrella", "apple", "orange"]
ANIMALS = ["cat", "dog", "horse"]
FILL_COLORS = ["#c44", "#4a6", "#46c", "#ca4", "#a4c", "#4ac", "#888"]

TYPE_BY_CATEGORY = {name: "people" for name in PEOPLE}
TYPE_BY_CATEGORY.update({name: "animals" for name in ANIMALS})


def _entity_type(category: str) -> str:
    return TYPE_BY_CATEGORY.get(category, "other")


def _separated_box(rng: random.Random, width: int, height: int, taken: list[tuple], tries: int = 60):
    for _ in range(tries):
        w = rng.randint(30, 90)
        h = rng.randint(30, 80)
        x1 = rng.randint(0, width - w)
        y1 = rng.randint(0, height - h)
        box = (x1, y1, x1 + w, y1 + h)
        if all(box[2] <= t[0] or box[0] >= t[2] or box[3] <= t[1] or box[1] >= t[3] for t in taken):
            return box
    return None


def _any_box(rng: random.Random, width: int, height: int):
    w = rng.randint(25, 80)
    h = rng.randint(25, 70)
    x1 = rng.randint(0, width - w)
    y1 = rng.randint(0, height - h)
    return (x1, y1, x1 + w, y1 + h)


def _caption_for(entities: list[tuple[int, str, str]]) -> str:
    parts = []
    for entity_id, category, etype in entities:
        article = "an" if category[0] in "aeiou" else "a"
        parts.append(f"[/EN#{entity_id}/{etype} {article} {category}]")
    if len(parts) == 1:
        return f"a photo of {parts[0]} outdoors"
    return "a photo of " + ", ".join(parts[:-1]) + " and " + parts[-1]


def _render_image(path: Path, width: int, height: int, boxes: dict[int, list[tuple]], seed: int) -> None:
    rng = random.Random(seed)
    img = Image.new("RGB", (width, height), "#ddd")
    draw = ImageDraw.Draw(img)
    for entity_id in sorted(boxes):
        color = FILL_COLORS[(entity_id + seed) % len(FILL_COLORS)]
        for box in boxes[entity_id]:
            draw.rectangle(box, fill=color, outline="#222")
    img.save(path, format="PNG")


def build_fixture_corpus(out_dir: str | Path, n_images: int = 14, seed: int = 0, with_images: bool = True) -> Path:
    """Write corpus.jsonl (+ images/) under out_dir; returns the manifest path."""
    out = Path(out_dir)
    (out / "images").mkdir(parents=True, exist_ok=True)
    rng = random.Random(seed)
    width, height = 320, 240
    lines = []
    for i in range(n_images):
        image_id = f"img_{i:03d}"
        flavor = i % 3  # 0: positions-friendly, 1: counting separated, 2: counting overlapping
        entities: list[tuple[int, str, str]] = []
        boxes: dict[int, list[tuple]] = {}
        categories: dict[int, str] = {}
        taken: list[tuple] = []
        if flavor == 0:
            pool = rng.sample(PEOPLE, 1) + rng.sample(THINGS, rng.randint(1, 3))
            for idx, category in enumerate(pool, start=1):
                box = _separated_box(rng, width, height, taken)
                if box is None:
                    continue
                taken.append(box)
                entities.append((idx, category, _entity_type(category)))
                boxes[idx] = [box]
                categories[idx] = category
        else:
            cat_a, cat_b = rng.sample(ANIMALS, 2)
            n_a, n_b = rng.randint(1, 3), rng.randint(2, 4)
            placer = _separated_box if flavor == 1 else None
            entities.append((1, cat_a, _entity_type(cat_a)))
            entities.append((2, cat_b, _entity_type(cat_b)))
            categories[1], categories[2] = cat_a, cat_b
            boxes[1], boxes[2] = [], []
            for entity_id, count in ((1, n_a), (2, n_b)):
                for _ in range(count):
                    box = placer(rng, width, height, taken) if placer else _any_box(rng, width, height)
                    if box is None:
                        continue
                    taken.append(box)
                    boxes[entity_id].append(box)
            if not boxes[1] or not boxes[2]:
                continue
        caption = _caption_for(entities)
        record = {
            "image_id": image_id,
            "width": width,
            "height": height,
            "image_path": f"images/{image_id}.png",
            "captions": [caption],
            "boxes": {str(k): [list(b) for b in v] for k, v in boxes.items()},
            "categories": {str(k): v for k, v in categories.items()},
        }
        lines.append(record)
        if with_images:
            _render_image(out / "images" / f"{image_id}.png", width, height, boxes, seed=seed + i)
    manifest = out / "corpus.jsonl"
    with open(manifest, "w", encoding="utf-8") as fh:
        for record in lines:
            fh.write(json.dumps(record, ensure_ascii=False) + "\n")
    return manifest


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", type=Path, default=Path("fixture_corpus"))
    parser.add_argument("--n-images", type=int, default=14)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--no-images", action="store_true", help="Manifest only, skip PNG rendering.")
    args = parser.parse_args()
    manifest = build_fixture_corpus(args.out, n_images=args.n_images, seed=args.seed, with_images=not args.no_images)
    print(f"wrote {manifest}")


if __name__ == "__main__":
    main()
