import random
import sys
from pathlib import Path

import pytest
from hypothesis import strategies as st

REPO_ROOT = Path(__file__).resolve().parents[1]
sys.path.insert(0, str(REPO_ROOT / "scripts"))

from make_fixture_corpus import build_fixture_corpus  # noqa: E402

from countercurate.corpus import BoundingBox, ImageRecord, parse_entity_caption  # noqa: E402


@st.composite
def boxes_st(draw, max_coord=200):
    x1 = draw(st.integers(0, max_coord - 1))
    x2 = draw(st.integers(x1 + 1, max_coord))
    y1 = draw(st.integers(0, max_coord - 1))
    y2 = draw(st.integers(y1 + 1, max_coord))
    return BoundingBox(x1, y1, x2, y2)


def random_box(rng: random.Random, max_coord: int = 100) -> BoundingBox:
    x1 = rng.randint(0, max_coord - 2)
    x2 = rng.randint(x1 + 1, max_coord)
    y1 = rng.randint(0, max_coord - 2)
    y2 = rng.randint(y1 + 1, max_coord)
    return BoundingBox(x1, y1, x2, y2)


def make_record(
    entity_boxes: dict[int, tuple[str, list[tuple[int, int, int, int]]]],
    image_id: str = "img",
    width: int = 400,
    height: int = 400,
    image_path: str | None = None,
) -> ImageRecord:
    """Record from {entity_id: (category, [box tuples])} with a tagged caption."""
    tags = " and ".join(
        f"[/EN#{entity_id}/other {category}]" for entity_id, (category, _) in sorted(entity_boxes.items())
    )
    caption = parse_entity_caption(f"a photo of {tags}")
    return ImageRecord(
        image_id=image_id,
        width=width,
        height=height,
        captions=[caption],
        boxes={eid: [BoundingBox(*t) for t in boxes] for eid, (_, boxes) in entity_boxes.items()},
        categories={eid: category for eid, (category, _) in entity_boxes.items()},
        image_path=image_path,
    )


def random_tagged_caption(rng: random.Random) -> str:
    """Tagged caption with 0-4 entities, assorted phrases and punctuation."""
    words = ["river", "cyclist", "umbrella", "dog", "stone wall", "café table", "kite"]
    types = ["people", "clothing", "scene", "other", "animals", "bodyparts"]
    parts = []
    n_entities = rng.randint(0, 4)
    next_id = 1
    for _ in range(n_entities):
        if parts and rng.random() < 0.8:
            parts.append(rng.choice([" near ", " beside ", ", ", " and ", " over "]))
        phrase = rng.choice(words)
        if rng.random() < 0.5:
            phrase = ("an " if phrase[0] in "aeiou" else "a ") + phrase
        parts.append(f"[/EN#{next_id}/{rng.choice(types)} {phrase}]")
        next_id += rng.randint(1, 3)
    if rng.random() < 0.5:
        parts.append(rng.choice([" in the sun.", "!", " at dusk", ""]))
    if rng.random() < 0.3:
        parts.insert(0, rng.choice(["A view of ", "Photo: ", "two of "]))
    return "".join(parts)


@pytest.fixture(scope="session")
def fixture_corpus(tmp_path_factory):
    out = tmp_path_factory.mktemp("corpus")
    manifest = build_fixture_corpus(out, n_images=14, seed=0)
    return manifest


@pytest.fixture(scope="session")
def mock_pipeline(tmp_path_factory, fixture_corpus):
    """One full mock pipeline run shared by integration-style tests."""
    from countercurate.cli import main

    out = tmp_path_factory.mktemp("pipeline")
    for track in ("positions", "counting", "attributes"):
        rc = main(["curate", "--track", track, "--corpus", str(fixture_corpus), "--out", str(out), "--mock"])
        assert rc == 0
    rc = main(
        [
            "assemble",
            "--items", str(out / "items_positions.jsonl"),
            "--items", str(out / "items_counting.jsonl"),
            "--items", str(out / "items_attributes.jsonl"),
            "--jobs", str(out / "jobs.jsonl"),
            "--out", str(out),
            "--batch-size", "4",
            "--seed", "7",
        ]
    )
    assert rc == 0
    return out
