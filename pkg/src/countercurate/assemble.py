"""Training-artifact assembly: grouped batches, conversations, train/test split.

A counterfactual group is the quadruple (caption, image, negative caption,
negative image). Grouped batches keep the N sampled quadruples whole so the
2N x 2N caption-image similarity grid has its positives exactly on the
diagonal; the ablation flags drop negative captions, negative images, or
the grouping itself (scattering the pairs instead).
"""

from __future__ import annotations

import logging
import random
from dataclasses import dataclass
from typing import Iterable, Sequence

logger = logging.getLogger(__name__)

CONVERSATION_PROMPT = "Which caption better describes the image?\nA) {option_a}\nB) {option_b}\nAnswer with A or B."


@dataclass(frozen=True)
class CounterfactualGroup:
    group_id: str
    image_id: str
    track: str
    caption: str
    negative_caption: str
    image: str
    negative_image: str | None = None

    def __post_init__(self):
        if self.caption == self.negative_caption:
            raise ValueError(f"group {self.group_id}: captions must differ")

    @property
    def complete(self) -> bool:
        return self.negative_image is not None


@dataclass(frozen=True)
class BatchFlags:
    negative_images: bool = True
    negative_captions: bool = True
    grouping: bool = True

    @classmethod
    def from_ablations(cls, no_negative_images=False, no_negative_captions=False, no_grouping=False) -> "BatchFlags":
        return cls(
            negative_images=not no_negative_images,
            negative_captions=not no_negative_captions,
            grouping=not no_grouping,
        )


def split_train_test(items: Sequence, ratio: tuple[int, int] = (4, 1), seed: int = 0) -> tuple[list, list]:
    """Deterministic split at image granularity: one image never straddles sides.

    Image ids are shuffled with the seed and the test share is the floor of
    the ratio's test fraction, so 10 images at 4:1 give 8 train / 2 test.
    """
    if not items:
        raise ValueError("nothing to split")
    train_part, test_part = ratio
    if train_part <= 0 or test_part < 0:
        raise ValueError(f"bad split ratio {ratio}")

    def image_of(item):
        return item["image_id"] if isinstance(item, dict) else item.image_id

    image_ids: list[str] = []
    seen: set[str] = set()
    for item in items:
        image_id = image_of(item)
        if image_id not in seen:
            seen.add(image_id)
            image_ids.append(image_id)
    shuffled = list(image_ids)
    random.Random(seed).shuffle(shuffled)
    n_test = len(shuffled) * test_part // (train_part + test_part)
    train_images = set(shuffled[: len(shuffled) - n_test])
    train = [item for item in items if image_of(item) in train_images]
    test = [item for item in items if image_of(item) not in train_images]
    return train, test


def build_grouped_batches(
    groups: Sequence[CounterfactualGroup],
    batch_size: int,
    seed: int = 0,
    flags: BatchFlags = BatchFlags(),
) -> list[dict]:
    """Batch manifests for N groups per batch (or scattered pairs when ungrouped).

    With grouping on, captions are laid out [C_1..C_N, C'_1..C'_N] against
    images [I_1..I_N, I'_1..I'_N] and `positives` marks the diagonal. With
    grouping off, the positive and negative pairs shuffle independently into
    batches of 2N. Negative members are dropped per the ablation flags; a
    trailing partial batch is dropped.
    """
    if batch_size <= 0:
        raise ValueError("batch size must be positive")
    usable = [g for g in groups if g.complete or not flags.negative_images]
    skipped = len(groups) - len(usable)
    if skipped:
        logger.warning("dropping %d incomplete group(s) lacking a negative image", skipped)
    rng = random.Random(seed)

    batches: list[dict] = []
    if flags.grouping:
        if batch_size > len(usable):
            raise ValueError(f"batch size {batch_size} exceeds {len(usable)} groups")
        order = list(usable)
        rng.shuffle(order)
        n_batches = len(order) // batch_size
        for b in range(n_batches):
            chunk = order[b * batch_size : (b + 1) * batch_size]
            captions = [g.caption for g in chunk]
            images = [g.image for g in chunk]
            positives = [[i, i] for i in range(len(chunk))]
            if flags.negative_captions:
                captions += [g.negative_caption for g in chunk]
            if flags.negative_images:
                images += [g.negative_image for g in chunk]
            if flags.negative_captions and flags.negative_images:
                positives += [[batch_size + i, batch_size + i] for i in range(len(chunk))]
            batches.append(
                {
                    "batch_id": f"batch-{b:05d}",
                    "group_ids": [g.group_id for g in chunk],
                    "captions": captions,
                    "images": images,
                    "positives": positives,
                }
            )
        return batches

    # Ungrouped: scatter positive pairs and whatever negative members survive
    # the flags, then chunk. Every element contributes at most one caption and
    # one image; an element with both is a positive pair.
    elements: list[tuple[str, str | None, str | None]] = []
    for g in usable:
        elements.append((g.group_id, g.caption, g.image))
        if flags.negative_captions and flags.negative_images:
            elements.append((g.group_id, g.negative_caption, g.negative_image))
        elif flags.negative_captions:
            elements.append((g.group_id, g.negative_caption, None))
        elif flags.negative_images:
            elements.append((g.group_id, None, g.negative_image))
    rng.shuffle(elements)
    has_negatives = flags.negative_captions or flags.negative_images
    chunk_size = 2 * batch_size if has_negatives else batch_size
    if chunk_size > len(elements):
        raise ValueError(f"batch size {batch_size} exceeds the scattered pool of {len(elements)}")
    n_batches = len(elements) // chunk_size
    for b in range(n_batches):
        chunk = elements[b * chunk_size : (b + 1) * chunk_size]
        captions: list[str] = []
        images: list[str] = []
        positives: list[list[int]] = []
        group_ids: list[str] = []
        for group_id, caption, image in chunk:
            group_ids.append(group_id)
            caption_idx = image_idx = None
            if caption is not None:
                caption_idx = len(captions)
                captions.append(caption)
            if image is not None:
                image_idx = len(images)
                images.append(image)
            if caption_idx is not None and image_idx is not None:
                positives.append([caption_idx, image_idx])
        batches.append(
            {
                "batch_id": f"batch-{b:05d}",
                "group_ids": group_ids,
                "captions": captions,
                "images": images,
                "positives": positives,
            }
        )
    return batches


def _option_order(group_id: str, side: str, seed: int) -> bool:
    """True when option A is the positive caption, for (group, image-side)."""
    return random.Random(f"{seed}:{group_id}:{side}").random() < 0.5


def build_conversation(group: CounterfactualGroup, seed: int = 0) -> list[dict]:
    """Two multiple-choice records per group: one per image side."""
    if not group.complete:
        raise ValueError(f"group {group.group_id} lacks a negative image")
    records = []
    for side, image, correct in (
        ("positive", group.image, group.caption),
        ("negative", group.negative_image, group.negative_caption),
    ):
        a_is_positive = _option_order(group.group_id, side, seed)
        option_a = group.caption if a_is_positive else group.negative_caption
        option_b = group.negative_caption if a_is_positive else group.caption
        answer = "A" if option_a == correct else "B"
        records.append(
            {
                "id": f"{group.group_id}:{side}",
                "image": image,
                "conversations": [
                    {"from": "human", "value": CONVERSATION_PROMPT.format(option_a=option_a, option_b=option_b)},
                    {"from": "assistant", "value": answer},
                ],
            }
        )
    return records


def eval_item_record(group: CounterfactualGroup, seed: int = 0) -> dict:
    """Benchmark item: quadruple refs plus the frozen A/B option order."""
    a_is_positive = _option_order(group.group_id, "positive", seed)
    category = group.track
    return {
        "item_id": group.group_id,
        "category": category,
        "image_id": group.image_id,
        "C": group.caption,
        "Cn": group.negative_caption,
        "image": group.image,
        "image_neg": group.negative_image,
        "option_order": ["positive", "negative"] if a_is_positive else ["negative", "positive"],
    }


def groups_from_items(
    item_records: Iterable[dict],
    jobs_by_id: dict[str, "object"],
    resolve_output,
) -> tuple[list[CounterfactualGroup], int]:
    """Join curated items with finished generation jobs.

    `resolve_output(job)` maps a Done job to an image ref; items whose job is
    missing or unfinished become incomplete groups (negative image None).
    """
    groups: list[CounterfactualGroup] = []
    incomplete = 0
    for record in item_records:
        track = record.get("track", "unknown")
        if track == "positions":
            track = f"positions-{record.get('subset', '?')}"
        negative_image = None
        job = jobs_by_id.get(record.get("job_id"))
        if job is not None:
            negative_image = resolve_output(job)
        if negative_image is None:
            incomplete += 1
        groups.append(
            CounterfactualGroup(
                group_id=record["item_id"],
                image_id=record["image_id"],
                track=track,
                caption=record["C"],
                negative_caption=record["Cn"],
                image=record.get("image") or f"image:{record['image_id']}",
                negative_image=negative_image,
            )
        )
    return groups, incomplete
