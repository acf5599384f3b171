"""Counting track: two-category count captions and their counterfactuals.

Negation has two branches. When no box of either chosen category touches
anything else in the image, the counts trade one instance (P gains, Q
loses) and the image plan repaints one Q box as a P. Otherwise one
overlapping box is removed together with everything it overlaps, the
categories are recounted, and every removed box is inpainted over with a
plant so the edit stays photo-plausible.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Union

from .corpus import BoundingBox, ImageRecord, category_counts
from .geometry import boxes_overlap
from .jobs import GenerationJob, JobKind, make_job
from .manifests import content_id
from .wording import count_noun, number_phrase

logger = logging.getLogger(__name__)

PLANT_CATEGORY = "plant"


class CountingBranch(str, Enum):
    SWAP_COUNTS = "swap_counts"
    REMOVE_CLOSURE = "remove_closure"


@dataclass(frozen=True)
class ReplaceEdit:
    old_category: str
    new_category: str
    box: BoundingBox


@dataclass(frozen=True)
class RemoveAsPlantEdit:
    box: BoundingBox


BoxEdit = Union[ReplaceEdit, RemoveAsPlantEdit]


@dataclass(frozen=True)
class CountingItem:
    item_id: str
    image_id: str
    category_p: str
    category_q: str
    n_p: int
    n_q: int
    branch: CountingBranch
    caption: str
    negative_caption: str
    job_id: str
    image_path: str | None = None

    def to_json(self) -> dict:
        return {
            "item_id": self.item_id,
            "track": "counting",
            "image_id": self.image_id,
            "P": self.category_p,
            "Q": self.category_q,
            "n_P": self.n_p,
            "n_Q": self.n_q,
            "branch": self.branch.value,
            "C": self.caption,
            "Cn": self.negative_caption,
            "job_id": self.job_id,
            "image": self.image_path,
        }


def select_category_pair(record: ImageRecord) -> tuple[str, str] | None:
    """The two busiest categories, as (P, Q) with P the smaller count.

    Ties go lexicographically (both for the top-two choice and for which
    side becomes P). None when fewer than two categories have boxes.
    """
    counts = category_counts(record)
    if len(counts) < 2:
        return None
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    (cat_a, n_a), (cat_b, n_b) = ranked[0], ranked[1]
    if n_a == n_b:
        p, q = sorted((cat_a, cat_b))
    elif n_a < n_b:
        p, q = cat_a, cat_b
    else:
        p, q = cat_b, cat_a
    return p, q


def make_counting_caption(p: str, n_p: int, q: str, n_q: int, style: str = "words") -> str:
    """'there are three cats and four dogs' — the two-category count template."""
    if n_p <= 0 or n_q <= 0:
        raise ValueError(f"counts must be positive, got {n_p} and {n_q}")
    if not p or not q:
        raise ValueError("empty category")
    return (
        f"there are {number_phrase(n_p, style)} {count_noun(p, n_p)}"
        f" and {number_phrase(n_q, style)} {count_noun(q, n_q)}"
    )


def _all_boxes(record: ImageRecord) -> list[tuple[str, BoundingBox]]:
    out: list[tuple[str, BoundingBox]] = []
    for entity_id, box_list in sorted(record.boxes.items()):
        category = record.categories.get(entity_id, "")
        for box in box_list:
            out.append((category, box))
    return out


def _box_sort_key(entry: tuple[str, BoundingBox]) -> tuple:
    category, box = entry
    return (-box.area, box.x1, box.y1, box.x2, box.y2, category)


def negate_counting(
    record: ImageRecord,
    p: str,
    q: str,
    closure: str = "direct",
    style: str = "words",
) -> tuple[str, CountingBranch, list[BoxEdit]] | None:
    """Counterfactual caption, branch, and image-edit plan for a (P, Q) pair.

    Returns None when the negation would put a zero count into the caption.
    `closure` chooses how far removal spreads: "direct" removes the chosen
    box plus the boxes it directly overlaps; "transitive" follows the whole
    connected overlap component.
    """
    if closure not in ("direct", "transitive"):
        raise ValueError(f"unknown closure mode {closure!r}")
    boxes = _all_boxes(record)
    counts = category_counts(record)
    n_p, n_q = counts.get(p, 0), counts.get(q, 0)
    if n_p <= 0 or n_q <= 0:
        raise ValueError(f"categories {p!r}/{q!r} need at least one box each")

    pq_indices = [i for i, (category, _) in enumerate(boxes) if category in (p, q)]
    overlaps = {
        i: [j for j, (_, other) in enumerate(boxes) if j != i and boxes_overlap(boxes[i][1], other)]
        for i in range(len(boxes))
    }
    any_pq_overlap = any(overlaps[i] for i in pq_indices)

    if not any_pq_overlap:
        if n_q - 1 <= 0:
            return None
        q_boxes = [(category, box) for category, box in boxes if category == q]
        chosen = min(q_boxes, key=_box_sort_key)
        negative = make_counting_caption(p, n_p + 1, q, n_q - 1, style=style)
        return negative, CountingBranch.SWAP_COUNTS, [ReplaceEdit(q, p, chosen[1])]

    candidates = [i for i in pq_indices if overlaps[i]]
    chosen_idx = min(candidates, key=lambda i: _box_sort_key(boxes[i]))
    removed = {chosen_idx}
    frontier = [chosen_idx]
    hops = 0
    while frontier:
        hops += 1
        next_frontier: list[int] = []
        for i in frontier:
            for j in overlaps[i]:
                if j not in removed:
                    removed.add(j)
                    next_frontier.append(j)
        if closure == "direct" and hops >= 1:
            break
        frontier = next_frontier

    new_n_p = sum(1 for i, (category, _) in enumerate(boxes) if category == p and i not in removed)
    new_n_q = sum(1 for i, (category, _) in enumerate(boxes) if category == q and i not in removed)
    if new_n_p <= 0 or new_n_q <= 0:
        return None
    negative = make_counting_caption(p, new_n_p, q, new_n_q, style=style)
    edits: list[BoxEdit] = [RemoveAsPlantEdit(boxes[i][1]) for i in sorted(removed)]
    return negative, CountingBranch.REMOVE_CLOSURE, edits


def plan_counting_image(edit_plan: list[BoxEdit], record: ImageRecord) -> GenerationJob:
    """Inpaint job realizing the edit plan; plants cover removed boxes."""
    if not edit_plan:
        raise ValueError("empty edit plan")
    regions = []
    for edit in edit_plan:
        if isinstance(edit, ReplaceEdit):
            regions.append({"box": list(edit.box.as_tuple()), "prompt": edit.new_category})
        else:
            regions.append({"box": list(edit.box.as_tuple()), "prompt": PLANT_CATEGORY})
    payload = {
        "image": record.image_path,
        "image_id": record.image_id,
        "width": record.width,
        "height": record.height,
        "regions": regions,
    }
    return make_job(JobKind.INPAINT, payload)


def curate_counting(
    records: Iterable[ImageRecord], closure: str = "direct", style: str = "words"
) -> tuple[list[CountingItem], list[GenerationJob]]:
    """All counting items with their inpaint jobs, corpus order."""
    items: list[CountingItem] = []
    jobs: list[GenerationJob] = []
    for record in records:
        pair = select_category_pair(record)
        if pair is None:
            continue
        p, q = pair
        counts = category_counts(record)
        n_p, n_q = counts[p], counts[q]
        result = negate_counting(record, p, q, closure=closure, style=style)
        if result is None:
            logger.info("skipping %s: negation would reach a zero count", record.image_id)
            continue
        negative, branch, edit_plan = result
        caption = make_counting_caption(p, n_p, q, n_q, style=style)
        job = plan_counting_image(edit_plan, record)
        jobs.append(job)
        items.append(
            CountingItem(
                item_id=content_id("cnt", record.image_id, p, q),
                image_id=record.image_id,
                category_p=p,
                category_q=q,
                n_p=n_p,
                n_q=n_q,
                branch=branch,
                caption=caption,
                negative_caption=negative,
                job_id=job.job_id,
                image_path=record.image_path,
            )
        )
    return items, jobs
