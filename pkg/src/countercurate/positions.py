"""Positions track: left/right and above/below counterfactual items.

Facts are canonicalized so every emitted relation is "left" or "above" with
the satisfying entity as subject; the negative caption flips only the
relation keyword. Left/right negatives plan a horizontal image flip;
above/below negatives plan a grounded text-to-image job with the two boxes
recentered onto each other, preceded by an LLM caption expansion.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from itertools import combinations
from typing import Iterable

from .corpus import ImageRecord
from .geometry import Relation, RelationFact, classify_relations, hflip_box, swap_centers, unique_category_filter
from .jobs import GenerationJob, JobKind, job_for_request, make_job
from .manifests import content_id
from .prompts import LlmRequest, build_expansion_request
from .wording import with_article

logger = logging.getLogger(__name__)

SUBSET_LR = "LR"
SUBSET_AB = "AB"

_RELATION_PHRASES = {
    Relation.LEFT: "is to the left of",
    Relation.RIGHT: "is to the right of",
    Relation.ABOVE: "is above",
    Relation.BELOW: "is below",
}


@dataclass(frozen=True)
class PositionItem:
    item_id: str
    fact: RelationFact
    subset: str
    caption: str
    negative_caption: str
    job_id: str
    image_path: str | None = None

    def to_json(self) -> dict:
        return {
            "item_id": self.item_id,
            "track": "positions",
            "image_id": self.fact.image_id,
            "subset": self.subset,
            "C": self.caption,
            "Cn": self.negative_caption,
            "job_id": self.job_id,
            "entity_a": self.fact.subject,
            "entity_b": self.fact.object,
            "relation": self.fact.relation.value,
            "image": self.image_path,
        }


def extract_position_facts(record: ImageRecord) -> list[RelationFact]:
    """Canonical relation facts for every separated single-box entity pair.

    Empty when the unique-category filter rejects the record. Relations are
    canonicalized to left/above by swapping the pair when needed, so each
    geometric relation yields exactly one fact.
    """
    if not unique_category_filter(record):
        return []
    singles = {
        entity_id: box_list[0]
        for entity_id, box_list in record.boxes.items()
        if len(box_list) == 1 and entity_id in record.categories
    }
    facts: list[RelationFact] = []
    for a, b in combinations(sorted(singles), 2):
        for relation in classify_relations(singles[a], singles[b]):
            if relation in (Relation.LEFT, Relation.ABOVE):
                facts.append(RelationFact(record.image_id, a, b, relation))
            else:
                facts.append(RelationFact(record.image_id, b, a, relation.inverse))
    facts.sort(key=lambda f: (f.subject, f.object, f.relation.value))
    return facts


def make_position_captions(fact: RelationFact, categories: dict[int, str]) -> tuple[str, str]:
    """Positive and keyword-flipped negative caption for one fact."""
    cat_a = categories.get(fact.subject, "")
    cat_b = categories.get(fact.object, "")
    if not cat_a or not cat_b:
        raise ValueError(f"empty category for pair ({fact.subject}, {fact.object})")
    positive = f"{with_article(cat_a)} {_RELATION_PHRASES[fact.relation]} {with_article(cat_b)}"
    negative = f"{with_article(cat_a)} {_RELATION_PHRASES[fact.relation.inverse]} {with_article(cat_b)}"
    return positive, negative


def flip_position_keyword(caption: str) -> str:
    """Swap the relation keyword in a templated caption (an involution)."""
    for phrase, flipped in (
        (_RELATION_PHRASES[Relation.LEFT], _RELATION_PHRASES[Relation.RIGHT]),
        (_RELATION_PHRASES[Relation.ABOVE], _RELATION_PHRASES[Relation.BELOW]),
    ):
        if phrase in caption:
            return caption.replace(phrase, flipped, 1)
        if flipped in caption:
            return caption.replace(flipped, phrase, 1)
    raise ValueError(f"no positional keyword in {caption!r}")


def plan_lr_negative(record: ImageRecord, fact: RelationFact) -> GenerationJob:
    """Horizontal-flip job; payload keeps flipped boxes so grounding survives."""
    if fact.relation not in (Relation.LEFT, Relation.RIGHT):
        raise ValueError(f"left/right plan for relation {fact.relation.value}")
    flipped_boxes = {
        str(entity_id): [list(hflip_box(box, record.width).as_tuple()) for box in box_list]
        for entity_id, box_list in sorted(record.boxes.items())
    }
    payload = {
        "image": record.image_path,
        "image_id": record.image_id,
        "width": record.width,
        "height": record.height,
        "boxes": flipped_boxes,
    }
    return make_job(JobKind.HFLIP, payload)


def expansion_job(record: ImageRecord, negative_caption: str) -> tuple[LlmRequest, GenerationJob]:
    """The LlmText job that expands a vanilla above/below negative caption."""
    request = build_expansion_request(negative_caption)
    metadata = {"image_id": record.image_id, "input_caption": negative_caption}
    return request, job_for_request(request, metadata=metadata)


def plan_ab_negative(
    record: ImageRecord, fact: RelationFact, negative_caption: str
) -> tuple[LlmRequest, GenerationJob]:
    """Expansion request plus grounded T2I job with the two boxes recentered.

    The T2I job takes its effective prompt from the expansion job's output
    (`prompt_job`), falling back to the vanilla negative caption.
    """
    if fact.relation not in (Relation.ABOVE, Relation.BELOW):
        raise ValueError(f"above/below plan for relation {fact.relation.value}")
    box_a = record.boxes[fact.subject][0]
    box_b = record.boxes[fact.object][0]
    new_a, new_b = swap_centers(box_a, box_b, record.width, record.height)
    request, llm_job = expansion_job(record, negative_caption)
    payload = {
        "prompt": negative_caption,
        "prompt_job": llm_job.job_id,
        "regions": [
            {"box": list(new_a.as_tuple()), "prompt": record.categories[fact.subject]},
            {"box": list(new_b.as_tuple()), "prompt": record.categories[fact.object]},
        ],
        "width": record.width,
        "height": record.height,
        "image_id": record.image_id,
    }
    return request, make_job(JobKind.BOXED_T2I, payload)


def curate_positions(records: Iterable[ImageRecord]) -> tuple[list[PositionItem], list[GenerationJob]]:
    """All position items and their pending generation jobs, corpus order."""
    items: list[PositionItem] = []
    jobs: list[GenerationJob] = []
    for record in records:
        for fact in extract_position_facts(record):
            try:
                caption, negative = make_position_captions(fact, record.categories)
            except ValueError as exc:
                logger.warning("skipping fact on %s: %s", record.image_id, exc)
                continue
            if fact.relation in (Relation.LEFT, Relation.RIGHT):
                job = plan_lr_negative(record, fact)
                subset = SUBSET_LR
                jobs.append(job)
            else:
                _, job = plan_ab_negative(record, fact, negative)
                subset = SUBSET_AB
                jobs.append(expansion_job(record, negative)[1])
                jobs.append(job)
            item_id = content_id("pos", record.image_id, fact.subject, fact.object, fact.relation.value)
            items.append(
                PositionItem(
                    item_id=item_id,
                    fact=fact,
                    subset=subset,
                    caption=caption,
                    negative_caption=negative,
                    job_id=job.job_id,
                    image_path=record.image_path,
                )
            )
    return items, jobs
