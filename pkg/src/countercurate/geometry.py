"""Box geometry kernel: relation classification, overlap, flip and recenter.

All relations are read in image coordinates (origin top-left, y downward),
so "above" means smaller y. A relation holds only when the boxes are fully
separated along that axis; edge-touching counts as separated for relations
and as non-overlapping for the overlap test.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

from .corpus import BoundingBox, ImageRecord, category_counts


class Relation(str, Enum):
    LEFT = "left"
    RIGHT = "right"
    ABOVE = "above"
    BELOW = "below"

    @property
    def inverse(self) -> "Relation":
        return _INVERSE[self]

    @property
    def mirrored(self) -> "Relation":
        """The relation after a horizontal flip (left/right swap, above/below keep)."""
        return _MIRROR[self]

    @property
    def axis(self) -> str:
        return "horizontal" if self in (Relation.LEFT, Relation.RIGHT) else "vertical"


_INVERSE = {
    Relation.LEFT: Relation.RIGHT,
    Relation.RIGHT: Relation.LEFT,
    Relation.ABOVE: Relation.BELOW,
    Relation.BELOW: Relation.ABOVE,
}

_MIRROR = {
    Relation.LEFT: Relation.RIGHT,
    Relation.RIGHT: Relation.LEFT,
    Relation.ABOVE: Relation.ABOVE,
    Relation.BELOW: Relation.BELOW,
}


@dataclass(frozen=True)
class RelationFact:
    """An ordered entity pair and one spatial relation that holds between them."""

    image_id: str
    subject: int
    object: int
    relation: Relation

    def __post_init__(self):
        if self.subject == self.object:
            raise ValueError(f"relation fact needs two distinct entities, got {self.subject} twice")


def classify_relations(a: BoundingBox, b: BoundingBox) -> set[Relation]:
    """All separation relations of `a` with respect to `b`.

    May be empty (overlapping boxes), one relation, or one horizontal plus
    one vertical (diagonal pairs). Ties (shared edge) count as separated.
    """
    relations: set[Relation] = set()
    if a.x2 <= b.x1:
        relations.add(Relation.LEFT)
    if a.x1 >= b.x2:
        relations.add(Relation.RIGHT)
    if a.y2 <= b.y1:
        relations.add(Relation.ABOVE)
    if a.y1 >= b.y2:
        relations.add(Relation.BELOW)
    return relations


def boxes_overlap(a: BoundingBox, b: BoundingBox) -> bool:
    """True iff the intersection has positive area (edge-touching is not overlap)."""
    return max(a.x1, b.x1) < min(a.x2, b.x2) and max(a.y1, b.y1) < min(a.y2, b.y2)


def hflip_box(box: BoundingBox, width: int) -> BoundingBox:
    """Mirror a box across the vertical center line of a `width`-pixel canvas."""
    if box.x2 > width:
        raise ValueError(f"box {box.as_tuple()} does not fit width {width}")
    return BoundingBox(width - box.x2, box.y1, width - box.x1, box.y2)


class UnsatisfiableSwapError(ValueError):
    """A box is larger than the canvas, so no in-bounds recentering exists."""


def _recenter(box: BoundingBox, onto: BoundingBox, width: int, height: int) -> BoundingBox:
    w, h = box.width, box.height
    if w > width or h > height:
        raise UnsatisfiableSwapError(
            f"box {box.as_tuple()} larger than {width}x{height} canvas"
        )
    # Integer boxes cannot always hit the target center exactly; floor keeps
    # the result deterministic and within half a pixel of it.
    x1 = (onto.x1 + onto.x2 - w) // 2
    y1 = (onto.y1 + onto.y2 - h) // 2
    x1 = min(max(x1, 0), width - w)
    y1 = min(max(y1, 0), height - h)
    return BoundingBox(x1, y1, x1 + w, y1 + h)


def swap_centers(
    a: BoundingBox, b: BoundingBox, width: int, height: int
) -> tuple[BoundingBox, BoundingBox]:
    """Exchange the two boxes' centers while keeping each box's own size.

    A recentered box that would leave the canvas is translated minimally back
    inside (size preserved), so the swapped centers are exact except when
    clamping or integer rounding forced a shift.
    """
    return _recenter(a, b, width, height), _recenter(b, a, width, height)


def unique_category_filter(record: ImageRecord) -> bool:
    """True iff no category has more than one box in the record."""
    return all(count <= 1 for count in category_counts(record).values())
