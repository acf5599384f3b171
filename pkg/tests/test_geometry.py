import random

import numpy as np
import pytest
from hypothesis import given, settings

from conftest import boxes_st, make_record, random_box
from countercurate.corpus import BoundingBox
from countercurate.geometry import (
    Relation,
    RelationFact,
    UnsatisfiableSwapError,
    boxes_overlap,
    classify_relations,
    hflip_box,
    swap_centers,
    unique_category_filter,
)


def oracle_relations(a: BoundingBox, b: BoundingBox) -> set[Relation]:
    """Independent check: each inequality tested on raw tuples."""
    out = set()
    ax1, ay1, ax2, ay2 = a.as_tuple()
    bx1, by1, bx2, by2 = b.as_tuple()
    if ax2 <= bx1:
        out.add(Relation.LEFT)
    if ax1 >= bx2:
        out.add(Relation.RIGHT)
    if ay2 <= by1:
        out.add(Relation.ABOVE)
    if ay1 >= by2:
        out.add(Relation.BELOW)
    return out


class TestClassify:
    def test_left(self):
        assert classify_relations(BoundingBox(0, 0, 10, 10), BoundingBox(20, 5, 30, 15)) == {Relation.LEFT}

    def test_overlapping_empty(self):
        assert classify_relations(BoundingBox(0, 0, 10, 10), BoundingBox(5, 5, 15, 15)) == set()

    def test_diagonal(self):
        assert classify_relations(BoundingBox(0, 0, 10, 10), BoundingBox(20, 20, 30, 30)) == {
            Relation.LEFT,
            Relation.ABOVE,
        }

    def test_tie_counts_as_left(self):
        assert Relation.LEFT in classify_relations(BoundingBox(0, 0, 10, 10), BoundingBox(10, 0, 20, 10))

    @given(boxes_st(), boxes_st())
    def test_matches_oracle(self, a, b):
        got = classify_relations(a, b)
        assert got == oracle_relations(a, b)
        assert not ({Relation.LEFT, Relation.RIGHT} <= got)
        assert not ({Relation.ABOVE, Relation.BELOW} <= got)

    @given(boxes_st(), boxes_st())
    def test_argument_swap_symmetry(self, a, b):
        forward = classify_relations(a, b)
        backward = classify_relations(b, a)
        assert {r.inverse for r in forward} == backward


class TestOverlap:
    def test_examples(self):
        assert boxes_overlap(BoundingBox(0, 0, 10, 10), BoundingBox(5, 5, 15, 15))
        assert not boxes_overlap(BoundingBox(0, 0, 10, 10), BoundingBox(10, 0, 20, 10))  # touching
        assert boxes_overlap(BoundingBox(0, 0, 10, 10), BoundingBox(2, 2, 4, 4))  # containment

    @given(boxes_st(max_coord=40), boxes_st(max_coord=40))
    def test_symmetric_and_matches_raster(self, a, b):
        assert boxes_overlap(a, b) == boxes_overlap(b, a)
        grid = np.zeros((40, 40), dtype=int)
        grid[a.y1 : a.y2, a.x1 : a.x2] += 1
        grid[b.y1 : b.y2, b.x1 : b.x2] += 1
        assert boxes_overlap(a, b) == bool((grid == 2).any())


class TestHFlip:
    def test_mirror_arithmetic(self):
        assert hflip_box(BoundingBox(10, 20, 30, 40), 100).as_tuple() == (70, 20, 90, 40)

    def test_symmetric_fixed_point(self):
        box = BoundingBox(40, 0, 60, 10)
        assert hflip_box(box, 100) == box

    def test_relations_mirror(self):
        a, b = BoundingBox(0, 0, 10, 10), BoundingBox(20, 5, 30, 15)
        flipped = classify_relations(hflip_box(a, 50), hflip_box(b, 50))
        assert flipped == {Relation.RIGHT}

    @given(boxes_st(max_coord=150))
    def test_involution_and_size(self, box):
        width = 200
        once = hflip_box(box, width)
        assert (once.width, once.height) == (box.width, box.height)
        assert hflip_box(once, width) == box

    @settings(max_examples=50)
    @given(boxes_st(max_coord=120), boxes_st(max_coord=120))
    def test_mirror_swaps_lr_keeps_ab(self, a, b):
        width = 150
        before = classify_relations(a, b)
        after = classify_relations(hflip_box(a, width), hflip_box(b, width))
        assert after == {r.mirrored for r in before}


class TestSwapCenters:
    def test_clamped_example(self):
        a, b = BoundingBox(0, 0, 10, 10), BoundingBox(20, 20, 40, 40)
        a2, b2 = swap_centers(a, b, 100, 100)
        assert a2.as_tuple() == (25, 25, 35, 35)
        # ideal b' is (-5,-5,15,15); minimal translation puts it at the origin
        assert b2.as_tuple() == (0, 0, 20, 20)
        # independent recomputation: sizes kept, clamp only where needed
        assert (a2.width, a2.height) == (a.width, a.height)
        assert (b2.width, b2.height) == (b.width, b.height)
        assert a2.center == b.center

    def test_identical_centers_fixed_point(self):
        a, b = BoundingBox(10, 10, 30, 30), BoundingBox(15, 15, 25, 25)
        assert swap_centers(a, b, 100, 100) == (a, b)

    def test_involution_without_clamping(self):
        rng = random.Random(5)
        for _ in range(200):
            # even coordinates keep center arithmetic exact
            a = BoundingBox(*(2 * v for v in random_box(rng, 40).as_tuple()))
            b = BoundingBox(*(2 * v for v in random_box(rng, 40).as_tuple()))
            a2, b2 = swap_centers(a, b, 400, 400)
            if a2.center != b.center or b2.center != a.center:
                continue  # clamped; involution not promised
            assert swap_centers(a2, b2, 400, 400) == (a, b)

    def test_oversized_box_signals(self):
        with pytest.raises(UnsatisfiableSwapError):
            swap_centers(BoundingBox(0, 0, 150, 10), BoundingBox(0, 20, 10, 30), 100, 100)

    @given(boxes_st(max_coord=90), boxes_st(max_coord=90))
    def test_sizes_always_preserved(self, a, b):
        a2, b2 = swap_centers(a, b, 100, 100)
        assert (a2.width, a2.height) == (a.width, a.height)
        assert (b2.width, b2.height) == (b.width, b.height)
        for box in (a2, b2):
            assert 0 <= box.x1 and box.x2 <= 100 and 0 <= box.y1 and box.y2 <= 100


class TestUniqueCategoryFilter:
    def test_all_single(self):
        record = make_record({1: ("cat", [(0, 0, 10, 10)]), 2: ("dog", [(20, 0, 30, 10)])})
        assert unique_category_filter(record)

    def test_duplicate_category(self):
        record = make_record({1: ("cat", [(0, 0, 10, 10), (20, 0, 30, 10)])})
        assert not unique_category_filter(record)

    def test_vacuous(self):
        record = make_record({1: ("cat", [(0, 0, 10, 10)])})
        record.boxes = {}
        assert unique_category_filter(record)


class TestRelationFact:
    def test_distinct_entities_required(self):
        with pytest.raises(ValueError):
            RelationFact("img", 1, 1, Relation.LEFT)
