"""Scoring protocols and report aggregation.

Quadruple items earn 0.5 for ranking the positive caption above the
negative one on the positive image and another 0.5 for the mirrored
ranking on the negative image; both comparisons are strict, so exact ties
lose their half point. Text-only items are the one-sided variant. Choice
records from generative models count 1 when the model picked the positive
caption.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .wording import count_noun, number_phrase

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ScoreRecord:
    """Similarity scores for (C,I), (C',I) and optionally (C,I'), (C',I')."""

    item_id: str
    s_CI: float
    s_CnI: float
    s_CIn: float | None = None
    s_CnIn: float | None = None

    def __post_init__(self):
        for name in ("s_CI", "s_CnI", "s_CIn", "s_CnIn"):
            value = getattr(self, name)
            if value is not None and not math.isfinite(value):
                raise ValueError(f"{self.item_id}: {name} is not finite")

    @property
    def has_negative_image(self) -> bool:
        return self.s_CIn is not None and self.s_CnIn is not None

    @classmethod
    def from_json(cls, record: dict) -> "ScoreRecord":
        return cls(
            item_id=record["item_id"],
            s_CI=float(record["s_CI"]),
            s_CnI=float(record["s_CnI"]),
            s_CIn=None if record.get("s_CIn") is None else float(record["s_CIn"]),
            s_CnIn=None if record.get("s_CnIn") is None else float(record["s_CnIn"]),
        )


@dataclass(frozen=True)
class ChoiceRecord:
    item_id: str
    chosen: str  # "positive" | "negative"

    def __post_init__(self):
        if self.chosen not in ("positive", "negative"):
            raise ValueError(f"{self.item_id}: chosen must be positive/negative, got {self.chosen!r}")


def score_contrastive_item(record: ScoreRecord) -> float:
    """0, 0.5 or 1 per the strict two-sided ranking protocol."""
    if not record.has_negative_image:
        raise ValueError(f"{record.item_id}: all four scores required")
    score = 0.0
    if record.s_CI > record.s_CnI:
        score += 0.5
    if record.s_CIn < record.s_CnIn:
        score += 0.5
    return score


def score_text_only_item(record: ScoreRecord) -> int:
    """1 iff the positive caption strictly outranks the negative on image I."""
    return 1 if record.s_CI > record.s_CnI else 0


def score_record(record: ScoreRecord) -> float:
    return score_contrastive_item(record) if record.has_negative_image else float(score_text_only_item(record))


def score_choice(record: ChoiceRecord) -> float:
    return 1.0 if record.chosen == "positive" else 0.0


@dataclass
class CategoryStats:
    count: int = 0
    total: float = 0.0

    @property
    def accuracy(self) -> float:
        return 100.0 * self.total / self.count if self.count else 0.0


@dataclass
class Report:
    categories: dict[str, CategoryStats] = field(default_factory=dict)
    overall: CategoryStats = field(default_factory=CategoryStats)
    orphans: list[str] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "categories": {
                tag: {"count": stats.count, "accuracy": round(stats.accuracy, 2)}
                for tag, stats in sorted(self.categories.items())
            },
            "overall": {"count": self.overall.count, "accuracy": round(self.overall.accuracy, 2)},
            "orphans": self.orphans,
            "warnings": self.warnings,
        }


def aggregate(scored: list[tuple[str, float]], category_by_item: dict[str, str]) -> Report:
    """Per-category accuracy (mean score x 100) plus a micro overall row.

    Scores whose item_id is unknown are listed as orphans; categories that
    end up with zero scored items are omitted with a warning.
    """
    report = Report()
    for item_id, score in scored:
        category = category_by_item.get(item_id)
        if category is None:
            report.orphans.append(item_id)
            continue
        stats = report.categories.setdefault(category, CategoryStats())
        stats.count += 1
        stats.total += score
        report.overall.count += 1
        report.overall.total += score
    for category in sorted(set(category_by_item.values())):
        if category not in report.categories:
            report.warnings.append(f"category {category!r} has no scored items; omitted")
    if report.orphans:
        report.warnings.append(f"{len(report.orphans)} orphan score record(s) matched no item")
    return report


def format_report(report: Report) -> str:
    lines = [f"{'category':<16} {'items':>7} {'accuracy':>9}"]
    for tag, stats in sorted(report.categories.items()):
        lines.append(f"{tag:<16} {stats.count:>7d} {stats.accuracy:>9.2f}")
    lines.append(f"{'overall':<16} {report.overall.count:>7d} {report.overall.accuracy:>9.2f}")
    for warning in report.warnings:
        lines.append(f"warning: {warning}")
    return "\n".join(lines)


def reformat_pointqa(
    object_name: str, count: int, style: str = "digits", grammatical: bool = True
) -> tuple[str, str]:
    """Count-benchmark caption pair: positive count n and negative n + 1."""
    if count < 1:
        raise ValueError(f"count must be >= 1, got {count}")

    def render(n: int) -> str:
        if grammatical:
            verb = "is" if n == 1 else "are"
            noun = count_noun(object_name, n)
        else:
            from .wording import pluralize

            verb = "are"
            noun = pluralize(object_name)
        return f"there {verb} {number_phrase(n, style)} {noun}"

    return render(count), render(count + 1)


def retrieval_precision_at_k(matrix: np.ndarray, k: int) -> tuple[float, float, float]:
    """(image@k, text@k, average@k) for a caption x image score matrix.

    Ground truth is the diagonal: caption i belongs to image i. image@k is
    the fraction of captions whose own image is among the k highest scores
    in their row; text@k mirrors this over columns.
    """
    matrix = np.asarray(matrix, dtype=float)
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        raise ValueError(f"need a square caption x image matrix, got {matrix.shape}")
    n = matrix.shape[0]
    if k < 1 or k > n:
        raise ValueError(f"k={k} out of range for {n}x{n} matrix")
    diag = np.diag(matrix)
    image_hits = ((matrix > diag[:, None]).sum(axis=1) < k).mean()
    text_hits = ((matrix > diag[None, :]).sum(axis=0) < k).mean()
    return float(image_hits), float(text_hits), float((image_hits + text_hits) / 2)
