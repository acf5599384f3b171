"""Grounded caption corpus: tagged-caption parsing and manifest loading.

A grounded caption marks each entity phrase inline:

    [/EN#1/people A child] in [/EN#2/clothing a pink dress]

Stripping the tags yields the plain caption; every tagged phrase keeps its
character range into that plain text, which is how box annotations stay
linked to caption words. Square brackets are reserved for tags: a bare
bracket in caption text is a parse error.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator

logger = logging.getLogger(__name__)

_TAG_OPEN = "[/EN#"


class CaptionParseError(ValueError):
    """Malformed tagged caption. `offset` is the byte offset of the problem."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


class CorpusError(ValueError):
    """A corpus manifest line that cannot be turned into a valid ImageRecord."""

    def __init__(self, message: str, image_id: str = "?", fieldname: str = "?"):
        super().__init__(message)
        self.image_id = image_id
        self.fieldname = fieldname


@dataclass(frozen=True)
class BoundingBox:
    """Pixel box with origin at the top-left corner and y growing downward.

    (x1, y1) is the upper-left corner, (x2, y2) the lower-right one.
    """

    x1: int
    y1: int
    x2: int
    y2: int

    def __post_init__(self):
        if min(self.x1, self.y1, self.x2, self.y2) < 0:
            raise ValueError(f"negative coordinate in box {self.as_tuple()}")
        if self.x1 >= self.x2 or self.y1 >= self.y2:
            raise ValueError(f"degenerate box {self.as_tuple()}: need x1 < x2 and y1 < y2")

    def as_tuple(self) -> tuple[int, int, int, int]:
        return (self.x1, self.y1, self.x2, self.y2)

    @property
    def width(self) -> int:
        return self.x2 - self.x1

    @property
    def height(self) -> int:
        return self.y2 - self.y1

    @property
    def area(self) -> int:
        return self.width * self.height

    @property
    def center(self) -> tuple[float, float]:
        return ((self.x1 + self.x2) / 2, (self.y1 + self.y2) / 2)


@dataclass(frozen=True)
class EntitySpan:
    """One tagged phrase: entity id, entity type and its range in the plain caption."""

    entity_id: int
    entity_type: str
    phrase: str
    start: int
    end: int

    def __post_init__(self):
        if self.entity_id <= 0:
            raise ValueError(f"entity_id must be positive, got {self.entity_id}")
        if not self.entity_type:
            raise ValueError("empty entity_type")
        if not self.phrase:
            raise ValueError("empty phrase")
        if self.start < 0 or self.end - self.start != len(self.phrase):
            raise ValueError(f"char range ({self.start}, {self.end}) does not fit phrase {self.phrase!r}")


@dataclass(frozen=True)
class GroundedCaption:
    plain: str
    spans: tuple[EntitySpan, ...] = ()

    def __post_init__(self):
        seen_ids: set[int] = set()
        prev_end = 0
        for span in self.spans:
            if span.entity_id in seen_ids:
                raise ValueError(f"duplicate entity_id {span.entity_id}")
            seen_ids.add(span.entity_id)
            if span.start < prev_end:
                raise ValueError(f"overlapping or unordered span at {span.start}")
            if self.plain[span.start : span.end] != span.phrase:
                raise ValueError(
                    f"span text mismatch at {span.start}: {self.plain[span.start:span.end]!r} != {span.phrase!r}"
                )
            prev_end = span.end


def _byte_offset(text: str, index: int) -> int:
    return len(text[:index].encode("utf-8"))


def parse_entity_caption(text: str) -> GroundedCaption:
    """Parse a tagged caption string into a GroundedCaption.

    Raises CaptionParseError (with byte offset) for a malformed tag header,
    a duplicate entity id, or an unbalanced bracket.
    """
    plain_parts: list[str] = []
    spans: list[EntitySpan] = []
    plain_len = 0
    seen_ids: set[int] = set()
    i = 0
    n = len(text)
    while i < n:
        ch = text[i]
        if ch == "]":
            raise CaptionParseError("unbalanced ']' outside any tag", _byte_offset(text, i))
        if ch != "[":
            plain_parts.append(ch)
            plain_len += 1
            i += 1
            continue
        close = text.find("]", i)
        if close == -1:
            raise CaptionParseError("unbalanced '[': no closing ']'", _byte_offset(text, i))
        body = text[i:close]
        if "[" in body[1:]:
            raise CaptionParseError("nested '[' inside tag", _byte_offset(text, i + 1 + body[1:].index("[")))
        if not body.startswith(_TAG_OPEN):
            raise CaptionParseError("malformed tag header: expected '[/EN#'", _byte_offset(text, i))
        rest = body[len(_TAG_OPEN) :]
        slash = rest.find("/")
        if slash <= 0 or not rest[:slash].isdigit():
            raise CaptionParseError("malformed tag header: bad entity id", _byte_offset(text, i))
        entity_id = int(rest[:slash])
        if entity_id <= 0:
            raise CaptionParseError("malformed tag header: entity id must be >= 1", _byte_offset(text, i))
        if entity_id in seen_ids:
            raise CaptionParseError(f"duplicate entity_id {entity_id}", _byte_offset(text, i))
        after_type = rest[slash + 1 :]
        space = after_type.find(" ")
        if space <= 0:
            raise CaptionParseError("malformed tag header: missing entity type or phrase", _byte_offset(text, i))
        entity_type = after_type[:space]
        phrase = after_type[space + 1 :]
        if not phrase:
            raise CaptionParseError("empty phrase in tag", _byte_offset(text, i))
        seen_ids.add(entity_id)
        spans.append(EntitySpan(entity_id, entity_type, phrase, plain_len, plain_len + len(phrase)))
        plain_parts.append(phrase)
        plain_len += len(phrase)
        i = close + 1
    return GroundedCaption(plain="".join(plain_parts), spans=tuple(spans))


def render_plain(caption: GroundedCaption) -> str:
    """The caption with all tags stripped."""
    return caption.plain


def render_tagged(caption: GroundedCaption) -> str:
    """Re-serialize spans into tagged form; parse_entity_caption inverts this."""
    out: list[str] = []
    cursor = 0
    for span in caption.spans:
        out.append(caption.plain[cursor : span.start])
        out.append(f"[/EN#{span.entity_id}/{span.entity_type} {span.phrase}]")
        cursor = span.end
    out.append(caption.plain[cursor:])
    return "".join(out)


@dataclass
class ImageRecord:
    """One grounded image: captions plus per-entity boxes and category labels."""

    image_id: str
    width: int
    height: int
    captions: list[GroundedCaption] = field(default_factory=list)
    boxes: dict[int, list[BoundingBox]] = field(default_factory=dict)
    categories: dict[int, str] = field(default_factory=dict)
    image_path: str | None = None

    def entity_types(self) -> dict[int, str]:
        types: dict[int, str] = {}
        for caption in self.captions:
            for span in caption.spans:
                types.setdefault(span.entity_id, span.entity_type)
        return types

    def entity_phrases(self) -> dict[int, str]:
        phrases: dict[int, str] = {}
        for caption in self.captions:
            for span in caption.spans:
                phrases.setdefault(span.entity_id, span.phrase)
        return phrases


def category_counts(record: ImageRecord) -> dict[str, int]:
    """Number of boxes per category string (exact match), summed over entities."""
    counts: dict[str, int] = {}
    for entity_id, box_list in record.boxes.items():
        category = record.categories.get(entity_id)
        if category is None or not box_list:
            continue
        counts[category] = counts.get(category, 0) + len(box_list)
    return counts


def validate_record(record: ImageRecord) -> None:
    """Raise CorpusError if the record violates ImageRecord invariants."""
    if record.width <= 0 or record.height <= 0:
        raise CorpusError(
            f"{record.image_id}: non-positive image size", record.image_id, "width/height"
        )
    tagged_ids = {span.entity_id for caption in record.captions for span in caption.spans}
    for entity_id, box_list in record.boxes.items():
        if entity_id not in tagged_ids:
            raise CorpusError(
                f"{record.image_id}: entity {entity_id} has boxes but appears in no caption",
                record.image_id,
                "boxes",
            )
        for box in box_list:
            if box.x2 > record.width or box.y2 > record.height:
                raise CorpusError(
                    f"{record.image_id}: box {box.as_tuple()} exceeds image {record.width}x{record.height}",
                    record.image_id,
                    "boxes",
                )


def record_from_json(obj: dict, base_dir: Path | None = None) -> ImageRecord:
    """Build and validate an ImageRecord from one manifest line."""
    try:
        image_id = str(obj["image_id"])
    except (KeyError, TypeError) as exc:
        raise CorpusError(f"missing image_id: {exc}") from exc
    try:
        width = int(obj["width"])
        height = int(obj["height"])
        captions = [parse_entity_caption(c) for c in obj.get("captions", [])]
        boxes: dict[int, list[BoundingBox]] = {}
        for key, coords_list in obj.get("boxes", {}).items():
            boxes[int(key)] = [BoundingBox(*map(int, coords)) for coords in coords_list]
        categories = {int(k): str(v) for k, v in obj.get("categories", {}).items()}
    except CorpusError:
        raise
    except (KeyError, TypeError, ValueError, CaptionParseError) as exc:
        raise CorpusError(f"{image_id}: {exc}", image_id, "schema") from exc
    image_path = obj.get("image_path")
    if image_path is not None and base_dir is not None:
        image_path = str((base_dir / image_path).resolve())
    record = ImageRecord(
        image_id=image_id,
        width=width,
        height=height,
        captions=captions,
        boxes=boxes,
        categories=categories,
        image_path=image_path,
    )
    validate_record(record)
    return record


@dataclass
class CorpusIssue:
    line_no: int
    image_id: str
    fieldname: str
    message: str


def load_corpus(path: str | Path, issues: list[CorpusIssue] | None = None) -> Iterator[ImageRecord]:
    """Stream validated ImageRecords from a line-delimited JSON manifest.

    Lines that fail schema or invariant checks are logged (with image_id and
    field) and skipped; pass `issues` to collect them. Order-preserving.
    """
    path = Path(path)
    base_dir = path.resolve().parent
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
                if isinstance(obj, dict) and "_header" in obj:
                    continue
                yield record_from_json(obj, base_dir=base_dir)
            except CorpusError as exc:
                logger.warning("skipping corpus line %d (%s / %s): %s", line_no, exc.image_id, exc.fieldname, exc)
                if issues is not None:
                    issues.append(CorpusIssue(line_no, exc.image_id, exc.fieldname, str(exc)))
            except json.JSONDecodeError as exc:
                logger.warning("skipping corpus line %d: invalid JSON: %s", line_no, exc)
                if issues is not None:
                    issues.append(CorpusIssue(line_no, "?", "json", str(exc)))
