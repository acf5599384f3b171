"""Attributes track: LLM-curated noun/adjective/reverse caption negatives.

The request side overlays entity boxes on the image (fixed palette, legend
like "#1: purple") and fills the frozen prompt template with the record's
first caption. The response side parses the model's loosely-JSON answer:
curly quotes, single quotes, python tuples, a stray bracket or a fenced
code block are all tolerated, because that is what models actually return.
"""

from __future__ import annotations

import difflib
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

from PIL import Image, ImageDraw

from .corpus import BoundingBox, ImageRecord, render_tagged
from .jobs import GenerationJob, JobKind, job_for_request, make_job
from .manifests import content_id
from .prompts import LlmRequest, build_attribute_prompt

logger = logging.getLogger(__name__)

BOX_PALETTE = ("purple", "red", "green", "blue", "orange", "cyan", "magenta", "yellow")

NEGATIVE_KINDS = ("noun", "adjective", "reverse")

# One flagged span is the ideal single-slot edit; two tolerates article fixes.
MAX_EDIT_SPANS = 2


class AttributeParseError(ValueError):
    """The LLM answer could not be turned into AttributeNegatives."""


@dataclass(frozen=True)
class PhraseEdit:
    entity_id: int
    old_phrase: str
    new_phrase: str
    caption: str


@dataclass(frozen=True)
class ReverseEdit:
    entity_a: int
    entity_b: int
    caption: str


@dataclass(frozen=True)
class AttributeNegatives:
    noun: PhraseEdit
    adjective: PhraseEdit
    reverse: ReverseEdit | None = None


@dataclass(frozen=True)
class AttributeItem:
    item_id: str
    image_id: str
    kind: str
    action: tuple
    caption: str
    negative_caption: str
    job_id: str
    llm_job_id: str | None = None
    lint_flags: tuple[str, ...] = ()
    image_path: str | None = None

    def to_json(self) -> dict:
        return {
            "item_id": self.item_id,
            "track": "attributes",
            "image_id": self.image_id,
            "kind": self.kind,
            "action": list(self.action),
            "C": self.caption,
            "Cn": self.negative_caption,
            "job_id": self.job_id,
            "llm_job_id": self.llm_job_id,
            "lint_flags": list(self.lint_flags),
            "image": self.image_path,
        }


# --- box overlay -------------------------------------------------------------


def entity_legend(entity_ids: Iterable[int]) -> str:
    """Legend text matching the overlay palette: '#1: purple, #2: red'."""
    parts = []
    for index, entity_id in enumerate(sorted(entity_ids)):
        parts.append(f"#{entity_id}: {BOX_PALETTE[index % len(BOX_PALETTE)]}")
    return ", ".join(parts)


def overlay_boxes(
    image: str | Path | Image.Image, boxes: dict[int, list[BoundingBox]]
) -> tuple[Image.Image, str]:
    """Draw each entity's boxes in its palette color; returns (image, legend)."""
    if isinstance(image, (str, Path)):
        path = Path(image)
        if not path.is_file():
            raise FileNotFoundError(f"image not found: {path}")
        img = Image.open(path).convert("RGB")
    else:
        img = image.copy().convert("RGB")
    draw = ImageDraw.Draw(img)
    for index, entity_id in enumerate(sorted(boxes)):
        color = BOX_PALETTE[index % len(BOX_PALETTE)]
        for box in boxes[entity_id]:
            draw.rectangle(box.as_tuple(), outline=color, width=3)
    return img, entity_legend(boxes.keys())


# --- request building ---------------------------------------------------------


def build_attribute_request(record: ImageRecord, overlay_ref: str | None = None) -> LlmRequest:
    """Render the negatives request from the record's first caption."""
    if not record.captions:
        raise ValueError(f"{record.image_id}: no caption to build a request from")
    caption = record.captions[0]
    legend = entity_legend(record.boxes.keys())
    user = build_attribute_prompt(caption.plain, render_tagged(caption), legend)
    original_ref = record.image_path or f"image:{record.image_id}"
    boxed_ref = overlay_ref or f"overlay:{record.image_id}"
    return LlmRequest(
        user=user,
        images=(("original", original_ref), ("boxed", boxed_ref)),
        expected_format="attribute_json",
    )


def attribute_request_job(record: ImageRecord, overlay_ref: str | None = None) -> GenerationJob:
    request = build_attribute_request(record, overlay_ref=overlay_ref)
    caption = record.captions[0]
    metadata = {
        "image_id": record.image_id,
        "caption": caption.plain,
        "entities": [[span.entity_id, span.entity_type, span.phrase] for span in caption.spans],
        "image": record.image_path,
    }
    return job_for_request(request, metadata=metadata)


# --- tolerant response parsing -------------------------------------------------


_QUOTE_PAIRS = {'"': '"', "'": "'", "“": "”", "‘": "’"}
_CLOSERS = {"}", "]", ")"}


class _Scanner:
    def __init__(self, text: str):
        self.text = text
        self.pos = 0

    def _skip_ws(self) -> None:
        while self.pos < len(self.text) and self.text[self.pos] in " \t\r\n":
            self.pos += 1

    def peek(self) -> str | None:
        self._skip_ws()
        return self.text[self.pos] if self.pos < len(self.text) else None

    def take(self) -> str:
        self._skip_ws()
        ch = self.text[self.pos]
        self.pos += 1
        return ch

    def take_string(self) -> str:
        opener = self.take()
        closer = _QUOTE_PAIRS[opener]
        out: list[str] = []
        while self.pos < len(self.text):
            ch = self.text[self.pos]
            self.pos += 1
            if ch == "\\" and self.pos < len(self.text):
                out.append(self.text[self.pos])
                self.pos += 1
                continue
            if ch == closer or (closer != opener and ch == opener):
                return "".join(out)
            out.append(ch)
        raise AttributeParseError("unterminated string in response")

    def take_word(self) -> str:
        self._skip_ws()
        start = self.pos
        while self.pos < len(self.text) and (self.text[self.pos].isalnum() or self.text[self.pos] in "._-+"):
            self.pos += 1
        if start == self.pos:
            raise AttributeParseError(f"unexpected character {self.text[self.pos]!r} at {self.pos}")
        return self.text[start : self.pos]

    def parse_value(self):
        ch = self.peek()
        if ch is None:
            raise AttributeParseError("unexpected end of response")
        if ch == "{":
            return self.parse_object()
        if ch in "([":
            return self.parse_list()
        if ch in _QUOTE_PAIRS:
            return self.take_string()
        word = self.take_word()
        lowered = word.lower()
        if lowered in ("none", "null"):
            return None
        if lowered == "true":
            return True
        if lowered == "false":
            return False
        try:
            return int(word)
        except ValueError:
            try:
                return float(word)
            except ValueError as exc:
                raise AttributeParseError(f"unexpected token {word!r}") from exc

    def parse_list(self) -> list:
        opener = self.take()
        closer = ")" if opener == "(" else "]"
        items: list = []
        while True:
            ch = self.peek()
            if ch is None:
                raise AttributeParseError("unterminated list")
            if ch in _CLOSERS:
                self.take()
                if ch == closer:
                    return items
                continue  # stray closer: drop it and keep scanning
            items.append(self.parse_value())
            ch = self.peek()
            if ch == ",":
                self.take()

    def parse_object(self) -> dict:
        self.take()  # '{'
        obj: dict = {}
        while True:
            ch = self.peek()
            if ch is None:
                raise AttributeParseError("unterminated object")
            if ch in _CLOSERS:
                self.take()
                if ch == "}":
                    return obj
                continue  # stray ] or ) before the closing brace
            if ch == ",":
                self.take()
                continue
            if ch not in _QUOTE_PAIRS:
                raise AttributeParseError(f"expected a quoted key, found {ch!r}")
            key = self.take_string()
            if self.peek() != ":":
                raise AttributeParseError(f"missing ':' after key {key!r}")
            self.take()
            obj[key] = self.parse_value()


def _strip_fences(text: str) -> str:
    text = text.strip()
    if text.startswith("```"):
        first_newline = text.find("\n")
        if first_newline != -1:
            text = text[first_newline + 1 :]
        if text.rstrip().endswith("```"):
            text = text.rstrip()[:-3]
    return text.strip()


def parse_attribute_response(text: str) -> AttributeNegatives:
    """Parse a negatives answer; raises AttributeParseError when unusable."""
    cleaned = _strip_fences(text)
    start = cleaned.find("{")
    if start == -1:
        raise AttributeParseError("no object literal in response")
    parsed = _Scanner(cleaned[start:]).parse_object()

    def phrase_edit(kind: str) -> PhraseEdit:
        value = parsed.get(kind)
        if not isinstance(value, dict):
            raise AttributeParseError(f"missing {kind!r} entry")
        action = value.get("action")
        caption = value.get("caption")
        if not isinstance(action, list) or len(action) != 3:
            raise AttributeParseError(f"{kind}: action must be (id, old, new), got {action!r}")
        entity_id, old, new = action
        if not isinstance(entity_id, int) or not isinstance(old, str) or not isinstance(new, str):
            raise AttributeParseError(f"{kind}: action types wrong: {action!r}")
        if not isinstance(caption, str) or not caption.strip():
            raise AttributeParseError(f"{kind}: empty caption")
        return PhraseEdit(entity_id, old, new, caption.strip())

    reverse_value = parsed.get("reverse")
    reverse: ReverseEdit | None = None
    if isinstance(reverse_value, dict):
        action = reverse_value.get("action")
        caption = reverse_value.get("caption")
        if (
            isinstance(action, list)
            and len(action) == 2
            and all(isinstance(x, int) for x in action)
            and isinstance(caption, str)
            and caption.strip()
        ):
            reverse = ReverseEdit(action[0], action[1], caption.strip())
        else:
            raise AttributeParseError(f"reverse: bad entry {reverse_value!r}")
    elif reverse_value is not None:
        raise AttributeParseError(f"reverse: expected object or None, got {reverse_value!r}")

    return AttributeNegatives(noun=phrase_edit("noun"), adjective=phrase_edit("adjective"), reverse=reverse)


# --- structural lint and T2I planning -----------------------------------------


def edit_span_count(positive: str, negative: str) -> int:
    """Number of contiguous differing token runs between two captions."""
    matcher = difflib.SequenceMatcher(a=positive.split(), b=negative.split(), autojunk=False)
    return sum(1 for op, *_ in matcher.get_opcodes() if op != "equal")


def lint_negative(kind: str, positive: str, negative: str) -> tuple[str, ...]:
    """Structural lint flags; flagged items are kept but marked."""
    flags: list[str] = []
    if positive == negative:
        flags.append("identical-caption")
        return tuple(flags)
    spans = edit_span_count(positive, negative)
    if kind in ("noun", "adjective") and spans > MAX_EDIT_SPANS:
        flags.append(f"edit-spans:{spans}")
    if kind == "reverse" and spans != 2:
        flags.append(f"edit-spans:{spans}")
    return tuple(flags)


def plan_t2i_job(negative_caption: str) -> GenerationJob:
    """Text-to-image job for one negative caption (hd quality, natural style)."""
    if not negative_caption or not negative_caption.strip():
        raise ValueError("empty negative caption")
    payload = {
        "prompt": negative_caption,
        "params": {"quality": "hd", "style": "natural"},
    }
    return make_job(JobKind.TEXT_TO_IMAGE, payload)


# --- curation driver -----------------------------------------------------------


def build_attribute_requests(
    records: Iterable[ImageRecord], out_dir: str | Path | None = None
) -> list[GenerationJob]:
    """Phase one: an LlmText job per record (rendering overlays when possible).

    Overlays land in out_dir/overlays and are referenced relative to out_dir,
    so job ids stay independent of where the pipeline happens to run.
    """
    jobs: list[GenerationJob] = []
    out_dir = Path(out_dir) if out_dir else None
    for record in records:
        if not record.captions:
            logger.warning("skipping %s: no caption", record.image_id)
            continue
        overlay_ref = None
        if out_dir is not None and record.image_path and Path(record.image_path).is_file():
            overlay_rel = f"overlays/{record.image_id}.png"
            overlay_path = out_dir / overlay_rel
            overlay_path.parent.mkdir(parents=True, exist_ok=True)
            if not overlay_path.exists():
                img, _ = overlay_boxes(record.image_path, record.boxes)
                img.save(overlay_path, format="PNG")
            overlay_ref = overlay_rel
        jobs.append(attribute_request_job(record, overlay_ref=overlay_ref))
    return jobs


def items_from_response(
    image_id: str,
    positive_caption: str,
    response_text: str,
    llm_job_id: str | None = None,
    image_path: str | None = None,
) -> tuple[list[AttributeItem], list[GenerationJob]]:
    """Phase two: parse one LLM answer into items plus their T2I jobs."""
    negatives = parse_attribute_response(response_text)
    items: list[AttributeItem] = []
    jobs: list[GenerationJob] = []
    per_kind = {
        "noun": (negatives.noun, (negatives.noun.entity_id, negatives.noun.old_phrase, negatives.noun.new_phrase)),
        "adjective": (
            negatives.adjective,
            (negatives.adjective.entity_id, negatives.adjective.old_phrase, negatives.adjective.new_phrase),
        ),
    }
    if negatives.reverse is not None:
        per_kind["reverse"] = (negatives.reverse, (negatives.reverse.entity_a, negatives.reverse.entity_b))
    for kind, (edit, action) in per_kind.items():
        negative = edit.caption
        if negative == positive_caption:
            logger.warning("%s: %s negative equals the positive caption, dropped", image_id, kind)
            continue
        job = plan_t2i_job(negative)
        jobs.append(job)
        items.append(
            AttributeItem(
                item_id=content_id("attr", image_id, kind),
                image_id=image_id,
                kind=kind,
                action=action,
                caption=positive_caption,
                negative_caption=negative,
                job_id=job.job_id,
                llm_job_id=llm_job_id,
                lint_flags=lint_negative(kind, positive_caption, negative),
                image_path=image_path,
            )
        )
    return items, jobs
